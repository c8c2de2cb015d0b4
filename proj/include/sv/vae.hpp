#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "sv/checkpoint.hpp"
#include "sv/layers.hpp"
#include "sv/mat.hpp"
#include "sv/patch.hpp"
#include "sv/rng.hpp"

namespace sv::vae {

struct EmptyDataset : Error {
  using Error::Error;
};
struct DivergedLoss : Error {
  using Error::Error;
};
struct IndexOutOfRange : Error {
  using Error::Error;
};

struct VaeConfig {
  std::size_t input_frames = 8;
  std::size_t input_bins = 128;
  std::size_t latent_dim = 13;
  std::size_t c1 = 32;
  std::size_t c2 = 64;
};

struct LatentVector {
  std::vector<double> mean;
  std::vector<double> logvar;
  std::vector<double> sample;
};

struct LossTerms {
  double total = 0.0;
  double recon = 0.0;
  double kl = 0.0;
};

// recon = mean squared error over elements, kl = 0.5*sum(exp(lv)+m^2-1-lv),
// total = recon + kBeta*kl.
inline constexpr double kBeta = 5e-4;
LossTerms vae_loss(const Mat& x, const Mat& xr, std::span<const double> mean,
                   std::span<const double> logvar);

// Batched activations kept around between a forward pass and its loss/backward.
struct VaeForward {
  nn::Tensor mean{std::vector<std::size_t>{1}};
  nn::Tensor logvar{std::vector<std::size_t>{1}};
  nn::Tensor eps{std::vector<std::size_t>{1}};
  nn::Tensor z{std::vector<std::size_t>{1}};
  nn::Tensor recon{std::vector<std::size_t>{1}};
};

// Encoder conv(k8 s2 p3) -> ReLU -> conv(k8 s2 p3) -> ReLU -> GAP -> mean/logvar
// heads; decoder dense -> reshape -> two transposed convs with a final ReLU.
class VaeModel {
 public:
  VaeModel(const VaeConfig& cfg, Rng& rng);

  const VaeConfig& config() const { return cfg_; }
  double norm_c() const { return norm_c_; }
  void set_norm_c(double c) { norm_c_ = c; }

  LatentVector encode(const Mat& patch, Rng& rng, bool train);
  LatentVector encode_eval(const Mat& patch);
  Mat decode(std::span<const double> z);
  Mat reconstruct(const Mat& patch);
  // Zero latent vector with one component swept over n evenly spaced values in
  // [lo, hi] (endpoints included; n==1 uses lo), each decoded.
  std::vector<Mat> latent_traversal(std::size_t component, std::size_t n_points = 4,
                                    double lo = -1.0, double hi = 1.0);

  // x is [B,1,frames,bins]. noise_rng==nullptr runs eval mode (eps = 0).
  VaeForward forward_batch(const nn::Tensor& x, Rng* noise_rng);
  // Same pass with caller-supplied reparameterization noise [B,latent_dim].
  VaeForward forward_given_eps(const nn::Tensor& x, const nn::Tensor& eps);
  LossTerms batch_loss(const nn::Tensor& x, const VaeForward& fwd) const;
  // Accumulates parameter gradients for batch_loss; requires the caches from
  // the matching forward_batch call.
  void backward_batch(const nn::Tensor& x, const VaeForward& fwd);

  std::vector<nn::Param*> params();
  std::vector<nn::Tensor> snapshot_values();
  void restore_values(const std::vector<nn::Tensor>& values);

  void save(const std::string& path);
  static VaeModel load(const std::string& path);

 private:
  nn::Tensor encode_to_heads(const nn::Tensor& x);  // returns pooled [B,c2]
  nn::Tensor decode_batch(const nn::Tensor& z);

  VaeConfig cfg_;
  double norm_c_ = 1.0;
  nn::Conv2d enc1_;
  nn::Relu enc1_act_;
  nn::Conv2d enc2_;
  nn::Relu enc2_act_;
  nn::GlobalAvgPool gap_;
  nn::Dense mean_head_;
  nn::Dense logvar_head_;
  nn::Dense dec0_;
  nn::ConvTranspose2d dec1_;
  nn::Relu dec1_act_;
  nn::ConvTranspose2d dec2_;
  nn::Relu dec2_act_;
};

struct TrainConfig {
  std::size_t epochs = 100;
  std::size_t batch_size = 64;
  double lr = 1e-3;
  std::uint64_t seed = 1;
};

struct PatchDataset {
  std::vector<features::Patch> train;
  std::vector<features::Patch> test;
};

struct EpochStats {
  double train_loss = 0.0, train_recon = 0.0, train_kl = 0.0;
  double test_loss = 0.0, test_recon = 0.0, test_kl = 0.0;
};

struct TrainReport {
  std::vector<EpochStats> epochs;
  std::size_t best_epoch = 0;  // 1-based; 0 when no training happened
  std::uint64_t seed = 0;
};

// Seeded minibatch training; the returned model carries the best epoch's
// weights (lowest held-out loss; lowest train loss when no test patches).
std::pair<VaeModel, TrainReport> train_vae(const PatchDataset& data, const VaeConfig& model_cfg,
                                           const TrainConfig& train_cfg);

}  // namespace sv::vae
