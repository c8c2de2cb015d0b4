#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "sv/features.hpp"
#include "sv/layers.hpp"
#include "sv/mat.hpp"
#include "sv/rng.hpp"

namespace sv::classifier {

struct DimMismatch : Error {
  using Error::Error;
};
struct EmptyDataset : Error {
  using Error::Error;
};

// dense(dim->h) -> ReLU -> dropout -> dense(h->h) -> ReLU -> dropout -> dense(h->C)
class MlpModel {
 public:
  MlpModel(std::size_t input_dim, std::size_t n_classes, std::size_t hidden, double dropout,
           Rng& rng);

  // drop_rng non-null enables dropout (training mode).
  nn::Tensor logits(const nn::Tensor& x, Rng* drop_rng);
  void backward(const nn::Tensor& g);
  std::vector<nn::Param*> params();

  std::size_t input_dim() const { return input_dim_; }
  std::size_t n_classes() const { return n_classes_; }

  std::vector<nn::Tensor> snapshot_values();
  void restore_values(const std::vector<nn::Tensor>& values);

 private:
  std::size_t input_dim_, n_classes_;
  nn::Dense fc1_;
  nn::Relu act1_;
  nn::Dropout drop1_;
  nn::Dense fc2_;
  nn::Relu act2_;
  nn::Dropout drop2_;
  nn::Dense fc3_;
};

struct MlpConfig {
  std::size_t epochs = 30;
  std::size_t batch_size = 64;
  double lr = 1e-3;
  std::uint64_t seed = 1;
  std::size_t hidden = 100;
  double dropout = 0.2;
  bool zscore = false;  // optional per-dimension standardization from train stats
};

struct EvalReport {
  std::string kind;  // "vae" or "mfcc", filled by the caller
  std::vector<double> train_loss, test_loss;
  std::vector<double> train_acc;        // dropout active, measured on training batches
  std::vector<double> train_acc_clean;  // eval-mode pass over the training set
  std::vector<double> test_acc;
  std::vector<double> epoch_seconds;    // wall clock, machine-dependent
  std::size_t best_epoch = 0;           // 1-based argmax of test_acc, first max on ties
  Mat confusion;                        // rows true class, cols predicted, at best epoch
  std::uint64_t seed = 0;
  std::uintmax_t train_bytes = 0, test_bytes = 0;  // feature file sizes, caller-filled
};

std::pair<MlpModel, EvalReport> train_mlp(const features::FeatureFile& train,
                                          const features::FeatureFile& test,
                                          const MlpConfig& cfg);

// Eval-mode accuracy and confusion counts; argmax ties go to the lower index.
std::pair<double, Mat> evaluate(MlpModel& model, const features::FeatureFile& data);

// JSON round-trip for reports so `compare` can consume earlier runs.
void save_report(const EvalReport& report, const std::string& path);
EvalReport load_report(const std::string& path);

// Deterministic per-epoch table (no wall-clock columns).
void write_epochs_csv(const EvalReport& report, const std::string& path);

// The five comparison rows plus the size ratio, as aligned text and CSV.
std::string compare_report_text(const EvalReport& vae_report, const EvalReport& mfcc_report);
std::string compare_report_csv(const EvalReport& vae_report, const EvalReport& mfcc_report);

}  // namespace sv::classifier
