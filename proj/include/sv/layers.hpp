#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "sv/rng.hpp"
#include "sv/tensor.hpp"

namespace sv::nn {

// One learnable tensor plus its gradient accumulator.
struct Param {
  std::string name;
  Tensor value;
  Tensor grad;

  Param(std::string n, const std::vector<std::size_t>& shape)
      : name(std::move(n)), value(shape), grad(shape) {}
};

// Fills w with Glorot uniform values in [-limit, limit], limit = sqrt(6/(fan_in+fan_out)).
void glorot_uniform(Tensor& w, std::size_t fan_in, std::size_t fan_out, Rng& rng);

// Plain convolution helpers, all row-major, zero padding.
// x [B,Ci,H,W], w [Co,Ci,K,K], b [Co] (optional) -> y [B,Co,Ho,Wo]
Tensor conv_fwd(const Tensor& x, const Tensor& w, const Tensor* b, std::size_t stride,
                std::size_t pad);
// g [B,Co,Ho,Wo] -> gx [B,Ci,H,W]; (H, W) name the input plane the gradient flows back to.
Tensor conv_bwd_input(const Tensor& g, const Tensor& w, std::size_t stride, std::size_t pad,
                      std::size_t H, std::size_t W);
// Accumulates gw [Co,Ci,K,K] (and gb [Co] when non-null) from the cached input and
// the upstream gradient.
void conv_bwd_params(const Tensor& x, const Tensor& g, std::size_t stride, std::size_t pad,
                     Tensor& gw, Tensor* gb);

class Dense {
 public:
  Dense(std::string name, std::size_t in_dim, std::size_t out_dim, Rng& rng);

  Tensor forward(const Tensor& x);     // x [B,in] -> [B,out]
  Tensor backward(const Tensor& g);    // g [B,out] -> [B,in], accumulates grads

  std::vector<Param*> params() { return {&w_, &b_}; }
  std::size_t in_dim() const { return in_dim_; }
  std::size_t out_dim() const { return out_dim_; }

 private:
  std::size_t in_dim_, out_dim_;
  Param w_;  // [out,in]
  Param b_;  // [out]
  Tensor x_cache_{std::vector<std::size_t>{1}};
};

class Conv2d {
 public:
  Conv2d(std::string name, std::size_t in_ch, std::size_t out_ch, std::size_t kernel,
         std::size_t stride, std::size_t pad, Rng& rng);

  Tensor forward(const Tensor& x);   // [B,Ci,H,W] -> [B,Co,Ho,Wo]
  Tensor backward(const Tensor& g);

  std::vector<Param*> params() { return {&w_, &b_}; }

 private:
  std::size_t in_ch_, out_ch_, kernel_, stride_, pad_;
  Param w_;  // [Co,Ci,K,K]
  Param b_;  // [Co]
  Tensor x_cache_{std::vector<std::size_t>{1}};
};

// Transposed convolution; weight layout [in_ch, out_ch, K, K]. Forward is the
// input-gradient of the matching Conv2d, so stacking one after a Conv2d with the
// same stride/pad restores the original plane size.
class ConvTranspose2d {
 public:
  ConvTranspose2d(std::string name, std::size_t in_ch, std::size_t out_ch, std::size_t kernel,
                  std::size_t stride, std::size_t pad, Rng& rng);

  Tensor forward(const Tensor& x);   // [B,Ci,H,W] -> [B,Co,(H-1)s+K-2p,(W-1)s+K-2p]
  Tensor backward(const Tensor& g);

  std::vector<Param*> params() { return {&w_, &b_}; }

 private:
  std::size_t in_ch_, out_ch_, kernel_, stride_, pad_;
  Param w_;  // [Ci,Co,K,K]
  Param b_;  // [Co]
  Tensor x_cache_{std::vector<std::size_t>{1}};
};

class Relu {
 public:
  Tensor forward(const Tensor& x);
  Tensor backward(const Tensor& g);

 private:
  Tensor x_cache_{std::vector<std::size_t>{1}};
};

class GlobalAvgPool {
 public:
  Tensor forward(const Tensor& x);   // [B,C,H,W] -> [B,C]
  Tensor backward(const Tensor& g);

 private:
  std::size_t h_ = 0, w_ = 0;
};

// Inverted dropout: kept activations are scaled by 1/(1-rate) during training,
// inference is the identity.
class Dropout {
 public:
  explicit Dropout(double rate);

  Tensor forward(const Tensor& x, Rng& rng, bool training);
  Tensor backward(const Tensor& g);

  double rate() const { return rate_; }

 private:
  double rate_;
  Tensor mask_{std::vector<std::size_t>{1}};
  bool training_ = false;
};

// Mean cross-entropy over the batch from raw logits [B,C]. Fills grad_out
// (same shape) with (softmax - onehot)/B when non-null; fills probs_out with
// the row-wise softmax when non-null.
double softmax_xent(const Tensor& logits, const std::vector<std::uint32_t>& labels,
                    Tensor* grad_out, Tensor* probs_out);

}  // namespace sv::nn
