#include "sv/layers.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <vector>

#include "gemm.hpp"

namespace sv::nn {

namespace {

std::size_t conv_out(std::size_t in, std::size_t kernel, std::size_t stride, std::size_t pad) {
  if (in + 2 * pad < kernel)
    throw ShapeMismatch("conv: plane " + std::to_string(in) + " too small for kernel " +
                        std::to_string(kernel) + " with pad " + std::to_string(pad));
  return (in + 2 * pad - kernel) / stride + 1;
}

// col is [Ci*K*K, Ho*Wo]; x points at one sample [Ci,H,W].
void im2col(const double* x, std::size_t Ci, std::size_t H, std::size_t W, std::size_t K,
            std::size_t stride, std::size_t pad, std::size_t Ho, std::size_t Wo, double* col) {
  std::size_t r = 0;
  for (std::size_t c = 0; c < Ci; ++c) {
    for (std::size_t ki = 0; ki < K; ++ki) {
      for (std::size_t kj = 0; kj < K; ++kj, ++r) {
        double* dst_row = col + r * Ho * Wo;
        for (std::size_t oh = 0; oh < Ho; ++oh) {
          const long ih = static_cast<long>(oh * stride + ki) - static_cast<long>(pad);
          double* dst = dst_row + oh * Wo;
          if (ih < 0 || ih >= static_cast<long>(H)) {
            std::memset(dst, 0, Wo * sizeof(double));
            continue;
          }
          const double* src = x + (c * H + static_cast<std::size_t>(ih)) * W;
          for (std::size_t ow = 0; ow < Wo; ++ow) {
            const long iw = static_cast<long>(ow * stride + kj) - static_cast<long>(pad);
            dst[ow] = (iw >= 0 && iw < static_cast<long>(W)) ? src[iw] : 0.0;
          }
        }
      }
    }
  }
}

// Scatter-add inverse of im2col; x points at one sample's gradient [Ci,H,W].
void col2im(const double* col, std::size_t Ci, std::size_t H, std::size_t W, std::size_t K,
            std::size_t stride, std::size_t pad, std::size_t Ho, std::size_t Wo, double* x) {
  std::size_t r = 0;
  for (std::size_t c = 0; c < Ci; ++c) {
    for (std::size_t ki = 0; ki < K; ++ki) {
      for (std::size_t kj = 0; kj < K; ++kj, ++r) {
        const double* src_row = col + r * Ho * Wo;
        for (std::size_t oh = 0; oh < Ho; ++oh) {
          const long ih = static_cast<long>(oh * stride + ki) - static_cast<long>(pad);
          if (ih < 0 || ih >= static_cast<long>(H)) continue;
          const double* src = src_row + oh * Wo;
          double* dst = x + (c * H + static_cast<std::size_t>(ih)) * W;
          for (std::size_t ow = 0; ow < Wo; ++ow) {
            const long iw = static_cast<long>(ow * stride + kj) - static_cast<long>(pad);
            if (iw >= 0 && iw < static_cast<long>(W)) dst[iw] += src[ow];
          }
        }
      }
    }
  }
}

void require_rank4(const Tensor& t, const char* who) {
  if (t.shape().size() != 4)
    throw ShapeMismatch(std::string(who) + ": expected rank-4 input, got " + t.shape_str());
}

}  // namespace

void glorot_uniform(Tensor& w, std::size_t fan_in, std::size_t fan_out, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  for (std::size_t i = 0; i < w.size(); ++i) w[i] = (2.0 * rng.uniform() - 1.0) * limit;
}

Tensor conv_fwd(const Tensor& x, const Tensor& w, const Tensor* b, std::size_t stride,
                std::size_t pad) {
  require_rank4(x, "conv_fwd");
  require_rank4(w, "conv_fwd weight");
  const std::size_t B = x.shape()[0], Ci = x.shape()[1], H = x.shape()[2], W = x.shape()[3];
  const std::size_t Co = w.shape()[0], K = w.shape()[2];
  if (w.shape()[1] != Ci || w.shape()[3] != K)
    throw ShapeMismatch("conv_fwd: weight " + w.shape_str() + " does not match input " +
                        x.shape_str());
  const std::size_t Ho = conv_out(H, K, stride, pad);
  const std::size_t Wo = conv_out(W, K, stride, pad);
  Tensor y({B, Co, Ho, Wo});
  std::vector<double> col(Ci * K * K * Ho * Wo);
  for (std::size_t s = 0; s < B; ++s) {
    im2col(x.data() + s * Ci * H * W, Ci, H, W, K, stride, pad, Ho, Wo, col.data());
    detail::gemm_nn(Co, Ho * Wo, Ci * K * K, w.data(), col.data(), y.data() + s * Co * Ho * Wo,
                    false);
  }
  if (b) {
    if (b->size() != Co) throw ShapeMismatch("conv_fwd: bias size != out channels");
    for (std::size_t s = 0; s < B; ++s)
      for (std::size_t c = 0; c < Co; ++c) {
        double* plane = y.data() + (s * Co + c) * Ho * Wo;
        const double bc = (*b)[c];
        for (std::size_t i = 0; i < Ho * Wo; ++i) plane[i] += bc;
      }
  }
  return y;
}

Tensor conv_bwd_input(const Tensor& g, const Tensor& w, std::size_t stride, std::size_t pad,
                      std::size_t H, std::size_t W) {
  require_rank4(g, "conv_bwd_input");
  require_rank4(w, "conv_bwd_input weight");
  const std::size_t B = g.shape()[0], Co = g.shape()[1], Ho = g.shape()[2], Wo = g.shape()[3];
  const std::size_t Ci = w.shape()[1], K = w.shape()[2];
  if (w.shape()[0] != Co)
    throw ShapeMismatch("conv_bwd_input: weight " + w.shape_str() + " does not match grad " +
                        g.shape_str());
  if (conv_out(H, K, stride, pad) != Ho || conv_out(W, K, stride, pad) != Wo)
    throw ShapeMismatch("conv_bwd_input: grad plane " + std::to_string(Ho) + "x" +
                        std::to_string(Wo) + " inconsistent with input " + std::to_string(H) +
                        "x" + std::to_string(W));
  Tensor gx({B, Ci, H, W});
  std::vector<double> col(Ci * K * K * Ho * Wo);
  for (std::size_t s = 0; s < B; ++s) {
    detail::gemm_tn(Ci * K * K, Ho * Wo, Co, w.data(), g.data() + s * Co * Ho * Wo, col.data(),
                    false);
    col2im(col.data(), Ci, H, W, K, stride, pad, Ho, Wo, gx.data() + s * Ci * H * W);
  }
  return gx;
}

void conv_bwd_params(const Tensor& x, const Tensor& g, std::size_t stride, std::size_t pad,
                     Tensor& gw, Tensor* gb) {
  require_rank4(x, "conv_bwd_params");
  require_rank4(g, "conv_bwd_params grad");
  const std::size_t B = x.shape()[0], Ci = x.shape()[1], H = x.shape()[2], W = x.shape()[3];
  const std::size_t Co = g.shape()[1], Ho = g.shape()[2], Wo = g.shape()[3];
  const std::size_t K = gw.shape()[2];
  if (g.shape()[0] != B) throw ShapeMismatch("conv_bwd_params: batch mismatch");
  require_shape(gw, {Co, Ci, K, K}, "conv_bwd_params gw");
  if (conv_out(H, K, stride, pad) != Ho || conv_out(W, K, stride, pad) != Wo)
    throw ShapeMismatch("conv_bwd_params: grad plane inconsistent with input");
  std::vector<double> col(Ci * K * K * Ho * Wo);
  for (std::size_t s = 0; s < B; ++s) {
    im2col(x.data() + s * Ci * H * W, Ci, H, W, K, stride, pad, Ho, Wo, col.data());
    detail::gemm_nt(Co, Ci * K * K, Ho * Wo, g.data() + s * Co * Ho * Wo, col.data(), gw.data(),
                    true);
    if (gb) {
      for (std::size_t c = 0; c < Co; ++c) {
        const double* plane = g.data() + (s * Co + c) * Ho * Wo;
        double acc = 0.0;
        for (std::size_t i = 0; i < Ho * Wo; ++i) acc += plane[i];
        (*gb)[c] += acc;
      }
    }
  }
}

Dense::Dense(std::string name, std::size_t in_dim, std::size_t out_dim, Rng& rng)
    : in_dim_(in_dim),
      out_dim_(out_dim),
      w_(name + ".w", {out_dim, in_dim}),
      b_(name + ".b", {out_dim}) {
  glorot_uniform(w_.value, in_dim, out_dim, rng);
}

Tensor Dense::forward(const Tensor& x) {
  if (x.shape().size() != 2 || x.shape()[1] != in_dim_)
    throw ShapeMismatch("dense " + w_.name + ": input " + x.shape_str() + " wants [B," +
                        std::to_string(in_dim_) + "]");
  x_cache_ = x;
  const std::size_t B = x.shape()[0];
  Tensor y({B, out_dim_});
  detail::gemm_nt(B, out_dim_, in_dim_, x.data(), w_.value.data(), y.data(), false);
  for (std::size_t i = 0; i < B; ++i)
    for (std::size_t j = 0; j < out_dim_; ++j) y.at2(i, j) += b_.value[j];
  return y;
}

Tensor Dense::backward(const Tensor& g) {
  const std::size_t B = x_cache_.shape()[0];
  require_shape(g, {B, out_dim_}, "dense " + w_.name + " backward");
  detail::gemm_tn(out_dim_, in_dim_, B, g.data(), x_cache_.data(), w_.grad.data(), true);
  for (std::size_t i = 0; i < B; ++i)
    for (std::size_t j = 0; j < out_dim_; ++j) b_.grad[j] += g.at2(i, j);
  Tensor gx({B, in_dim_});
  detail::gemm_nn(B, in_dim_, out_dim_, g.data(), w_.value.data(), gx.data(), false);
  return gx;
}

Conv2d::Conv2d(std::string name, std::size_t in_ch, std::size_t out_ch, std::size_t kernel,
               std::size_t stride, std::size_t pad, Rng& rng)
    : in_ch_(in_ch),
      out_ch_(out_ch),
      kernel_(kernel),
      stride_(stride),
      pad_(pad),
      w_(name + ".w", {out_ch, in_ch, kernel, kernel}),
      b_(name + ".b", {out_ch}) {
  glorot_uniform(w_.value, in_ch * kernel * kernel, out_ch * kernel * kernel, rng);
}

Tensor Conv2d::forward(const Tensor& x) {
  x_cache_ = x;
  return conv_fwd(x, w_.value, &b_.value, stride_, pad_);
}

Tensor Conv2d::backward(const Tensor& g) {
  conv_bwd_params(x_cache_, g, stride_, pad_, w_.grad, &b_.grad);
  return conv_bwd_input(g, w_.value, stride_, pad_, x_cache_.shape()[2], x_cache_.shape()[3]);
}

ConvTranspose2d::ConvTranspose2d(std::string name, std::size_t in_ch, std::size_t out_ch,
                                 std::size_t kernel, std::size_t stride, std::size_t pad,
                                 Rng& rng)
    : in_ch_(in_ch),
      out_ch_(out_ch),
      kernel_(kernel),
      stride_(stride),
      pad_(pad),
      w_(name + ".w", {in_ch, out_ch, kernel, kernel}),
      b_(name + ".b", {out_ch}) {
  glorot_uniform(w_.value, in_ch * kernel * kernel, out_ch * kernel * kernel, rng);
}

Tensor ConvTranspose2d::forward(const Tensor& x) {
  require_rank4(x, "conv_transpose");
  if (x.shape()[1] != in_ch_)
    throw ShapeMismatch("conv_transpose " + w_.name + ": input channels " +
                        std::to_string(x.shape()[1]) + " != " + std::to_string(in_ch_));
  x_cache_ = x;
  const std::size_t H = x.shape()[2], W = x.shape()[3];
  const std::size_t Ho = (H - 1) * stride_ + kernel_ - 2 * pad_;
  const std::size_t Wo = (W - 1) * stride_ + kernel_ - 2 * pad_;
  Tensor y = conv_bwd_input(x, w_.value, stride_, pad_, Ho, Wo);
  const std::size_t B = y.shape()[0];
  for (std::size_t s = 0; s < B; ++s)
    for (std::size_t c = 0; c < out_ch_; ++c) {
      double* plane = y.data() + (s * out_ch_ + c) * Ho * Wo;
      const double bc = b_.value[c];
      for (std::size_t i = 0; i < Ho * Wo; ++i) plane[i] += bc;
    }
  return y;
}

Tensor ConvTranspose2d::backward(const Tensor& g) {
  require_rank4(g, "conv_transpose backward");
  conv_bwd_params(g, x_cache_, stride_, pad_, w_.grad, nullptr);
  const std::size_t B = g.shape()[0], Ho = g.shape()[2], Wo = g.shape()[3];
  for (std::size_t s = 0; s < B; ++s)
    for (std::size_t c = 0; c < out_ch_; ++c) {
      const double* plane = g.data() + (s * out_ch_ + c) * Ho * Wo;
      double acc = 0.0;
      for (std::size_t i = 0; i < Ho * Wo; ++i) acc += plane[i];
      b_.grad[c] += acc;
    }
  return conv_fwd(g, w_.value, nullptr, stride_, pad_);
}

Tensor Relu::forward(const Tensor& x) {
  x_cache_ = x;
  Tensor y = x;
  for (std::size_t i = 0; i < y.size(); ++i)
    if (y[i] < 0.0) y[i] = 0.0;
  return y;
}

Tensor Relu::backward(const Tensor& g) {
  if (!g.same_shape(x_cache_)) throw ShapeMismatch("relu backward: shape " + g.shape_str());
  Tensor gx = g;
  for (std::size_t i = 0; i < gx.size(); ++i)
    if (x_cache_[i] <= 0.0) gx[i] = 0.0;
  return gx;
}

Tensor GlobalAvgPool::forward(const Tensor& x) {
  require_rank4(x, "global_avg_pool");
  const std::size_t B = x.shape()[0], C = x.shape()[1];
  h_ = x.shape()[2];
  w_ = x.shape()[3];
  Tensor y({B, C});
  const double inv = 1.0 / static_cast<double>(h_ * w_);
  for (std::size_t s = 0; s < B; ++s)
    for (std::size_t c = 0; c < C; ++c) {
      const double* plane = x.data() + (s * C + c) * h_ * w_;
      double acc = 0.0;
      for (std::size_t i = 0; i < h_ * w_; ++i) acc += plane[i];
      y.at2(s, c) = acc * inv;
    }
  return y;
}

Tensor GlobalAvgPool::backward(const Tensor& g) {
  if (g.shape().size() != 2) throw ShapeMismatch("global_avg_pool backward: " + g.shape_str());
  const std::size_t B = g.shape()[0], C = g.shape()[1];
  Tensor gx({B, C, h_, w_});
  const double inv = 1.0 / static_cast<double>(h_ * w_);
  for (std::size_t s = 0; s < B; ++s)
    for (std::size_t c = 0; c < C; ++c) {
      const double gc = g.at2(s, c) * inv;
      double* plane = gx.data() + (s * C + c) * h_ * w_;
      for (std::size_t i = 0; i < h_ * w_; ++i) plane[i] = gc;
    }
  return gx;
}

Dropout::Dropout(double rate) : rate_(rate), mask_({1}) {
  if (!(rate >= 0.0 && rate < 1.0))
    throw ShapeMismatch("dropout rate must be in [0,1), got " + std::to_string(rate));
}

Tensor Dropout::forward(const Tensor& x, Rng& rng, bool training) {
  training_ = training;
  if (!training) return x;
  mask_ = Tensor(x.shape());
  const double scale = 1.0 / (1.0 - rate_);
  Tensor y = x;
  for (std::size_t i = 0; i < y.size(); ++i) {
    const double keep = rng.uniform() >= rate_ ? scale : 0.0;
    mask_[i] = keep;
    y[i] *= keep;
  }
  return y;
}

Tensor Dropout::backward(const Tensor& g) {
  if (!training_) return g;
  if (!g.same_shape(mask_)) throw ShapeMismatch("dropout backward: shape " + g.shape_str());
  Tensor gx = g;
  for (std::size_t i = 0; i < gx.size(); ++i) gx[i] *= mask_[i];
  return gx;
}

double softmax_xent(const Tensor& logits, const std::vector<std::uint32_t>& labels,
                    Tensor* grad_out, Tensor* probs_out) {
  if (logits.shape().size() != 2)
    throw ShapeMismatch("softmax_xent: logits " + logits.shape_str());
  const std::size_t B = logits.shape()[0], C = logits.shape()[1];
  if (labels.size() != B)
    throw ShapeMismatch("softmax_xent: " + std::to_string(labels.size()) + " labels for batch " +
                        std::to_string(B));
  if (grad_out) *grad_out = Tensor({B, C});
  if (probs_out) *probs_out = Tensor({B, C});
  double loss = 0.0;
  std::vector<double> p(C);
  for (std::size_t i = 0; i < B; ++i) {
    if (labels[i] >= C)
      throw ShapeMismatch("softmax_xent: label " + std::to_string(labels[i]) +
                          " out of range for " + std::to_string(C) + " classes");
    const double* row = logits.data() + i * C;
    double m = row[0];
    for (std::size_t j = 1; j < C; ++j) m = std::max(m, row[j]);
    double denom = 0.0;
    for (std::size_t j = 0; j < C; ++j) {
      p[j] = std::exp(row[j] - m);
      denom += p[j];
    }
    loss -= row[labels[i]] - m - std::log(denom);
    for (std::size_t j = 0; j < C; ++j) p[j] /= denom;
    if (grad_out) {
      double* gr = grad_out->data() + i * C;
      for (std::size_t j = 0; j < C; ++j) gr[j] = p[j] / static_cast<double>(B);
      gr[labels[i]] -= 1.0 / static_cast<double>(B);
    }
    if (probs_out) std::memcpy(probs_out->data() + i * C, p.data(), C * sizeof(double));
  }
  return loss / static_cast<double>(B);
}

}  // namespace sv::nn
