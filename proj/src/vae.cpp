#include "sv/vae.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numeric>

#include "sv/optim.hpp"

namespace sv::vae {

namespace {

void validate_config(const VaeConfig& cfg) {
  if (cfg.input_frames < 4 || cfg.input_frames % 4 != 0 || cfg.input_bins < 4 ||
      cfg.input_bins % 4 != 0)
    throw nn::ShapeMismatch("vae: input shape " + std::to_string(cfg.input_frames) + "x" +
                            std::to_string(cfg.input_bins) +
                            " must be a multiple of 4 in both axes");
  if (cfg.latent_dim == 0 || cfg.c1 == 0 || cfg.c2 == 0)
    throw nn::ShapeMismatch("vae: latent_dim and channel counts must be positive");
}

nn::Tensor patch_to_tensor(const Mat& patch, const VaeConfig& cfg) {
  if (patch.rows != cfg.input_frames || patch.cols != cfg.input_bins)
    throw nn::ShapeMismatch("vae: patch " + std::to_string(patch.rows) + "x" +
                            std::to_string(patch.cols) + " wants " +
                            std::to_string(cfg.input_frames) + "x" +
                            std::to_string(cfg.input_bins));
  nn::Tensor x({1, 1, cfg.input_frames, cfg.input_bins});
  std::memcpy(x.data(), patch.v.data(), patch.v.size() * sizeof(double));
  return x;
}

}  // namespace

LossTerms vae_loss(const Mat& x, const Mat& xr, std::span<const double> mean,
                   std::span<const double> logvar) {
  if (x.rows != xr.rows || x.cols != xr.cols)
    throw nn::ShapeMismatch("vae_loss: patch shapes differ");
  if (mean.size() != logvar.size()) throw nn::ShapeMismatch("vae_loss: latent sizes differ");
  LossTerms t;
  for (std::size_t i = 0; i < x.v.size(); ++i) {
    const double d = x.v[i] - xr.v[i];
    t.recon += d * d;
  }
  t.recon /= static_cast<double>(x.v.size());
  for (std::size_t d = 0; d < mean.size(); ++d)
    t.kl += 0.5 * (std::exp(logvar[d]) + mean[d] * mean[d] - 1.0 - logvar[d]);
  t.total = t.recon + kBeta * t.kl;
  return t;
}

VaeModel::VaeModel(const VaeConfig& cfg, Rng& rng)
    : cfg_((validate_config(cfg), cfg)),
      enc1_("enc1", 1, cfg.c1, 8, 2, 3, rng),
      enc2_("enc2", cfg.c1, cfg.c2, 8, 2, 3, rng),
      mean_head_("mean", cfg.c2, cfg.latent_dim, rng),
      logvar_head_("logvar", cfg.c2, cfg.latent_dim, rng),
      dec0_("dec0", cfg.latent_dim, cfg.c2 * (cfg.input_frames / 4) * (cfg.input_bins / 4), rng),
      dec1_("dec1", cfg.c2, cfg.c1, 8, 2, 3, rng),
      dec2_("dec2", cfg.c1, 1, 8, 2, 3, rng) {}

nn::Tensor VaeModel::encode_to_heads(const nn::Tensor& x) {
  nn::Tensor a = enc1_act_.forward(enc1_.forward(x));
  a = enc2_act_.forward(enc2_.forward(a));
  return gap_.forward(a);
}

nn::Tensor VaeModel::decode_batch(const nn::Tensor& z) {
  const std::size_t B = z.shape()[0];
  const std::size_t h2 = cfg_.input_frames / 4, w2 = cfg_.input_bins / 4;
  nn::Tensor h = dec0_.forward(z).reshaped({B, cfg_.c2, h2, w2});
  h = dec1_act_.forward(dec1_.forward(h));
  return dec2_act_.forward(dec2_.forward(h));
}

VaeForward VaeModel::forward_batch(const nn::Tensor& x, Rng* noise_rng) {
  nn::Tensor eps({x.shape()[0], cfg_.latent_dim});
  if (noise_rng)
    for (std::size_t i = 0; i < eps.size(); ++i) eps[i] = noise_rng->normal();
  return forward_given_eps(x, eps);
}

VaeForward VaeModel::forward_given_eps(const nn::Tensor& x, const nn::Tensor& eps) {
  nn::require_shape(x, {x.shape()[0], 1, cfg_.input_frames, cfg_.input_bins}, "vae forward");
  nn::require_shape(eps, {x.shape()[0], cfg_.latent_dim}, "vae forward eps");
  VaeForward fwd;
  nn::Tensor pooled = encode_to_heads(x);
  fwd.mean = mean_head_.forward(pooled);
  fwd.logvar = logvar_head_.forward(pooled);
  fwd.eps = eps;
  fwd.z = nn::Tensor({x.shape()[0], cfg_.latent_dim});
  for (std::size_t i = 0; i < fwd.z.size(); ++i)
    fwd.z[i] = fwd.mean[i] + std::exp(0.5 * fwd.logvar[i]) * fwd.eps[i];
  fwd.recon = decode_batch(fwd.z);
  return fwd;
}

LossTerms VaeModel::batch_loss(const nn::Tensor& x, const VaeForward& fwd) const {
  const std::size_t B = x.shape()[0];
  LossTerms t;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double d = x[i] - fwd.recon[i];
    t.recon += d * d;
  }
  t.recon /= static_cast<double>(x.size());
  for (std::size_t i = 0; i < fwd.mean.size(); ++i)
    t.kl += 0.5 * (std::exp(fwd.logvar[i]) + fwd.mean[i] * fwd.mean[i] - 1.0 - fwd.logvar[i]);
  t.kl /= static_cast<double>(B);
  t.total = t.recon + kBeta * t.kl;
  return t;
}

void VaeModel::backward_batch(const nn::Tensor& x, const VaeForward& fwd) {
  const std::size_t B = x.shape()[0];
  const double inv_elems = 1.0 / static_cast<double>(x.size());
  nn::Tensor gr(fwd.recon.shape());
  for (std::size_t i = 0; i < gr.size(); ++i) gr[i] = 2.0 * (fwd.recon[i] - x[i]) * inv_elems;

  nn::Tensor g = dec2_act_.backward(gr);
  g = dec2_.backward(g);
  g = dec1_act_.backward(g);
  g = dec1_.backward(g);
  const std::size_t h2 = cfg_.input_frames / 4, w2 = cfg_.input_bins / 4;
  nn::Tensor gz = dec0_.backward(g.reshaped({B, cfg_.c2 * h2 * w2}));

  // z = mean + exp(logvar/2)*eps, plus the KL term's direct dependence.
  const double kl_scale = kBeta / static_cast<double>(B);
  nn::Tensor gmean({B, cfg_.latent_dim});
  nn::Tensor glogvar({B, cfg_.latent_dim});
  for (std::size_t i = 0; i < gz.size(); ++i) {
    gmean[i] = gz[i] + kl_scale * fwd.mean[i];
    glogvar[i] = gz[i] * fwd.eps[i] * 0.5 * std::exp(0.5 * fwd.logvar[i]) +
                 kl_scale * 0.5 * (std::exp(fwd.logvar[i]) - 1.0);
  }

  nn::Tensor gpool = mean_head_.backward(gmean);
  nn::Tensor gpool2 = logvar_head_.backward(glogvar);
  for (std::size_t i = 0; i < gpool.size(); ++i) gpool[i] += gpool2[i];

  g = gap_.backward(gpool);
  g = enc2_act_.backward(g);
  g = enc2_.backward(g);
  g = enc1_act_.backward(g);
  enc1_.backward(g);
}

LatentVector VaeModel::encode(const Mat& patch, Rng& rng, bool train) {
  nn::Tensor x = patch_to_tensor(patch, cfg_);
  nn::Tensor pooled = encode_to_heads(x);
  nn::Tensor mean = mean_head_.forward(pooled);
  nn::Tensor logvar = logvar_head_.forward(pooled);
  LatentVector out;
  out.mean.assign(mean.data(), mean.data() + mean.size());
  out.logvar.assign(logvar.data(), logvar.data() + logvar.size());
  out.sample.resize(cfg_.latent_dim);
  for (std::size_t d = 0; d < cfg_.latent_dim; ++d) {
    const double eps = train ? rng.normal() : 0.0;
    out.sample[d] = out.mean[d] + std::exp(0.5 * out.logvar[d]) * eps;
  }
  return out;
}

LatentVector VaeModel::encode_eval(const Mat& patch) {
  Rng unused(0);
  return encode(patch, unused, false);
}

Mat VaeModel::decode(std::span<const double> z) {
  if (z.size() != cfg_.latent_dim)
    throw nn::ShapeMismatch("vae decode: got " + std::to_string(z.size()) +
                            " latent values, model wants " + std::to_string(cfg_.latent_dim));
  nn::Tensor zt({1, cfg_.latent_dim});
  std::copy(z.begin(), z.end(), zt.data());
  nn::Tensor recon = decode_batch(zt);
  Mat out(cfg_.input_frames, cfg_.input_bins);
  std::memcpy(out.v.data(), recon.data(), out.v.size() * sizeof(double));
  return out;
}

Mat VaeModel::reconstruct(const Mat& patch) {
  LatentVector lv = encode_eval(patch);
  return decode(lv.mean);
}

std::vector<Mat> VaeModel::latent_traversal(std::size_t component, std::size_t n_points,
                                            double lo, double hi) {
  if (component >= cfg_.latent_dim)
    throw IndexOutOfRange("latent component " + std::to_string(component) +
                          " out of range for latent_dim " + std::to_string(cfg_.latent_dim));
  std::vector<Mat> out;
  out.reserve(n_points);
  std::vector<double> z(cfg_.latent_dim, 0.0);
  for (std::size_t k = 0; k < n_points; ++k) {
    const double v =
        n_points == 1 ? lo : lo + static_cast<double>(k) * (hi - lo) / static_cast<double>(n_points - 1);
    z[component] = v;
    out.push_back(decode(z));
  }
  return out;
}

std::vector<nn::Param*> VaeModel::params() {
  std::vector<nn::Param*> out;
  for (auto* layer_params : {&enc1_, &enc2_}) {
    auto p = layer_params->params();
    out.insert(out.end(), p.begin(), p.end());
  }
  for (auto* dense : {&mean_head_, &logvar_head_, &dec0_}) {
    auto p = dense->params();
    out.insert(out.end(), p.begin(), p.end());
  }
  for (auto* tconv : {&dec1_, &dec2_}) {
    auto p = tconv->params();
    out.insert(out.end(), p.begin(), p.end());
  }
  return out;
}

std::vector<nn::Tensor> VaeModel::snapshot_values() {
  std::vector<nn::Tensor> out;
  for (nn::Param* p : params()) out.push_back(p->value);
  return out;
}

void VaeModel::restore_values(const std::vector<nn::Tensor>& values) {
  auto ps = params();
  if (values.size() != ps.size()) throw nn::ShapeMismatch("vae restore: param count mismatch");
  for (std::size_t i = 0; i < ps.size(); ++i) {
    if (!values[i].same_shape(ps[i]->value))
      throw nn::ShapeMismatch("vae restore: shape mismatch for " + ps[i]->name);
    ps[i]->value = values[i];
  }
}

void VaeModel::save(const std::string& path) {
  nn::Checkpoint ck;
  nn::Tensor meta({6});
  meta[0] = static_cast<double>(cfg_.input_frames);
  meta[1] = static_cast<double>(cfg_.input_bins);
  meta[2] = static_cast<double>(cfg_.latent_dim);
  meta[3] = static_cast<double>(cfg_.c1);
  meta[4] = static_cast<double>(cfg_.c2);
  meta[5] = norm_c_;
  ck.add("__meta__", std::move(meta));
  for (nn::Param* p : params()) ck.add(p->name, p->value);
  nn::save_checkpoint(ck, path);
}

VaeModel VaeModel::load(const std::string& path) {
  nn::Checkpoint ck = nn::load_checkpoint(path);
  const nn::Tensor& meta = ck.require("__meta__");
  if (meta.size() < 6) throw nn::BadCheckpoint(path + ": meta entry too short");
  VaeConfig cfg;
  cfg.input_frames = static_cast<std::size_t>(meta[0]);
  cfg.input_bins = static_cast<std::size_t>(meta[1]);
  cfg.latent_dim = static_cast<std::size_t>(meta[2]);
  cfg.c1 = static_cast<std::size_t>(meta[3]);
  cfg.c2 = static_cast<std::size_t>(meta[4]);
  Rng scratch(0);
  VaeModel model(cfg, scratch);
  for (nn::Param* p : model.params()) {
    const nn::Tensor& t = ck.require(p->name);
    if (!t.same_shape(p->value))
      throw nn::BadCheckpoint(path + ": tensor " + p->name + " has shape " + t.shape_str());
    p->value = t;
  }
  model.set_norm_c(meta[5]);
  return model;
}

namespace {

nn::Tensor gather_batch(const std::vector<features::Patch>& patches,
                        const std::vector<std::size_t>& order, std::size_t begin,
                        std::size_t count, const VaeConfig& cfg) {
  nn::Tensor x({count, 1, cfg.input_frames, cfg.input_bins});
  const std::size_t elems = cfg.input_frames * cfg.input_bins;
  for (std::size_t i = 0; i < count; ++i) {
    const Mat& m = patches[order[begin + i]].data;
    if (m.rows != cfg.input_frames || m.cols != cfg.input_bins)
      throw nn::ShapeMismatch("train_vae: patch " + std::to_string(m.rows) + "x" +
                              std::to_string(m.cols) + " does not match model input");
    std::memcpy(x.data() + i * elems, m.v.data(), elems * sizeof(double));
  }
  return x;
}

LossTerms eval_dataset(VaeModel& model, const std::vector<features::Patch>& patches,
                       std::size_t batch_size, const VaeConfig& cfg) {
  std::vector<std::size_t> order(patches.size());
  std::iota(order.begin(), order.end(), 0);
  LossTerms acc;
  for (std::size_t at = 0; at < patches.size(); at += batch_size) {
    const std::size_t n = std::min(batch_size, patches.size() - at);
    nn::Tensor x = gather_batch(patches, order, at, n, cfg);
    VaeForward fwd = model.forward_batch(x, nullptr);
    LossTerms lt = model.batch_loss(x, fwd);
    acc.recon += lt.recon * static_cast<double>(n);
    acc.kl += lt.kl * static_cast<double>(n);
  }
  acc.recon /= static_cast<double>(patches.size());
  acc.kl /= static_cast<double>(patches.size());
  acc.total = acc.recon + kBeta * acc.kl;
  return acc;
}

}  // namespace

std::pair<VaeModel, TrainReport> train_vae(const PatchDataset& data, const VaeConfig& model_cfg,
                                           const TrainConfig& train_cfg) {
  if (data.train.empty()) throw EmptyDataset("train_vae: no training patches");
  if (train_cfg.batch_size == 0 || train_cfg.batch_size > data.train.size())
    throw EmptyDataset("train_vae: batch_size " + std::to_string(train_cfg.batch_size) +
                       " invalid for training set of " + std::to_string(data.train.size()));

  Rng root(train_cfg.seed);
  Rng init_rng = root.fork("init");
  Rng shuffle_rng = root.fork("shuffle");
  Rng noise_rng = root.fork("noise");

  VaeModel model(model_cfg, init_rng);
  nn::AdamConfig adam_cfg;
  adam_cfg.lr = train_cfg.lr;
  nn::Adam opt(model.params(), adam_cfg);

  TrainReport report;
  report.seed = train_cfg.seed;

  std::vector<std::size_t> order(data.train.size());
  std::iota(order.begin(), order.end(), 0);
  std::vector<nn::Tensor> best_values;
  double best_metric = 0.0;

  for (std::size_t epoch = 1; epoch <= train_cfg.epochs; ++epoch) {
    for (std::size_t i = order.size(); i > 1; --i) {
      const std::size_t j = shuffle_rng.below(i);
      std::swap(order[i - 1], order[j]);
    }

    EpochStats stats;
    double seen = 0.0;
    std::size_t batch_index = 0;
    for (std::size_t at = 0; at < order.size(); at += train_cfg.batch_size, ++batch_index) {
      const std::size_t n = std::min(train_cfg.batch_size, order.size() - at);
      nn::Tensor x = gather_batch(data.train, order, at, n, model_cfg);
      VaeForward fwd = model.forward_batch(x, &noise_rng);
      LossTerms lt = model.batch_loss(x, fwd);
      if (!std::isfinite(lt.total))
        throw DivergedLoss("train_vae: non-finite loss at epoch " + std::to_string(epoch) +
                           " batch " + std::to_string(batch_index));
      opt.zero_grad();
      model.backward_batch(x, fwd);
      opt.step();
      stats.train_recon += lt.recon * static_cast<double>(n);
      stats.train_kl += lt.kl * static_cast<double>(n);
      seen += static_cast<double>(n);
    }
    stats.train_recon /= seen;
    stats.train_kl /= seen;
    stats.train_loss = stats.train_recon + kBeta * stats.train_kl;

    double metric = stats.train_loss;
    if (!data.test.empty()) {
      LossTerms test = eval_dataset(model, data.test, train_cfg.batch_size, model_cfg);
      stats.test_loss = test.total;
      stats.test_recon = test.recon;
      stats.test_kl = test.kl;
      metric = test.total;
    }
    report.epochs.push_back(stats);

    if (report.best_epoch == 0 || metric < best_metric) {
      best_metric = metric;
      best_values = model.snapshot_values();
      report.best_epoch = epoch;
    }
  }

  if (!best_values.empty()) model.restore_values(best_values);
  return {std::move(model), std::move(report)};
}

}  // namespace sv::vae
