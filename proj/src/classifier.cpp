#include "sv/classifier.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>

#include "sv/optim.hpp"
#include "json.hpp"

namespace sv::classifier {

using json = nlohmann::json;

MlpModel::MlpModel(std::size_t input_dim, std::size_t n_classes, std::size_t hidden,
                   double dropout, Rng& rng)
    : input_dim_(input_dim),
      n_classes_(n_classes),
      fc1_("fc1", input_dim, hidden, rng),
      drop1_(dropout),
      fc2_("fc2", hidden, hidden, rng),
      drop2_(dropout),
      fc3_("fc3", hidden, n_classes, rng) {}

nn::Tensor MlpModel::logits(const nn::Tensor& x, Rng* drop_rng) {
  const bool training = drop_rng != nullptr;
  Rng scratch(0);
  Rng& r = training ? *drop_rng : scratch;
  nn::Tensor h = act1_.forward(fc1_.forward(x));
  h = drop1_.forward(h, r, training);
  h = act2_.forward(fc2_.forward(h));
  h = drop2_.forward(h, r, training);
  return fc3_.forward(h);
}

void MlpModel::backward(const nn::Tensor& g) {
  nn::Tensor gx = fc3_.backward(g);
  gx = drop2_.backward(gx);
  gx = act2_.backward(gx);
  gx = fc2_.backward(gx);
  gx = drop1_.backward(gx);
  gx = act1_.backward(gx);
  fc1_.backward(gx);
}

std::vector<nn::Param*> MlpModel::params() {
  std::vector<nn::Param*> out;
  for (nn::Dense* d : {&fc1_, &fc2_, &fc3_}) {
    auto p = d->params();
    out.insert(out.end(), p.begin(), p.end());
  }
  return out;
}

std::vector<nn::Tensor> MlpModel::snapshot_values() {
  std::vector<nn::Tensor> out;
  for (nn::Param* p : params()) out.push_back(p->value);
  return out;
}

void MlpModel::restore_values(const std::vector<nn::Tensor>& values) {
  auto ps = params();
  if (values.size() != ps.size()) throw nn::ShapeMismatch("mlp restore: param count mismatch");
  for (std::size_t i = 0; i < ps.size(); ++i) ps[i]->value = values[i];
}

namespace {

struct TensorData {
  nn::Tensor x{std::vector<std::size_t>{1}};
  std::vector<std::uint32_t> labels;
};

TensorData to_tensor(const features::FeatureFile& f) {
  TensorData d;
  d.x = nn::Tensor({f.count(), f.dim});
  for (std::size_t i = 0; i < f.values.size(); ++i) d.x[i] = static_cast<double>(f.values[i]);
  d.labels = f.labels;
  return d;
}

std::size_t argmax_row(const double* row, std::size_t n) {
  std::size_t best = 0;
  for (std::size_t j = 1; j < n; ++j)
    if (row[j] > row[best]) best = j;  // strict: ties keep the lower index
  return best;
}

nn::Tensor slice_rows(const nn::Tensor& x, const std::vector<std::size_t>& order,
                      std::size_t begin, std::size_t count) {
  const std::size_t dim = x.shape()[1];
  nn::Tensor out({count, dim});
  for (std::size_t i = 0; i < count; ++i)
    std::copy_n(x.data() + order[begin + i] * dim, dim, out.data() + i * dim);
  return out;
}

// accuracy + confusion + mean loss in eval mode, batched
struct EvalOut {
  double accuracy = 0.0;
  double loss = 0.0;
  Mat confusion;
};

EvalOut eval_tensor(MlpModel& model, const TensorData& d, std::size_t n_classes,
                    std::size_t batch) {
  const std::size_t n = d.labels.size();
  EvalOut out;
  out.confusion = Mat(n_classes, n_classes);
  std::size_t correct = 0;
  double loss_sum = 0.0;
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  for (std::size_t at = 0; at < n; at += batch) {
    const std::size_t count = std::min(batch, n - at);
    nn::Tensor xb = slice_rows(d.x, order, at, count);
    std::vector<std::uint32_t> lb(d.labels.begin() + static_cast<std::ptrdiff_t>(at),
                                  d.labels.begin() + static_cast<std::ptrdiff_t>(at + count));
    nn::Tensor lg = model.logits(xb, nullptr);
    loss_sum += nn::softmax_xent(lg, lb, nullptr, nullptr) * static_cast<double>(count);
    for (std::size_t i = 0; i < count; ++i) {
      const std::size_t pred = argmax_row(lg.data() + i * n_classes, n_classes);
      if (pred == lb[i]) ++correct;
      out.confusion.at(lb[i], pred) += 1.0;
    }
  }
  out.accuracy = static_cast<double>(correct) / static_cast<double>(n);
  out.loss = loss_sum / static_cast<double>(n);
  return out;
}

std::string fmt17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

std::pair<MlpModel, EvalReport> train_mlp(const features::FeatureFile& train,
                                          const features::FeatureFile& test,
                                          const MlpConfig& cfg) {
  if (train.count() == 0 || test.count() == 0)
    throw EmptyDataset("train_mlp: empty feature file");
  if (train.dim != test.dim)
    throw DimMismatch("train_mlp: train dim " + std::to_string(train.dim) + " != test dim " +
                      std::to_string(test.dim));
  std::uint32_t n_classes = std::max(train.n_classes, test.n_classes);
  for (std::uint32_t l : train.labels) n_classes = std::max(n_classes, l + 1);
  for (std::uint32_t l : test.labels) n_classes = std::max(n_classes, l + 1);
  if (n_classes < 2) throw DimMismatch("train_mlp: need at least 2 classes");

  TensorData tr = to_tensor(train);
  TensorData te = to_tensor(test);

  if (cfg.zscore) {
    const std::size_t dim = train.dim;
    std::vector<double> mean(dim, 0.0), sd(dim, 0.0);
    for (std::size_t i = 0; i < tr.labels.size(); ++i)
      for (std::size_t j = 0; j < dim; ++j) mean[j] += tr.x[i * dim + j];
    for (double& m : mean) m /= static_cast<double>(tr.labels.size());
    for (std::size_t i = 0; i < tr.labels.size(); ++i)
      for (std::size_t j = 0; j < dim; ++j) {
        const double d = tr.x[i * dim + j] - mean[j];
        sd[j] += d * d;
      }
    for (double& s : sd) s = std::max(std::sqrt(s / static_cast<double>(tr.labels.size())), 1e-8);
    for (std::size_t i = 0; i < tr.labels.size(); ++i)
      for (std::size_t j = 0; j < dim; ++j) tr.x[i * dim + j] = (tr.x[i * dim + j] - mean[j]) / sd[j];
    for (std::size_t i = 0; i < te.labels.size(); ++i)
      for (std::size_t j = 0; j < dim; ++j) te.x[i * dim + j] = (te.x[i * dim + j] - mean[j]) / sd[j];
  }

  Rng root(cfg.seed);
  Rng init_rng = root.fork("init");
  Rng shuffle_rng = root.fork("shuffle");
  Rng drop_rng = root.fork("dropout");

  MlpModel model(train.dim, n_classes, cfg.hidden, cfg.dropout, init_rng);
  nn::AdamConfig adam_cfg;
  adam_cfg.lr = cfg.lr;
  nn::Adam opt(model.params(), adam_cfg);

  EvalReport report;
  report.seed = cfg.seed;
  report.confusion = Mat(n_classes, n_classes);

  const std::size_t batch = std::min(cfg.batch_size, tr.labels.size());
  std::vector<std::size_t> order(tr.labels.size());
  std::iota(order.begin(), order.end(), 0);
  std::vector<nn::Tensor> best_values = model.snapshot_values();
  double best_acc = -1.0;

  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    for (std::size_t i = order.size(); i > 1; --i) {
      const std::size_t j = shuffle_rng.below(i);
      std::swap(order[i - 1], order[j]);
    }

    double loss_sum = 0.0;
    std::size_t correct = 0;
    for (std::size_t at = 0; at < order.size(); at += batch) {
      const std::size_t count = std::min(batch, order.size() - at);
      nn::Tensor xb = slice_rows(tr.x, order, at, count);
      std::vector<std::uint32_t> lb(count);
      for (std::size_t i = 0; i < count; ++i) lb[i] = tr.labels[order[at + i]];
      nn::Tensor lg = model.logits(xb, &drop_rng);
      nn::Tensor grad({1});
      loss_sum += nn::softmax_xent(lg, lb, &grad, nullptr) * static_cast<double>(count);
      for (std::size_t i = 0; i < count; ++i)
        if (argmax_row(lg.data() + i * n_classes, n_classes) == lb[i]) ++correct;
      opt.zero_grad();
      model.backward(grad);
      opt.step();
    }
    report.train_loss.push_back(loss_sum / static_cast<double>(order.size()));
    report.train_acc.push_back(static_cast<double>(correct) /
                               static_cast<double>(order.size()));

    EvalOut tr_eval = eval_tensor(model, tr, n_classes, 256);
    report.train_acc_clean.push_back(tr_eval.accuracy);
    EvalOut te_eval = eval_tensor(model, te, n_classes, 256);
    report.test_acc.push_back(te_eval.accuracy);
    report.test_loss.push_back(te_eval.loss);

    if (te_eval.accuracy > best_acc) {
      best_acc = te_eval.accuracy;
      best_values = model.snapshot_values();
      report.best_epoch = epoch;
    }

    const auto t1 = std::chrono::steady_clock::now();
    report.epoch_seconds.push_back(std::chrono::duration<double>(t1 - t0).count());
  }

  model.restore_values(best_values);
  if (cfg.epochs > 0) {
    EvalOut final_eval = eval_tensor(model, te, n_classes, 256);
    report.confusion = final_eval.confusion;
  }
  return {std::move(model), std::move(report)};
}

std::pair<double, Mat> evaluate(MlpModel& model, const features::FeatureFile& data) {
  if (data.count() == 0) throw EmptyDataset("evaluate: empty feature file");
  if (data.dim != model.input_dim())
    throw DimMismatch("evaluate: feature dim " + std::to_string(data.dim) + " != model dim " +
                      std::to_string(model.input_dim()));
  TensorData d = to_tensor(data);
  for (std::uint32_t l : d.labels)
    if (l >= model.n_classes())
      throw DimMismatch("evaluate: label " + std::to_string(l) + " out of model range");
  EvalOut out = eval_tensor(model, d, model.n_classes(), 256);
  return {out.accuracy, std::move(out.confusion)};
}

void save_report(const EvalReport& report, const std::string& path) {
  json j;
  j["kind"] = report.kind;
  j["train_loss"] = report.train_loss;
  j["test_loss"] = report.test_loss;
  j["train_acc"] = report.train_acc;
  j["train_acc_clean"] = report.train_acc_clean;
  j["test_acc"] = report.test_acc;
  j["epoch_seconds"] = report.epoch_seconds;
  j["best_epoch"] = report.best_epoch;
  j["seed"] = report.seed;
  j["train_bytes"] = report.train_bytes;
  j["test_bytes"] = report.test_bytes;
  std::vector<std::vector<double>> conf(report.confusion.rows);
  for (std::size_t r = 0; r < report.confusion.rows; ++r)
    conf[r].assign(report.confusion.v.begin() + static_cast<std::ptrdiff_t>(r * report.confusion.cols),
                   report.confusion.v.begin() +
                       static_cast<std::ptrdiff_t>((r + 1) * report.confusion.cols));
  j["confusion"] = conf;
  std::ofstream os(path);
  if (!os) throw IoError("cannot open " + path + " for writing");
  os << j.dump(2) << "\n";
  if (!os) throw IoError("write failed for " + path);
}

EvalReport load_report(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open " + path);
  json j;
  try {
    is >> j;
  } catch (const json::exception& e) {
    throw IoError(path + ": not a valid report file: " + e.what());
  }
  EvalReport r;
  r.kind = j.value("kind", "");
  r.train_loss = j.value("train_loss", std::vector<double>{});
  r.test_loss = j.value("test_loss", std::vector<double>{});
  r.train_acc = j.value("train_acc", std::vector<double>{});
  r.train_acc_clean = j.value("train_acc_clean", std::vector<double>{});
  r.test_acc = j.value("test_acc", std::vector<double>{});
  r.epoch_seconds = j.value("epoch_seconds", std::vector<double>{});
  r.best_epoch = j.value("best_epoch", std::size_t{0});
  r.seed = j.value("seed", std::uint64_t{0});
  r.train_bytes = j.value("train_bytes", std::uintmax_t{0});
  r.test_bytes = j.value("test_bytes", std::uintmax_t{0});
  const auto conf = j.value("confusion", std::vector<std::vector<double>>{});
  if (!conf.empty()) {
    r.confusion = Mat(conf.size(), conf[0].size());
    for (std::size_t i = 0; i < conf.size(); ++i)
      for (std::size_t k = 0; k < conf[i].size(); ++k) r.confusion.at(i, k) = conf[i][k];
  }
  return r;
}

void write_epochs_csv(const EvalReport& report, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open " + path + " for writing");
  os << "epoch,train_loss,train_acc,train_acc_clean,test_loss,test_acc\n";
  for (std::size_t e = 0; e < report.train_loss.size(); ++e) {
    os << (e + 1) << ',' << fmt17(report.train_loss[e]) << ',' << fmt17(report.train_acc[e])
       << ',' << fmt17(report.train_acc_clean[e]) << ',' << fmt17(report.test_loss[e]) << ','
       << fmt17(report.test_acc[e]) << '\n';
  }
  if (!os) throw IoError("write failed for " + path);
}

namespace {

struct CompareValues {
  double train_acc = 0.0, test_acc = 0.0, time_s = 0.0;
  std::size_t best_epoch = 0;
  double size_mb = 0.0;
};

CompareValues pick(const EvalReport& r) {
  CompareValues v;
  if (r.best_epoch > 0 && r.best_epoch <= r.train_acc.size()) {
    v.train_acc = r.train_acc[r.best_epoch - 1];
    v.test_acc = r.test_acc[r.best_epoch - 1];
  }
  v.time_s = std::accumulate(r.epoch_seconds.begin(), r.epoch_seconds.end(), 0.0);
  v.best_epoch = r.best_epoch;
  v.size_mb = static_cast<double>(r.train_bytes) / 1e6;
  return v;
}

}  // namespace

std::string compare_report_text(const EvalReport& vae_report, const EvalReport& mfcc_report) {
  const CompareValues a = pick(vae_report);
  const CompareValues b = pick(mfcc_report);
  const double ratio = a.size_mb > 0.0 ? b.size_mb / a.size_mb : 0.0;
  char buf[160];
  std::string out;
  out += "metric                      vae         mfcc\n";
  std::snprintf(buf, sizeof(buf), "%-26s  %-10.4f  %-10.4f\n", "Train accuracy", a.train_acc,
                b.train_acc);
  out += buf;
  std::snprintf(buf, sizeof(buf), "%-26s  %-10.4f  %-10.4f\n", "Test accuracy", a.test_acc,
                b.test_acc);
  out += buf;
  std::snprintf(buf, sizeof(buf), "%-26s  %-10.1f  %-10.1f\n", "MLP training time (s)", a.time_s,
                b.time_s);
  out += buf;
  std::snprintf(buf, sizeof(buf), "%-26s  %-10zu  %-10zu\n", "Best epoch", a.best_epoch,
                b.best_epoch);
  out += buf;
  std::snprintf(buf, sizeof(buf), "%-26s  %-10.2f  %-10.2f\n", "Train size (MB)", a.size_mb,
                b.size_mb);
  out += buf;
  std::snprintf(buf, sizeof(buf), "%-26s  %.2f\n", "Size ratio (mfcc/vae)", ratio);
  out += buf;
  return out;
}

std::string compare_report_csv(const EvalReport& vae_report, const EvalReport& mfcc_report) {
  const CompareValues a = pick(vae_report);
  const CompareValues b = pick(mfcc_report);
  const double ratio = a.size_mb > 0.0 ? b.size_mb / a.size_mb : 0.0;
  std::string out = "metric,vae,mfcc\n";
  out += "train_accuracy," + fmt17(a.train_acc) + ',' + fmt17(b.train_acc) + '\n';
  out += "test_accuracy," + fmt17(a.test_acc) + ',' + fmt17(b.test_acc) + '\n';
  out += "training_time_s," + fmt17(a.time_s) + ',' + fmt17(b.time_s) + '\n';
  out += "best_epoch," + std::to_string(a.best_epoch) + ',' + std::to_string(b.best_epoch) + '\n';
  out += "train_size_bytes," + std::to_string(vae_report.train_bytes) + ',' +
         std::to_string(mfcc_report.train_bytes) + '\n';
  out += "size_ratio_mfcc_over_vae," + fmt17(ratio) + '\n';
  return out;
}

}  // namespace sv::classifier
