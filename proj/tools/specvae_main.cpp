#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "sv/audio_io.hpp"
#include "sv/checkpoint.hpp"
#include "sv/classifier.hpp"
#include "sv/config.hpp"
#include "sv/dsp.hpp"
#include "sv/features.hpp"
#include "sv/vae.hpp"

namespace fs = std::filesystem;

namespace {

// Removes files created by a failed subcommand so partial outputs never
// survive a nonzero exit.
struct OutputGuard {
  std::vector<fs::path> paths;
  bool armed = true;

  void add(fs::path p) { paths.push_back(std::move(p)); }
  void release() { armed = false; }
  ~OutputGuard() {
    if (!armed) return;
    for (const auto& p : paths) {
      std::error_code ec;
      fs::remove(p, ec);
    }
  }
};

std::string fmt17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

sv::config::ExperimentConfig load_config(const std::string& path) {
  if (path.empty()) return sv::config::ExperimentConfig::from_ini(sv::config::Ini{});
  return sv::config::ExperimentConfig::from_ini(sv::config::Ini::parse_file(path));
}

// Spectrogram matrices are frames x bins; images read better with frequency
// rising up the vertical axis.
sv::Mat presentation(const sv::Mat& spec) {
  sv::Mat img(spec.cols, spec.rows);
  for (std::size_t r = 0; r < img.rows; ++r)
    for (std::size_t c = 0; c < img.cols; ++c) img.at(r, c) = spec.at(c, spec.cols - 1 - r);
  return img;
}

sv::Mat log_view(const sv::Mat& power) {
  sv::Mat out(power.rows, power.cols);
  for (std::size_t i = 0; i < power.v.size(); ++i) out.v[i] = std::log1p(power.v[i] / 1e-10);
  return out;
}

void write_effective_config(const sv::config::ExperimentConfig& cfg, const fs::path& path,
                            OutputGuard& guard) {
  guard.add(path);
  std::ofstream os(path, std::ios::binary);
  if (!os) throw sv::IoError("cannot open " + path.string() + " for writing");
  os << cfg.to_ini().dump();
  if (!os) throw sv::IoError("write failed for " + path.string());
}

sv::dsp::StftConfig stft_from(const sv::config::ExperimentConfig& cfg) {
  return sv::dsp::StftConfig(cfg.stft_win, cfg.stft_hop, cfg.stft_nfft, sv::dsp::Window::hann);
}

struct PreparedPatches {
  sv::vae::PatchDataset data;
  double norm_c = 1.0;
  std::size_t patch_frames = 0;
  std::size_t patch_bins = 0;
};

constexpr const char* kPatchesTrain = "train";
constexpr const char* kPatchesTest = "test";
constexpr const char* kPatchesNorm = "norm_c";
constexpr const char* kPatchesShape = "patch_shape";

void save_patches(const PreparedPatches& p, const fs::path& path) {
  sv::nn::Checkpoint ck;
  auto pack = [&](const std::vector<sv::features::Patch>& patches, const char* name) {
    if (patches.empty()) return;
    sv::nn::Tensor t({patches.size(), p.patch_frames, p.patch_bins});
    const std::size_t elems = p.patch_frames * p.patch_bins;
    for (std::size_t i = 0; i < patches.size(); ++i)
      std::memcpy(t.data() + i * elems, patches[i].data.v.data(), elems * sizeof(double));
    ck.add(name, std::move(t));
  };
  pack(p.data.train, kPatchesTrain);
  pack(p.data.test, kPatchesTest);
  sv::nn::Tensor norm({1});
  norm[0] = p.norm_c;
  ck.add(kPatchesNorm, std::move(norm));
  sv::nn::Tensor shape({2});
  shape[0] = static_cast<double>(p.patch_frames);
  shape[1] = static_cast<double>(p.patch_bins);
  ck.add(kPatchesShape, std::move(shape));
  sv::nn::save_checkpoint(ck, path.string());
}

PreparedPatches load_patches(const fs::path& path) {
  const sv::nn::Checkpoint ck = sv::nn::load_checkpoint(path.string());
  PreparedPatches p;
  const sv::nn::Tensor& shape = ck.require(kPatchesShape);
  p.patch_frames = static_cast<std::size_t>(shape[0]);
  p.patch_bins = static_cast<std::size_t>(shape[1]);
  p.norm_c = ck.require(kPatchesNorm)[0];
  auto unpack = [&](const char* name, std::vector<sv::features::Patch>& out) {
    const sv::nn::Tensor* t = ck.find(name);
    if (!t) return;
    const std::size_t n = t->shape()[0];
    const std::size_t elems = p.patch_frames * p.patch_bins;
    out.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      out[i].data = sv::Mat(p.patch_frames, p.patch_bins);
      std::memcpy(out[i].data.v.data(), t->data() + i * elems, elems * sizeof(double));
    }
  };
  unpack(kPatchesTrain, p.data.train);
  unpack(kPatchesTest, p.data.test);
  return p;
}

int cmd_spectrogram(const std::string& wav, const std::string& out, const std::string& config) {
  const auto cfg = load_config(config);
  const sv::dsp::StftConfig stft_cfg = stft_from(cfg);
  const sv::audio::AudioBuffer audio = sv::audio::load_wav(wav);
  const sv::dsp::Spectrogram spec =
      sv::dsp::power_spectrogram(sv::dsp::stft(audio, stft_cfg), stft_cfg, audio.sample_rate);
  const fs::path out_path(out);
  OutputGuard guard;
  guard.add(out_path);
  if (out_path.extension() == ".pgm") {
    sv::audio::write_matrix(presentation(log_view(spec.data)), out_path,
                            sv::audio::MatrixFormat::pgm);
  } else if (out_path.extension() == ".csv") {
    sv::audio::write_matrix(spec.data, out_path, sv::audio::MatrixFormat::csv);
  } else {
    throw sv::config::BadConfig("out: expected a .pgm or .csv path, got " + out);
  }
  guard.release();
  std::cout << "wrote " << out << " (" << spec.data.rows << " frames x " << spec.data.cols
            << " bins)\n";
  return 0;
}

int cmd_mfcc(const std::string& wav, const std::string& out) {
  const sv::audio::AudioBuffer audio = sv::audio::load_wav(wav);
  const sv::dsp::StftConfig cfg = sv::features::mfcc_stft_config();
  const sv::dsp::MelFilterbank fb = sv::dsp::make_mel_filterbank(
      sv::features::kMfccFilters, cfg.n_fft, audio.sample_rate, 0.0, 8000.0);
  const sv::Mat coeffs = sv::dsp::mfcc(audio, cfg, fb, sv::features::kMfccCoeffs);
  OutputGuard guard;
  guard.add(out);
  sv::audio::write_matrix(coeffs, out, sv::audio::MatrixFormat::csv);
  guard.release();
  std::cout << "wrote " << out << " (" << coeffs.rows << " frames x " << coeffs.cols
            << " coefficients)\n";
  return 0;
}

int cmd_prepare_patches(const std::string& manifest_path, const std::string& out_dir,
                        const std::string& config) {
  const auto cfg = load_config(config);
  const sv::dsp::StftConfig stft_cfg = stft_from(cfg);
  const sv::features::Manifest manifest = sv::features::Manifest::load(manifest_path);
  if (manifest.entries.empty())
    throw sv::features::BadManifest(manifest_path + ": manifest has no entries");
  const fs::path root = fs::path(manifest_path).parent_path();

  std::vector<sv::Mat> train_specs, test_specs;
  std::vector<std::uint32_t> train_ids, test_ids;
  for (std::size_t i = 0; i < manifest.entries.size(); ++i) {
    const auto& e = manifest.entries[i];
    const sv::audio::AudioBuffer clip = sv::audio::load_wav(root / e.path);
    const sv::audio::AudioBuffer padded = sv::features::pad_clip(clip);
    sv::dsp::Spectrogram spec = sv::dsp::power_spectrogram(
        sv::dsp::stft(padded, stft_cfg), stft_cfg, padded.sample_rate);
    if (e.split == "train") {
      train_specs.push_back(std::move(spec.data));
      train_ids.push_back(static_cast<std::uint32_t>(i));
    } else {
      test_specs.push_back(std::move(spec.data));
      test_ids.push_back(static_cast<std::uint32_t>(i));
    }
  }
  if (train_specs.empty())
    throw sv::features::BadManifest(manifest_path + ": no train-split entries");

  PreparedPatches prep;
  prep.norm_c = sv::features::compute_norm_constant(train_specs);
  prep.patch_frames = cfg.patch_frames;
  prep.patch_bins = stft_cfg.n_fft / 2;

  auto collect = [&](const std::vector<sv::Mat>& specs, const std::vector<std::uint32_t>& ids,
                     std::vector<sv::features::Patch>& out) {
    for (std::size_t i = 0; i < specs.size(); ++i) {
      const sv::Mat norm = sv::features::normalize_spectrogram(specs[i], prep.norm_c);
      auto patches =
          sv::features::extract_patches(norm, cfg.patch_frames, cfg.patch_stride, ids[i]);
      for (auto& p : patches) out.push_back(std::move(p));
    }
  };
  collect(train_specs, train_ids, prep.data.train);
  collect(test_specs, test_ids, prep.data.test);

  // carve a held-out tail when the manifest has no test split of its own
  if (prep.data.test.empty() && cfg.test_fraction > 0.0) {
    const std::size_t n_test = static_cast<std::size_t>(
        static_cast<double>(prep.data.train.size()) * cfg.test_fraction);
    if (n_test > 0 && n_test < prep.data.train.size()) {
      prep.data.test.assign(prep.data.train.end() - static_cast<std::ptrdiff_t>(n_test),
                            prep.data.train.end());
      prep.data.train.resize(prep.data.train.size() - n_test);
    }
  }

  fs::create_directories(out_dir);
  OutputGuard guard;
  const fs::path patches_path = fs::path(out_dir) / "patches.svae";
  guard.add(patches_path);
  save_patches(prep, patches_path);
  write_effective_config(cfg, fs::path(out_dir) / "effective.ini", guard);
  guard.release();
  std::cout << "wrote " << patches_path.string() << ": " << prep.data.train.size()
            << " train patches, " << prep.data.test.size() << " test patches, norm_c "
            << fmt17(prep.norm_c) << "\n";
  return 0;
}

void write_vae_csv(const sv::vae::TrainReport& report, const fs::path& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw sv::IoError("cannot open " + path.string() + " for writing");
  os << "epoch,train_loss,train_recon,train_kl,test_loss,test_recon,test_kl\n";
  for (std::size_t e = 0; e < report.epochs.size(); ++e) {
    const auto& s = report.epochs[e];
    os << (e + 1) << ',' << fmt17(s.train_loss) << ',' << fmt17(s.train_recon) << ','
       << fmt17(s.train_kl) << ',' << fmt17(s.test_loss) << ',' << fmt17(s.test_recon) << ','
       << fmt17(s.test_kl) << '\n';
  }
  if (!os) throw sv::IoError("write failed for " + path.string());
}

int cmd_train_vae(const std::string& config) {
  const auto cfg = load_config(config);
  if (cfg.patches_path.empty())
    throw sv::config::BadConfig("[data] patches: required for train-vae");
  if (cfg.out_dir.empty()) throw sv::config::BadConfig("[data] out_dir: required for train-vae");

  const PreparedPatches prep = load_patches(cfg.patches_path);
  if (prep.patch_frames != cfg.vae.input_frames || prep.patch_bins != cfg.vae.input_bins)
    throw sv::config::BadConfig(
        "[vae] input_frames/input_bins: patches file holds " +
        std::to_string(prep.patch_frames) + "x" + std::to_string(prep.patch_bins) +
        ", config wants " + std::to_string(cfg.vae.input_frames) + "x" +
        std::to_string(cfg.vae.input_bins));

  auto [model, report] = sv::vae::train_vae(prep.data, cfg.vae, cfg.vae_train);
  model.set_norm_c(prep.norm_c);

  fs::create_directories(cfg.out_dir);
  OutputGuard guard;
  const fs::path ckpt_path = fs::path(cfg.out_dir) / "model.svae";
  const fs::path csv_path = fs::path(cfg.out_dir) / "vae_epochs.csv";
  guard.add(ckpt_path);
  guard.add(csv_path);
  model.save(ckpt_path.string());
  write_vae_csv(report, csv_path);
  write_effective_config(cfg, fs::path(cfg.out_dir) / "effective.ini", guard);
  guard.release();
  std::cout << "trained " << report.epochs.size() << " epochs, best epoch "
            << report.best_epoch << "; wrote " << ckpt_path.string() << "\n";
  return 0;
}

int cmd_reconstruct(const std::string& ckpt, const std::string& wav, std::size_t frame,
                    const std::string& out_dir) {
  sv::vae::VaeModel model = sv::vae::VaeModel::load(ckpt);
  const sv::audio::AudioBuffer clip = sv::audio::load_wav(wav);
  const sv::dsp::StftConfig stft_cfg = sv::features::vae_stft_config();
  const sv::audio::AudioBuffer padded = sv::features::pad_clip(clip);
  const sv::dsp::Spectrogram spec = sv::dsp::power_spectrogram(
      sv::dsp::stft(padded, stft_cfg), stft_cfg, padded.sample_rate);
  const sv::Mat norm = sv::features::normalize_spectrogram(spec.data, model.norm_c());
  const auto patches = sv::features::extract_patches(norm, model.config().input_frames,
                                                     sv::features::kPatchStride);
  if (frame >= patches.size())
    throw sv::vae::IndexOutOfRange("frame " + std::to_string(frame) + " out of range; clip has " +
                                   std::to_string(patches.size()) + " patches");
  const sv::Mat& original = patches[frame].data;
  const sv::Mat recon = model.reconstruct(original);

  fs::create_directories(out_dir);
  OutputGuard guard;
  const fs::path orig_path =
      fs::path(out_dir) / ("recon_orig_" + std::to_string(frame) + ".pgm");
  const fs::path vae_path = fs::path(out_dir) / ("recon_vae_" + std::to_string(frame) + ".pgm");
  guard.add(orig_path);
  guard.add(vae_path);
  sv::audio::write_matrix(presentation(original), orig_path, sv::audio::MatrixFormat::pgm);
  sv::audio::write_matrix(presentation(recon), vae_path, sv::audio::MatrixFormat::pgm);
  guard.release();
  std::cout << "wrote " << orig_path.string() << " and " << vae_path.string() << "\n";
  return 0;
}

int cmd_sample(const std::string& ckpt, std::size_t component, std::size_t points,
               const std::string& out_dir) {
  sv::vae::VaeModel model = sv::vae::VaeModel::load(ckpt);
  const std::vector<sv::Mat> patches = model.latent_traversal(component, points);
  fs::create_directories(out_dir);
  OutputGuard guard;
  std::vector<fs::path> written;
  for (std::size_t k = 0; k < patches.size(); ++k) {
    const fs::path p = fs::path(out_dir) / ("sample_c" + std::to_string(component) + "_" +
                                            std::to_string(k) + ".pgm");
    guard.add(p);
    sv::audio::write_matrix(presentation(patches[k]), p, sv::audio::MatrixFormat::pgm);
    written.push_back(p);
  }
  guard.release();
  std::cout << "wrote " << written.size() << " traversal images for component " << component
            << " in " << out_dir << "\n";
  return 0;
}

int cmd_featurize(const std::string& manifest_path, const std::string& kind,
                  const std::string& ckpt, const std::string& out, int jobs) {
  const sv::features::Manifest manifest = sv::features::Manifest::load(manifest_path);
  const fs::path root = fs::path(manifest_path).parent_path();
  sv::features::FeatureKind fk;
  if (kind == "vae")
    fk = sv::features::FeatureKind::vae;
  else if (kind == "mfcc")
    fk = sv::features::FeatureKind::mfcc;
  else
    throw sv::config::BadConfig("kind: expected vae or mfcc, got \"" + kind + "\"");

  sv::vae::VaeModel* model_ptr = nullptr;
  std::unique_ptr<sv::vae::VaeModel> model;
  if (fk == sv::features::FeatureKind::vae) {
    if (ckpt.empty()) throw sv::config::BadConfig("ckpt: required for --kind vae");
    model = std::make_unique<sv::vae::VaeModel>(sv::vae::VaeModel::load(ckpt));
    model_ptr = model.get();
  }

  OutputGuard guard;
  guard.add(out);
  const auto summary =
      sv::features::build_feature_file(manifest, fk, model_ptr, root, out, jobs);
  guard.release();
  std::cout << "wrote " << out << ": " << summary.records << " records ("
            << summary.train_records << " train, " << summary.test_records << " test), "
            << summary.bytes << " bytes\n";
  return 0;
}

int cmd_train_classifier(const std::string& train_path, const std::string& test_path,
                         const std::string& config, const std::string& out_dir) {
  const auto cfg = load_config(config);
  const sv::features::FeatureFile train = sv::features::read_feature_file(train_path);
  const sv::features::FeatureFile test = sv::features::read_feature_file(test_path);
  if (train.kind != test.kind)
    throw sv::classifier::DimMismatch("train and test feature files have different kinds");

  auto [model, report] = sv::classifier::train_mlp(train, test, cfg.mlp);
  report.kind = train.kind == sv::features::FeatureKind::vae ? "vae" : "mfcc";
  report.train_bytes = fs::file_size(train_path);
  report.test_bytes = fs::file_size(test_path);

  fs::create_directories(out_dir);
  OutputGuard guard;
  const fs::path report_path = fs::path(out_dir) / ("report_" + report.kind + ".json");
  const fs::path csv_path = fs::path(out_dir) / ("epochs_" + report.kind + ".csv");
  guard.add(report_path);
  guard.add(csv_path);
  sv::classifier::save_report(report, report_path.string());
  sv::classifier::write_epochs_csv(report, csv_path.string());
  write_effective_config(cfg, fs::path(out_dir) / ("effective_" + report.kind + ".ini"), guard);
  guard.release();

  const double best_acc =
      report.best_epoch > 0 ? report.test_acc[report.best_epoch - 1] : 0.0;
  std::cout << "trained " << report.train_loss.size() << " epochs, best epoch "
            << report.best_epoch << " (test accuracy " << fmt17(best_acc) << "); wrote "
            << report_path.string() << "\n";
  return 0;
}

int cmd_compare(const std::string& vae_path, const std::string& mfcc_path,
                const std::string& out_csv) {
  const auto vae_report = sv::classifier::load_report(vae_path);
  const auto mfcc_report = sv::classifier::load_report(mfcc_path);
  std::cout << sv::classifier::compare_report_text(vae_report, mfcc_report);
  if (!out_csv.empty()) {
    OutputGuard guard;
    guard.add(out_csv);
    std::ofstream os(out_csv, std::ios::binary);
    if (!os) throw sv::IoError("cannot open " + out_csv + " for writing");
    os << sv::classifier::compare_report_csv(vae_report, mfcc_report);
    if (!os) throw sv::IoError("write failed for " + out_csv);
    guard.release();
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"spectrogram VAE speech feature pipeline"};
  app.require_subcommand(1);

  std::string wav, out, config, manifest, ckpt, kind, train_path, test_path, out_dir = ".";
  std::string report_vae, report_mfcc, out_csv;
  std::size_t frame = 0, component = 0, points = 4;
  int jobs = 1;

  auto* sc_spec = app.add_subcommand("spectrogram", "power spectrogram of a wav file");
  sc_spec->add_option("wav", wav, "input wav")->required();
  sc_spec->add_option("--out", out, "output .pgm or .csv path")->required();
  sc_spec->add_option("--config", config, "experiment config file");

  auto* sc_mfcc = app.add_subcommand("mfcc", "MFCC matrix of a wav file");
  sc_mfcc->add_option("wav", wav, "input wav")->required();
  sc_mfcc->add_option("--out", out, "output .csv path")->required();

  auto* sc_prep = app.add_subcommand("prepare-patches", "extract normalized training patches");
  sc_prep->add_option("manifest", manifest, "dataset manifest")->required();
  sc_prep->add_option("--out", out_dir, "output directory")->required();
  sc_prep->add_option("--config", config, "experiment config file");

  auto* sc_train = app.add_subcommand("train-vae", "train the spectrogram VAE");
  sc_train->add_option("--config", config, "experiment config file")->required();

  auto* sc_recon = app.add_subcommand("reconstruct", "compress and rebuild one patch");
  sc_recon->add_option("ckpt", ckpt, "model checkpoint")->required();
  sc_recon->add_option("wav", wav, "input wav")->required();
  sc_recon->add_option("--frame", frame, "patch index within the clip");
  sc_recon->add_option("--out-dir", out_dir, "output directory");

  auto* sc_sample = app.add_subcommand("sample", "latent traversal images");
  sc_sample->add_option("ckpt", ckpt, "model checkpoint")->required();
  sc_sample->add_option("--component", component, "latent component to sweep")->required();
  sc_sample->add_option("--points", points, "number of traversal points");
  sc_sample->add_option("--out-dir", out_dir, "output directory");

  auto* sc_feat = app.add_subcommand("featurize", "build an SFEA feature file");
  sc_feat->add_option("manifest", manifest, "dataset manifest")->required();
  sc_feat->add_option("--kind", kind, "vae or mfcc")->required();
  sc_feat->add_option("--ckpt", ckpt, "model checkpoint (vae kind)");
  sc_feat->add_option("--out", out, "output feature file")->required();
  sc_feat->add_option("--jobs", jobs, "worker threads");

  auto* sc_cls = app.add_subcommand("train-classifier", "train the command classifier");
  sc_cls->add_option("train", train_path, "training feature file")->required();
  sc_cls->add_option("test", test_path, "test feature file")->required();
  sc_cls->add_option("--config", config, "experiment config file");
  sc_cls->add_option("--out-dir", out_dir, "output directory");

  auto* sc_cmp = app.add_subcommand("compare", "feature pipeline comparison table");
  sc_cmp->add_option("report-vae", report_vae, "vae classifier report json")->required();
  sc_cmp->add_option("report-mfcc", report_mfcc, "mfcc classifier report json")->required();
  sc_cmp->add_option("--out-csv", out_csv, "also write the table as csv");

  CLI11_PARSE(app, argc, argv);

  try {
    if (sc_spec->parsed()) return cmd_spectrogram(wav, out, config);
    if (sc_mfcc->parsed()) return cmd_mfcc(wav, out);
    if (sc_prep->parsed()) return cmd_prepare_patches(manifest, out_dir, config);
    if (sc_train->parsed()) return cmd_train_vae(config);
    if (sc_recon->parsed()) return cmd_reconstruct(ckpt, wav, frame, out_dir);
    if (sc_sample->parsed()) return cmd_sample(ckpt, component, points, out_dir);
    if (sc_feat->parsed()) return cmd_featurize(manifest, kind, ckpt, out, jobs);
    if (sc_cls->parsed()) return cmd_train_classifier(train_path, test_path, config, out_dir);
    if (sc_cmp->parsed()) return cmd_compare(report_vae, report_mfcc, out_csv);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
