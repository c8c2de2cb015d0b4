#include "sv/features.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <set>
#include <sstream>
#include <thread>

namespace sv::features {

namespace fs = std::filesystem;

dsp::StftConfig vae_stft_config() { return dsp::StftConfig(256, 50, 256, dsp::Window::hann); }

dsp::StftConfig mfcc_stft_config() { return dsp::StftConfig(400, 160, 512, dsp::Window::hann); }

Mat normalize_spectrogram(const Mat& spec, double c) {
  if (!(c > 0.0)) throw InvalidConstant("normalization constant must be positive, got " +
                                        std::to_string(c));
  Mat out(spec.rows, spec.cols);
  for (std::size_t i = 0; i < spec.v.size(); ++i) {
    const double v = std::log1p(spec.v[i] / 1e-10) / c;
    out.v[i] = std::clamp(v, 0.0, 1.0);
  }
  return out;
}

double compute_norm_constant(std::span<const Mat> specs, double percentile) {
  std::size_t total = 0;
  for (const Mat& m : specs) total += m.v.size();
  if (total == 0) throw InvalidConstant("compute_norm_constant: no spectrogram values");
  constexpr std::size_t kMaxValues = 4'000'000;
  const std::size_t step = total > kMaxValues ? (total + kMaxValues - 1) / kMaxValues : 1;
  std::vector<double> logs;
  logs.reserve(total / step + 1);
  std::size_t index = 0;
  for (const Mat& m : specs)
    for (double v : m.v) {
      if (index % step == 0) logs.push_back(std::log1p(v / 1e-10));
      ++index;
    }
  std::sort(logs.begin(), logs.end());
  const double rank = percentile / 100.0 * static_cast<double>(logs.size());
  std::size_t idx = static_cast<std::size_t>(std::ceil(rank));
  if (idx > 0) --idx;
  if (idx >= logs.size()) idx = logs.size() - 1;
  const double c = logs[idx];
  if (!(c > 0.0))
    throw InvalidConstant("compute_norm_constant: percentile log value " + std::to_string(c) +
                          " is not positive (corpus all near silence?)");
  return c;
}

audio::AudioBuffer pad_clip(const audio::AudioBuffer& clip) {
  if (clip.samples.size() > kClipMaxSamples)
    throw ClipTooLong("clip has " + std::to_string(clip.samples.size()) +
                      " samples; limit is " + std::to_string(kClipMaxSamples) + " (1.0 s)");
  audio::AudioBuffer out;
  out.sample_rate = clip.sample_rate > 0 ? clip.sample_rate : 16000;
  out.samples.assign(kClipSamples, 0.0);
  std::copy(clip.samples.begin(), clip.samples.end(), out.samples.begin());
  return out;
}

std::vector<Patch> extract_patches(const Mat& spec, std::size_t patch_frames,
                                   std::size_t stride_frames, std::uint32_t file_id) {
  if (spec.rows < patch_frames)
    throw TooFewFrames("spectrogram has " + std::to_string(spec.rows) + " frames, need " +
                       std::to_string(patch_frames));
  const std::size_t count = 1 + (spec.rows - patch_frames) / stride_frames;
  std::vector<Patch> out;
  out.reserve(count);
  for (std::size_t k = 0; k < count; ++k) {
    Patch p;
    p.file_id = file_id;
    p.start_frame = static_cast<std::uint32_t>(k * stride_frames);
    p.data = Mat(patch_frames, spec.cols);
    for (std::size_t r = 0; r < patch_frames; ++r)
      std::memcpy(p.data.row(r), spec.row(k * stride_frames + r), spec.cols * sizeof(double));
    out.push_back(std::move(p));
  }
  return out;
}

FeatureVector featurize_vae(const audio::AudioBuffer& clip, vae::VaeModel& model) {
  const dsp::StftConfig cfg = vae_stft_config();
  const audio::AudioBuffer padded = pad_clip(clip);
  const dsp::Spectrogram spec =
      dsp::power_spectrogram(dsp::stft(padded, cfg), cfg, padded.sample_rate);
  const Mat norm = normalize_spectrogram(spec.data, model.norm_c());

  const std::size_t window = model.config().input_frames;
  if (norm.rows < window)
    throw TooFewFrames("clip spectrogram shorter than the model window");
  const std::size_t n_windows = 1 + (norm.rows - window) / kWindowStride;

  FeatureVector fv;
  fv.kind = FeatureKind::vae;
  fv.values.reserve(n_windows * model.config().latent_dim);
  Mat patch(window, norm.cols);
  for (std::size_t w = 0; w < n_windows; ++w) {
    for (std::size_t r = 0; r < window; ++r)
      std::memcpy(patch.row(r), norm.row(w * kWindowStride + r), norm.cols * sizeof(double));
    const vae::LatentVector lv = model.encode_eval(patch);
    for (double m : lv.mean) fv.values.push_back(static_cast<float>(m));
  }
  return fv;
}

FeatureVector featurize_mfcc(const audio::AudioBuffer& clip) {
  const dsp::StftConfig cfg = mfcc_stft_config();
  audio::AudioBuffer padded = pad_clip(clip);
  padded.samples.resize(kClipMaxSamples);  // exactly 1.0 s for the MFCC framing
  const dsp::MelFilterbank fb =
      dsp::make_mel_filterbank(kMfccFilters, cfg.n_fft, 16000, 0.0, 8000.0);
  const Mat coeffs = dsp::mfcc(padded, cfg, fb, kMfccCoeffs);
  FeatureVector fv;
  fv.kind = FeatureKind::mfcc;
  fv.values.reserve(coeffs.v.size());
  for (double v : coeffs.v) fv.values.push_back(static_cast<float>(v));
  return fv;
}

Manifest Manifest::load(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open manifest " + path.string());
  Manifest m;
  std::set<std::string> seen_paths;
  std::set<std::string> seen_labels;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line[0] == '#') {
      const std::string prefix = "# classes:";
      if (line.rfind(prefix, 0) == 0) {
        std::stringstream ss(line.substr(prefix.size()));
        std::string cls;
        while (std::getline(ss, cls, ',')) {
          const auto b = cls.find_first_not_of(" \t");
          const auto e = cls.find_last_not_of(" \t");
          if (b == std::string::npos) continue;
          m.classes.push_back(cls.substr(b, e - b + 1));
        }
      }
      continue;
    }
    const auto t1 = line.find('\t');
    const auto t2 = t1 == std::string::npos ? std::string::npos : line.find('\t', t1 + 1);
    if (t1 == std::string::npos || t2 == std::string::npos)
      throw BadManifest(path.string() + ":" + std::to_string(line_no) +
                        ": expected path<TAB>label<TAB>split");
    ManifestEntry e;
    e.path = line.substr(0, t1);
    e.label = line.substr(t1 + 1, t2 - t1 - 1);
    e.split = line.substr(t2 + 1);
    if (e.split != "train" && e.split != "test")
      throw BadManifest(path.string() + ":" + std::to_string(line_no) + ": split \"" + e.split +
                        "\" must be train or test");
    if (!seen_paths.insert(e.path).second)
      throw BadManifest(path.string() + ":" + std::to_string(line_no) + ": duplicate path " +
                        e.path);
    seen_labels.insert(e.label);
    m.entries.push_back(std::move(e));
  }
  if (m.classes.empty())
    m.classes.assign(seen_labels.begin(), seen_labels.end());  // set iterates sorted
  for (const auto& e : m.entries)
    if (std::find(m.classes.begin(), m.classes.end(), e.label) == m.classes.end())
      throw BadManifest(path.string() + ": label \"" + e.label +
                        "\" is not in the declared class list");
  return m;
}

std::uint32_t Manifest::class_id(const std::string& label) const {
  const auto it = std::find(classes.begin(), classes.end(), label);
  if (it == classes.end()) throw BadManifest("label \"" + label + "\" not in class list");
  return static_cast<std::uint32_t>(it - classes.begin());
}

namespace {

constexpr char kFeatureMagic[4] = {'S', 'F', 'E', 'A'};
constexpr std::uint32_t kFeatureVersion = 1;

void put_u32(std::ostream& os, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                        static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t get_u32(std::istream& is, const std::string& path, const char* what) {
  unsigned char b[4];
  if (!is.read(reinterpret_cast<char*>(b), 4))
    throw BadFeatureFile(path + ": truncated reading " + what);
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

}  // namespace

void write_feature_file(const FeatureFile& f, const fs::path& path) {
  if (f.values.size() != static_cast<std::size_t>(f.dim) * f.labels.size())
    throw BadFeatureFile("feature file payload does not match count*dim");
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open " + path.string() + " for writing");
  os.write(kFeatureMagic, 4);
  put_u32(os, kFeatureVersion);
  const unsigned char kind = static_cast<unsigned char>(f.kind);
  os.write(reinterpret_cast<const char*>(&kind), 1);
  put_u32(os, static_cast<std::uint32_t>(f.labels.size()));
  put_u32(os, f.dim);
  put_u32(os, f.n_classes);
  for (std::size_t i = 0; i < f.labels.size(); ++i) {
    put_u32(os, f.labels[i]);
    for (std::size_t j = 0; j < f.dim; ++j) {
      std::uint32_t bits;
      std::memcpy(&bits, &f.values[i * f.dim + j], 4);
      put_u32(os, bits);
    }
  }
  os.flush();
  if (!os) throw IoError("write failed for " + path.string());
}

FeatureFile read_feature_file(const fs::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open " + path.string());
  char magic[4];
  if (!is.read(magic, 4) || std::memcmp(magic, kFeatureMagic, 4) != 0)
    throw BadFeatureFile(path.string() + " is not a feature file (bad magic)");
  const std::uint32_t version = get_u32(is, path.string(), "version");
  if (version != kFeatureVersion)
    throw BadFeatureFile(path.string() + ": unsupported feature file version " +
                         std::to_string(version));
  unsigned char kind = 0;
  if (!is.read(reinterpret_cast<char*>(&kind), 1))
    throw BadFeatureFile(path.string() + ": truncated reading kind");
  if (kind > 1) throw BadFeatureFile(path.string() + ": unknown feature kind");
  FeatureFile f;
  f.kind = static_cast<FeatureKind>(kind);
  const std::uint32_t count = get_u32(is, path.string(), "record count");
  f.dim = get_u32(is, path.string(), "dim");
  f.n_classes = get_u32(is, path.string(), "class count");
  f.labels.reserve(count);
  f.values.resize(static_cast<std::size_t>(count) * f.dim);
  for (std::uint32_t i = 0; i < count; ++i) {
    f.labels.push_back(get_u32(is, path.string(), "label"));
    for (std::uint32_t j = 0; j < f.dim; ++j) {
      const std::uint32_t bits = get_u32(is, path.string(), "value");
      std::memcpy(&f.values[static_cast<std::size_t>(i) * f.dim + j], &bits, 4);
    }
  }
  return f;
}

BuildSummary build_feature_file(const Manifest& manifest, FeatureKind kind, vae::VaeModel* model,
                                const fs::path& audio_root, const fs::path& out, int jobs) {
  if (kind == FeatureKind::vae && model == nullptr)
    throw BadManifest("vae featurization needs a model checkpoint");

  std::string missing;
  for (const auto& e : manifest.entries) {
    const fs::path p = audio_root / e.path;
    if (!fs::exists(p)) missing += (missing.empty() ? "" : ", ") + p.string();
  }
  if (!missing.empty()) throw MissingFile("missing audio files: " + missing);

  const std::size_t n = manifest.entries.size();
  std::vector<std::vector<float>> rows(n);
  std::vector<std::string> errors(n);

  const int workers = std::max(1, jobs);
  auto run = [&](int w, vae::VaeModel* local_model) {
    for (std::size_t i = static_cast<std::size_t>(w); i < n;
         i += static_cast<std::size_t>(workers)) {
      try {
        const audio::AudioBuffer clip = audio::load_wav(audio_root / manifest.entries[i].path);
        FeatureVector fv = kind == FeatureKind::vae ? featurize_vae(clip, *local_model)
                                                    : featurize_mfcc(clip);
        rows[i] = std::move(fv.values);
      } catch (const std::exception& ex) {
        errors[i] = manifest.entries[i].path + ": " + ex.what();
      }
    }
  };

  if (workers == 1) {
    run(0, model);
  } else {
    // encode() mutates layer caches, so each worker gets its own model copy
    std::vector<vae::VaeModel> models;
    if (model) models.assign(static_cast<std::size_t>(workers), *model);
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w)
      pool.emplace_back(run, w, model ? &models[static_cast<std::size_t>(w)] : nullptr);
    for (auto& t : pool) t.join();
  }

  for (const auto& err : errors)
    if (!err.empty()) throw MissingFile("featurization failed: " + err);

  FeatureFile f;
  f.kind = kind;
  f.n_classes = static_cast<std::uint32_t>(manifest.classes.size());
  BuildSummary summary;
  for (std::size_t i = 0; i < n; ++i) {
    if (f.dim == 0 && !rows[i].empty()) f.dim = static_cast<std::uint32_t>(rows[i].size());
    if (rows[i].size() != f.dim)
      throw DimensionDrift(manifest.entries[i].path + " produced dim " +
                           std::to_string(rows[i].size()) + ", expected " +
                           std::to_string(f.dim));
    f.labels.push_back(manifest.class_id(manifest.entries[i].label));
    f.values.insert(f.values.end(), rows[i].begin(), rows[i].end());
    if (manifest.entries[i].split == "train")
      ++summary.train_records;
    else
      ++summary.test_records;
  }
  write_feature_file(f, out);
  summary.records = n;
  summary.bytes = fs::file_size(out);
  return summary;
}

}  // namespace sv::features
