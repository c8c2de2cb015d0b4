#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "sv/audio_io.hpp"
#include "sv/dsp.hpp"
#include "sv/patch.hpp"
#include "sv/vae.hpp"

namespace sv::features {

struct InvalidConstant : Error {
  using Error::Error;
};
struct TooFewFrames : Error {
  using Error::Error;
};
struct ClipTooLong : Error {
  using Error::Error;
};
struct MissingFile : Error {
  using Error::Error;
};
struct DimensionDrift : Error {
  using Error::Error;
};
struct BadManifest : Error {
  using Error::Error;
};
struct BadFeatureFile : Error {
  using Error::Error;
};

// Analysis constants shared by the patch and featurization pipelines.
inline constexpr std::size_t kClipSamples = 16206;   // 1 s padded so the STFT gives 320 frames
inline constexpr std::size_t kClipMaxSamples = 16000;
inline constexpr std::size_t kPatchFrames = 8;
inline constexpr std::size_t kPatchStride = 3;
inline constexpr std::size_t kWindowFrames = 96;     // 0.3 s of frames for featurization
inline constexpr std::size_t kWindowStride = 32;     // 0.1 s step
inline constexpr std::size_t kMfccFilters = 26;
inline constexpr std::size_t kMfccCoeffs = 13;

dsp::StftConfig vae_stft_config();    // 256/50/256, Hann
dsp::StftConfig mfcc_stft_config();   // 400/160/512, Hann

// log(1 + s/1e-10)/c clipped to [0,1]. c must be positive.
Mat normalize_spectrogram(const Mat& spec, double c);
// The 99.9th-percentile log value over the given spectrograms (nearest-rank;
// values subsampled deterministically past 4M entries).
double compute_norm_constant(std::span<const Mat> specs, double percentile = 99.9);

// Zero-pads to kClipSamples; clips over 1 s are rejected.
audio::AudioBuffer pad_clip(const audio::AudioBuffer& clip);

// Sliding patches: patch k covers frames [k*stride, k*stride+patch_frames).
std::vector<Patch> extract_patches(const Mat& spec, std::size_t patch_frames,
                                   std::size_t stride_frames, std::uint32_t file_id = 0);

enum class FeatureKind : std::uint8_t { vae = 0, mfcc = 1 };

struct FeatureVector {
  FeatureKind kind = FeatureKind::vae;
  std::vector<float> values;
};

// Normalized spectrogram -> kWindowFrames windows at kWindowStride -> encoder
// means concatenated. The model's stored norm constant scales the input.
FeatureVector featurize_vae(const audio::AudioBuffer& clip, vae::VaeModel& model);
// 26-filter MFCC at 25 ms / 10 ms, 13 coefficients per frame, flattened.
FeatureVector featurize_mfcc(const audio::AudioBuffer& clip);

struct ManifestEntry {
  std::string path;
  std::string label;
  std::string split;  // "train" or "test"
};

// Tab-separated "path<TAB>label<TAB>split" lines. An optional "# classes:"
// header pins the class list; otherwise it is the sorted set of labels seen.
struct Manifest {
  std::vector<ManifestEntry> entries;
  std::vector<std::string> classes;

  static Manifest load(const std::filesystem::path& path);
  std::uint32_t class_id(const std::string& label) const;
};

struct FeatureFile {
  FeatureKind kind = FeatureKind::vae;
  std::uint32_t dim = 0;
  std::uint32_t n_classes = 0;
  std::vector<std::uint32_t> labels;
  std::vector<float> values;  // labels.size() x dim, row-major

  std::size_t count() const { return labels.size(); }
  const float* record(std::size_t i) const { return values.data() + i * dim; }
};

void write_feature_file(const FeatureFile& f, const std::filesystem::path& path);
FeatureFile read_feature_file(const std::filesystem::path& path);

struct BuildSummary {
  std::size_t records = 0;
  std::size_t train_records = 0;
  std::size_t test_records = 0;
  std::uintmax_t bytes = 0;
};

// Featurizes every manifest entry into one SFEA file, manifest order
// preserved. model may be null for the mfcc kind. jobs > 1 farms clips out
// to a worker pool; output bytes are identical regardless.
BuildSummary build_feature_file(const Manifest& manifest, FeatureKind kind,
                                vae::VaeModel* model, const std::filesystem::path& audio_root,
                                const std::filesystem::path& out, int jobs = 1);

}  // namespace sv::features
