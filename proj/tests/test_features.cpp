#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "doctest.h"
#include "sv/features.hpp"
#include "testsupport.hpp"

using namespace sv;
using namespace sv::features;

namespace fs = std::filesystem;

namespace {

fs::path scratch_dir(const std::string& leaf) {
  fs::path p = fs::temp_directory_path() / "svae_test_features" / leaf;
  fs::create_directories(p);
  return p;
}

void write_text(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  out << text;
}

vae::VaeModel window_model(std::size_t latent = 40) {
  vae::VaeConfig cfg;
  cfg.input_frames = 96;
  cfg.input_bins = 128;
  cfg.latent_dim = latent;
  cfg.c1 = 4;
  cfg.c2 = 6;
  Rng rng(5150);
  vae::VaeModel model(cfg, rng);
  model.set_norm_c(12.0);
  return model;
}

std::vector<double> tone(double hz, std::size_t n, double amp = 0.4) {
  std::vector<double> s(n);
  for (std::size_t i = 0; i < n; ++i)
    s[i] = amp * std::sin(2.0 * 3.14159265358979323846 * hz * static_cast<double>(i) / 16000.0);
  return s;
}

}  // namespace

TEST_CASE("stft configs carry the published analysis settings") {
  const dsp::StftConfig v = vae_stft_config();
  CHECK(v.win_length == 256);
  CHECK(v.hop_length == 50);
  CHECK(v.n_fft == 256);
  const dsp::StftConfig m = mfcc_stft_config();
  CHECK(m.win_length == 400);
  CHECK(m.hop_length == 160);
  CHECK(m.n_fft == 512);
}

TEST_CASE("normalize_spectrogram compresses into [0,1]") {
  Mat spec(1, 4);
  const double c = 10.0;
  spec.v = {0.0, 1e-10 * (std::exp(5.0) - 1.0), 1e-10 * (std::exp(10.0) - 1.0), 1e6};
  Mat n = normalize_spectrogram(spec, c);
  CHECK(n.v[0] == 0.0);
  CHECK(n.v[1] == doctest::Approx(0.5).epsilon(1e-9));
  CHECK(n.v[2] == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(n.v[3] == 1.0);
  for (double x : n.v) {
    CHECK(x >= 0.0);
    CHECK(x <= 1.0);
  }
  CHECK_THROWS_AS(normalize_spectrogram(spec, 0.0), InvalidConstant);
  CHECK_THROWS_AS(normalize_spectrogram(spec, -3.0), InvalidConstant);
}

TEST_CASE("normalization is monotone below the clip point") {
  Mat spec(1, 3);
  spec.v = {1e-12, 1e-8, 1e-4};
  Mat n = normalize_spectrogram(spec, 50.0);
  CHECK(n.v[0] < n.v[1]);
  CHECK(n.v[1] < n.v[2]);
}

TEST_CASE("compute_norm_constant returns the percentile log value") {
  std::vector<Mat> specs;
  Mat m(1, 1);
  m.v = {2.5e-9};
  specs.push_back(m);
  const double c = compute_norm_constant(specs);
  CHECK(c == doctest::Approx(std::log1p(2.5e-9 / 1e-10)).epsilon(1e-12));

  Mat big(1, 1000);
  for (std::size_t i = 0; i < 1000; ++i) big.v[i] = static_cast<double>(i) * 1e-10;
  std::vector<Mat> corpus = {big};
  const double c2 = compute_norm_constant(corpus, 99.9);
  // nearest rank: ceil(0.999 * 1000) rounds up to the last sorted value
  CHECK(c2 == doctest::Approx(std::log1p(999.0)).epsilon(1e-12));
}

TEST_CASE("a silent corpus cannot define a norm constant") {
  std::vector<Mat> specs;
  specs.push_back(Mat(4, 4));
  CHECK_THROWS_AS(compute_norm_constant(specs), InvalidConstant);
  std::vector<Mat> empty;
  CHECK_THROWS_AS(compute_norm_constant(empty), InvalidConstant);
}

TEST_CASE("pad_clip zero-extends to the analysis length") {
  audio::AudioBuffer clip;
  clip.sample_rate = 16000;
  clip.samples = {0.5, -0.5, 0.25};
  audio::AudioBuffer padded = pad_clip(clip);
  REQUIRE(padded.samples.size() == kClipSamples);
  CHECK(padded.sample_rate == 16000);
  CHECK(padded.samples[0] == 0.5);
  CHECK(padded.samples[1] == -0.5);
  CHECK(padded.samples[2] == 0.25);
  for (std::size_t i = 3; i < padded.samples.size(); ++i) CHECK(padded.samples[i] == 0.0);

  audio::AudioBuffer exact;
  exact.sample_rate = 16000;
  exact.samples.assign(kClipMaxSamples, 0.1);
  CHECK(pad_clip(exact).samples.size() == kClipSamples);

  audio::AudioBuffer over;
  over.sample_rate = 16000;
  over.samples.assign(kClipMaxSamples + 1, 0.0);
  CHECK_THROWS_AS(pad_clip(over), ClipTooLong);
}

TEST_CASE("a padded clip yields 320 analysis frames") {
  audio::AudioBuffer clip;
  clip.sample_rate = 16000;
  clip.samples = tone(440.0, 8000);
  const dsp::StftConfig cfg = vae_stft_config();
  const audio::AudioBuffer padded = pad_clip(clip);
  const dsp::Spectrogram spec = dsp::power_spectrogram(dsp::stft(padded, cfg), cfg, 16000);
  CHECK(spec.data.rows == 320);
  CHECK(spec.data.cols == 128);
}

TEST_CASE("extract_patches tiles the spectrogram with the configured stride") {
  Mat spec(320, 16);
  Rng rng(71);
  for (double& v : spec.v) v = rng.uniform();
  auto patches = extract_patches(spec, kPatchFrames, kPatchStride, 9);
  CHECK(patches.size() == 105);
  for (std::size_t k = 0; k < patches.size(); ++k) {
    CHECK(patches[k].file_id == 9);
    CHECK(patches[k].start_frame == k * kPatchStride);
    CHECK(patches[k].data.rows == kPatchFrames);
    CHECK(patches[k].data.cols == 16);
  }
  // last patch must still fit: start 312, end 320
  CHECK(patches.back().start_frame + kPatchFrames <= spec.rows);
  for (std::size_t r = 0; r < kPatchFrames; ++r)
    for (std::size_t c = 0; c < 16; ++c)
      CHECK(patches[3].data.at(r, c) == spec.at(3 * kPatchStride + r, c));
}

TEST_CASE("extract_patches edge cases") {
  Mat spec(8, 4);
  auto one = extract_patches(spec, 8, 3);
  CHECK(one.size() == 1);
  CHECK(one[0].start_frame == 0);
  Mat shorter(7, 4);
  CHECK_THROWS_AS(extract_patches(shorter, 8, 3), TooFewFrames);
}

TEST_CASE("vae features concatenate window means") {
  vae::VaeModel model = window_model(40);
  audio::AudioBuffer clip;
  clip.sample_rate = 16000;
  clip.samples = tone(900.0, 12000);
  FeatureVector fv = featurize_vae(clip, model);
  CHECK(fv.kind == FeatureKind::vae);
  // 320 frames, 96-frame window, stride 32: 8 windows of 40 latents
  REQUIRE(fv.values.size() == 320);
  for (float v : fv.values) CHECK(std::isfinite(v));

  FeatureVector again = featurize_vae(clip, model);
  REQUIRE(again.values.size() == fv.values.size());
  for (std::size_t i = 0; i < fv.values.size(); ++i) CHECK(again.values[i] == fv.values[i]);
}

TEST_CASE("silence maps every window to the same latent") {
  vae::VaeModel model = window_model(7);
  audio::AudioBuffer clip;
  clip.sample_rate = 16000;
  clip.samples.assign(4000, 0.0);
  FeatureVector fv = featurize_vae(clip, model);
  REQUIRE(fv.values.size() == 8 * 7);
  for (std::size_t w = 1; w < 8; ++w)
    for (std::size_t d = 0; d < 7; ++d) CHECK(fv.values[w * 7 + d] == fv.values[d]);
}

TEST_CASE("mfcc features have the published dimensionality") {
  audio::AudioBuffer clip;
  clip.sample_rate = 16000;
  clip.samples = tone(350.0, 16000);
  FeatureVector fv = featurize_mfcc(clip);
  CHECK(fv.kind == FeatureKind::mfcc);
  // 98 frames x 13 coefficients
  REQUIRE(fv.values.size() == 1274);
  for (float v : fv.values) CHECK(std::isfinite(v));
}

TEST_CASE("manifest parsing derives a sorted class list") {
  const fs::path dir = scratch_dir("manifest");
  const fs::path mf = dir / "manifest.tsv";
  write_text(mf,
             "b/one.wav\tbeta\ttrain\n"
             "a/one.wav\talpha\ttest\n"
             "\n"
             "c/one.wav\tgamma\ttrain\n");
  Manifest m = Manifest::load(mf);
  REQUIRE(m.entries.size() == 3);
  REQUIRE(m.classes.size() == 3);
  CHECK(m.classes[0] == "alpha");
  CHECK(m.classes[1] == "beta");
  CHECK(m.classes[2] == "gamma");
  CHECK(m.class_id("beta") == 1);
  CHECK(m.entries[0].path == "b/one.wav");
  CHECK(m.entries[0].split == "train");
  CHECK(m.entries[1].split == "test");
  CHECK_THROWS_AS(m.class_id("delta"), BadManifest);
}

TEST_CASE("a classes header pins the label order") {
  const fs::path dir = scratch_dir("manifest_header");
  const fs::path mf = dir / "manifest.tsv";
  write_text(mf,
             "# classes: zero, one, two\n"
             "x.wav\ttwo\ttrain\n"
             "y.wav\tzero\ttest\n");
  Manifest m = Manifest::load(mf);
  REQUIRE(m.classes.size() == 3);
  CHECK(m.classes[0] == "zero");
  CHECK(m.classes[2] == "two");
  CHECK(m.class_id("two") == 2);
}

TEST_CASE("manifest rejects malformed rows") {
  const fs::path dir = scratch_dir("manifest_bad");
  write_text(dir / "missing_tab.tsv", "x.wav train\n");
  CHECK_THROWS_AS(Manifest::load(dir / "missing_tab.tsv"), BadManifest);

  write_text(dir / "bad_split.tsv", "x.wav\tyes\tvalidation\n");
  CHECK_THROWS_AS(Manifest::load(dir / "bad_split.tsv"), BadManifest);

  write_text(dir / "dup.tsv", "x.wav\tyes\ttrain\nx.wav\tno\ttest\n");
  CHECK_THROWS_AS(Manifest::load(dir / "dup.tsv"), BadManifest);

  write_text(dir / "unlisted.tsv", "# classes: yes,no\nx.wav\tmaybe\ttrain\n");
  CHECK_THROWS_AS(Manifest::load(dir / "unlisted.tsv"), BadManifest);

  CHECK_THROWS_AS(Manifest::load(dir / "nonexistent.tsv"), IoError);
}

TEST_CASE("manifest tolerates CRLF line endings") {
  const fs::path dir = scratch_dir("manifest_crlf");
  const fs::path mf = dir / "manifest.tsv";
  write_text(mf, "x.wav\tyes\ttrain\r\ny.wav\tno\ttest\r\n");
  Manifest m = Manifest::load(mf);
  REQUIRE(m.entries.size() == 2);
  CHECK(m.entries[1].split == "test");
}

TEST_CASE("feature files round trip bit for bit") {
  const fs::path dir = scratch_dir("sfea");
  const fs::path path = dir / "roundtrip.sfea";
  FeatureFile f;
  f.kind = FeatureKind::mfcc;
  f.dim = 3;
  f.n_classes = 4;
  f.labels = {2, 0, 3};
  f.values = {1.5f, -2.25f, 3.14159f, 0.0f, -0.0f, 1e-20f, 1e20f, -7.5f, 42.0f};
  write_feature_file(f, path);

  FeatureFile back = read_feature_file(path);
  CHECK(back.kind == FeatureKind::mfcc);
  CHECK(back.dim == 3);
  CHECK(back.n_classes == 4);
  REQUIRE(back.labels == f.labels);
  REQUIRE(back.values.size() == f.values.size());
  for (std::size_t i = 0; i < f.values.size(); ++i) {
    std::uint32_t a, b;
    std::memcpy(&a, &f.values[i], 4);
    std::memcpy(&b, &back.values[i], 4);
    CHECK(a == b);
  }
  CHECK(back.count() == 3);
  CHECK(back.record(1)[0] == 0.0f);
}

TEST_CASE("feature file header size is fixed") {
  const fs::path dir = scratch_dir("sfea_size");
  const fs::path path = dir / "sized.sfea";
  FeatureFile f;
  f.kind = FeatureKind::vae;
  f.dim = 5;
  f.n_classes = 2;
  f.labels = {0, 1};
  f.values.assign(10, 1.0f);
  write_feature_file(f, path);
  // 4 magic + 4 version + 1 kind + 4 count + 4 dim + 4 classes + 2*(4 + 5*4)
  CHECK(fs::file_size(path) == 21 + 2 * 24);
}

TEST_CASE("corrupted feature files fail loudly") {
  const fs::path dir = scratch_dir("sfea_bad");
  write_text(dir / "magic.sfea", "NOPE00000000000000000000");
  CHECK_THROWS_AS(read_feature_file(dir / "magic.sfea"), BadFeatureFile);

  FeatureFile f;
  f.kind = FeatureKind::vae;
  f.dim = 4;
  f.n_classes = 1;
  f.labels = {0};
  f.values.assign(4, 2.0f);
  const fs::path good = dir / "good.sfea";
  write_feature_file(f, good);
  std::vector<char> bytes(fs::file_size(good));
  {
    std::ifstream in(good, std::ios::binary);
    in.read(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  }
  const fs::path cut = dir / "cut.sfea";
  {
    std::ofstream out(cut, std::ios::binary);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size() / 2));
  }
  CHECK_THROWS_WITH_AS(read_feature_file(cut), doctest::Contains("truncated"), BadFeatureFile);

  FeatureFile mismatched;
  mismatched.dim = 3;
  mismatched.labels = {0};
  mismatched.values.assign(2, 0.0f);
  CHECK_THROWS_AS(write_feature_file(mismatched, dir / "mismatch.sfea"), BadFeatureFile);
}

TEST_CASE("build_feature_file preserves manifest order and splits") {
  const fs::path dir = scratch_dir("build");
  const fs::path wavs = dir / "wavs";
  fs::create_directories(wavs);
  const double freqs[4] = {300.0, 600.0, 900.0, 1200.0};
  std::string manifest_text = "# classes: low, high\n";
  const char* labels[4] = {"low", "low", "high", "high"};
  const char* splits[4] = {"train", "test", "train", "train"};
  for (int i = 0; i < 4; ++i) {
    const std::string name = "clip" + std::to_string(i) + ".wav";
    ts::write_wav(wavs / name, tone(freqs[i], 6000));
    manifest_text += name + "\t" + labels[i] + "\t" + splits[i] + "\n";
  }
  const fs::path mf = dir / "manifest.tsv";
  write_text(mf, manifest_text);
  Manifest manifest = Manifest::load(mf);

  const fs::path out = dir / "features_mfcc.sfea";
  BuildSummary s = build_feature_file(manifest, FeatureKind::mfcc, nullptr, wavs, out);
  CHECK(s.records == 4);
  CHECK(s.train_records == 3);
  CHECK(s.test_records == 1);
  CHECK(s.bytes == fs::file_size(out));

  FeatureFile f = read_feature_file(out);
  CHECK(f.kind == FeatureKind::mfcc);
  CHECK(f.dim == 1274);
  CHECK(f.n_classes == 2);
  REQUIRE(f.labels.size() == 4);
  CHECK(f.labels[0] == 0);
  CHECK(f.labels[1] == 0);
  CHECK(f.labels[2] == 1);
  CHECK(f.labels[3] == 1);

  // row i must be the standalone featurization of clip i
  for (int i = 0; i < 4; ++i) {
    audio::AudioBuffer clip = audio::load_wav(wavs / ("clip" + std::to_string(i) + ".wav"));
    FeatureVector fv = featurize_mfcc(clip);
    REQUIRE(fv.values.size() == f.dim);
    for (std::size_t j = 0; j < f.dim; ++j) CHECK(f.record(i)[j] == fv.values[j]);
  }
}

TEST_CASE("build_feature_file with the vae kind needs a model") {
  const fs::path dir = scratch_dir("build_vae");
  const fs::path wavs = dir / "wavs";
  fs::create_directories(wavs);
  ts::write_wav(wavs / "a.wav", tone(500.0, 5000));
  write_text(dir / "m.tsv", "a.wav\tword\ttrain\n");
  Manifest manifest = Manifest::load(dir / "m.tsv");

  CHECK_THROWS_AS(
      build_feature_file(manifest, FeatureKind::vae, nullptr, wavs, dir / "never.sfea"),
      BadManifest);

  vae::VaeModel model = window_model(11);
  const fs::path out = dir / "features_vae.sfea";
  BuildSummary s = build_feature_file(manifest, FeatureKind::vae, &model, wavs, out);
  CHECK(s.records == 1);
  FeatureFile f = read_feature_file(out);
  CHECK(f.kind == FeatureKind::vae);
  CHECK(f.dim == 8 * 11);
}

TEST_CASE("build_feature_file reports missing audio by name") {
  const fs::path dir = scratch_dir("build_missing");
  const fs::path wavs = dir / "wavs";
  fs::create_directories(wavs);
  write_text(dir / "m.tsv", "ghost.wav\tword\ttrain\n");
  Manifest manifest = Manifest::load(dir / "m.tsv");
  CHECK_THROWS_WITH_AS(
      build_feature_file(manifest, FeatureKind::mfcc, nullptr, wavs, dir / "never.sfea"),
      doctest::Contains("ghost.wav"), MissingFile);
}

TEST_CASE("an empty manifest produces an empty feature file") {
  const fs::path dir = scratch_dir("build_empty");
  write_text(dir / "m.tsv", "# classes: a\n");
  Manifest manifest = Manifest::load(dir / "m.tsv");
  const fs::path out = dir / "empty.sfea";
  BuildSummary s = build_feature_file(manifest, FeatureKind::mfcc, nullptr, dir, out);
  CHECK(s.records == 0);
  FeatureFile f = read_feature_file(out);
  CHECK(f.count() == 0);
  CHECK(f.dim == 0);
}

TEST_CASE("parallel featurization is byte-identical to serial") {
  const fs::path dir = scratch_dir("build_jobs");
  const fs::path wavs = dir / "wavs";
  fs::create_directories(wavs);
  std::string manifest_text;
  for (int i = 0; i < 5; ++i) {
    const std::string name = "j" + std::to_string(i) + ".wav";
    ts::write_wav(wavs / name, tone(200.0 + 150.0 * i, 7000));
    manifest_text += name + "\tword\ttrain\n";
  }
  write_text(dir / "m.tsv", manifest_text);
  Manifest manifest = Manifest::load(dir / "m.tsv");

  vae::VaeModel model = window_model(9);
  build_feature_file(manifest, FeatureKind::vae, &model, wavs, dir / "serial.sfea", 1);
  build_feature_file(manifest, FeatureKind::vae, &model, wavs, dir / "par.sfea", 2);

  std::ifstream a(dir / "serial.sfea", std::ios::binary);
  std::ifstream b(dir / "par.sfea", std::ios::binary);
  std::string sa((std::istreambuf_iterator<char>(a)), std::istreambuf_iterator<char>());
  std::string sb((std::istreambuf_iterator<char>(b)), std::istreambuf_iterator<char>());
  CHECK(sa.size() == sb.size());
  CHECK(sa == sb);
}
