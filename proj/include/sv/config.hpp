#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>

#include "sv/classifier.hpp"
#include "sv/error.hpp"
#include "sv/vae.hpp"

namespace sv::config {

struct BadConfig : Error {
  using Error::Error;
};

// Flat "key = value" file with [section] headers. '#' or ';' lines are
// comments. Values keep internal whitespace; keys and values are trimmed.
class Ini {
 public:
  static Ini parse_file(const std::filesystem::path& path);
  static Ini parse_string(const std::string& text, const std::string& origin = "<string>");

  bool has(const std::string& section, const std::string& key) const;
  std::string get_str(const std::string& section, const std::string& key,
                      const std::string& fallback) const;
  std::int64_t get_int(const std::string& section, const std::string& key,
                       std::int64_t fallback) const;
  std::uint64_t get_u64(const std::string& section, const std::string& key,
                        std::uint64_t fallback) const;
  double get_real(const std::string& section, const std::string& key, double fallback) const;
  bool get_bool(const std::string& section, const std::string& key, bool fallback) const;

  void set(const std::string& section, const std::string& key, const std::string& value);
  std::string dump() const;  // sections and keys in sorted order

  const std::map<std::string, std::map<std::string, std::string>>& sections() const {
    return data_;
  }

 private:
  std::map<std::string, std::map<std::string, std::string>> data_;
  std::string origin_ = "<empty>";
};

// Everything a pipeline run needs; defaults reproduce the 25 ms configuration.
struct ExperimentConfig {
  std::size_t stft_win = 256;
  std::size_t stft_hop = 50;
  std::size_t stft_nfft = 256;

  std::size_t patch_frames = 8;
  std::size_t patch_stride = 3;
  double test_fraction = 0.1;

  vae::VaeConfig vae;
  vae::TrainConfig vae_train;  // epochs 100, batch 64, lr 1e-3, seed 1

  classifier::MlpConfig mlp;

  std::string patches_path;
  std::string out_dir;

  // Rejects unknown sections/keys and out-of-range values; applies the
  // SPECTRAL_VAE_SEED env override to both seeds.
  static ExperimentConfig from_ini(const Ini& ini);
  Ini to_ini() const;  // effective values, written next to run outputs
};

}  // namespace sv::config
