#include "sv/config.hpp"

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>

namespace sv::config {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t");
  return s.substr(b, e - b + 1);
}

std::string fmt_real(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

Ini Ini::parse_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw BadConfig("cannot open config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_string(ss.str(), path.string());
}

Ini Ini::parse_string(const std::string& text, const std::string& origin) {
  Ini ini;
  ini.origin_ = origin;
  std::stringstream ss(text);
  std::string line;
  std::string section;
  std::size_t line_no = 0;
  while (std::getline(ss, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#' || t[0] == ';') continue;
    if (t.front() == '[') {
      if (t.back() != ']')
        throw BadConfig(origin + ":" + std::to_string(line_no) + ": unterminated section header");
      section = trim(t.substr(1, t.size() - 2));
      if (section.empty())
        throw BadConfig(origin + ":" + std::to_string(line_no) + ": empty section name");
      ini.data_[section];
      continue;
    }
    const auto eq = t.find('=');
    if (eq == std::string::npos)
      throw BadConfig(origin + ":" + std::to_string(line_no) + ": expected key = value");
    const std::string key = trim(t.substr(0, eq));
    if (key.empty())
      throw BadConfig(origin + ":" + std::to_string(line_no) + ": empty key");
    ini.data_[section][key] = trim(t.substr(eq + 1));
  }
  return ini;
}

bool Ini::has(const std::string& section, const std::string& key) const {
  const auto s = data_.find(section);
  return s != data_.end() && s->second.count(key) > 0;
}

std::string Ini::get_str(const std::string& section, const std::string& key,
                         const std::string& fallback) const {
  const auto s = data_.find(section);
  if (s == data_.end()) return fallback;
  const auto k = s->second.find(key);
  return k == s->second.end() ? fallback : k->second;
}

std::int64_t Ini::get_int(const std::string& section, const std::string& key,
                          std::int64_t fallback) const {
  if (!has(section, key)) return fallback;
  const std::string v = get_str(section, key, "");
  try {
    std::size_t pos = 0;
    const std::int64_t out = std::stoll(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return out;
  } catch (const std::exception&) {
    throw BadConfig(origin_ + ": [" + section + "] " + key + ": expected integer, got \"" + v +
                    "\"");
  }
}

std::uint64_t Ini::get_u64(const std::string& section, const std::string& key,
                           std::uint64_t fallback) const {
  if (!has(section, key)) return fallback;
  const std::string v = get_str(section, key, "");
  try {
    std::size_t pos = 0;
    const std::uint64_t out = std::stoull(v, &pos);
    if (pos != v.size() || v.empty() || v[0] == '-') throw std::invalid_argument(v);
    return out;
  } catch (const std::exception&) {
    throw BadConfig(origin_ + ": [" + section + "] " + key +
                    ": expected unsigned integer, got \"" + v + "\"");
  }
}

double Ini::get_real(const std::string& section, const std::string& key, double fallback) const {
  if (!has(section, key)) return fallback;
  const std::string v = get_str(section, key, "");
  try {
    std::size_t pos = 0;
    const double out = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return out;
  } catch (const std::exception&) {
    throw BadConfig(origin_ + ": [" + section + "] " + key + ": expected number, got \"" + v +
                    "\"");
  }
}

bool Ini::get_bool(const std::string& section, const std::string& key, bool fallback) const {
  if (!has(section, key)) return fallback;
  const std::string v = get_str(section, key, "");
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw BadConfig(origin_ + ": [" + section + "] " + key + ": expected boolean, got \"" + v +
                  "\"");
}

void Ini::set(const std::string& section, const std::string& key, const std::string& value) {
  data_[section][key] = value;
}

std::string Ini::dump() const {
  std::string out;
  for (const auto& [section, keys] : data_) {
    if (!out.empty()) out += "\n";
    out += "[" + section + "]\n";
    for (const auto& [key, value] : keys) out += key + " = " + value + "\n";
  }
  return out;
}

namespace {

const std::map<std::string, std::set<std::string>> kKnownKeys = {
    {"stft", {"win_length", "hop_length", "n_fft"}},
    {"patches", {"patch_frames", "stride_frames", "test_fraction"}},
    {"vae",
     {"input_frames", "input_bins", "latent_dim", "c1", "c2", "epochs", "batch_size", "lr",
      "seed"}},
    {"classifier", {"epochs", "batch_size", "lr", "seed", "hidden", "dropout", "zscore"}},
    {"data", {"patches", "out_dir"}},
};

std::size_t positive_size(const Ini& ini, const std::string& section, const std::string& key,
                          std::size_t fallback) {
  const std::int64_t v = ini.get_int(section, key, static_cast<std::int64_t>(fallback));
  if (v <= 0)
    throw BadConfig("[" + section + "] " + key + " must be positive, got " + std::to_string(v));
  return static_cast<std::size_t>(v);
}

std::size_t nonneg_size(const Ini& ini, const std::string& section, const std::string& key,
                        std::size_t fallback) {
  const std::int64_t v = ini.get_int(section, key, static_cast<std::int64_t>(fallback));
  if (v < 0)
    throw BadConfig("[" + section + "] " + key + " must be nonnegative, got " +
                    std::to_string(v));
  return static_cast<std::size_t>(v);
}

double positive_real(const Ini& ini, const std::string& section, const std::string& key,
                     double fallback) {
  const double v = ini.get_real(section, key, fallback);
  if (!(v > 0.0))
    throw BadConfig("[" + section + "] " + key + " must be positive, got " + fmt_real(v));
  return v;
}

}  // namespace

ExperimentConfig ExperimentConfig::from_ini(const Ini& ini) {
  for (const auto& [section, keys] : ini.sections()) {
    const auto known = kKnownKeys.find(section);
    if (known == kKnownKeys.end()) throw BadConfig("unknown config section [" + section + "]");
    for (const auto& [key, value] : keys)
      if (known->second.count(key) == 0)
        throw BadConfig("unknown config key [" + section + "] " + key);
  }

  ExperimentConfig c;
  c.stft_win = positive_size(ini, "stft", "win_length", c.stft_win);
  c.stft_hop = positive_size(ini, "stft", "hop_length", c.stft_hop);
  c.stft_nfft = positive_size(ini, "stft", "n_fft", c.stft_nfft);

  c.patch_frames = positive_size(ini, "patches", "patch_frames", c.patch_frames);
  c.patch_stride = positive_size(ini, "patches", "stride_frames", c.patch_stride);
  c.test_fraction = ini.get_real("patches", "test_fraction", c.test_fraction);
  if (c.test_fraction < 0.0 || c.test_fraction >= 1.0)
    throw BadConfig("[patches] test_fraction must be in [0,1), got " +
                    fmt_real(c.test_fraction));

  c.vae.input_frames = positive_size(ini, "vae", "input_frames", c.vae.input_frames);
  c.vae.input_bins = positive_size(ini, "vae", "input_bins", c.vae.input_bins);
  c.vae.latent_dim = positive_size(ini, "vae", "latent_dim", c.vae.latent_dim);
  c.vae.c1 = positive_size(ini, "vae", "c1", c.vae.c1);
  c.vae.c2 = positive_size(ini, "vae", "c2", c.vae.c2);
  c.vae_train.epochs = nonneg_size(ini, "vae", "epochs", c.vae_train.epochs);
  c.vae_train.batch_size = positive_size(ini, "vae", "batch_size", c.vae_train.batch_size);
  c.vae_train.lr = positive_real(ini, "vae", "lr", c.vae_train.lr);
  c.vae_train.seed = ini.get_u64("vae", "seed", c.vae_train.seed);

  c.mlp.epochs = nonneg_size(ini, "classifier", "epochs", c.mlp.epochs);
  c.mlp.batch_size = positive_size(ini, "classifier", "batch_size", c.mlp.batch_size);
  c.mlp.lr = positive_real(ini, "classifier", "lr", c.mlp.lr);
  c.mlp.seed = ini.get_u64("classifier", "seed", c.mlp.seed);
  c.mlp.hidden = positive_size(ini, "classifier", "hidden", c.mlp.hidden);
  c.mlp.dropout = ini.get_real("classifier", "dropout", c.mlp.dropout);
  if (c.mlp.dropout < 0.0 || c.mlp.dropout >= 1.0)
    throw BadConfig("[classifier] dropout must be in [0,1), got " + fmt_real(c.mlp.dropout));
  c.mlp.zscore = ini.get_bool("classifier", "zscore", c.mlp.zscore);

  c.patches_path = ini.get_str("data", "patches", c.patches_path);
  c.out_dir = ini.get_str("data", "out_dir", c.out_dir);

  if (const char* env = std::getenv("SPECTRAL_VAE_SEED")) {
    const std::string v = env;
    try {
      std::size_t pos = 0;
      const std::uint64_t seed = std::stoull(v, &pos);
      if (pos != v.size() || v.empty()) throw std::invalid_argument(v);
      c.vae_train.seed = seed;
      c.mlp.seed = seed;
    } catch (const std::exception&) {
      throw BadConfig("SPECTRAL_VAE_SEED: expected unsigned integer, got \"" + v + "\"");
    }
  }
  return c;
}

Ini ExperimentConfig::to_ini() const {
  Ini ini;
  ini.set("stft", "win_length", std::to_string(stft_win));
  ini.set("stft", "hop_length", std::to_string(stft_hop));
  ini.set("stft", "n_fft", std::to_string(stft_nfft));
  ini.set("patches", "patch_frames", std::to_string(patch_frames));
  ini.set("patches", "stride_frames", std::to_string(patch_stride));
  ini.set("patches", "test_fraction", fmt_real(test_fraction));
  ini.set("vae", "input_frames", std::to_string(vae.input_frames));
  ini.set("vae", "input_bins", std::to_string(vae.input_bins));
  ini.set("vae", "latent_dim", std::to_string(vae.latent_dim));
  ini.set("vae", "c1", std::to_string(vae.c1));
  ini.set("vae", "c2", std::to_string(vae.c2));
  ini.set("vae", "epochs", std::to_string(vae_train.epochs));
  ini.set("vae", "batch_size", std::to_string(vae_train.batch_size));
  ini.set("vae", "lr", fmt_real(vae_train.lr));
  ini.set("vae", "seed", std::to_string(vae_train.seed));
  ini.set("classifier", "epochs", std::to_string(mlp.epochs));
  ini.set("classifier", "batch_size", std::to_string(mlp.batch_size));
  ini.set("classifier", "lr", fmt_real(mlp.lr));
  ini.set("classifier", "seed", std::to_string(mlp.seed));
  ini.set("classifier", "hidden", std::to_string(mlp.hidden));
  ini.set("classifier", "dropout", fmt_real(mlp.dropout));
  ini.set("classifier", "zscore", mlp.zscore ? "true" : "false");
  ini.set("data", "patches", patches_path);
  ini.set("data", "out_dir", out_dir);
  return ini;
}

}  // namespace sv::config
