#include "sv/dsp.hpp"

#include <algorithm>
#include <cmath>

namespace sv::dsp {

namespace {

constexpr double kPi = 3.14159265358979323846;
constexpr double kLogFloor = 1e-10;

bool is_pow2(int n) { return n > 0 && (n & (n - 1)) == 0; }

std::vector<double> make_window(const StftConfig& cfg) {
  std::vector<double> w(cfg.win_length, 1.0);
  if (cfg.window == Window::hann) {
    // periodic Hann
    for (int n = 0; n < cfg.win_length; ++n)
      w[n] = 0.5 - 0.5 * std::cos(2.0 * kPi * n / cfg.win_length);
  }
  return w;
}

}  // namespace

StftConfig::StftConfig(int win, int hop, int nfft, Window w)
    : win_length(win), hop_length(hop), n_fft(nfft), window(w) {
  if (hop_length <= 0 || hop_length > win_length || win_length > n_fft)
    throw InvalidConfig("stft config requires 0 < hop <= win <= n_fft (got hop=" +
                        std::to_string(hop) + " win=" + std::to_string(win) +
                        " n_fft=" + std::to_string(nfft) + ")");
  if (!is_pow2(n_fft))
    throw InvalidConfig("n_fft must be a power of two, got " + std::to_string(nfft));
}

double mel_from_hz(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }

double hz_from_mel(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

void fft_inplace(std::vector<std::complex<double>>& x) {
  const std::size_t n = x.size();
  if (n <= 1) return;
  if (n & (n - 1)) throw InvalidConfig("fft size must be a power of two");

  // bit-reversal permutation
  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(x[i], x[j]);
  }

  for (std::size_t len = 2; len <= n; len <<= 1) {
    const double ang = -2.0 * kPi / static_cast<double>(len);
    const std::complex<double> wlen(std::cos(ang), std::sin(ang));
    for (std::size_t i = 0; i < n; i += len) {
      std::complex<double> w(1.0, 0.0);
      for (std::size_t k = 0; k < len / 2; ++k) {
        std::complex<double> u = x[i + k];
        std::complex<double> v = x[i + k + len / 2] * w;
        x[i + k] = u + v;
        x[i + k + len / 2] = u - v;
        w *= wlen;
      }
    }
  }
}

Mat frame_signal(const audio::AudioBuffer& audio, const StftConfig& cfg) {
  const std::size_t n = audio.samples.size();
  const std::size_t win = static_cast<std::size_t>(cfg.win_length);
  if (n < win)
    throw SignalTooShort("signal has " + std::to_string(n) + " samples, window needs " +
                         std::to_string(win));
  const std::size_t hop = static_cast<std::size_t>(cfg.hop_length);
  const std::size_t n_frames = 1 + (n - win) / hop;
  Mat frames(n_frames, win);
  for (std::size_t k = 0; k < n_frames; ++k) {
    const double* src = audio.samples.data() + k * hop;
    std::copy(src, src + win, frames.row(k));
  }
  return frames;
}

std::vector<std::vector<std::complex<double>>> stft(const audio::AudioBuffer& audio,
                                                    const StftConfig& cfg) {
  Mat frames = frame_signal(audio, cfg);
  const std::vector<double> win = make_window(cfg);
  const std::size_t n_bins = static_cast<std::size_t>(cfg.n_fft) / 2 + 1;

  std::vector<std::vector<std::complex<double>>> out(frames.rows);
  std::vector<std::complex<double>> buf(static_cast<std::size_t>(cfg.n_fft));
  for (std::size_t k = 0; k < frames.rows; ++k) {
    std::fill(buf.begin(), buf.end(), std::complex<double>(0.0, 0.0));
    const double* f = frames.row(k);
    for (int n = 0; n < cfg.win_length; ++n) buf[n] = f[n] * win[n];
    fft_inplace(buf);
    out[k].assign(buf.begin(), buf.begin() + n_bins);
  }
  return out;
}

Spectrogram power_spectrogram(const std::vector<std::vector<std::complex<double>>>& stft_out,
                              const StftConfig& cfg, int sample_rate) {
  Spectrogram spec;
  spec.bin_hz = static_cast<double>(sample_rate) / cfg.n_fft;
  spec.frame_hop_s = static_cast<double>(cfg.hop_length) / sample_rate;
  if (stft_out.empty()) return spec;

  const std::size_t n_bins = stft_out[0].size() - 1;  // DC dropped
  spec.data = Mat(stft_out.size(), n_bins);
  for (std::size_t k = 0; k < stft_out.size(); ++k) {
    double* row = spec.data.row(k);
    for (std::size_t j = 0; j < n_bins; ++j) {
      const std::complex<double>& z = stft_out[k][j + 1];
      row[j] = z.real() * z.real() + z.imag() * z.imag();
    }
  }
  return spec;
}

MelFilterbank make_mel_filterbank(int n_filters, int n_fft, int sample_rate, double f_min,
                                  double f_max) {
  if (n_filters < 1) throw InvalidRange("n_filters must be >= 1");
  if (!(0.0 <= f_min && f_min < f_max && f_max <= sample_rate / 2.0))
    throw InvalidRange("mel range requires 0 <= f_min < f_max <= sample_rate/2 (got " +
                       std::to_string(f_min) + ".." + std::to_string(f_max) + ")");

  const int n_bins = n_fft / 2;  // DC-dropped layout: column j is FFT bin j+1
  const double mel_lo = mel_from_hz(f_min);
  const double mel_hi = mel_from_hz(f_max);

  // n_filters + 2 edge points, snapped to FFT bin indices so every
  // triangle peaks at exactly 1 on its center bin.
  std::vector<int> edge_bin(n_filters + 2);
  for (int i = 0; i < n_filters + 2; ++i) {
    double mel = mel_lo + (mel_hi - mel_lo) * i / (n_filters + 1);
    double hz = hz_from_mel(mel);
    edge_bin[i] = static_cast<int>(std::floor((n_fft + 1) * hz / sample_rate));
  }

  MelFilterbank fb;
  fb.n_filters = n_filters;
  fb.f_min = f_min;
  fb.f_max = f_max;
  fb.weights = Mat(n_filters, n_bins);

  for (int i = 0; i < n_filters; ++i) {
    const int b0 = edge_bin[i], b1 = edge_bin[i + 1], b2 = edge_bin[i + 2];
    auto put = [&](int fft_bin, double w) {
      int col = fft_bin - 1;
      if (col >= 0 && col < n_bins) fb.weights.at(i, col) = w;
    };
    for (int k = b0; k < b1; ++k) put(k, static_cast<double>(k - b0) / (b1 - b0));
    put(b1, 1.0);
    for (int k = b1 + 1; k < b2; ++k) put(k, static_cast<double>(b2 - k) / (b2 - b1));

    const double* row = fb.weights.row(i);
    if (std::all_of(row, row + n_bins, [](double w) { return w == 0.0; }))
      throw InvalidRange("mel filter " + std::to_string(i) +
                         " has no support; n_fft too small for this range");
  }
  return fb;
}

Mat dct2_matrix(int n) {
  Mat d(n, n);
  const double s0 = std::sqrt(1.0 / n);
  const double s = std::sqrt(2.0 / n);
  for (int k = 0; k < n; ++k)
    for (int j = 0; j < n; ++j)
      d.at(k, j) = (k == 0 ? s0 : s) * std::cos(kPi * (2 * j + 1) * k / (2.0 * n));
  return d;
}

Mat mfcc(const audio::AudioBuffer& audio, const StftConfig& cfg, const MelFilterbank& fb,
         int n_coeffs) {
  if (n_coeffs < 1 || n_coeffs > fb.n_filters)
    throw InvalidRange("n_coeffs must be in 1.." + std::to_string(fb.n_filters));

  Spectrogram spec = power_spectrogram(stft(audio, cfg), cfg, 16000);
  const std::size_t n_frames = spec.data.rows;
  const std::size_t n_bins = spec.data.cols;
  if (fb.weights.cols != n_bins)
    throw InvalidRange("filterbank built for " + std::to_string(fb.weights.cols) +
                       " bins, spectrogram has " + std::to_string(n_bins));

  Mat dct = dct2_matrix(fb.n_filters);
  Mat out(n_frames, static_cast<std::size_t>(n_coeffs));
  std::vector<double> mel(fb.n_filters);
  for (std::size_t t = 0; t < n_frames; ++t) {
    const double* p = spec.data.row(t);
    for (int i = 0; i < fb.n_filters; ++i) {
      const double* w = fb.weights.row(i);
      double acc = 0.0;
      for (std::size_t j = 0; j < n_bins; ++j) acc += w[j] * p[j];
      mel[i] = std::log(acc + kLogFloor);
    }
    for (int k = 0; k < n_coeffs; ++k) {
      const double* dk = dct.row(k);
      double acc = 0.0;
      for (int i = 0; i < fb.n_filters; ++i) acc += dk[i] * mel[i];
      out.at(t, k) = acc;
    }
  }
  return out;
}

}  // namespace sv::dsp
