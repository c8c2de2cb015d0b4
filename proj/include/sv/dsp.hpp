#pragma once

#include <complex>
#include <vector>

#include "sv/audio_io.hpp"
#include "sv/error.hpp"
#include "sv/mat.hpp"

namespace sv::dsp {

struct SignalTooShort : Error {
  using Error::Error;
};
struct InvalidRange : Error {
  using Error::Error;
};
struct InvalidConfig : Error {
  using Error::Error;
};

enum class Window { hann, rectangular };

// Analysis settings for the short-time transform. n_fft must be a power
// of two and at least win_length; frames advance by hop_length samples.
struct StftConfig {
  int win_length;
  int hop_length;
  int n_fft;
  Window window = Window::hann;

  StftConfig(int win, int hop, int nfft, Window w = Window::hann);
};

// Power values per (frame, bin). The DC bin is dropped upstream, so
// bins == n_fft/2 and column j covers frequency (j+1)*bin_hz.
struct Spectrogram {
  Mat data;
  double bin_hz = 0.0;
  double frame_hop_s = 0.0;
};

// Triangular mel filters evaluated at spectrogram bin frequencies.
// weights is n_filters x bins and matches the DC-dropped bin layout.
struct MelFilterbank {
  Mat weights;
  int n_filters = 0;
  double f_min = 0.0;
  double f_max = 0.0;
};

double mel_from_hz(double hz);
double hz_from_mel(double mel);

// In-place radix-2 FFT; size must be a power of two.
void fft_inplace(std::vector<std::complex<double>>& x);

// Frame k covers samples [k*hop, k*hop + win); trailing samples that do
// not fill a frame are dropped.
Mat frame_signal(const audio::AudioBuffer& audio, const StftConfig& cfg);

// Windowed, zero-padded transform of each frame. Returns the
// nonnegative-frequency half: frames x (n_fft/2 + 1) complex values.
std::vector<std::vector<std::complex<double>>> stft(const audio::AudioBuffer& audio,
                                                    const StftConfig& cfg);

// |X|^2 per entry with the DC column removed; bin/frame scales are taken
// from cfg and the 16 kHz pipeline rate.
Spectrogram power_spectrogram(const std::vector<std::vector<std::complex<double>>>& stft_out,
                              const StftConfig& cfg, int sample_rate);

MelFilterbank make_mel_filterbank(int n_filters, int n_fft, int sample_rate, double f_min,
                                  double f_max);

// Orthonormal DCT-II matrix (n x n), rows indexed by coefficient.
Mat dct2_matrix(int n);

// Power spectrogram -> mel energies -> log(x + 1e-10) -> DCT-II, keeping
// coefficients 0..n_coeffs-1 (c0 included).
Mat mfcc(const audio::AudioBuffer& audio, const StftConfig& cfg, const MelFilterbank& fb,
         int n_coeffs);

}  // namespace sv::dsp
