#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "sv/error.hpp"
#include "sv/mat.hpp"

namespace sv::audio {

// Mono PCM signal, normalized to [-1, 1]. The pipeline only accepts the
// canonical 16 kHz / mono / PCM16 form; anything else is a load error.
struct AudioBuffer {
  std::vector<double> samples;
  int sample_rate = 0;

  double duration_s() const {
    return sample_rate > 0 ? static_cast<double>(samples.size()) / sample_rate : 0.0;
  }
};

struct NotWav : Error {
  using Error::Error;
};
struct UnsupportedFormat : Error {
  using Error::Error;
};
struct TruncatedFile : Error {
  using Error::Error;
};

// Reads a RIFF/WAVE file. Requires PCM format 1, 16-bit, mono, 16000 Hz;
// unknown RIFF chunks (LIST etc.) are skipped. Samples are raw_i16/32768.
AudioBuffer load_wav(const std::filesystem::path& path);

// Exact inverse of the PCM16 normalization applied by load_wav.
std::vector<std::int16_t> samples_to_pcm16(std::span<const double> samples);

enum class MatrixFormat { pgm, csv };

// csv: one line per row, %.17g values, LF endings.
// pgm: binary P5, min-max scaled to 0..255 (constant matrix -> all zeros).
void write_matrix(const Mat& m, const std::filesystem::path& path, MatrixFormat format);

Mat read_matrix_csv(const std::filesystem::path& path);

}  // namespace sv::audio
