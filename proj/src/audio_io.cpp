#include "sv/audio_io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <limits>
#include <sstream>

namespace sv::audio {

namespace {

constexpr int kRequiredRate = 16000;

std::uint16_t read_u16(const unsigned char* p) {
  return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}

std::uint32_t read_u32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

bool fourcc(const unsigned char* p, const char* tag) { return std::memcmp(p, tag, 4) == 0; }

}  // namespace

AudioBuffer load_wav(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());

  unsigned char hdr[12];
  if (!in.read(reinterpret_cast<char*>(hdr), 12))
    throw NotWav(path.string() + ": too short for a RIFF header");
  if (!fourcc(hdr, "RIFF") || !fourcc(hdr + 8, "WAVE"))
    throw NotWav(path.string() + ": not a RIFF/WAVE file");

  bool have_fmt = false;
  std::uint16_t format_code = 0, channels = 0, bits = 0;
  std::uint32_t rate = 0;

  // Chunk walk: parse "fmt ", read "data", skip everything else.
  for (;;) {
    unsigned char chdr[8];
    if (!in.read(reinterpret_cast<char*>(chdr), 8)) {
      throw NotWav(path.string() + ": no data chunk found");
    }
    std::uint32_t size = read_u32(chdr + 4);

    if (fourcc(chdr, "fmt ")) {
      unsigned char fmt[16];
      if (size < 16 || !in.read(reinterpret_cast<char*>(fmt), 16))
        throw NotWav(path.string() + ": fmt chunk truncated");
      format_code = read_u16(fmt + 0);
      channels = read_u16(fmt + 2);
      rate = read_u32(fmt + 4);
      bits = read_u16(fmt + 14);
      have_fmt = true;
      // skip any fmt extension bytes
      in.seekg(size - 16 + (size & 1), std::ios::cur);
      continue;
    }

    if (fourcc(chdr, "data")) {
      if (!have_fmt) throw NotWav(path.string() + ": data chunk precedes fmt");
      if (format_code != 1)
        throw UnsupportedFormat(path.string() + ": format code " + std::to_string(format_code) +
                                " (only PCM format 1 supported)");
      if (channels != 1)
        throw UnsupportedFormat(path.string() + ": channels = " + std::to_string(channels) +
                                " (mono required)");
      if (bits != 16)
        throw UnsupportedFormat(path.string() + ": bits per sample = " + std::to_string(bits) +
                                " (16-bit required)");
      if (rate != kRequiredRate)
        throw UnsupportedFormat(path.string() + ": sample rate = " + std::to_string(rate) +
                                " (16000 Hz required)");
      if (size == 0 || (size & 1))
        throw UnsupportedFormat(path.string() + ": data size = " + std::to_string(size));

      std::size_t n = size / 2;
      std::vector<unsigned char> raw(size);
      in.read(reinterpret_cast<char*>(raw.data()), size);
      if (static_cast<std::uint32_t>(in.gcount()) != size)
        throw TruncatedFile(path.string() + ": data chunk declares " + std::to_string(size) +
                            " bytes, got " + std::to_string(in.gcount()));

      AudioBuffer buf;
      buf.sample_rate = kRequiredRate;
      buf.samples.resize(n);
      for (std::size_t i = 0; i < n; ++i) {
        auto s = static_cast<std::int16_t>(read_u16(raw.data() + 2 * i));
        buf.samples[i] = static_cast<double>(s) / 32768.0;
      }
      return buf;
    }

    // unknown chunk (LIST, fact, ...): skip payload plus pad byte
    in.seekg(static_cast<std::streamoff>(size) + (size & 1), std::ios::cur);
    if (!in) throw NotWav(path.string() + ": no data chunk found");
  }
}

std::vector<std::int16_t> samples_to_pcm16(std::span<const double> samples) {
  std::vector<std::int16_t> out(samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i) {
    double v = samples[i] * 32768.0;
    v = std::clamp(v, -32768.0, 32767.0);
    out[i] = static_cast<std::int16_t>(std::lrint(v));
  }
  return out;
}

void write_matrix(const Mat& m, const std::filesystem::path& path, MatrixFormat format) {
  if (m.empty()) throw IoError("write_matrix: empty matrix for " + path.string());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");

  if (format == MatrixFormat::csv) {
    char buf[40];
    for (std::size_t r = 0; r < m.rows; ++r) {
      for (std::size_t c = 0; c < m.cols; ++c) {
        std::snprintf(buf, sizeof(buf), "%.17g", m.at(r, c));
        out << buf;
        if (c + 1 < m.cols) out << ',';
      }
      out << '\n';
    }
  } else {
    double lo = *std::min_element(m.v.begin(), m.v.end());
    double hi = *std::max_element(m.v.begin(), m.v.end());
    out << "P5\n" << m.cols << ' ' << m.rows << "\n255\n";
    std::vector<unsigned char> px(m.numel());
    if (hi > lo) {
      double scale = 255.0 / (hi - lo);
      for (std::size_t i = 0; i < m.numel(); ++i)
        px[i] = static_cast<unsigned char>(std::lrint((m.v[i] - lo) * scale));
    }
    out.write(reinterpret_cast<const char*>(px.data()), static_cast<std::streamsize>(px.size()));
  }
  if (!out) throw IoError("write failed for " + path.string());
}

Mat read_matrix_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<std::vector<double>> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<double> row;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) row.push_back(std::stod(cell));
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw IoError(path.string() + ": empty csv");
  Mat m(rows.size(), rows[0].size());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r].size() != m.cols) throw IoError(path.string() + ": ragged csv");
    std::copy(rows[r].begin(), rows[r].end(), m.row(r));
  }
  return m;
}

}  // namespace sv::audio
