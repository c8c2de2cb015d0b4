#pragma once

#include <cstdint>

#include "sv/mat.hpp"

namespace sv::features {

// One spectrogram fragment used as a VAE training sample, with enough
// provenance to trace it back to the source clip.
struct Patch {
  Mat data;  // frames x bins, normalized to [0,1]
  std::uint32_t file_id = 0;
  std::uint32_t start_frame = 0;
};

}  // namespace sv::features
