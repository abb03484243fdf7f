#include "myoreg/volume.hpp"

#include <algorithm>
#include <cmath>

namespace myoreg {

std::size_t BinaryMask::count() const {
  return static_cast<std::size_t>(std::count_if(data.begin(), data.end(), [](std::uint8_t v) { return v != 0; }));
}

void ImageVolume::validate() const {
  for (int a = 0; a < 3; ++a) {
    if (dims[a] < 1) throw UsageError("ImageVolume: dimensions must be positive");
    if (!(spacing[a] > 0.0)) throw UsageError("ImageVolume: spacing must be positive");
  }
  if (intensities.size() != voxel_count(dims)) throw UsageError("ImageVolume: intensity count does not match dims");
  for (float v : intensities) {
    if (!std::isfinite(v) || v < 0.0f || v > 1.0f) throw UsageError("ImageVolume: intensity outside [0, 1]");
  }
  if (mask && (mask->dims != dims || mask->data.size() != intensities.size())) {
    throw UsageError("ImageVolume: mask dims differ from intensity dims");
  }
}

void CineSequence::validate() const {
  if (frames.size() < 2) throw ConfigError("sequence needs at least two frames");
  if (times.size() != frames.size()) throw ConfigError("sequence: one time per frame required");
  if (reference_index < 0 || static_cast<std::size_t>(reference_index) >= frames.size()) {
    throw ConfigError("sequence: reference index out of range");
  }
  for (std::size_t i = 0; i < frames.size(); ++i) {
    if (frames[i].dims != frames[0].dims || frames[i].spacing != frames[0].spacing) {
      throw ConfigError("sequence: frames must share dims and spacing");
    }
    if (times[i] < 0.0 || times[i] > 1.0) throw ConfigError("sequence: times must lie in [0, 1]");
    if (i > 0 && !(times[i] > times[i - 1])) throw ConfigError("sequence: times must be strictly increasing");
  }
  if (!reference().mask) throw ConfigError("sequence: reference frame carries no mask");
}

}  // namespace myoreg
