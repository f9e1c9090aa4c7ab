#pragma once

// Integer translation between images on the same grid.
//
// Convention: apply_shift(img, s) moves content by s, positive = down/right,
// so out(y, x) = img(y - dy, x - dx). estimate_shift(ref, moving) returns the
// s for which moving ~= apply_shift(ref, s); apply_shift(moving, -s) then
// re-aligns moving with ref.

#include <cstddef>
#include <vector>

#include "deepsum/errors.hpp"
#include "deepsum/imaging.hpp"

namespace deepsum {

struct Shift {
  int dy = 0;
  int dx = 0;

  Shift operator-() const { return {-dy, -dx}; }
  friend bool operator==(const Shift&, const Shift&) = default;
};

inline constexpr int kDefaultShiftBound = 3;
inline constexpr std::size_t kMinOverlapPixels = 64;

class InsufficientOverlap : public DataError {
 public:
  using DataError::DataError;
};

/// Exhaustive normalized cross-correlation over |dy|, |dx| <= bound, using
/// only pixels clear in both masks (each mask read at its own image's
/// coordinates) and inside both frames. Each image's mean over those pixels
/// is subtracted per candidate. Exact score ties go to the smallest
/// |dy|+|dx|, then dy, then dx. Candidates with fewer than 64 usable pixels
/// are skipped; if all are, throws InsufficientOverlap.
Shift estimate_shift(const Image& reference, const Image& moving, int bound);
Shift estimate_shift(const Image& reference, const Image& moving, int bound, const Mask& reference_mask,
                     const Mask& moving_mask);

/// Integer translation with edge replication of vacated pixels.
Image apply_shift(const Image& image, Shift s);

struct RegisteredStack {
  std::vector<Image> images;
  std::vector<Mask> masks;
  std::vector<Shift> shifts;  // estimated shift of each input relative to the reference
};

/// Aligns every image to images[reference]: estimates s_i, then applies -s_i
/// to image i and its mask (pixels entering from outside become unreliable).
/// An image without enough overlap is left unshifted.
RegisteredStack register_stack(const std::vector<Image>& images, const std::vector<Mask>& masks,
                               std::size_t reference, int bound);

}  // namespace deepsum
