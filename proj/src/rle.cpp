#include "refseg/rle.hpp"

#include "refseg/errors.hpp"

namespace refseg {

std::vector<uint32_t> rle_encode(const Mask& mask) {
  std::vector<uint32_t> counts;
  uint32_t run = 0;
  uint8_t cur = 0;  // runs start at zero by convention
  for (int x = 0; x < mask.w; ++x)
    for (int y = 0; y < mask.h; ++y) {
      const uint8_t v = mask.at(y, x) ? 1 : 0;
      if (v != cur) {
        counts.push_back(run);
        run = 0;
        cur = v;
      }
      ++run;
    }
  counts.push_back(run);
  return counts;
}

Mask rle_decode(int h, int w, const std::vector<uint32_t>& counts) {
  if (h < 0 || w < 0) throw ParseError("rle_decode: negative dimensions");
  uint64_t total = 0;
  for (uint32_t c : counts) total += c;
  if (total != static_cast<uint64_t>(h) * static_cast<uint64_t>(w))
    throw ParseError("rle_decode: counts sum to " + std::to_string(total) + ", expected " +
                     std::to_string(static_cast<uint64_t>(h) * w));
  Mask mask(h, w);
  uint64_t pos = 0;
  uint8_t cur = 0;
  for (uint32_t c : counts) {
    for (uint32_t i = 0; i < c; ++i, ++pos) {
      const int x = static_cast<int>(pos / h);
      const int y = static_cast<int>(pos % h);
      mask.at(y, x) = cur;
    }
    cur = !cur;
  }
  return mask;
}

}  // namespace refseg
