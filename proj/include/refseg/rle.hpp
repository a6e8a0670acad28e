#pragma once

#include <cstdint>
#include <vector>

#include "refseg/mat.hpp"

namespace refseg {

// COCO-style run-length encoding of binary masks: column-major pixel order
// (down each column, left to right), alternating run lengths starting with
// the number of zeros.

std::vector<uint32_t> rle_encode(const Mask& mask);

/// Throws ParseError if the counts do not sum to h*w.
Mask rle_decode(int h, int w, const std::vector<uint32_t>& counts);

}  // namespace refseg
