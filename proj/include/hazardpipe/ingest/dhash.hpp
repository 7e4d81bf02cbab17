#pragma once

#include <bit>
#include <cstdint>

#include "hazardpipe/ingest/image.hpp"

namespace hazardpipe {

// 64-bit difference hash: the image is reduced to a 9x8 grayscale grid by
// area averaging; bit (row*8 + col) is set when cell (row, col) is brighter
// than cell (row, col+1).
std::uint64_t dhash(const RgbImage& image);
// Decodes first. Throws Error{"MalformedImage"}.
std::uint64_t dedup_key(ByteView image_bytes);

inline int hamming_distance(std::uint64_t a, std::uint64_t b) { return std::popcount(a ^ b); }

}  // namespace hazardpipe
