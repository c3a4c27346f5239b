#pragma once

#include <cstdint>
#include <vector>

namespace csaseg {

// Per-pixel class labels, row-major. 255 is reserved as the ignore label
// in ground-truth masks, so a class set may hold at most 255 classes.
struct PixelMask {
    int64_t rows = 0;
    int64_t cols = 0;
    std::vector<uint8_t> labels;

    uint8_t at(int64_t r, int64_t c) const { return labels[size_t(r * cols + c)]; }
    uint8_t& at(int64_t r, int64_t c) { return labels[size_t(r * cols + c)]; }
};

inline constexpr int64_t kIgnoreLabel = 255;

} // namespace csaseg
