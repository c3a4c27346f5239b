#pragma once

#include "csaseg/classifier.hpp"
#include "csaseg/mask.hpp"
#include "csaseg/vit.hpp"

#include <utility>
#include <vector>

namespace csaseg {

struct SlideConfig {
    int64_t short_side = 336;
    int64_t window = 224;
    int64_t stride = 112;

    void validate(int64_t patch_size) const;
};

// resized image plus the bookkeeping needed to undo the padding later
struct PreprocessedImage {
    Tensor image;        // [3 x h x w], both dims multiples of the patch size
    int64_t content_h = 0;   // extent before padding
    int64_t content_w = 0;
    int64_t pad_top = 0;
    int64_t pad_left = 0;
    int64_t orig_h = 0;
    int64_t orig_w = 0;
};

// aspect-preserving resize so the shorter side equals short_side, then both
// dims are rounded up to the next multiple of patch_size with symmetric
// edge-replication padding
PreprocessedImage resize_shorter_side(const Tensor& image, int64_t short_side,
                                      int64_t patch_size);

// top-left corners of the sliding windows: starts every stride pixels, the
// final start clamped so the window ends at the image edge, duplicates
// removed; row-major over (top, left)
std::vector<std::pair<int64_t, int64_t>> window_grid(int64_t h, int64_t w,
                                                     int64_t window, int64_t stride);

// Per-class logit plane at the original image resolution, before argmax:
// every window is encoded, classified, bilinearly upsampled to pixels, and
// accumulated; overlaps are averaged by hit count, padding is cropped away
// and the result is resized back to the input size. An explicit window list
// overrides the default grid (used to test order independence).
Tensor slide_logits(const VitModel& m, const Tensor& image, const ClassEmbeddingSet& classes,
                    const AttentionMode& decode_mode, const SlideConfig& cfg,
                    const std::vector<std::pair<int64_t, int64_t>>* windows_override = nullptr);

// argmax of slide_logits per pixel, ties to the lowest class index
PixelMask slide_segment(const VitModel& m, const Tensor& image, const ClassEmbeddingSet& classes,
                        const AttentionMode& decode_mode, const SlideConfig& cfg);

} // namespace csaseg
