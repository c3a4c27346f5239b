#include "csaseg/slide.hpp"

#include <algorithm>
#include <cmath>

namespace csaseg {

void SlideConfig::validate(int64_t patch_size) const {
    if (short_side < 1) throw ConfigError("short side must be >= 1");
    if (window < 1) throw ConfigError("window must be >= 1");
    if (stride < 1) throw ConfigError("stride must be >= 1");
    if (stride > window)
        throw ConfigError("stride " + std::to_string(stride) + " exceeds window " +
                          std::to_string(window) + ", pixels would be skipped");
    if (window > short_side)
        throw ConfigError("window " + std::to_string(window) + " exceeds short side " +
                          std::to_string(short_side));
    if (window % patch_size != 0)
        throw ConfigError("window " + std::to_string(window) + " must be a multiple of the patch size " +
                          std::to_string(patch_size));
}

PreprocessedImage resize_shorter_side(const Tensor& image, int64_t short_side,
                                      int64_t patch_size) {
    if (image.rank() != 3 || image.extent(0) != 3)
        throw ShapeError("resize_shorter_side: expected [3, h, w] image");
    if (short_side < 1) throw ConfigError("short side must be >= 1");
    const int64_t h = image.extent(1), w = image.extent(2);

    int64_t nh, nw;
    if (h <= w) {
        nh = short_side;
        nw = std::max<int64_t>(1, std::llround(double(w) * double(short_side) / double(h)));
    } else {
        nw = short_side;
        nh = std::max<int64_t>(1, std::llround(double(h) * double(short_side) / double(w)));
    }
    const Tensor resized = bilinear_resize(image, nh, nw);

    const int64_t ph = (patch_size - nh % patch_size) % patch_size;
    const int64_t pw = (patch_size - nw % patch_size) % patch_size;
    PreprocessedImage out;
    out.content_h = nh;
    out.content_w = nw;
    out.pad_top = ph / 2;
    out.pad_left = pw / 2;
    out.orig_h = h;
    out.orig_w = w;
    if (ph == 0 && pw == 0) {
        out.image = resized;
        return out;
    }

    // replicate edge pixels into the padded border
    Tensor padded({3, nh + ph, nw + pw});
    for (int64_t c = 0; c < 3; ++c)
        for (int64_t y = 0; y < nh + ph; ++y) {
            const int64_t sy = std::clamp<int64_t>(y - out.pad_top, 0, nh - 1);
            for (int64_t x = 0; x < nw + pw; ++x) {
                const int64_t sx = std::clamp<int64_t>(x - out.pad_left, 0, nw - 1);
                padded(c, y, x) = resized(c, sy, sx);
            }
        }
    out.image = std::move(padded);
    return out;
}

static std::vector<int64_t> axis_starts(int64_t extent, int64_t window, int64_t stride) {
    std::vector<int64_t> starts;
    for (int64_t s = 0;; s += stride) {
        const int64_t clamped = std::min(s, extent - window);
        if (starts.empty() || starts.back() != clamped) starts.push_back(clamped);
        if (s + window >= extent) break;
    }
    return starts;
}

std::vector<std::pair<int64_t, int64_t>> window_grid(int64_t h, int64_t w,
                                                     int64_t window, int64_t stride) {
    if (window < 1 || stride < 1)
        throw ConfigError("window and stride must be >= 1");
    if (window > h || window > w)
        throw ConfigError("window " + std::to_string(window) + " larger than image " +
                          std::to_string(h) + "x" + std::to_string(w));
    std::vector<std::pair<int64_t, int64_t>> grid;
    const auto ys = axis_starts(h, window, stride);
    const auto xs = axis_starts(w, window, stride);
    grid.reserve(ys.size() * xs.size());
    for (int64_t y : ys)
        for (int64_t x : xs) grid.emplace_back(y, x);
    return grid;
}

static Tensor crop_chw(const Tensor& image, int64_t top, int64_t left,
                       int64_t height, int64_t width) {
    const int64_t c = image.extent(0);
    Tensor out({c, height, width});
    for (int64_t ch = 0; ch < c; ++ch)
        for (int64_t y = 0; y < height; ++y)
            for (int64_t x = 0; x < width; ++x)
                out(ch, y, x) = image(ch, top + y, left + x);
    return out;
}

Tensor slide_logits(const VitModel& m, const Tensor& image, const ClassEmbeddingSet& classes,
                    const AttentionMode& decode_mode, const SlideConfig& cfg,
                    const std::vector<std::pair<int64_t, int64_t>>* windows_override) {
    cfg.validate(m.config.patch_size);
    const PreprocessedImage pre = resize_shorter_side(image, cfg.short_side, m.config.patch_size);
    const int64_t hp = pre.image.extent(1), wp = pre.image.extent(2);
    const int64_t num_classes = classes.count();

    const std::vector<std::pair<int64_t, int64_t>> windows =
        windows_override ? *windows_override : window_grid(hp, wp, cfg.window, cfg.stride);
    if (windows.empty()) throw ConfigError("no inference windows");

    Tensor canvas({num_classes, hp, wp});
    std::vector<int32_t> hits(size_t(hp * wp), 0);

    for (const auto& [top, left] : windows) {
        if (top < 0 || left < 0 || top + cfg.window > hp || left + cfg.window > wp)
            throw ConfigError("window at " + std::to_string(top) + "," + std::to_string(left) +
                              " falls outside the image");
        const Tensor crop = crop_chw(pre.image, top, left, cfg.window, cfg.window);
        const ForwardResult fwd = forward_features(m, crop, decode_mode);
        const DenseLogits logits = classify_dense(fwd.features, classes);

        // class-major planes at patch resolution, then upsample to pixels
        Tensor planes({num_classes, logits.grid_rows, logits.grid_cols});
        for (int64_t i = 0; i < logits.grid_rows * logits.grid_cols; ++i)
            for (int64_t cc = 0; cc < num_classes; ++cc)
                planes(cc, i / logits.grid_cols, i % logits.grid_cols) = logits.logits(i, cc);
        const Tensor up = bilinear_resize(planes, cfg.window, cfg.window);

        for (int64_t cc = 0; cc < num_classes; ++cc)
            for (int64_t y = 0; y < cfg.window; ++y)
                for (int64_t x = 0; x < cfg.window; ++x)
                    canvas(cc, top + y, left + x) += up(cc, y, x);
        for (int64_t y = 0; y < cfg.window; ++y)
            for (int64_t x = 0; x < cfg.window; ++x)
                hits[size_t((top + y) * wp + left + x)] += 1;
    }

    for (int64_t y = 0; y < hp; ++y)
        for (int64_t x = 0; x < wp; ++x) {
            const int32_t n = hits[size_t(y * wp + x)];
            if (n == 0)
                throw ConfigError("window grid leaves pixel " + std::to_string(y) + "," +
                                  std::to_string(x) + " uncovered");
            if (n > 1)
                for (int64_t cc = 0; cc < num_classes; ++cc) canvas(cc, y, x) /= float(n);
        }

    const Tensor content = crop_chw(canvas, pre.pad_top, pre.pad_left, pre.content_h, pre.content_w);
    return bilinear_resize(content, pre.orig_h, pre.orig_w);
}

PixelMask slide_segment(const VitModel& m, const Tensor& image, const ClassEmbeddingSet& classes,
                        const AttentionMode& decode_mode, const SlideConfig& cfg) {
    const Tensor logits = slide_logits(m, image, classes, decode_mode, cfg);
    const int64_t c = logits.extent(0), h = logits.extent(1), w = logits.extent(2);
    PixelMask mask{h, w, std::vector<uint8_t>(size_t(h * w), 0)};
    for (int64_t y = 0; y < h; ++y)
        for (int64_t x = 0; x < w; ++x) {
            int64_t best = 0;
            for (int64_t cc = 1; cc < c; ++cc)
                if (logits(cc, y, x) > logits(best, y, x)) best = cc;
            mask.at(y, x) = uint8_t(best);
        }
    return mask;
}

} // namespace csaseg
