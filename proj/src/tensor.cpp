#include "csaseg/tensor.hpp"

#include "csaseg/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <string>

namespace csaseg {

static std::string shape_str(const std::vector<int64_t>& s) {
    std::string out = "[";
    for (size_t i = 0; i < s.size(); ++i) {
        if (i) out += ", ";
        out += std::to_string(s[i]);
    }
    return out + "]";
}

static int64_t checked_numel(const std::vector<int64_t>& shape) {
    int64_t n = 1;
    for (int64_t e : shape) {
        if (e < 1) throw ShapeError("tensor extent must be positive, got shape " + shape_str(shape));
        if (n > (int64_t(1) << 40) / e)
            throw ShapeError("tensor too large: shape " + shape_str(shape));
        n *= e;
    }
    return n;
}

Tensor::Tensor(std::vector<int64_t> shape) : shape_(std::move(shape)) {
    data_.assign(size_t(checked_numel(shape_)), 0.0f);
}

Tensor::Tensor(std::vector<int64_t> shape, std::vector<float> values) : shape_(std::move(shape)) {
    const int64_t n = checked_numel(shape_);
    if (n != int64_t(values.size()))
        throw ShapeError("tensor data length " + std::to_string(values.size()) +
                         " does not match shape " + shape_str(shape_));
    data_ = std::move(values);
}

Tensor Tensor::full(std::vector<int64_t> shape, float value) {
    Tensor t(std::move(shape));
    std::fill(t.data_.begin(), t.data_.end(), value);
    return t;
}

Tensor Tensor::identity(int64_t n) {
    Tensor t({n, n});
    for (int64_t i = 0; i < n; ++i) t(i, i) = 1.0f;
    return t;
}

int64_t Tensor::extent(size_t axis) const {
    if (axis >= shape_.size())
        throw ShapeError("axis " + std::to_string(axis) + " out of range for shape " + shape_str(shape_));
    return shape_[axis];
}

static void require_rank(const Tensor& t, size_t rank, const char* who) {
    if (t.rank() != rank)
        throw ShapeError(std::string(who) + ": expected rank " + std::to_string(rank) +
                         ", got shape " + shape_str(t.shape()));
}

Tensor matmul(const Tensor& a, const Tensor& b) {
    require_rank(a, 2, "matmul");
    require_rank(b, 2, "matmul");
    const int64_t m = a.extent(0), k = a.extent(1), n = b.extent(1);
    if (b.extent(0) != k)
        throw ShapeError("matmul: inner extents differ, " + shape_str(a.shape()) +
                         " vs " + shape_str(b.shape()));
    Tensor c({m, n});
    const float* pa = a.data();
    const float* pb = b.data();
    float* pc = c.data();
    auto rows = [&](int64_t r0, int64_t r1) {
        for (int64_t i = r0; i < r1; ++i) {
            float* crow = pc + i * n;
            const float* arow = pa + i * k;
            for (int64_t kk = 0; kk < k; ++kk) {
                const float av = arow[kk];
                const float* brow = pb + kk * n;
                for (int64_t j = 0; j < n; ++j) crow[j] += av * brow[j];
            }
        }
    };
    if (m * n * k >= (int64_t(1) << 21) && m > 1)
        parallel_for(m, rows);
    else
        rows(0, m);
    return c;
}

Tensor matmul_bt(const Tensor& a, const Tensor& b) {
    require_rank(a, 2, "matmul_bt");
    require_rank(b, 2, "matmul_bt");
    const int64_t m = a.extent(0), k = a.extent(1), n = b.extent(0);
    if (b.extent(1) != k)
        throw ShapeError("matmul_bt: inner extents differ, " + shape_str(a.shape()) +
                         " vs " + shape_str(b.shape()));
    Tensor c({m, n});
    const float* pa = a.data();
    const float* pb = b.data();
    float* pc = c.data();
    auto rows = [&](int64_t r0, int64_t r1) {
        for (int64_t i = r0; i < r1; ++i) {
            const float* arow = pa + i * k;
            float* crow = pc + i * n;
            for (int64_t j = 0; j < n; ++j) {
                const float* brow = pb + j * k;
                float acc = 0.0f;
                for (int64_t kk = 0; kk < k; ++kk) acc += arow[kk] * brow[kk];
                crow[j] = acc;
            }
        }
    };
    if (m * n * k >= (int64_t(1) << 21) && m > 1)
        parallel_for(m, rows);
    else
        rows(0, m);
    return c;
}

Tensor transpose(const Tensor& a) {
    require_rank(a, 2, "transpose");
    const int64_t m = a.extent(0), n = a.extent(1);
    Tensor t({n, m});
    for (int64_t i = 0; i < m; ++i)
        for (int64_t j = 0; j < n; ++j) t(j, i) = a(i, j);
    return t;
}

Tensor add(const Tensor& a, const Tensor& b) {
    if (!a.same_shape(b))
        throw ShapeError("add: shapes differ, " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    Tensor c = a;
    const float* pb = b.data();
    float* pc = c.data();
    for (int64_t i = 0; i < c.numel(); ++i) pc[i] += pb[i];
    return c;
}

Tensor add_row_bias(const Tensor& a, const Tensor& bias) {
    require_rank(a, 2, "add_row_bias");
    require_rank(bias, 1, "add_row_bias");
    const int64_t m = a.extent(0), n = a.extent(1);
    if (bias.extent(0) != n)
        throw ShapeError("add_row_bias: bias length " + std::to_string(bias.extent(0)) +
                         " does not match row width " + std::to_string(n));
    Tensor c = a;
    for (int64_t i = 0; i < m; ++i)
        for (int64_t j = 0; j < n; ++j) c(i, j) += bias(j);
    return c;
}

Tensor scale(const Tensor& a, float s) {
    Tensor c = a;
    float* pc = c.data();
    for (int64_t i = 0; i < c.numel(); ++i) pc[i] *= s;
    return c;
}

Tensor softmax_rows(const Tensor& s) {
    if (s.rank() < 1)
        throw ShapeError("softmax_rows: expected rank >= 1");
    const int64_t width = s.shape().back();
    const int64_t rows = s.numel() / width;
    Tensor out = s;
    float* p = out.data();
    for (int64_t r = 0; r < rows; ++r) {
        float* row = p + r * width;
        float mx = row[0];
        for (int64_t j = 0; j < width; ++j) {
            if (std::isnan(row[j]))
                throw NumericError("softmax_rows: NaN at row " + std::to_string(r) +
                                   ", column " + std::to_string(j));
            mx = std::max(mx, row[j]);
        }
        double sum = 0.0;
        for (int64_t j = 0; j < width; ++j) {
            const double e = std::exp(double(row[j]) - double(mx));
            row[j] = float(e);
            sum += e;
        }
        const double inv = 1.0 / sum;
        for (int64_t j = 0; j < width; ++j) row[j] = float(double(row[j]) * inv);
    }
    return out;
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, float eps) {
    if (x.rank() < 1) throw ShapeError("layer_norm: expected rank >= 1");
    require_rank(gain, 1, "layer_norm");
    require_rank(bias, 1, "layer_norm");
    const int64_t d = x.shape().back();
    if (gain.extent(0) != d || bias.extent(0) != d)
        throw ShapeError("layer_norm: gain/bias length must be " + std::to_string(d));
    const int64_t rows = x.numel() / d;
    Tensor out = x;
    float* p = out.data();
    const float* pg = gain.data();
    const float* pb = bias.data();
    for (int64_t r = 0; r < rows; ++r) {
        float* row = p + r * d;
        double mean = 0.0;
        for (int64_t j = 0; j < d; ++j) mean += row[j];
        mean /= double(d);
        double var = 0.0;
        for (int64_t j = 0; j < d; ++j) {
            const double c = double(row[j]) - mean;
            var += c * c;
        }
        var /= double(d);
        const double inv = 1.0 / std::sqrt(var + double(eps));
        for (int64_t j = 0; j < d; ++j)
            row[j] = float((double(row[j]) - mean) * inv) * pg[j] + pb[j];
    }
    return out;
}

Tensor gelu(const Tensor& x) {
    Tensor out = x;
    float* p = out.data();
    const double inv_sqrt2 = 0.70710678118654752440;
    for (int64_t i = 0; i < out.numel(); ++i) {
        const double v = double(p[i]);
        p[i] = float(0.5 * v * (1.0 + std::erf(v * inv_sqrt2)));
    }
    return out;
}

Tensor l2_normalize_rows(const Tensor& x) {
    require_rank(x, 2, "l2_normalize_rows");
    const int64_t m = x.extent(0), d = x.extent(1);
    Tensor out = x;
    float* p = out.data();
    for (int64_t i = 0; i < m; ++i) {
        float* row = p + i * d;
        double sq = 0.0;
        for (int64_t j = 0; j < d; ++j) sq += double(row[j]) * double(row[j]);
        if (sq == 0.0)
            throw DegenerateInputError("l2_normalize_rows: row " + std::to_string(i) + " has zero norm");
        const double inv = 1.0 / std::sqrt(sq);
        for (int64_t j = 0; j < d; ++j) row[j] = float(double(row[j]) * inv);
    }
    return out;
}

Tensor bilinear_resize(const Tensor& x, int64_t out_h, int64_t out_w) {
    require_rank(x, 3, "bilinear_resize");
    if (out_h < 1 || out_w < 1)
        throw ShapeError("bilinear_resize: target size must be positive, got " +
                         std::to_string(out_h) + "x" + std::to_string(out_w));
    const int64_t c = x.extent(0), h = x.extent(1), w = x.extent(2);
    if (out_h == h && out_w == w) return x;

    // half-pixel-center source coordinates, clamped at the borders
    std::vector<int64_t> y0(static_cast<size_t>(out_h)), y1(static_cast<size_t>(out_h));
    std::vector<int64_t> x0(static_cast<size_t>(out_w)), x1(static_cast<size_t>(out_w));
    std::vector<double> fy(static_cast<size_t>(out_h)), fx(static_cast<size_t>(out_w));
    for (int64_t oy = 0; oy < out_h; ++oy) {
        double sy = (double(oy) + 0.5) * double(h) / double(out_h) - 0.5;
        sy = std::clamp(sy, 0.0, double(h - 1));
        y0[size_t(oy)] = int64_t(std::floor(sy));
        y1[size_t(oy)] = std::min(y0[size_t(oy)] + 1, h - 1);
        fy[size_t(oy)] = sy - double(y0[size_t(oy)]);
    }
    for (int64_t ox = 0; ox < out_w; ++ox) {
        double sx = (double(ox) + 0.5) * double(w) / double(out_w) - 0.5;
        sx = std::clamp(sx, 0.0, double(w - 1));
        x0[size_t(ox)] = int64_t(std::floor(sx));
        x1[size_t(ox)] = std::min(x0[size_t(ox)] + 1, w - 1);
        fx[size_t(ox)] = sx - double(x0[size_t(ox)]);
    }

    Tensor out({c, out_h, out_w});
    for (int64_t ch = 0; ch < c; ++ch) {
        const float* src = x.data() + ch * h * w;
        float* dst = out.data() + ch * out_h * out_w;
        for (int64_t oy = 0; oy < out_h; ++oy) {
            const float* r0 = src + y0[size_t(oy)] * w;
            const float* r1 = src + y1[size_t(oy)] * w;
            const double wy = fy[size_t(oy)];
            for (int64_t ox = 0; ox < out_w; ++ox) {
                const double wx = fx[size_t(ox)];
                const double top = (1.0 - wx) * double(r0[x0[size_t(ox)]]) + wx * double(r0[x1[size_t(ox)]]);
                const double bot = (1.0 - wx) * double(r1[x0[size_t(ox)]]) + wx * double(r1[x1[size_t(ox)]]);
                dst[oy * out_w + ox] = float((1.0 - wy) * top + wy * bot);
            }
        }
    }
    return out;
}

} // namespace csaseg
