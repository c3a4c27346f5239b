#include "csaseg/attention.hpp"

#include "csaseg/rng.hpp"

#include <cmath>
#include <string>

namespace csaseg {

void AttentionWeights::validate() const {
    const int64_t d = dim();
    auto square = [&](const Tensor& t, const char* name) {
        if (t.rank() != 2 || t.extent(0) != d || t.extent(1) != d)
            throw ShapeError(std::string("attention weights: ") + name + " must be [" +
                             std::to_string(d) + ", " + std::to_string(d) + "]");
    };
    auto vec = [&](const Tensor& t, const char* name) {
        if (t.rank() != 1 || t.extent(0) != d)
            throw ShapeError(std::string("attention weights: ") + name + " must have length " +
                             std::to_string(d));
    };
    square(w_q, "w_q"); square(w_k, "w_k"); square(w_v, "w_v"); square(w_o, "w_o");
    vec(b_q, "b_q"); vec(b_k, "b_k"); vec(b_v, "b_v"); vec(b_o, "b_o");
    if (head_count < 1 || d % head_count != 0)
        throw ShapeError("attention weights: head count " + std::to_string(head_count) +
                         " must divide dim " + std::to_string(d));
}

static AttentionMode make_mode(AttentionMode::Kind kind) {
    AttentionMode m;
    m.kind = kind;
    return m;
}

AttentionMode AttentionMode::vanilla() { return make_mode(Kind::Vanilla); }
AttentionMode AttentionMode::csa_single(CsaProjection p) {
    AttentionMode m = make_mode(Kind::CsaSingle);
    m.projection = p;
    return m;
}
AttentionMode AttentionMode::csa_custom(Tensor w_r) {
    AttentionMode m = make_mode(Kind::CsaSingle);
    m.projection = CsaProjection::Custom;
    m.custom_projection = std::move(w_r);
    return m;
}
AttentionMode AttentionMode::csa_dual() { return make_mode(Kind::CsaDual); }
AttentionMode AttentionMode::identity() { return make_mode(Kind::Identity); }
AttentionMode AttentionMode::local_window(int64_t size) {
    AttentionMode m = make_mode(Kind::LocalWindow);
    m.window_size = size;
    return m;
}
AttentionMode AttentionMode::sharpened(float tau) {
    AttentionMode m = make_mode(Kind::Sharpened);
    m.tau = tau;
    return m;
}
AttentionMode AttentionMode::random_ensemble(int64_t count, uint64_t seed) {
    AttentionMode m = make_mode(Kind::RandomEnsemble);
    m.ensemble_count = count;
    m.ensemble_seed = seed;
    return m;
}
AttentionMode AttentionMode::early_borrow(int64_t layer) {
    AttentionMode m = make_mode(Kind::EarlyBorrow);
    m.borrow_layer = layer;
    return m;
}

void AttentionMode::validate() const {
    switch (kind) {
    case Kind::LocalWindow:
        if (window_size < 1 || window_size % 2 == 0)
            throw ConfigError("local window size must be odd and positive, got " +
                              std::to_string(window_size));
        break;
    case Kind::Sharpened:
        if (tau < 0.0f || std::isnan(tau))
            throw ConfigError("sharpening temperature must be >= 0, got " + std::to_string(tau));
        break;
    case Kind::RandomEnsemble:
        if (ensemble_count < 1)
            throw ConfigError("ensemble count must be >= 1, got " + std::to_string(ensemble_count));
        break;
    case Kind::EarlyBorrow:
        if (borrow_layer < 1)
            throw ConfigError("borrow layer must be >= 1, got " + std::to_string(borrow_layer));
        break;
    case Kind::CsaSingle:
        if (projection == CsaProjection::Custom &&
            (custom_projection.rank() != 2 ||
             custom_projection.extent(0) != custom_projection.extent(1)))
            throw ConfigError("custom projection must be a square matrix");
        break;
    default:
        break;
    }
}

float default_tau(const AttentionWeights& w) {
    return std::sqrt(float(w.head_dim()));
}

static void require_tokens(const Tensor& x, int64_t d) {
    if (x.rank() != 2 || x.extent(1) != d)
        throw ShapeError("token matrix must be [t, " + std::to_string(d) + "]");
}

static Tensor slice_cols(const Tensor& x, int64_t c0, int64_t width) {
    const int64_t t = x.extent(0);
    Tensor out({t, width});
    for (int64_t i = 0; i < t; ++i)
        for (int64_t j = 0; j < width; ++j) out(i, j) = x(i, c0 + j);
    return out;
}

// per-head q_h * k_h^T / tau stacked into [heads x t x t]
static Tensor head_logits(const Tensor& q, const Tensor& k, int64_t heads, float tau) {
    if (tau <= 0.0f || std::isnan(tau))
        throw ConfigError("temperature must be positive, got " + std::to_string(tau));
    const int64_t t = q.extent(0), d = q.extent(1);
    if (d % heads != 0)
        throw ShapeError("head count " + std::to_string(heads) + " must divide dim " +
                         std::to_string(d));
    const int64_t hd = d / heads;
    Tensor out({heads, t, t});
    const float inv = 1.0f / tau;
    for (int64_t h = 0; h < heads; ++h) {
        const Tensor s = matmul_bt(slice_cols(q, h * hd, hd), slice_cols(k, h * hd, hd));
        for (int64_t i = 0; i < t; ++i)
            for (int64_t j = 0; j < t; ++j) out(h, i, j) = s(i, j) * inv;
    }
    return out;
}

Tensor vanilla_logits(const Tensor& x, const AttentionWeights& w, float tau) {
    w.validate();
    require_tokens(x, w.dim());
    const Tensor q = add_row_bias(matmul(x, w.w_q), w.b_q);
    const Tensor k = add_row_bias(matmul(x, w.w_k), w.b_k);
    return head_logits(q, k, w.head_count, tau);
}

Tensor vanilla_scores(const Tensor& x, const AttentionWeights& w) {
    return softmax_rows(vanilla_logits(x, w, default_tau(w)));
}

Tensor csa_logits(const Tensor& x, const Tensor& w_r, int64_t head_count, float tau) {
    if (w_r.rank() != 2 || w_r.extent(0) != w_r.extent(1))
        throw ShapeError("csa projection must be square, got rank " + std::to_string(w_r.rank()));
    require_tokens(x, w_r.extent(0));
    const Tensor r = matmul(x, w_r);
    return head_logits(r, r, head_count, tau);
}

Tensor csa_scores(const Tensor& x, const Tensor& w_r, int64_t head_count, float tau) {
    return softmax_rows(csa_logits(x, w_r, head_count, tau));
}

Tensor csa_dual_scores(const Tensor& x, const AttentionWeights& w, float tau) {
    w.validate();
    return add(csa_scores(x, w.w_q, w.head_count, tau),
               csa_scores(x, w.w_k, w.head_count, tau));
}

Tensor identity_scores(int64_t patch_count) {
    if (patch_count < 0)
        throw ShapeError("identity_scores: patch count must be >= 0");
    return Tensor::identity(patch_count + 1);
}

Tensor local_window_scores(const Tensor& x, const AttentionWeights& w, int64_t size,
                           PatchGrid grid, float tau) {
    AttentionMode::local_window(size).validate();
    Tensor logits = vanilla_logits(x, w, tau);
    const int64_t t = logits.extent(1);
    if (grid.rows < 1 || grid.cols < 1 || grid.rows * grid.cols != t - 1)
        throw ShapeError("local window grid " + std::to_string(grid.rows) + "x" +
                         std::to_string(grid.cols) + " does not cover " +
                         std::to_string(t - 1) + " patches");
    const int64_t heads = logits.extent(0);
    const int64_t half = (size - 1) / 2;
    const float penalty = -1e9f;
    // row 0 (class token) stays unmasked; patch rows keep only their window
    for (int64_t i = 1; i < t; ++i) {
        const int64_t ri = (i - 1) / grid.cols, ci = (i - 1) % grid.cols;
        for (int64_t j = 0; j < t; ++j) {
            bool allowed = false;
            if (j > 0) {
                const int64_t rj = (j - 1) / grid.cols, cj = (j - 1) % grid.cols;
                allowed = std::llabs(ri - rj) <= half && std::llabs(ci - cj) <= half;
            }
            if (!allowed)
                for (int64_t h = 0; h < heads; ++h) logits(h, i, j) += penalty;
        }
    }
    return softmax_rows(logits);
}

Tensor sharpened_scores(const Tensor& x, const AttentionWeights& w, float tau) {
    AttentionMode::sharpened(tau).validate();
    if (tau > 0.0f) return softmax_rows(vanilla_logits(x, w, tau));

    // hard-max limit: one-hot rows at the unscaled logit argmax
    Tensor logits = vanilla_logits(x, w, 1.0f);
    const int64_t heads = logits.extent(0), t = logits.extent(1);
    Tensor out({heads, t, t});
    for (int64_t h = 0; h < heads; ++h)
        for (int64_t i = 0; i < t; ++i) {
            int64_t best = 0;
            for (int64_t j = 1; j < t; ++j)
                if (logits(h, i, j) > logits(h, i, best)) best = j;
            out(h, i, best) = 1.0f;
        }
    return out;
}

Tensor ensemble_scores(const Tensor& x, int64_t head_count, int64_t count,
                       uint64_t seed, float tau) {
    AttentionMode::random_ensemble(count, seed).validate();
    const int64_t d = x.extent(1);
    const float sd = 1.0f / std::sqrt(float(d));
    Tensor sum;
    for (int64_t trial = 0; trial < count; ++trial) {
        Tensor w_r({d, d});
        float* p = w_r.data();
        for (int64_t i = 0; i < d * d; ++i)
            p[i] = sd * rng::gaussian(seed, uint64_t(trial), uint64_t(i));
        Tensor s = csa_scores(x, w_r, head_count, tau);
        sum = sum.empty() ? std::move(s) : add(sum, s);
    }
    return scale(sum, 1.0f / float(count));
}

Tensor aggregate(const Tensor& x, const Tensor& scores, const AttentionWeights& w) {
    w.validate();
    require_tokens(x, w.dim());
    const int64_t t = x.extent(0), d = w.dim();
    const int64_t heads = w.head_count, hd = w.head_dim();
    const bool shared = scores.rank() == 2;
    if (shared) {
        if (scores.extent(0) != t || scores.extent(1) != t)
            throw ShapeError("aggregate: scores must be [" + std::to_string(t) + ", " +
                             std::to_string(t) + "]");
    } else if (scores.rank() != 3 || scores.extent(0) != heads || scores.extent(1) != t ||
               scores.extent(2) != t) {
        throw ShapeError("aggregate: scores must be [" + std::to_string(heads) + ", " +
                         std::to_string(t) + ", " + std::to_string(t) + "]");
    }

    const Tensor v = add_row_bias(matmul(x, w.w_v), w.b_v);
    Tensor mixed({t, d});
    for (int64_t h = 0; h < heads; ++h) {
        Tensor s({t, t});
        if (shared) {
            s = scores;
        } else {
            for (int64_t i = 0; i < t; ++i)
                for (int64_t j = 0; j < t; ++j) s(i, j) = scores(h, i, j);
        }
        const Tensor out_h = matmul(s, slice_cols(v, h * hd, hd));
        for (int64_t i = 0; i < t; ++i)
            for (int64_t j = 0; j < hd; ++j) mixed(i, h * hd + j) = out_h(i, j);
    }
    return add_row_bias(matmul(mixed, w.w_o), w.b_o);
}

} // namespace csaseg
