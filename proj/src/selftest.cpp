#include "csaseg/selftest.hpp"

#include "csaseg/attention.hpp"
#include "csaseg/model_io.hpp"
#include "csaseg/rng.hpp"
#include "csaseg/slide.hpp"
#include "csaseg/synthetic.hpp"

#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <functional>

namespace csaseg {

namespace {

bool allclose(const Tensor& a, const Tensor& b, double atol) {
    if (!a.same_shape(b)) return false;
    for (int64_t i = 0; i < a.numel(); ++i)
        if (std::fabs(double(a.data()[i]) - double(b.data()[i])) > atol) return false;
    return true;
}

bool bitequal(const Tensor& a, const Tensor& b) {
    return a.same_shape(b) &&
           std::memcmp(a.data(), b.data(), size_t(a.numel()) * sizeof(float)) == 0;
}

bool rows_sum_to(const Tensor& scores, double target, double atol) {
    const int64_t t = scores.shape().back();
    const int64_t rows = scores.numel() / t;
    for (int64_t r = 0; r < rows; ++r) {
        double sum = 0.0;
        for (int64_t j = 0; j < t; ++j) sum += double(scores.data()[r * t + j]);
        if (std::fabs(sum - target) > atol) return false;
    }
    return true;
}

Tensor random_tokens(int64_t t, int64_t d, uint64_t seed) {
    rng::Stream s{seed, 7, 0};
    Tensor x({t, d});
    for (int64_t i = 0; i < x.numel(); ++i) x.data()[i] = s.next_gaussian();
    return x;
}

} // namespace

int run_selftest(std::ostream& out) {
    int failures = 0;
    auto check = [&](const char* name, const std::function<bool()>& fn) {
        bool ok = false;
        std::string detail;
        try {
            ok = fn();
        } catch (const std::exception& e) {
            detail = std::string(" (") + e.what() + ")";
        }
        out << (ok ? "PASS " : "FAIL ") << name << detail << "\n";
        if (!ok) ++failures;
    };

    const VitConfig cfg{.patch_size = 4, .dim = 16, .depth = 3, .head_count = 4,
                        .mlp_ratio = 2.0f, .pretrain_grid_h = 4, .pretrain_grid_w = 4,
                        .embed_dim_out = 8};
    const VitModel model = make_random_model(cfg, 42);
    const AttentionWeights& attn = model.blocks.back().attn;
    const float tau = default_tau(attn);
    const Tensor x = random_tokens(17, cfg.dim, 1);   // 4x4 patches + class token
    const PatchGrid grid{4, 4};

    check("score rows are stochastic", [&] {
        return rows_sum_to(vanilla_scores(x, attn), 1.0, 1e-6) &&
               rows_sum_to(csa_scores(x, attn.w_q, attn.head_count, tau), 1.0, 1e-6) &&
               rows_sum_to(local_window_scores(x, attn, 3, grid, tau), 1.0, 1e-6) &&
               rows_sum_to(sharpened_scores(x, attn, 0.5f), 1.0, 1e-6) &&
               rows_sum_to(ensemble_scores(x, attn.head_count, 3, 9, tau), 1.0, 1e-6);
    });

    check("dual correlative rows sum to 2", [&] {
        return rows_sum_to(csa_dual_scores(x, attn, tau), 2.0, 1e-6);
    });

    check("dual equals sum of single projections", [&] {
        const Tensor dual = csa_dual_scores(x, attn, tau);
        const Tensor sum = add(csa_scores(x, attn.w_q, attn.head_count, tau),
                               csa_scores(x, attn.w_k, attn.head_count, tau));
        return allclose(dual, sum, 1e-7);
    });

    check("correlative logits are symmetric", [&] {
        const Tensor s = csa_logits(x, attn.w_q, attn.head_count, tau);
        const int64_t t = s.extent(1);
        for (int64_t h = 0; h < s.extent(0); ++h)
            for (int64_t i = 0; i < t; ++i)
                for (int64_t j = 0; j < t; ++j)
                    if (std::fabs(double(s(h, i, j)) - double(s(h, j, i))) > 1e-6) return false;
        return true;
    });

    check("window 1 collapses to identity on patch rows", [&] {
        const Tensor lw = local_window_scores(x, attn, 1, grid, tau);
        const Tensor id = identity_scores(16);
        const int64_t t = lw.extent(1);
        for (int64_t h = 0; h < lw.extent(0); ++h)
            for (int64_t i = 1; i < t; ++i)
                for (int64_t j = 0; j < t; ++j)
                    if (lw(h, i, j) != id(i, j)) return false;
        return true;
    });

    check("sharpening at the default temperature is vanilla", [&] {
        return bitequal(sharpened_scores(x, attn, tau), vanilla_scores(x, attn));
    });

    check("normalized projections peak on the diagonal", [&] {
        Tensor r = l2_normalize_rows(matmul(x, attn.w_q));
        const Tensor s = csa_logits(r, Tensor::identity(cfg.dim), 1, 1.0f);
        for (int64_t i = 0; i < s.extent(1); ++i) {
            int64_t best = 0;
            for (int64_t j = 1; j < s.extent(2); ++j)
                if (s(0, i, j) > s(0, i, best)) best = j;
            if (best != i) return false;
        }
        return true;
    });

    check("correlative scores are permutation-equivariant", [&] {
        const int64_t t = x.extent(0);
        std::vector<int64_t> perm(static_cast<size_t>(t));
        for (int64_t i = 0; i < t; ++i) perm[size_t(i)] = i;
        // fixed class token, patch rows rotated
        for (int64_t i = 1; i < t - 1; ++i) perm[size_t(i)] = i + 1;
        perm[size_t(t - 1)] = 1;
        Tensor px({t, cfg.dim});
        for (int64_t i = 0; i < t; ++i)
            for (int64_t j = 0; j < cfg.dim; ++j) px(i, j) = x(perm[size_t(i)], j);
        const Tensor sp = csa_scores(px, attn.w_q, attn.head_count, tau);
        const Tensor s = csa_scores(x, attn.w_q, attn.head_count, tau);
        for (int64_t h = 0; h < s.extent(0); ++h)
            for (int64_t i = 0; i < t; ++i)
                for (int64_t j = 0; j < t; ++j)
                    if (std::fabs(double(sp(h, i, j)) -
                                  double(s(h, perm[size_t(i)], perm[size_t(j)]))) > 1e-6)
                        return false;
        return true;
    });

    check("position embedding is untouched at the native grid", [&] {
        return bitequal(interpolate_pos_embed(model.pos_embed, 4, 4, 4, 4), model.pos_embed);
    });

    check("container round trip is byte-identical", [&] {
        const WeightContainer c = to_container(model);
        const std::vector<uint8_t> bytes = serialize_container(c);
        const std::vector<uint8_t> again = serialize_container(parse_container(bytes));
        return bytes == again && bitequal(build_model(parse_container(bytes)).pos_embed,
                                          model.pos_embed);
    });

    check("single window equals direct inference", [&] {
        const SegmentationFixture fx = make_split_field_fixture();
        const Tensor logits = slide_logits(fx.model_csa, fx.image, fx.classes,
                                           AttentionMode::csa_dual(), fx.slide);
        const ForwardResult fwd = forward_features(fx.model_csa, fx.image,
                                                   AttentionMode::csa_dual());
        const DenseLogits dl = classify_dense(fwd.features, fx.classes);
        Tensor planes({fx.classes.count(), dl.grid_rows, dl.grid_cols});
        for (int64_t i = 0; i < dl.grid_rows * dl.grid_cols; ++i)
            for (int64_t c = 0; c < fx.classes.count(); ++c)
                planes(c, i / dl.grid_cols, i % dl.grid_cols) = dl.logits(i, c);
        return bitequal(logits, bilinear_resize(planes, fx.image.extent(1), fx.image.extent(2)));
    });

    check("borrowed scores match the captured layer", [&] {
        Tensor patch_img({3, 16, 16});
        rng::Stream s{11, 3, 0};
        for (int64_t i = 0; i < patch_img.numel(); ++i) patch_img.data()[i] = s.next_gaussian();
        const ForwardResult r = forward_features(model, patch_img,
                                                 AttentionMode::early_borrow(2), true);
        return bitequal(r.layer_attention[size_t(model.config.depth - 1)],
                        capture_attention(model, patch_img, 2));
    });

    return failures;
}

} // namespace csaseg
