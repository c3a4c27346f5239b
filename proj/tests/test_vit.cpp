#include "csaseg/vit.hpp"

#include "csaseg/synthetic.hpp"
#include "test_helpers.hpp"

#include <doctest.h>

#include <cmath>
#include <cstring>

using namespace csaseg;
using testutil::allclose;
using testutil::bitequal;
using testutil::random_tensor;

static VitConfig tiny_config() {
    VitConfig c;
    c.patch_size = 4;
    c.dim = 16;
    c.depth = 2;
    c.head_count = 4;
    c.mlp_ratio = 2.0f;
    c.pretrain_grid_h = 3;
    c.pretrain_grid_w = 3;
    c.embed_dim_out = 8;
    return c;
}

// the encoder re-assembled from public tensor and attention calls; the
// decode callback supplies the last layer's scores
template <typename ScoreFn>
static Tensor hand_forward(const VitModel& m, const Tensor& image, ScoreFn decode) {
    const int64_t p = m.config.patch_size, d = m.config.dim;
    const int64_t rows = image.extent(1) / p, cols = image.extent(2) / p, l = rows * cols;
    const Tensor patches = patchify(image, p);
    Tensor x({l + 1, d});
    const Tensor embedded = add_row_bias(matmul_bt(patches, m.patch_proj_w), m.patch_proj_b);
    for (int64_t j = 0; j < d; ++j) x(0, j) = m.cls_token(j);
    for (int64_t i = 0; i < l; ++i)
        for (int64_t j = 0; j < d; ++j) x(1 + i, j) = embedded(i, j);
    x = add(x, interpolate_pos_embed(m.pos_embed, m.config.pretrain_grid_h,
                                     m.config.pretrain_grid_w, rows, cols));
    for (size_t li = 0; li < m.blocks.size(); ++li) {
        const BlockWeights& blk = m.blocks[li];
        const Tensor t = layer_norm(x, blk.norm1.gain, blk.norm1.bias);
        const Tensor scores =
            li + 1 == m.blocks.size() ? decode(t, blk.attn) : vanilla_scores(t, blk.attn);
        x = add(x, aggregate(t, scores, blk.attn));
        const Tensor t2 = layer_norm(x, blk.norm2.gain, blk.norm2.bias);
        const Tensor hidden = gelu(add_row_bias(matmul_bt(t2, blk.mlp_in_w), blk.mlp_in_b));
        x = add(x, add_row_bias(matmul_bt(hidden, blk.mlp_out_w), blk.mlp_out_b));
    }
    x = layer_norm(x, m.final_norm.gain, m.final_norm.bias);
    Tensor patch_tokens({l, d});
    for (int64_t i = 0; i < l; ++i)
        for (int64_t j = 0; j < d; ++j) patch_tokens(i, j) = x(1 + i, j);
    return matmul(patch_tokens, m.visual_proj);
}

TEST_CASE("patchify of a patch-sized image yields a single row") {
    Tensor img({3, 2, 2});
    for (int64_t c = 0; c < 3; ++c)
        for (int64_t y = 0; y < 2; ++y)
            for (int64_t x = 0; x < 2; ++x) img(c, y, x) = float(c * 100 + y * 10 + x);
    const Tensor out = patchify(img, 2);
    CHECK(out.shape() == std::vector<int64_t>{1, 12});
    // channel-major layout: all of channel 0, then 1, then 2
    const float want[12] = {0, 1, 10, 11, 100, 101, 110, 111, 200, 201, 210, 211};
    for (int64_t j = 0; j < 12; ++j) CHECK(out(0, j) == want[j]);
}

TEST_CASE("patchify orders patches row-major across the grid") {
    Tensor img({3, 2, 4});
    for (int64_t c = 0; c < 3; ++c)
        for (int64_t y = 0; y < 2; ++y)
            for (int64_t x = 0; x < 4; ++x) img(c, y, x) = float(x >= 2 ? 1 : 0);
    const Tensor out = patchify(img, 2);
    CHECK(out.shape() == std::vector<int64_t>{2, 12});
    for (int64_t j = 0; j < 12; ++j) {
        CHECK(out(0, j) == 0.0f);
        CHECK(out(1, j) == 1.0f);
    }
}

TEST_CASE("patchify of 224x224 at patch 16 yields a 14x14 grid") {
    const Tensor out = patchify(Tensor({3, 224, 224}), 16);
    CHECK(out.shape() == std::vector<int64_t>{196, 768});
}

TEST_CASE("patchify of a constant image repeats one row") {
    const Tensor out = patchify(Tensor::full({3, 8, 8}, 0.5f), 4);
    for (int64_t i = 0; i < out.extent(0); ++i)
        for (int64_t j = 0; j < out.extent(1); ++j) CHECK(out(i, j) == 0.5f);
}

TEST_CASE("patchify rejects indivisible image sizes") {
    CHECK_THROWS_AS(patchify(Tensor({3, 10, 8}), 4), ShapeError);
    CHECK_THROWS_AS(patchify(Tensor({1, 8, 8}), 4), ShapeError);
}

TEST_CASE("position embedding is returned untouched at its native grid") {
    const Tensor pos = random_tensor({1 + 6, 16}, 1, 0);
    CHECK(bitequal(interpolate_pos_embed(pos, 2, 3, 2, 3), pos));
}

TEST_CASE("constant position embeddings stay constant at any grid") {
    Tensor pos({1 + 4, 8});
    for (int64_t j = 0; j < 8; ++j) {
        pos(0, j) = float(j);
        for (int64_t i = 1; i < 5; ++i) pos(i, j) = 0.25f;
    }
    const Tensor out = interpolate_pos_embed(pos, 2, 2, 5, 3);
    CHECK(out.shape() == std::vector<int64_t>{1 + 15, 8});
    for (int64_t j = 0; j < 8; ++j) CHECK(out(0, j) == float(j));
    for (int64_t i = 1; i < 16; ++i)
        for (int64_t j = 0; j < 8; ++j)
            CHECK(out(i, j) == doctest::Approx(0.25).epsilon(1e-6));
}

TEST_CASE("position embedding interpolation matches the channelized resize") {
    const int64_t d = 8;
    const Tensor pos = random_tensor({1 + 4, d}, 2, 0);
    const Tensor out = interpolate_pos_embed(pos, 2, 2, 4, 4);

    Tensor grid({d, 2, 2});
    for (int64_t i = 0; i < 4; ++i)
        for (int64_t j = 0; j < d; ++j) grid(j, i / 2, i % 2) = pos(1 + i, j);
    const Tensor resized = bilinear_resize(grid, 4, 4);
    for (int64_t j = 0; j < d; ++j) CHECK(out(0, j) == pos(0, j));
    for (int64_t i = 0; i < 16; ++i)
        for (int64_t j = 0; j < d; ++j)
            CHECK(out(1 + i, j) == doctest::Approx(resized(j, i / 4, i % 4)).epsilon(1e-6));
}

TEST_CASE("position embedding interpolation validates shapes") {
    CHECK_THROWS_AS(interpolate_pos_embed(Tensor({5, 8}), 2, 3, 2, 3), ShapeError);
    CHECK_THROWS_AS(interpolate_pos_embed(Tensor({5, 8}), 2, 2, 0, 3), ShapeError);
}

TEST_CASE("forward pass is deterministic and shaped by the patch grid") {
    const VitModel m = make_random_model(tiny_config(), 5);
    const Tensor img = random_tensor({3, 12, 12}, 5, 9);
    const ForwardResult a = forward_features(m, img, AttentionMode::csa_dual());
    const ForwardResult b = forward_features(m, img, AttentionMode::csa_dual());
    CHECK(a.features.grid_rows == 3);
    CHECK(a.features.grid_cols == 3);
    CHECK(a.features.feats.shape() == std::vector<int64_t>{9, 8});
    CHECK(bitequal(a.features.feats, b.features.feats));
}

TEST_CASE("every decode mode matches the hand-assembled pipeline") {
    const VitModel m = make_random_model(tiny_config(), 6);
    const Tensor img = random_tensor({3, 12, 12}, 6, 9);
    const float tau = default_tau(m.blocks.back().attn);

    const Tensor want_vanilla = hand_forward(
        m, img, [&](const Tensor& t, const AttentionWeights& w) { return vanilla_scores(t, w); });
    CHECK(allclose(forward_features(m, img, AttentionMode::vanilla()).features.feats,
                   want_vanilla, 1e-5));

    const Tensor want_dual = hand_forward(m, img, [&](const Tensor& t, const AttentionWeights& w) {
        return csa_dual_scores(t, w, tau);
    });
    CHECK(allclose(forward_features(m, img, AttentionMode::csa_dual()).features.feats,
                   want_dual, 1e-5));

    const Tensor want_id = hand_forward(m, img, [&](const Tensor& t, const AttentionWeights&) {
        return identity_scores(t.extent(0) - 1);
    });
    CHECK(allclose(forward_features(m, img, AttentionMode::identity()).features.feats,
                   want_id, 1e-5));
}

TEST_CASE("dual decoding with equal projections is a doubled single projection") {
    VitModel m = make_random_model(tiny_config(), 7);
    m.blocks.back().attn.w_k = m.blocks.back().attn.w_q;
    const Tensor img = random_tensor({3, 12, 12}, 7, 9);
    const float tau = default_tau(m.blocks.back().attn);
    const Tensor want = hand_forward(m, img, [&](const Tensor& t, const AttentionWeights& w) {
        return scale(csa_scores(t, w.w_q, w.head_count, tau), 2.0f);
    });
    const Tensor got =
        forward_features(m, img, AttentionMode::csa_single(CsaProjection::UseQ)).features.feats;
    // single-projection decoding halves the scores, so it cannot match;
    // the dual mode must
    CHECK(!allclose(got, want, 1e-3));
    CHECK(allclose(forward_features(m, img, AttentionMode::csa_dual()).features.feats, want, 1e-5));
}

TEST_CASE("identity decoding keeps patch features tied to their own patch") {
    VitConfig cfg = tiny_config();
    cfg.depth = 1;
    cfg.pretrain_grid_h = 2;
    cfg.pretrain_grid_w = 2;
    VitModel m = make_random_model(cfg, 8);
    // flatten the position signal so tokens are interchangeable
    for (int64_t i = 1; i < m.pos_embed.extent(0); ++i)
        for (int64_t j = 0; j < m.pos_embed.extent(1); ++j) m.pos_embed(i, j) = m.pos_embed(1, j);

    // four constant-color patches, then the same patches rotated one slot
    auto paint = [&](const std::vector<int>& order) {
        Tensor img({3, 8, 8});
        for (int64_t k = 0; k < 4; ++k) {
            const int64_t py = (k / 2) * 4, px = (k % 2) * 4;
            for (int64_t c = 0; c < 3; ++c)
                for (int64_t y = 0; y < 4; ++y)
                    for (int64_t x = 0; x < 4; ++x)
                        img(c, py + y, px + x) = float(order[size_t(k)]) * 0.3f + float(c) * 0.1f;
        }
        return img;
    };
    const std::vector<int> base{0, 1, 2, 3}, rotated{1, 2, 3, 0};
    const Tensor fa = forward_features(m, paint(base), AttentionMode::identity()).features.feats;
    const Tensor fb = forward_features(m, paint(rotated), AttentionMode::identity()).features.feats;
    for (int64_t i = 0; i < 4; ++i) {
        const int64_t src = int64_t(rotated[size_t(i)]);
        for (int64_t j = 0; j < fa.extent(1); ++j) CHECK(fb(i, j) == fa(src, j));
    }
}

TEST_CASE("captured attention is row-stochastic and matches the forward pass") {
    const VitModel m = make_random_model(tiny_config(), 9);
    const Tensor img = random_tensor({3, 12, 12}, 9, 9);
    const Tensor last = capture_attention(m, img, m.config.depth);
    for (int64_t h = 0; h < last.extent(0); ++h)
        for (int64_t i = 0; i < last.extent(1); ++i) {
            double sum = 0.0;
            for (int64_t j = 0; j < last.extent(2); ++j) sum += double(last(h, i, j));
            CHECK(std::fabs(sum - 1.0) < 1e-6);
        }
    const ForwardResult fwd = forward_features(m, img, AttentionMode::vanilla(), true);
    CHECK(bitequal(fwd.layer_attention[size_t(m.config.depth - 1)], last));
}

TEST_CASE("capture_attention rejects out-of-range layers") {
    const VitModel m = make_random_model(tiny_config(), 10);
    const Tensor img = random_tensor({3, 12, 12}, 10, 9);
    CHECK_THROWS_AS(capture_attention(m, img, 0), ConfigError);
    CHECK_THROWS_AS(capture_attention(m, img, m.config.depth + 1), ConfigError);
}

TEST_CASE("borrowed attention reuses the named earlier layer") {
    const VitModel m = make_random_model(tiny_config(), 11);
    const Tensor img = random_tensor({3, 12, 12}, 11, 9);
    const ForwardResult fwd = forward_features(m, img, AttentionMode::early_borrow(1), true);
    CHECK(bitequal(fwd.layer_attention[1], fwd.layer_attention[0]));
    CHECK(bitequal(fwd.layer_attention[0], capture_attention(m, img, 1)));

    // without capture, only the borrowed layer's map is retained
    const ForwardResult lean = forward_features(m, img, AttentionMode::early_borrow(1));
    CHECK(!lean.layer_attention[0].empty());
    CHECK(lean.layer_attention[1].empty());
}

TEST_CASE("borrowing from the decoding layer or later is rejected") {
    const VitModel m = make_random_model(tiny_config(), 12);
    const Tensor img = random_tensor({3, 12, 12}, 12, 9);
    CHECK_THROWS_AS(forward_features(m, img, AttentionMode::early_borrow(m.config.depth)),
                    ConfigError);
}

TEST_CASE("an optional entry norm is applied between positions and blocks") {
    VitModel m = make_random_model(tiny_config(), 14);
    const Tensor img = random_tensor({3, 12, 12}, 14, 9);
    const Tensor plain = forward_features(m, img, AttentionMode::csa_dual()).features.feats;

    m.has_pre_norm = true;
    m.pre_norm.gain = random_tensor({16}, 14, 1);
    m.pre_norm.bias = random_tensor({16}, 14, 2);
    const Tensor normed = forward_features(m, img, AttentionMode::csa_dual()).features.feats;
    CHECK(!allclose(plain, normed, 1e-3));

    // the hand pipeline with the extra norm spliced in must match
    const int64_t p = 4, d = 16, l = 9;
    const Tensor patches = patchify(img, p);
    Tensor x({l + 1, d});
    const Tensor embedded = add_row_bias(matmul_bt(patches, m.patch_proj_w), m.patch_proj_b);
    for (int64_t j = 0; j < d; ++j) x(0, j) = m.cls_token(j);
    for (int64_t i = 0; i < l; ++i)
        for (int64_t j = 0; j < d; ++j) x(1 + i, j) = embedded(i, j);
    x = add(x, interpolate_pos_embed(m.pos_embed, 3, 3, 3, 3));
    x = layer_norm(x, m.pre_norm.gain, m.pre_norm.bias);
    for (size_t li = 0; li < m.blocks.size(); ++li) {
        const BlockWeights& blk = m.blocks[li];
        const Tensor t = layer_norm(x, blk.norm1.gain, blk.norm1.bias);
        const Tensor scores = li + 1 == m.blocks.size()
                                  ? csa_dual_scores(t, blk.attn, default_tau(blk.attn))
                                  : vanilla_scores(t, blk.attn);
        x = add(x, aggregate(t, scores, blk.attn));
        const Tensor t2 = layer_norm(x, blk.norm2.gain, blk.norm2.bias);
        const Tensor hidden = gelu(add_row_bias(matmul_bt(t2, blk.mlp_in_w), blk.mlp_in_b));
        x = add(x, add_row_bias(matmul_bt(hidden, blk.mlp_out_w), blk.mlp_out_b));
    }
    x = layer_norm(x, m.final_norm.gain, m.final_norm.bias);
    Tensor patch_tokens({l, d});
    for (int64_t i = 0; i < l; ++i)
        for (int64_t j = 0; j < d; ++j) patch_tokens(i, j) = x(1 + i, j);
    CHECK(allclose(normed, matmul(patch_tokens, m.visual_proj), 1e-5));

    // size checks still apply to the optional tensors
    m.pre_norm.gain = Tensor({4});
    CHECK_THROWS_AS(m.validate(), ModelError);
}

TEST_CASE("model validation names the offending tensor") {
    VitModel m = make_random_model(tiny_config(), 13);
    m.pos_embed = Tensor({3, 16});
    try {
        m.validate();
        FAIL("expected ModelError");
    } catch (const ModelError& e) {
        CHECK(std::string(e.what()).find("pos_embed") != std::string::npos);
    }
}

TEST_CASE("config validation enforces divisibility and bounds") {
    VitConfig bad = tiny_config();
    bad.head_count = 3;
    CHECK_THROWS_AS(bad.validate(), ModelError);
    bad = tiny_config();
    bad.mlp_ratio = 0.0f;
    CHECK_THROWS_AS(bad.validate(), ModelError);
    bad = tiny_config();
    bad.depth = 0;
    CHECK_THROWS_AS(bad.validate(), ModelError);
}
