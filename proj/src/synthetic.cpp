#include "csaseg/synthetic.hpp"

#include "csaseg/model_io.hpp"
#include "csaseg/rng.hpp"

#include <cmath>
#include <string>

namespace csaseg {

static Tensor random_tensor(std::vector<int64_t> shape, rng::Stream& s, float sd) {
    Tensor t(std::move(shape));
    for (int64_t i = 0; i < t.numel(); ++i) t.data()[i] = sd * s.next_gaussian();
    return t;
}

VitModel make_random_model(const VitConfig& config, uint64_t seed) {
    config.validate();
    rng::Stream s{seed, 0, 0};
    const int64_t d = config.dim, p = config.patch_size, hidden = config.hidden_dim();
    const float sd = 1.0f / std::sqrt(float(d));

    VitModel m;
    m.config = config;
    m.patch_proj_w = random_tensor({d, 3 * p * p}, s, sd);
    m.patch_proj_b = random_tensor({d}, s, 0.01f);
    m.cls_token = random_tensor({d}, s, 0.02f);
    m.pos_embed = random_tensor({1 + config.pretrain_grid_h * config.pretrain_grid_w, d}, s, 0.02f);
    for (int64_t i = 0; i < config.depth; ++i) {
        BlockWeights blk;
        blk.norm1.gain = add(Tensor::full({d}, 1.0f), random_tensor({d}, s, 0.02f));
        blk.norm1.bias = random_tensor({d}, s, 0.02f);
        blk.attn.w_q = random_tensor({d, d}, s, sd);
        blk.attn.b_q = random_tensor({d}, s, 0.01f);
        blk.attn.w_k = random_tensor({d, d}, s, sd);
        blk.attn.b_k = random_tensor({d}, s, 0.01f);
        blk.attn.w_v = random_tensor({d, d}, s, sd);
        blk.attn.b_v = random_tensor({d}, s, 0.01f);
        blk.attn.w_o = random_tensor({d, d}, s, sd);
        blk.attn.b_o = random_tensor({d}, s, 0.01f);
        blk.attn.head_count = config.head_count;
        blk.norm2.gain = add(Tensor::full({d}, 1.0f), random_tensor({d}, s, 0.02f));
        blk.norm2.bias = random_tensor({d}, s, 0.02f);
        blk.mlp_in_w = random_tensor({hidden, d}, s, sd);
        blk.mlp_in_b = random_tensor({hidden}, s, 0.01f);
        blk.mlp_out_w = random_tensor({d, hidden}, s, 1.0f / std::sqrt(float(hidden)));
        blk.mlp_out_b = random_tensor({d}, s, 0.01f);
        m.blocks.push_back(std::move(blk));
    }
    m.final_norm.gain = add(Tensor::full({d}, 1.0f), random_tensor({d}, s, 0.02f));
    m.final_norm.bias = random_tensor({d}, s, 0.02f);
    m.visual_proj = random_tensor({d, config.embed_dim_out}, s, sd);
    m.validate();
    return m;
}

// fixture geometry: 32x32 image, 4px patches, 8x8 grid split mid-column
static constexpr int64_t kSide = 32;
static constexpr int64_t kPatch = 4;
static constexpr int64_t kDim = 8;

// solve w . u_a = target_a, w . u_b = target_b for w in span{u_a, u_b}
static std::vector<float> projector_row(const std::vector<float>& ua, const std::vector<float>& ub,
                                        double target_a, double target_b) {
    double aa = 0, ab = 0, bb = 0;
    for (size_t i = 0; i < ua.size(); ++i) {
        aa += double(ua[i]) * double(ua[i]);
        ab += double(ua[i]) * double(ub[i]);
        bb += double(ub[i]) * double(ub[i]);
    }
    const double det = aa * bb - ab * ab;
    const double ca = (target_a * bb - target_b * ab) / det;
    const double cb = (target_b * aa - target_a * ab) / det;
    std::vector<float> row(ua.size());
    for (size_t i = 0; i < ua.size(); ++i)
        row[i] = float(ca * double(ua[i]) + cb * double(ub[i]));
    return row;
}

SegmentationFixture make_split_field_fixture() {
    SegmentationFixture fx;

    // raw P6 image: left half one color, right half another
    const uint8_t left_rgb[3] = {204, 51, 51};
    const uint8_t right_rgb[3] = {51, 51, 204};
    std::string header = "P6\n" + std::to_string(kSide) + " " + std::to_string(kSide) + "\n255\n";
    fx.image_ppm.assign(header.begin(), header.end());
    for (int64_t y = 0; y < kSide; ++y)
        for (int64_t x = 0; x < kSide; ++x) {
            const uint8_t* c = x < kSide / 2 ? left_rgb : right_rgb;
            fx.image_ppm.insert(fx.image_ppm.end(), c, c + 3);
        }

    fx.image = Tensor({3, kSide, kSide});
    for (int64_t ch = 0; ch < 3; ++ch)
        for (int64_t y = 0; y < kSide; ++y)
            for (int64_t x = 0; x < kSide; ++x) {
                const uint8_t* c = x < kSide / 2 ? left_rgb : right_rgb;
                fx.image(ch, y, x) = (float(c[ch]) / 255.0f - kImageMean[size_t(ch)]) /
                                     kImageStd[size_t(ch)];
            }

    // flattened channel-major pixel vectors of one pure-left / pure-right patch
    std::vector<float> ua, ub;
    for (int64_t ch = 0; ch < 3; ++ch)
        for (int64_t i = 0; i < kPatch * kPatch; ++i) {
            ua.push_back((float(left_rgb[ch]) / 255.0f - kImageMean[size_t(ch)]) /
                         kImageStd[size_t(ch)]);
            ub.push_back((float(right_rgb[ch]) / 255.0f - kImageMean[size_t(ch)]) /
                         kImageStd[size_t(ch)]);
        }

    VitModel m;
    m.config = VitConfig{.patch_size = kPatch, .dim = kDim, .depth = 2, .head_count = 2,
                         .mlp_ratio = 2.0f, .pretrain_grid_h = kSide / kPatch,
                         .pretrain_grid_w = kSide / kPatch, .embed_dim_out = kDim};
    const int64_t d = kDim;
    const float s = 4.0f;   // carrier magnitude, far above the cross-half correlation

    // patch embedding sends left patches to s*e0 and right patches to s*e1
    m.patch_proj_w = Tensor({d, 3 * kPatch * kPatch});
    const auto row0 = projector_row(ua, ub, double(s), 0.0);
    const auto row1 = projector_row(ua, ub, 0.0, double(s));
    for (size_t j = 0; j < row0.size(); ++j) {
        m.patch_proj_w(0, int64_t(j)) = row0[j];
        m.patch_proj_w(1, int64_t(j)) = row1[j];
    }
    m.patch_proj_b = Tensor({d});
    m.cls_token = Tensor({d});
    m.pos_embed = Tensor({1 + (kSide / kPatch) * (kSide / kPatch), d});

    auto inert_block = [&] {
        BlockWeights blk;
        blk.norm1 = {Tensor::full({d}, 1.0f), Tensor({d})};
        blk.norm2 = {Tensor::full({d}, 1.0f), Tensor({d})};
        blk.attn.w_q = Tensor({d, d});
        blk.attn.w_k = Tensor({d, d});
        blk.attn.w_v = Tensor({d, d});
        blk.attn.w_o = Tensor({d, d});
        blk.attn.b_q = Tensor({d});
        blk.attn.b_k = Tensor({d});
        blk.attn.b_v = Tensor({d});
        blk.attn.b_o = Tensor({d});
        blk.attn.head_count = m.config.head_count;
        blk.mlp_in_w = Tensor({m.config.hidden_dim(), d});
        blk.mlp_in_b = Tensor({m.config.hidden_dim()});
        blk.mlp_out_w = Tensor({d, m.config.hidden_dim()});
        blk.mlp_out_b = Tensor({d});
        return blk;
    };
    m.blocks.push_back(inert_block());   // contributes nothing, w_o and mlp_out are zero

    // decoding layer: values pass through, the output projection moves the
    // carrier coordinates 0/1 into readout coordinates 2/3
    BlockWeights decode = inert_block();
    decode.attn.w_q = Tensor::identity(d);
    decode.attn.w_k = Tensor::identity(d);
    decode.attn.w_v = Tensor::identity(d);
    decode.attn.w_o = Tensor({d, d});
    decode.attn.w_o(0, 2) = 1.0f;
    decode.attn.w_o(1, 3) = 1.0f;
    m.blocks.push_back(std::move(decode));

    // the final norm reads out only coordinates 2/3, so any signal still
    // sitting in the carriers is discarded
    m.final_norm.gain = Tensor({d});
    m.final_norm.gain(2) = 1.0f;
    m.final_norm.gain(3) = 1.0f;
    m.final_norm.bias = Tensor({d});
    m.visual_proj = Tensor::identity(d);
    m.validate();

    fx.model_csa = m;
    fx.model_uniform = m;
    fx.model_uniform.blocks[1].attn.w_q = Tensor({d, d});
    fx.model_uniform.blocks[1].attn.w_k = Tensor({d, d});

    // class prototypes are the model's own identity-attention features of one
    // patch from each half
    const ForwardResult probe = forward_features(fx.model_csa, fx.image, AttentionMode::identity());
    const int64_t cols = probe.features.grid_cols;
    Tensor embeds({2, d});
    for (int64_t j = 0; j < d; ++j) {
        embeds(0, j) = probe.features.feats(0, j);            // a left-half patch
        embeds(1, j) = probe.features.feats(cols - 1, j);     // a right-half patch
    }
    fx.classes = ClassEmbeddingSet::make({"left-field", "right-field"}, embeds);

    fx.ground_truth = PixelMask{kSide, kSide, std::vector<uint8_t>(size_t(kSide * kSide), 0)};
    for (int64_t y = 0; y < kSide; ++y)
        for (int64_t x = kSide / 2; x < kSide; ++x) fx.ground_truth.at(y, x) = 1;

    fx.slide = SlideConfig{.short_side = kSide, .window = kSide, .stride = kSide};
    return fx;
}

} // namespace csaseg
