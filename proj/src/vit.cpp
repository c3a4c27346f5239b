#include "csaseg/vit.hpp"

#include <cmath>
#include <string>

namespace csaseg {

void VitConfig::validate() const {
    if (patch_size < 1 || patch_size > 4096)
        throw ModelError("config: patch size must be in 1..4096");
    if (dim < 1 || dim > 65536) throw ModelError("config: dim must be in 1..65536");
    if (depth < 1 || depth > 512) throw ModelError("config: depth must be in 1..512");
    if (head_count < 1 || dim % head_count != 0)
        throw ModelError("config: head count " + std::to_string(head_count) +
                         " must divide dim " + std::to_string(dim));
    if (!std::isfinite(mlp_ratio) || !(mlp_ratio > 0.0f) || mlp_ratio > 64.0f)
        throw ModelError("config: mlp ratio must be in (0, 64]");
    if (pretrain_grid_h < 1 || pretrain_grid_h > 4096 || pretrain_grid_w < 1 ||
        pretrain_grid_w > 4096)
        throw ModelError("config: pretrain grid must be in 1..4096 per axis");
    if (embed_dim_out < 1 || embed_dim_out > 65536)
        throw ModelError("config: output embed dim must be in 1..65536");
}

static void expect(const Tensor& t, std::vector<int64_t> shape, const std::string& name) {
    if (t.shape() != shape) {
        std::string want = "[";
        for (size_t i = 0; i < shape.size(); ++i)
            want += (i ? ", " : "") + std::to_string(shape[i]);
        throw ModelError("model tensor '" + name + "' has wrong shape, expected " + want + "]");
    }
}

void VitModel::validate() const {
    config.validate();
    const int64_t d = config.dim, p = config.patch_size, hidden = config.hidden_dim();
    expect(patch_proj_w, {d, 3 * p * p}, "patch_proj.weight");
    expect(patch_proj_b, {d}, "patch_proj.bias");
    expect(cls_token, {d}, "cls_token");
    expect(pos_embed, {1 + config.pretrain_grid_h * config.pretrain_grid_w, d}, "pos_embed");
    if (has_pre_norm) {
        expect(pre_norm.gain, {d}, "pre_norm.gain");
        expect(pre_norm.bias, {d}, "pre_norm.bias");
    }
    if (int64_t(blocks.size()) != config.depth)
        throw ModelError("model has " + std::to_string(blocks.size()) + " blocks, config says " +
                         std::to_string(config.depth));
    for (size_t i = 0; i < blocks.size(); ++i) {
        const std::string b = "blocks." + std::to_string(i) + ".";
        const BlockWeights& blk = blocks[i];
        expect(blk.norm1.gain, {d}, b + "norm1.gain");
        expect(blk.norm1.bias, {d}, b + "norm1.bias");
        expect(blk.norm2.gain, {d}, b + "norm2.gain");
        expect(blk.norm2.bias, {d}, b + "norm2.bias");
        if (blk.attn.head_count != config.head_count)
            throw ModelError(b + "attn head count mismatch");
        try {
            blk.attn.validate();
        } catch (const ShapeError& e) {
            throw ModelError(b + "attn: " + e.what());
        }
        expect(blk.mlp_in_w, {hidden, d}, b + "mlp_in.weight");
        expect(blk.mlp_in_b, {hidden}, b + "mlp_in.bias");
        expect(blk.mlp_out_w, {d, hidden}, b + "mlp_out.weight");
        expect(blk.mlp_out_b, {d}, b + "mlp_out.bias");
    }
    expect(final_norm.gain, {d}, "final_norm.gain");
    expect(final_norm.bias, {d}, "final_norm.bias");
    if (visual_proj.rank() != 2 || visual_proj.extent(0) != d ||
        visual_proj.extent(1) != config.embed_dim_out)
        throw ModelError("model tensor 'visual_proj' has wrong shape");
}

Tensor patchify(const Tensor& image, int64_t patch) {
    if (image.rank() != 3 || image.extent(0) != 3)
        throw ShapeError("patchify: expected [3, h, w] image");
    if (patch < 1) throw ShapeError("patchify: patch size must be >= 1");
    const int64_t h = image.extent(1), w = image.extent(2);
    if (h % patch != 0 || w % patch != 0)
        throw ShapeError("patchify: image " + std::to_string(h) + "x" + std::to_string(w) +
                         " not divisible by patch size " + std::to_string(patch));
    const int64_t rows = h / patch, cols = w / patch;
    Tensor out({rows * cols, 3 * patch * patch});
    for (int64_t r = 0; r < rows; ++r)
        for (int64_t c = 0; c < cols; ++c) {
            float* dst = out.data() + (r * cols + c) * 3 * patch * patch;
            for (int64_t ch = 0; ch < 3; ++ch)
                for (int64_t dy = 0; dy < patch; ++dy)
                    for (int64_t dx = 0; dx < patch; ++dx)
                        *dst++ = image(ch, r * patch + dy, c * patch + dx);
        }
    return out;
}

Tensor interpolate_pos_embed(const Tensor& pos, int64_t grid_h, int64_t grid_w,
                             int64_t new_rows, int64_t new_cols) {
    if (pos.rank() != 2 || pos.extent(0) != 1 + grid_h * grid_w)
        throw ShapeError("pos embed rows must be 1 + " + std::to_string(grid_h) + "*" +
                         std::to_string(grid_w));
    if (new_rows < 1 || new_cols < 1)
        throw ShapeError("pos embed target grid must be positive");
    const int64_t d = pos.extent(1);
    if (grid_h == new_rows && grid_w == new_cols) return pos;

    // treat each embedding coordinate as a channel and resample the grid
    Tensor grid({d, grid_h, grid_w});
    for (int64_t i = 0; i < grid_h * grid_w; ++i)
        for (int64_t j = 0; j < d; ++j) grid(j, i / grid_w, i % grid_w) = pos(1 + i, j);
    const Tensor resized = bilinear_resize(grid, new_rows, new_cols);

    Tensor out({1 + new_rows * new_cols, d});
    for (int64_t j = 0; j < d; ++j) out(0, j) = pos(0, j);
    for (int64_t i = 0; i < new_rows * new_cols; ++i)
        for (int64_t j = 0; j < d; ++j)
            out(1 + i, j) = resized(j, i / new_cols, i % new_cols);
    return out;
}

// scores for the decoding layer, dispatched on the mode
static Tensor decode_scores(const Tensor& t, const AttentionWeights& attn,
                            const AttentionMode& mode, PatchGrid grid,
                            const std::vector<Tensor>& captured) {
    const float tau = default_tau(attn);
    switch (mode.kind) {
    case AttentionMode::Kind::Vanilla:
        return vanilla_scores(t, attn);
    case AttentionMode::Kind::CsaSingle:
        switch (mode.projection) {
        case CsaProjection::UseQ: return csa_scores(t, attn.w_q, attn.head_count, tau);
        case CsaProjection::UseK: return csa_scores(t, attn.w_k, attn.head_count, tau);
        case CsaProjection::Identity:
            return csa_scores(t, Tensor::identity(attn.dim()), attn.head_count, tau);
        case CsaProjection::Custom:
            return csa_scores(t, mode.custom_projection, attn.head_count, tau);
        }
        break;
    case AttentionMode::Kind::CsaDual:
        return csa_dual_scores(t, attn, tau);
    case AttentionMode::Kind::Identity:
        return identity_scores(t.extent(0) - 1);
    case AttentionMode::Kind::LocalWindow:
        return local_window_scores(t, attn, mode.window_size, grid, tau);
    case AttentionMode::Kind::Sharpened:
        return sharpened_scores(t, attn, mode.tau);
    case AttentionMode::Kind::RandomEnsemble:
        return ensemble_scores(t, attn.head_count, mode.ensemble_count, mode.ensemble_seed, tau);
    case AttentionMode::Kind::EarlyBorrow:
        return captured[size_t(mode.borrow_layer - 1)];
    }
    throw ConfigError("unknown attention mode");
}

ForwardResult forward_features(const VitModel& m, const Tensor& image,
                               const AttentionMode& decode_mode, bool capture) {
    m.validate();
    decode_mode.validate();
    const int64_t p = m.config.patch_size, d = m.config.dim, depth = m.config.depth;
    if (decode_mode.kind == AttentionMode::Kind::EarlyBorrow &&
        decode_mode.borrow_layer >= depth)
        throw ConfigError("borrow layer " + std::to_string(decode_mode.borrow_layer) +
                          " must precede the decoding layer " + std::to_string(depth));

    const Tensor patches = patchify(image, p);
    const PatchGrid grid{image.extent(1) / p, image.extent(2) / p};
    const int64_t l = grid.rows * grid.cols;

    Tensor x({l + 1, d});
    {
        const Tensor embedded = add_row_bias(matmul_bt(patches, m.patch_proj_w), m.patch_proj_b);
        for (int64_t j = 0; j < d; ++j) x(0, j) = m.cls_token(j);
        for (int64_t i = 0; i < l; ++i)
            for (int64_t j = 0; j < d; ++j) x(1 + i, j) = embedded(i, j);
    }
    x = add(x, interpolate_pos_embed(m.pos_embed, m.config.pretrain_grid_h,
                                     m.config.pretrain_grid_w, grid.rows, grid.cols));
    if (m.has_pre_norm) x = layer_norm(x, m.pre_norm.gain, m.pre_norm.bias);

    const bool borrowing = decode_mode.kind == AttentionMode::Kind::EarlyBorrow;
    ForwardResult result;
    result.layer_attention.resize(size_t(depth));

    for (int64_t li = 0; li < depth; ++li) {
        const BlockWeights& blk = m.blocks[size_t(li)];
        const bool is_decode = li == depth - 1;
        const Tensor t = layer_norm(x, blk.norm1.gain, blk.norm1.bias);
        Tensor scores = is_decode
                            ? decode_scores(t, blk.attn, decode_mode, grid, result.layer_attention)
                            : vanilla_scores(t, blk.attn);
        x = add(x, aggregate(t, scores, blk.attn));
        if (capture || (borrowing && li + 1 == decode_mode.borrow_layer))
            result.layer_attention[size_t(li)] = std::move(scores);
        else
            result.layer_attention[size_t(li)] = Tensor();

        const Tensor t2 = layer_norm(x, blk.norm2.gain, blk.norm2.bias);
        const Tensor hidden = gelu(add_row_bias(matmul_bt(t2, blk.mlp_in_w), blk.mlp_in_b));
        x = add(x, add_row_bias(matmul_bt(hidden, blk.mlp_out_w), blk.mlp_out_b));
    }

    x = layer_norm(x, m.final_norm.gain, m.final_norm.bias);
    Tensor patch_tokens({l, d});
    for (int64_t i = 0; i < l; ++i)
        for (int64_t j = 0; j < d; ++j) patch_tokens(i, j) = x(1 + i, j);

    result.features = DenseFeatures{grid.rows, grid.cols, matmul(patch_tokens, m.visual_proj)};
    if (!capture) {
        // keep only what the caller can interpret: the borrowed layer's map
        for (int64_t li = 0; li < depth; ++li)
            if (!(borrowing && li + 1 == decode_mode.borrow_layer))
                result.layer_attention[size_t(li)] = Tensor();
    }
    return result;
}

Tensor capture_attention(const VitModel& m, const Tensor& image, int64_t layer_index) {
    if (layer_index < 1 || layer_index > m.config.depth)
        throw ConfigError("layer index " + std::to_string(layer_index) + " out of range 1.." +
                          std::to_string(m.config.depth));
    ForwardResult r = forward_features(m, image, AttentionMode::vanilla(), true);
    return r.layer_attention[size_t(layer_index - 1)];
}

} // namespace csaseg
