#pragma once

#include "csaseg/attention.hpp"
#include "csaseg/tensor.hpp"

#include <cmath>
#include <vector>

namespace csaseg {

struct VitConfig {
    int64_t patch_size = 16;
    int64_t dim = 768;
    int64_t depth = 12;
    int64_t head_count = 12;
    float mlp_ratio = 4.0f;
    int64_t pretrain_grid_h = 14;   // position-embedding grid the weights were trained at
    int64_t pretrain_grid_w = 14;
    int64_t embed_dim_out = 512;    // width of the shared image/text space

    int64_t hidden_dim() const { return int64_t(std::lround(double(mlp_ratio) * double(dim))); }
    void validate() const;
};

struct LayerNormParams {
    Tensor gain, bias;   // each [d]
};

struct BlockWeights {
    LayerNormParams norm1, norm2;
    AttentionWeights attn;
    Tensor mlp_in_w;    // [hidden x d], y = x * mlp_in_w^T + mlp_in_b
    Tensor mlp_in_b;    // [hidden]
    Tensor mlp_out_w;   // [d x hidden]
    Tensor mlp_out_b;   // [d]
};

struct VitModel {
    VitConfig config;
    Tensor patch_proj_w;   // [d x 3*p*p], flattened channel-major patch pixels
    Tensor patch_proj_b;   // [d]
    Tensor cls_token;      // [d]
    Tensor pos_embed;      // [1 + gh*gw x d], row 0 is the class token slot
    // optional norm between the position embedding and the first block;
    // pretrained encoders carry it, generated test models do not
    bool has_pre_norm = false;
    LayerNormParams pre_norm;
    std::vector<BlockWeights> blocks;
    LayerNormParams final_norm;
    Tensor visual_proj;    // [d x d']

    void validate() const;
};

struct DenseFeatures {
    int64_t grid_rows = 0;
    int64_t grid_cols = 0;
    Tensor feats;   // [grid_rows*grid_cols x d'], class token already dropped
};

struct ForwardResult {
    DenseFeatures features;
    // post-softmax scores actually used at each layer, 0-based; filled for
    // every layer when capture is requested, otherwise only where needed
    std::vector<Tensor> layer_attention;
};

// splits [3 x h x w] into rows of 3*p*p pixels, patches in row-major order,
// each row laid out channel-major (all of channel 0, then 1, then 2)
Tensor patchify(const Tensor& image, int64_t patch);

// bilinear remap of the patch rows of a position embedding onto a new grid;
// the class-token row is copied through unchanged
Tensor interpolate_pos_embed(const Tensor& pos, int64_t grid_h, int64_t grid_w,
                             int64_t new_rows, int64_t new_cols);

// Full encoder: patch embedding, class token, interpolated position
// embedding, pre-norm transformer blocks. All blocks except the last run
// vanilla attention; the last (decoding) layer runs decode_mode but keeps
// its residual paths and MLP. Patch tokens pass through the final norm and
// the visual projection; the class token is dropped from the output.
ForwardResult forward_features(const VitModel& m, const Tensor& image,
                               const AttentionMode& decode_mode,
                               bool capture_attention = false);

// post-softmax vanilla scores of one layer (1-based index)
Tensor capture_attention(const VitModel& m, const Tensor& image, int64_t layer_index);

} // namespace csaseg
