#pragma once

#include "csaseg/tensor.hpp"

#include <cstdint>

namespace csaseg {

// Projection matrices of one attention block, math convention: q = x * w_q + b_q.
struct AttentionWeights {
    Tensor w_q, w_k, w_v, w_o;   // each [d x d]
    Tensor b_q, b_k, b_v, b_o;   // each [d]
    int64_t head_count = 1;

    int64_t dim() const { return w_q.empty() ? 0 : w_q.extent(0); }
    int64_t head_dim() const { return dim() / head_count; }
    void validate() const;
};

enum class CsaProjection { UseQ, UseK, Identity, Custom };

// Which score rule the decoding layer runs. Everything except the weights
// themselves: correlative single/dual projections, plain softmax attention,
// the degenerate identity map, spatially masked windows, temperature
// overrides, averaged random projections, or scores borrowed from an
// earlier layer of the same forward pass.
struct AttentionMode {
    enum class Kind {
        Vanilla,
        CsaSingle,
        CsaDual,
        Identity,
        LocalWindow,
        Sharpened,
        RandomEnsemble,
        EarlyBorrow,
    };

    Kind kind = Kind::CsaDual;
    CsaProjection projection = CsaProjection::UseQ;  // CsaSingle only
    Tensor custom_projection;                        // CsaSingle + Custom only
    int64_t window_size = 3;                         // LocalWindow; odd, >= 1
    float tau = 0.0f;                                // Sharpened; 0 selects exact hard max
    int64_t ensemble_count = 1;                      // RandomEnsemble; >= 1
    uint64_t ensemble_seed = 0;
    int64_t borrow_layer = 1;                        // EarlyBorrow; 1-based, < decoding layer

    static AttentionMode vanilla();
    static AttentionMode csa_single(CsaProjection p);
    static AttentionMode csa_custom(Tensor w_r);
    static AttentionMode csa_dual();
    static AttentionMode identity();
    static AttentionMode local_window(int64_t size);
    static AttentionMode sharpened(float tau);
    static AttentionMode random_ensemble(int64_t count, uint64_t seed);
    static AttentionMode early_borrow(int64_t layer);

    // structural checks that do not need a model (window odd, counts positive, ...)
    void validate() const;
};

struct PatchGrid {
    int64_t rows = 0;
    int64_t cols = 0;
};

// default temperature used by every mode unless overridden
float default_tau(const AttentionWeights& w);

// Scores are post-softmax attention matrices, one [t x t] slice per head,
// where t = patch count + 1 and row/column 0 is the class token.

// softmax(q * k^T / tau) per head, q/k projected with bias
Tensor vanilla_scores(const Tensor& x, const AttentionWeights& w);

// pre-softmax vanilla logits at an explicit temperature
Tensor vanilla_logits(const Tensor& x, const AttentionWeights& w, float tau);

// correlative scores: softmax(r * r^T / tau) per head for r = x * w_r.
// The shared projection makes the pre-softmax matrix symmetric, which is
// what keeps high weights on spatially consistent token pairs.
Tensor csa_scores(const Tensor& x, const Tensor& w_r, int64_t head_count, float tau);
Tensor csa_logits(const Tensor& x, const Tensor& w_r, int64_t head_count, float tau);

// sum of the two single-projection score matrices built from w_q and w_k;
// rows sum to 2 by design, the sum is not renormalized
Tensor csa_dual_scores(const Tensor& x, const AttentionWeights& w, float tau);

// exact identity matrix over patch_count patches plus the class token
Tensor identity_scores(int64_t patch_count);

// Vanilla logits with everything outside each patch's size x size spatial
// neighborhood pushed to -1e9 before the softmax. The class-token row is
// left unmasked (it has no spatial position); patch rows attend only inside
// their window, so size 1 collapses to identity_scores on patch rows.
Tensor local_window_scores(const Tensor& x, const AttentionWeights& w, int64_t size,
                           PatchGrid grid, float tau);

// vanilla attention at an arbitrary temperature; tau == 0 returns the exact
// per-row argmax one-hot limit (ties to the lowest column index)
Tensor sharpened_scores(const Tensor& x, const AttentionWeights& w, float tau);

// mean of count correlative score matrices whose projections are drawn
// i.i.d. N(0, 1/d) from the counter RNG; reproducible for a fixed seed
Tensor ensemble_scores(const Tensor& x, int64_t head_count, int64_t count,
                       uint64_t seed, float tau);

// concat_heads(scores_h * (x * w_v + b_v)_h) * w_o + b_o.
// scores may be [t x t] (shared by all heads) or [heads x t x t].
Tensor aggregate(const Tensor& x, const Tensor& scores, const AttentionWeights& w);

} // namespace csaseg
