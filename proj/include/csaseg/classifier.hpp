#pragma once

#include "csaseg/tensor.hpp"
#include "csaseg/vit.hpp"

#include <string>
#include <vector>

namespace csaseg {

// Text-side class prototypes in the shared embedding space. Rows are
// re-normalized to unit length on construction. A class literally named
// "background" at index 0 is flagged but scored like any other class.
struct ClassEmbeddingSet {
    std::vector<std::string> names;
    Tensor embeds;   // [c x d'], unit rows
    bool has_background = false;

    int64_t count() const { return int64_t(names.size()); }

    static ClassEmbeddingSet make(std::vector<std::string> names, Tensor embeds);
};

struct DenseLogits {
    int64_t grid_rows = 0;
    int64_t grid_cols = 0;
    Tensor logits;   // [grid_rows*grid_cols x c], cosine similarities in [-1, 1]
};

// cosine similarity of every patch feature against every class embedding
DenseLogits classify_dense(const DenseFeatures& feats, const ClassEmbeddingSet& classes);

// per-patch argmax, ties resolved to the lowest class index
Tensor argmax_mask(const DenseLogits& logits);

} // namespace csaseg
