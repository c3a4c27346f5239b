#include "csaseg/classifier.hpp"

#include <set>

namespace csaseg {

ClassEmbeddingSet ClassEmbeddingSet::make(std::vector<std::string> names, Tensor embeds) {
    if (names.size() < 2)
        throw ModelError("class set needs at least 2 classes, got " + std::to_string(names.size()));
    if (names.size() > 255)
        throw ModelError("class set exceeds 255 classes, masks are 8-bit");
    if (embeds.rank() != 2 || embeds.extent(0) != int64_t(names.size()))
        throw ModelError("class embeddings must have one row per class name");
    std::set<std::string> seen;
    for (const auto& n : names) {
        if (n.empty()) throw ModelError("class names must be non-empty");
        if (!seen.insert(n).second) throw ModelError("duplicate class name '" + n + "'");
    }
    ClassEmbeddingSet set;
    set.has_background = names.front() == "background";
    set.names = std::move(names);
    try {
        set.embeds = l2_normalize_rows(embeds);
    } catch (const DegenerateInputError&) {
        throw ModelError("class embeddings contain a zero row");
    }
    return set;
}

DenseLogits classify_dense(const DenseFeatures& feats, const ClassEmbeddingSet& classes) {
    if (feats.feats.rank() != 2 ||
        feats.feats.extent(0) != feats.grid_rows * feats.grid_cols)
        throw ShapeError("dense features do not match their grid");
    if (feats.feats.extent(1) != classes.embeds.extent(1))
        throw ShapeError("feature width " + std::to_string(feats.feats.extent(1)) +
                         " does not match class embedding width " +
                         std::to_string(classes.embeds.extent(1)));
    const Tensor normalized = l2_normalize_rows(feats.feats);
    return DenseLogits{feats.grid_rows, feats.grid_cols, matmul_bt(normalized, classes.embeds)};
}

Tensor argmax_mask(const DenseLogits& logits) {
    const int64_t l = logits.grid_rows * logits.grid_cols;
    const int64_t c = logits.logits.extent(1);
    if (logits.logits.extent(0) != l)
        throw ShapeError("dense logits do not match their grid");
    Tensor out({logits.grid_rows, logits.grid_cols});
    for (int64_t i = 0; i < l; ++i) {
        int64_t best = 0;
        for (int64_t j = 1; j < c; ++j)
            if (logits.logits(i, j) > logits.logits(i, best)) best = j;
        out.data()[i] = float(best);
    }
    return out;
}

} // namespace csaseg
