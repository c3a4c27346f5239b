#include "csaseg/classifier.hpp"

#include "test_helpers.hpp"

#include <doctest.h>

#include <cmath>
#include <string>
#include <vector>

using namespace csaseg;
using testutil::random_tensor;

static ClassEmbeddingSet make_set(int64_t c, int64_t d, uint64_t seed) {
    std::vector<std::string> names;
    for (int64_t i = 0; i < c; ++i) names.push_back("class-" + std::to_string(i));
    return ClassEmbeddingSet::make(names, random_tensor({c, d}, seed, 0));
}

static DenseFeatures wrap(Tensor feats, int64_t rows, int64_t cols) {
    DenseFeatures f;
    f.grid_rows = rows;
    f.grid_cols = cols;
    f.feats = std::move(feats);
    return f;
}

TEST_CASE("class set construction validates its inputs") {
    CHECK_THROWS_AS(ClassEmbeddingSet::make({"solo"}, Tensor({1, 4})), ModelError);
    CHECK_THROWS_AS(ClassEmbeddingSet::make({"a", "a"}, random_tensor({2, 4}, 1, 0)), ModelError);
    CHECK_THROWS_AS(ClassEmbeddingSet::make({"a", ""}, random_tensor({2, 4}, 1, 0)), ModelError);
    CHECK_THROWS_AS(ClassEmbeddingSet::make({"a", "b", "c"}, random_tensor({2, 4}, 1, 0)),
                    ModelError);

    Tensor with_zero = random_tensor({2, 4}, 2, 0);
    for (int64_t j = 0; j < 4; ++j) with_zero(1, j) = 0.0f;
    CHECK_THROWS_AS(ClassEmbeddingSet::make({"a", "b"}, with_zero), ModelError);

    std::vector<std::string> too_many;
    for (int i = 0; i < 256; ++i) too_many.push_back("c" + std::to_string(i));
    CHECK_THROWS_AS(ClassEmbeddingSet::make(too_many, random_tensor({256, 4}, 3, 0)), ModelError);
}

TEST_CASE("class embeddings are unit-normalized on construction") {
    const ClassEmbeddingSet s = make_set(4, 6, 4);
    for (int64_t i = 0; i < 4; ++i) {
        double sq = 0.0;
        for (int64_t j = 0; j < 6; ++j) sq += double(s.embeds(i, j)) * double(s.embeds(i, j));
        CHECK(std::fabs(std::sqrt(sq) - 1.0) < 1e-6);
    }
}

TEST_CASE("a leading class named background sets the flag") {
    const ClassEmbeddingSet a =
        ClassEmbeddingSet::make({"background", "cat"}, random_tensor({2, 4}, 5, 0));
    CHECK(a.has_background);
    const ClassEmbeddingSet b =
        ClassEmbeddingSet::make({"cat", "background"}, random_tensor({2, 4}, 5, 0));
    CHECK(!b.has_background);
}

TEST_CASE("a feature equal to a class embedding scores cosine one there") {
    const ClassEmbeddingSet s = make_set(6, 8, 6);
    Tensor feats({1, 8});
    for (int64_t j = 0; j < 8; ++j) feats(0, j) = s.embeds(3, j);
    const DenseLogits out = classify_dense(wrap(std::move(feats), 1, 1), s);
    CHECK(out.logits(0, 3) == doctest::Approx(1.0).epsilon(1e-6));
    const Tensor mask = argmax_mask(out);
    CHECK(mask(0, 0) == 3.0f);
}

TEST_CASE("orthogonal features score cosine zero") {
    Tensor embeds({2, 4});
    embeds(0, 0) = 2.0f;
    embeds(1, 1) = 5.0f;
    const ClassEmbeddingSet s = ClassEmbeddingSet::make({"x-axis", "y-axis"}, embeds);
    Tensor feats({1, 4});
    feats(0, 2) = 7.0f;
    const DenseLogits out = classify_dense(wrap(std::move(feats), 1, 1), s);
    CHECK(std::fabs(out.logits(0, 0)) < 1e-6f);
    CHECK(std::fabs(out.logits(0, 1)) < 1e-6f);
}

TEST_CASE("dense logits match a per-pair cosine oracle") {
    const ClassEmbeddingSet s = make_set(3, 5, 7);
    const Tensor feats = random_tensor({2, 5}, 7, 1);
    const DenseLogits out = classify_dense(wrap(feats, 1, 2), s);
    CHECK(out.grid_rows == 1);
    CHECK(out.grid_cols == 2);
    for (int64_t i = 0; i < 2; ++i) {
        double norm = 0.0;
        for (int64_t j = 0; j < 5; ++j) norm += double(feats(i, j)) * double(feats(i, j));
        norm = std::sqrt(norm);
        for (int64_t c = 0; c < 3; ++c) {
            double dot = 0.0;
            for (int64_t j = 0; j < 5; ++j) dot += double(feats(i, j)) / norm * double(s.embeds(c, j));
            CHECK(double(out.logits(i, c)) == doctest::Approx(dot).epsilon(1e-6));
        }
    }
}

TEST_CASE("scaling a feature does not change its cosine scores") {
    const ClassEmbeddingSet s = make_set(4, 6, 8);
    const Tensor feats = random_tensor({3, 6}, 8, 1);
    Tensor scaled = feats;
    for (int64_t i = 0; i < scaled.numel(); ++i) scaled.data()[i] *= 3.7f;
    const DenseLogits a = classify_dense(wrap(feats, 1, 3), s);
    const DenseLogits b = classify_dense(wrap(std::move(scaled), 1, 3), s);
    for (int64_t i = 0; i < a.logits.numel(); ++i)
        CHECK(double(a.logits.data()[i]) ==
              doctest::Approx(double(b.logits.data()[i])).epsilon(1e-6));
}

TEST_CASE("permuting the class list permutes logit columns and mask labels") {
    const int64_t c = 4, d = 6, n = 5;
    const Tensor embeds = random_tensor({c, d}, 9, 0);
    const Tensor feats = random_tensor({n, d}, 9, 1);
    std::vector<std::string> names{"a", "b", "cc", "dd"};
    const ClassEmbeddingSet orig = ClassEmbeddingSet::make(names, embeds);

    const std::vector<int64_t> perm{2, 0, 3, 1};   // new index -> old index
    Tensor pembeds({c, d});
    std::vector<std::string> pnames(static_cast<size_t>(c));
    for (int64_t i = 0; i < c; ++i) {
        pnames[size_t(i)] = names[size_t(perm[size_t(i)])];
        for (int64_t j = 0; j < d; ++j) pembeds(i, j) = embeds(perm[size_t(i)], j);
    }
    const ClassEmbeddingSet shuffled = ClassEmbeddingSet::make(pnames, pembeds);

    const DenseLogits lo = classify_dense(wrap(feats, 1, n), orig);
    const DenseLogits lp = classify_dense(wrap(feats, 1, n), shuffled);
    for (int64_t i = 0; i < n; ++i)
        for (int64_t k = 0; k < c; ++k) CHECK(lp.logits(i, k) == lo.logits(i, perm[size_t(k)]));

    const Tensor mo = argmax_mask(lo);
    const Tensor mp = argmax_mask(lp);
    std::vector<int64_t> inverse(static_cast<size_t>(c));
    for (int64_t i = 0; i < c; ++i) inverse[size_t(perm[size_t(i)])] = i;
    for (int64_t i = 0; i < n; ++i)
        CHECK(int64_t(mp(0, i)) == inverse[size_t(int64_t(mo(0, i)))]);
}

TEST_CASE("classification rejects malformed features") {
    const ClassEmbeddingSet s = make_set(3, 5, 10);
    CHECK_THROWS_AS(classify_dense(wrap(random_tensor({4, 6}, 10, 1), 2, 2), s), ShapeError);
    CHECK_THROWS_AS(classify_dense(wrap(random_tensor({4, 5}, 10, 1), 2, 3), s), ShapeError);
    Tensor feats = random_tensor({4, 5}, 10, 2);
    for (int64_t j = 0; j < 5; ++j) feats(2, j) = 0.0f;
    CHECK_THROWS_AS(classify_dense(wrap(std::move(feats), 2, 2), s), DegenerateInputError);
}

TEST_CASE("argmax mask picks the dominant class everywhere") {
    DenseLogits l;
    l.grid_rows = 2;
    l.grid_cols = 3;
    l.logits = Tensor({6, 4});
    for (int64_t i = 0; i < 6; ++i) l.logits(i, 2) = 0.9f;
    const Tensor mask = argmax_mask(l);
    CHECK(mask.shape() == std::vector<int64_t>{2, 3});
    for (int64_t y = 0; y < 2; ++y)
        for (int64_t x = 0; x < 3; ++x) CHECK(mask(y, x) == 2.0f);
}

TEST_CASE("argmax ties resolve to the lowest class index") {
    DenseLogits l;
    l.grid_rows = 1;
    l.grid_cols = 1;
    l.logits = Tensor({1, 3});
    l.logits(0, 1) = 0.5f;
    l.logits(0, 2) = 0.5f;
    CHECK(argmax_mask(l)(0, 0) == 1.0f);
}

TEST_CASE("argmax matches a linear scan and ignores monotone rescaling") {
    DenseLogits l;
    l.grid_rows = 3;
    l.grid_cols = 4;
    l.logits = random_tensor({12, 5}, 11, 0);
    const Tensor mask = argmax_mask(l);
    for (int64_t i = 0; i < 12; ++i) {
        int64_t best = 0;
        for (int64_t c = 1; c < 5; ++c)
            if (l.logits(i, c) > l.logits(i, best)) best = c;
        CHECK(int64_t(mask(i / 4, i % 4)) == best);
    }
    DenseLogits warped = l;
    for (int64_t i = 0; i < warped.logits.numel(); ++i)
        warped.logits.data()[i] = warped.logits.data()[i] * 2.0f + 1.0f;
    CHECK(testutil::bitequal(argmax_mask(warped), mask));
}
