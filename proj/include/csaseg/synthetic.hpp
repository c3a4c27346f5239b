#pragma once

#include "csaseg/classifier.hpp"
#include "csaseg/mask.hpp"
#include "csaseg/slide.hpp"
#include "csaseg/vit.hpp"

#include <cstdint>

namespace csaseg {

// small random but well-conditioned model for tests and the selftest command
VitModel make_random_model(const VitConfig& config, uint64_t seed);

// Deterministic two-class scene engineered so correctness is decidable by
// eye: the image is split into a left and a right half of constant color,
// the model maps each half onto its own embedding axis, and the class set
// holds exactly those two prototypes. model_csa carries usable projection
// matrices; model_uniform zeroes w_q/w_k so plain softmax attention mixes
// globally and wipes out the split. Ground truth is the half/half mask.
struct SegmentationFixture {
    VitModel model_csa;
    VitModel model_uniform;
    ClassEmbeddingSet classes;
    Tensor image;                     // normalized [3 x h x w]
    std::vector<uint8_t> image_ppm;   // same image as raw P6 bytes
    PixelMask ground_truth;
    SlideConfig slide;
};

SegmentationFixture make_split_field_fixture();

} // namespace csaseg
