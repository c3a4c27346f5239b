#pragma once

#include "csaseg/mask.hpp"

#include <cstdint>
#include <vector>

namespace csaseg {

// Rows are ground-truth classes, columns are predictions. Counts are 64-bit
// so whole datasets cannot overflow. Ground-truth pixels labeled 255 are
// skipped; any other label >= the class count is a data error.
class ConfusionMatrix {
public:
    explicit ConfusionMatrix(int64_t num_classes);

    void update(const PixelMask& pred, const PixelMask& gt);
    void merge(const ConfusionMatrix& other);

    int64_t num_classes() const { return num_classes_; }
    uint64_t at(int64_t gt, int64_t pred) const;
    uint64_t total() const;

    struct IouReport {
        double mean = 0.0;
        // NaN marks classes absent from both prediction and ground truth;
        // they are excluded from the mean
        std::vector<double> per_class;
        int64_t evaluated = 0;
    };

    // intersection-over-union per class and their mean over defined classes
    IouReport miou() const;

private:
    int64_t num_classes_;
    std::vector<uint64_t> counts_;
};

} // namespace csaseg
