#include "csaseg/eval.hpp"

#include "csaseg/errors.hpp"

#include <cmath>
#include <limits>
#include <string>

namespace csaseg {

ConfusionMatrix::ConfusionMatrix(int64_t num_classes) : num_classes_(num_classes) {
    if (num_classes < 1 || num_classes > 255)
        throw ConfigError("confusion matrix needs 1..255 classes, got " +
                          std::to_string(num_classes));
    counts_.assign(size_t(num_classes * num_classes), 0);
}

void ConfusionMatrix::update(const PixelMask& pred, const PixelMask& gt) {
    if (pred.rows != gt.rows || pred.cols != gt.cols)
        throw ShapeError("prediction " + std::to_string(pred.rows) + "x" + std::to_string(pred.cols) +
                         " does not match ground truth " + std::to_string(gt.rows) + "x" +
                         std::to_string(gt.cols));
    const size_t n = pred.labels.size();
    for (size_t i = 0; i < n; ++i) {
        const int64_t g = gt.labels[i];
        if (g == kIgnoreLabel) continue;
        const int64_t p = pred.labels[i];
        if (g >= num_classes_)
            throw DataError("ground-truth label " + std::to_string(g) + " out of range for " +
                            std::to_string(num_classes_) + " classes");
        if (p >= num_classes_)
            throw DataError("predicted label " + std::to_string(p) + " out of range for " +
                            std::to_string(num_classes_) + " classes");
        counts_[size_t(g * num_classes_ + p)] += 1;
    }
}

void ConfusionMatrix::merge(const ConfusionMatrix& other) {
    if (other.num_classes_ != num_classes_)
        throw ShapeError("cannot merge confusion matrices of different class counts");
    for (size_t i = 0; i < counts_.size(); ++i) counts_[i] += other.counts_[i];
}

uint64_t ConfusionMatrix::at(int64_t gt, int64_t pred) const {
    if (gt < 0 || gt >= num_classes_ || pred < 0 || pred >= num_classes_)
        throw ShapeError("confusion matrix index out of range");
    return counts_[size_t(gt * num_classes_ + pred)];
}

uint64_t ConfusionMatrix::total() const {
    uint64_t t = 0;
    for (uint64_t c : counts_) t += c;
    return t;
}

ConfusionMatrix::IouReport ConfusionMatrix::miou() const {
    IouReport report;
    report.per_class.assign(size_t(num_classes_), std::numeric_limits<double>::quiet_NaN());
    double sum = 0.0;
    for (int64_t c = 0; c < num_classes_; ++c) {
        uint64_t row = 0, col = 0;
        for (int64_t j = 0; j < num_classes_; ++j) {
            row += counts_[size_t(c * num_classes_ + j)];
            col += counts_[size_t(j * num_classes_ + c)];
        }
        const uint64_t tp = counts_[size_t(c * num_classes_ + c)];
        const uint64_t uni = row + col - tp;
        if (uni == 0) continue;   // class absent everywhere, excluded from the mean
        const double iou = double(tp) / double(uni);
        report.per_class[size_t(c)] = iou;
        sum += iou;
        report.evaluated += 1;
    }
    if (report.evaluated == 0)
        throw MetricError("mean IoU undefined: no class appears in prediction or ground truth");
    report.mean = sum / double(report.evaluated);
    return report;
}

} // namespace csaseg
