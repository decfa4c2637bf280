#include "fuzzyseg/metrics.hpp"

#include <numeric>
#include <string>

#include "fuzzyseg/errors.hpp"

namespace fuzzyseg {

ConfusionMatrix::ConfusionMatrix(std::size_t num_classes) : c_(num_classes), counts_(num_classes * num_classes, 0) {
  if (num_classes == 0) throw ArgumentError("confusion matrix needs at least one class");
}

std::uint64_t ConfusionMatrix::total() const {
  return std::accumulate(counts_.begin(), counts_.end(), std::uint64_t{0});
}

void ConfusionMatrix::add(const ConfusionMatrix& other) {
  if (other.c_ != c_) throw ArgumentError("confusion matrix class counts differ");
  for (std::size_t i = 0; i < counts_.size(); ++i) counts_[i] += other.counts_[i];
}

void update_confusion(ConfusionMatrix& cm, const LabelMap& pred, const LabelMap& truth) {
  if (pred.shape != truth.shape) {
    throw ArgumentError("update_confusion: shape mismatch " + shape_to_string(pred.shape) + " vs " +
                        shape_to_string(truth.shape));
  }
  const int c = static_cast<int>(cm.num_classes());
  for (std::size_t i = 0; i < truth.values.size(); ++i) {
    const int t = truth.values[i];
    if (t == LabelMap::kIgnore) continue;
    const int p = pred.values[i];
    if (t < 0 || t >= c || p < 0 || p >= c) {
      throw ValidationError("update_confusion: class index out of range (truth " + std::to_string(t) +
                            ", pred " + std::to_string(p) + ")");
    }
    cm.increment(static_cast<std::size_t>(t), static_cast<std::size_t>(p));
  }
}

ClassIoU iou_per_class(const ConfusionMatrix& cm) {
  const std::size_t c = cm.num_classes();
  ClassIoU r;
  r.iou.assign(c, 0.0);
  r.present.assign(c, false);
  for (std::size_t k = 0; k < c; ++k) {
    std::uint64_t row = 0, col = 0;
    for (std::size_t j = 0; j < c; ++j) {
      row += cm.at(k, j);
      col += cm.at(j, k);
    }
    const std::uint64_t tp = cm.at(k, k);
    const std::uint64_t denom = row + col - tp;
    if (denom == 0) continue;
    r.present[k] = true;
    r.iou[k] = static_cast<double>(tp) / static_cast<double>(denom);
  }
  return r;
}

double miou(const ClassIoU& iou) {
  double sum = 0.0;
  std::size_t n = 0;
  for (std::size_t k = 0; k < iou.iou.size(); ++k) {
    if (!iou.present[k]) continue;
    sum += iou.iou[k];
    ++n;
  }
  if (n == 0) throw EvaluationError("miou: no class present");
  return sum / static_cast<double>(n);
}

double pixel_accuracy(const ConfusionMatrix& cm) {
  const std::uint64_t total = cm.total();
  if (total == 0) throw EvaluationError("pixel_accuracy: empty confusion matrix");
  std::uint64_t diag = 0;
  for (std::size_t k = 0; k < cm.num_classes(); ++k) diag += cm.at(k, k);
  return static_cast<double>(diag) / static_cast<double>(total);
}

}  // namespace fuzzyseg
