#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "fuzzyseg/tensor.hpp"

namespace fuzzyseg {

// Rows are ground truth, columns prediction.
class ConfusionMatrix {
 public:
  explicit ConfusionMatrix(std::size_t num_classes);

  std::size_t num_classes() const { return c_; }
  std::uint64_t at(std::size_t truth, std::size_t pred) const { return counts_[truth * c_ + pred]; }
  std::uint64_t total() const;
  void add(const ConfusionMatrix& other);
  void increment(std::size_t truth, std::size_t pred) { ++counts_[truth * c_ + pred]; }

  friend bool operator==(const ConfusionMatrix&, const ConfusionMatrix&) = default;

 private:
  std::size_t c_;
  std::vector<std::uint64_t> counts_;
};

// Ignore-valued truth pixels are skipped. Prediction must be a class index;
// out-of-range values on either side raise ValidationError.
void update_confusion(ConfusionMatrix& cm, const LabelMap& pred, const LabelMap& truth);

struct ClassIoU {
  std::vector<double> iou;
  std::vector<bool> present;  // TP+FP+FN > 0
};

ClassIoU iou_per_class(const ConfusionMatrix& cm);

// Mean over present classes; EvaluationError if none is present.
double miou(const ClassIoU& iou);
double pixel_accuracy(const ConfusionMatrix& cm);

}  // namespace fuzzyseg
