#include "deepsets/set_batch.hpp"

#include <string>

namespace deepsets {

SetBatch::SetBatch(Tensor elements, std::vector<Index> offsets, std::optional<Tensor> condition)
    : elements_(std::move(elements)), offsets_(std::move(offsets)), condition_(std::move(condition)) {
  if (offsets_.size() < 2) throw ShapeError("SetBatch: at least one set is required");
  if (offsets_.front() != 0 || offsets_.back() != elements_.rows()) {
    throw ShapeError("SetBatch: offsets must start at 0 and end at the element count");
  }
  for (std::size_t i = 1; i < offsets_.size(); ++i) {
    if (offsets_[i] <= offsets_[i - 1]) {
      throw ShapeError("SetBatch: set " + std::to_string(i - 1) + " is empty or offsets decrease");
    }
  }
  if (condition_ && condition_->rows() != num_sets()) {
    throw ShapeError("SetBatch: condition needs one row per set");
  }
}

SetBatch SetBatch::from_sets(std::span<const Tensor> sets, std::optional<Tensor> condition) {
  if (sets.empty()) throw ShapeError("SetBatch: at least one set is required");
  const Index width = sets.front().cols();
  Index total = 0;
  std::vector<Index> offsets{0};
  offsets.reserve(sets.size() + 1);
  for (const Tensor& s : sets) {
    if (s.cols() != width) throw ShapeError("SetBatch: member widths differ between sets");
    if (s.rows() == 0) throw ShapeError("SetBatch: empty set");
    total += s.rows();
    offsets.push_back(total);
  }
  Tensor elements(total, width);
  for (std::size_t i = 0; i < sets.size(); ++i) {
    elements.middleRows(offsets[i], sets[i].rows()) = sets[i];
  }
  return SetBatch(std::move(elements), std::move(offsets), std::move(condition));
}

Index SetBatch::set_size(Index s) const {
  const auto i = static_cast<std::size_t>(s);
  return offsets_.at(i + 1) - offsets_.at(i);
}

}  // namespace deepsets
