#pragma once

#include "deepsets/tensor.hpp"

#include <optional>
#include <span>
#include <vector>

namespace deepsets {

/// Ragged batch of sets: every set's members are a contiguous block of rows
/// in `elements`, delimited by `offsets` (first 0, last = total rows).
class SetBatch {
 public:
  SetBatch() = default;
  SetBatch(Tensor elements, std::vector<Index> offsets, std::optional<Tensor> condition = std::nullopt);

  /// Concatenates per-set member matrices. All must share a column count.
  static SetBatch from_sets(std::span<const Tensor> sets, std::optional<Tensor> condition = std::nullopt);

  [[nodiscard]] const Tensor& elements() const { return elements_; }
  [[nodiscard]] std::span<const Index> offsets() const { return offsets_; }
  [[nodiscard]] const std::optional<Tensor>& condition() const { return condition_; }

  [[nodiscard]] Index num_sets() const { return static_cast<Index>(offsets_.size()) - 1; }
  [[nodiscard]] Index width() const { return elements_.cols(); }
  [[nodiscard]] Index total_elements() const { return elements_.rows(); }
  [[nodiscard]] Index set_size(Index s) const;
  /// Members of set s as a view.
  [[nodiscard]] auto set(Index s) const {
    return elements_.middleRows(offsets_[static_cast<std::size_t>(s)], set_size(s));
  }

 private:
  Tensor elements_;
  std::vector<Index> offsets_{0};
  std::optional<Tensor> condition_;
};

}  // namespace deepsets
