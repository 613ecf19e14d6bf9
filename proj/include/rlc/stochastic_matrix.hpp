#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace rlc {

/// Row tolerance for stochastic matrices.
inline constexpr double kRowSumTolerance = 1e-10;

struct Triplet {
  std::size_t from;
  std::size_t to;
  double prob;
};

/// One row of a StochasticMatrix: parallel arrays of column indices
/// (strictly increasing) and positive probabilities.
struct RowView {
  std::span<const std::size_t> cols;
  std::span<const double> probs;

  std::size_t size() const { return cols.size(); }
};

enum class RowCheck {
  kStrict,       ///< every row must sum to 1 within kRowSumTolerance
  kRenormalize,  ///< rows are divided by their sums
  kUnchecked,    ///< keep entries as given; validate() reports violations
};

/// Square, row-compressed transition matrix. Stored entries are > 0; a
/// missing entry is a structural zero. Immutable after construction.
class StochasticMatrix {
 public:
  StochasticMatrix() = default;

  /// Builds from (from, to, prob) triplets in any order. Zero probabilities
  /// are dropped; negative or non-finite ones, out-of-range indices and
  /// duplicate (from, to) pairs throw InputError. Under kStrict a row whose
  /// sum is off by more than kRowSumTolerance throws an error naming it.
  static StochasticMatrix from_triplets(std::size_t n, std::vector<Triplet> triplets,
                                        RowCheck check = RowCheck::kStrict);

  /// Builds from per-row sparse entries already sorted by column.
  static StochasticMatrix from_rows(std::vector<std::vector<std::size_t>> cols,
                                    std::vector<std::vector<double>> probs,
                                    RowCheck check = RowCheck::kStrict);

  std::size_t size() const { return row_ptr_.empty() ? 0 : row_ptr_.size() - 1; }
  std::size_t nnz() const { return cols_.size(); }

  RowView row(std::size_t i) const {
    const auto b = row_ptr_[i];
    const auto e = row_ptr_[i + 1];
    return {std::span(cols_).subspan(b, e - b), std::span(probs_).subspan(b, e - b)};
  }

  /// Probability of i -> j (0 for structural zeros).
  double at(std::size_t i, std::size_t j) const;

  double row_sum(std::size_t i) const;
  /// max_i |row_sum(i) - 1|
  double max_row_sum_deviation() const;

  /// Dense copy of row i.
  std::vector<double> dense_row(std::size_t i) const;

  /// Row-compressed transpose (columns of this matrix become rows). The
  /// result is generally not row-stochastic and is built unchecked.
  StochasticMatrix transpose() const;

  std::vector<Triplet> triplets() const;

  bool operator==(const StochasticMatrix&) const = default;

 private:
  std::vector<std::size_t> row_ptr_;
  std::vector<std::size_t> cols_;
  std::vector<double> probs_;
};

/// True iff every state reaches every other through positive entries.
bool is_irreducible(const StochasticMatrix& m);

/// Closed communicating classes (no positive entry leaves the class), each
/// sorted, ordered by smallest member.
std::vector<std::vector<std::size_t>> closed_classes(const StochasticMatrix& m);

/// Exactly one closed class; every other state is transient and feeds it.
bool is_unichain(const StochasticMatrix& m);

/// States from which no path of positive entries reaches any of `targets`.
std::vector<std::size_t> states_not_reaching(const StochasticMatrix& m,
                                             std::span<const std::size_t> targets);

}  // namespace rlc
