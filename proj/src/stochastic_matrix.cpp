#include "rlc/stochastic_matrix.hpp"

#include "rlc/errors.hpp"

#include <algorithm>
#include <limits>
#include <cmath>
#include <deque>
#include <sstream>
#include <string>

namespace rlc {

namespace {

std::string describe_row_sum(std::size_t row, double sum) {
  std::ostringstream os;
  os.precision(17);
  os << "row " << row << " sums to " << sum << ", expected 1";
  return os.str();
}

void apply_row_check(std::vector<std::size_t>& row_ptr, std::vector<double>& probs,
                     RowCheck check) {
  if (check == RowCheck::kUnchecked) return;
  for (std::size_t i = 0; i + 1 < row_ptr.size(); ++i) {
    double sum = 0.0;
    for (auto k = row_ptr[i]; k < row_ptr[i + 1]; ++k) sum += probs[k];
    if (check == RowCheck::kStrict) {
      if (std::abs(sum - 1.0) > kRowSumTolerance) throw InputError(describe_row_sum(i, sum));
    } else {
      if (sum <= 0.0) throw InputError("row " + std::to_string(i) + " has no mass to renormalize");
      for (auto k = row_ptr[i]; k < row_ptr[i + 1]; ++k) probs[k] /= sum;
    }
  }
}

std::vector<bool> reachable_from(const StochasticMatrix& m, std::span<const std::size_t> seeds) {
  std::vector<bool> seen(m.size(), false);
  std::deque<std::size_t> queue;
  for (auto s : seeds) {
    if (!seen[s]) {
      seen[s] = true;
      queue.push_back(s);
    }
  }
  while (!queue.empty()) {
    const auto i = queue.front();
    queue.pop_front();
    for (auto j : m.row(i).cols) {
      if (!seen[j]) {
        seen[j] = true;
        queue.push_back(j);
      }
    }
  }
  return seen;
}

}  // namespace

StochasticMatrix StochasticMatrix::from_triplets(std::size_t n, std::vector<Triplet> triplets,
                                                 RowCheck check) {
  if (n == 0) throw InputError("matrix must have at least one state");
  for (std::size_t k = 0; k < triplets.size(); ++k) {
    const auto& t = triplets[k];
    if (t.from >= n || t.to >= n) {
      throw InputError("transition " + std::to_string(k) + " (" + std::to_string(t.from) + " -> " +
                       std::to_string(t.to) + ") is out of range for " + std::to_string(n) +
                       " states");
    }
    if (!std::isfinite(t.prob) || t.prob < 0.0) {
      throw InputError("transition " + std::to_string(t.from) + " -> " + std::to_string(t.to) +
                       " has negative or non-finite probability");
    }
  }
  std::stable_sort(triplets.begin(), triplets.end(), [](const Triplet& a, const Triplet& b) {
    return a.from != b.from ? a.from < b.from : a.to < b.to;
  });

  StochasticMatrix m;
  m.row_ptr_.assign(n + 1, 0);
  for (std::size_t k = 0; k < triplets.size(); ++k) {
    const auto& t = triplets[k];
    if (k > 0 && triplets[k - 1].from == t.from && triplets[k - 1].to == t.to) {
      throw InputError("duplicate transition " + std::to_string(t.from) + " -> " +
                       std::to_string(t.to));
    }
    if (t.prob == 0.0) continue;
    m.cols_.push_back(t.to);
    m.probs_.push_back(t.prob);
    ++m.row_ptr_[t.from + 1];
  }
  for (std::size_t i = 0; i < n; ++i) m.row_ptr_[i + 1] += m.row_ptr_[i];
  apply_row_check(m.row_ptr_, m.probs_, check);
  return m;
}

StochasticMatrix StochasticMatrix::from_rows(std::vector<std::vector<std::size_t>> cols,
                                             std::vector<std::vector<double>> probs,
                                             RowCheck check) {
  const auto n = cols.size();
  if (n == 0) throw InputError("matrix must have at least one state");
  if (probs.size() != n) throw InputError("from_rows: column/probability row count mismatch");
  StochasticMatrix m;
  m.row_ptr_.reserve(n + 1);
  m.row_ptr_.push_back(0);
  for (std::size_t i = 0; i < n; ++i) {
    if (cols[i].size() != probs[i].size()) {
      throw InputError("from_rows: row " + std::to_string(i) + " has mismatched lengths");
    }
    for (std::size_t k = 0; k < cols[i].size(); ++k) {
      const auto j = cols[i][k];
      const double p = probs[i][k];
      if (j >= n) throw InputError("from_rows: column out of range in row " + std::to_string(i));
      if (k > 0 && cols[i][k - 1] >= j) {
        throw InputError("from_rows: columns of row " + std::to_string(i) +
                         " are not strictly increasing");
      }
      if (!std::isfinite(p) || p < 0.0) {
        throw InputError("from_rows: bad probability in row " + std::to_string(i));
      }
      if (p == 0.0) continue;
      m.cols_.push_back(j);
      m.probs_.push_back(p);
    }
    m.row_ptr_.push_back(m.cols_.size());
  }
  apply_row_check(m.row_ptr_, m.probs_, check);
  return m;
}

double StochasticMatrix::at(std::size_t i, std::size_t j) const {
  const auto r = row(i);
  const auto it = std::lower_bound(r.cols.begin(), r.cols.end(), j);
  if (it == r.cols.end() || *it != j) return 0.0;
  return r.probs[static_cast<std::size_t>(it - r.cols.begin())];
}

double StochasticMatrix::row_sum(std::size_t i) const {
  double s = 0.0;
  for (double p : row(i).probs) s += p;
  return s;
}

double StochasticMatrix::max_row_sum_deviation() const {
  double dev = 0.0;
  for (std::size_t i = 0; i < size(); ++i) dev = std::max(dev, std::abs(row_sum(i) - 1.0));
  return dev;
}

std::vector<double> StochasticMatrix::dense_row(std::size_t i) const {
  std::vector<double> out(size(), 0.0);
  const auto r = row(i);
  for (std::size_t k = 0; k < r.size(); ++k) out[r.cols[k]] = r.probs[k];
  return out;
}

StochasticMatrix StochasticMatrix::transpose() const {
  const auto n = size();
  StochasticMatrix t;
  t.row_ptr_.assign(n + 1, 0);
  for (auto j : cols_) ++t.row_ptr_[j + 1];
  for (std::size_t i = 0; i < n; ++i) t.row_ptr_[i + 1] += t.row_ptr_[i];
  t.cols_.resize(nnz());
  t.probs_.resize(nnz());
  std::vector<std::size_t> fill(t.row_ptr_.begin(), t.row_ptr_.end() - 1);
  // Rows are visited in increasing order, so transposed columns stay sorted.
  for (std::size_t i = 0; i < n; ++i) {
    for (auto k = row_ptr_[i]; k < row_ptr_[i + 1]; ++k) {
      const auto slot = fill[cols_[k]]++;
      t.cols_[slot] = i;
      t.probs_[slot] = probs_[k];
    }
  }
  return t;
}

std::vector<Triplet> StochasticMatrix::triplets() const {
  std::vector<Triplet> out;
  out.reserve(nnz());
  for (std::size_t i = 0; i < size(); ++i) {
    for (auto k = row_ptr_[i]; k < row_ptr_[i + 1]; ++k) out.push_back({i, cols_[k], probs_[k]});
  }
  return out;
}

bool is_irreducible(const StochasticMatrix& m) {
  if (m.size() == 0) return false;
  const std::size_t origin = 0;
  const auto forward = reachable_from(m, std::span(&origin, 1));
  if (std::find(forward.begin(), forward.end(), false) != forward.end()) return false;
  const auto backward = reachable_from(m.transpose(), std::span(&origin, 1));
  return std::find(backward.begin(), backward.end(), false) == backward.end();
}

std::vector<std::vector<std::size_t>> closed_classes(const StochasticMatrix& m) {
  // Iterative Tarjan; component ids come out in reverse topological order.
  const auto n = m.size();
  constexpr std::size_t kUnset = std::numeric_limits<std::size_t>::max();
  std::vector<std::size_t> index(n, kUnset), low(n, 0), comp(n, kUnset);
  std::vector<bool> on_stack(n, false);
  std::vector<std::size_t> stack;
  std::vector<std::pair<std::size_t, std::size_t>> call;  // (state, next edge offset)
  std::size_t counter = 0, n_comp = 0;
  for (std::size_t root = 0; root < n; ++root) {
    if (index[root] != kUnset) continue;
    call.emplace_back(root, 0);
    index[root] = low[root] = counter++;
    stack.push_back(root);
    on_stack[root] = true;
    while (!call.empty()) {
      auto& [v, k] = call.back();
      const auto cols = m.row(v).cols;
      if (k < cols.size()) {
        const auto w = cols[k++];
        if (index[w] == kUnset) {
          index[w] = low[w] = counter++;
          stack.push_back(w);
          on_stack[w] = true;
          call.emplace_back(w, 0);
        } else if (on_stack[w]) {
          low[v] = std::min(low[v], index[w]);
        }
        continue;
      }
      const auto done = v;
      call.pop_back();
      if (!call.empty()) low[call.back().first] = std::min(low[call.back().first], low[done]);
      if (low[done] == index[done]) {
        std::size_t w;
        do {
          w = stack.back();
          stack.pop_back();
          on_stack[w] = false;
          comp[w] = n_comp;
        } while (w != done);
        ++n_comp;
      }
    }
  }
  std::vector<bool> closed(n_comp, true);
  for (std::size_t i = 0; i < n; ++i) {
    for (auto j : m.row(i).cols) {
      if (comp[j] != comp[i]) closed[comp[i]] = false;
    }
  }
  std::vector<std::vector<std::size_t>> out;
  std::vector<std::size_t> slot(n_comp, kUnset);
  for (std::size_t i = 0; i < n; ++i) {
    if (!closed[comp[i]]) continue;
    if (slot[comp[i]] == kUnset) {
      slot[comp[i]] = out.size();
      out.emplace_back();
    }
    out[slot[comp[i]]].push_back(i);
  }
  return out;
}

bool is_unichain(const StochasticMatrix& m) { return m.size() > 0 && closed_classes(m).size() == 1; }

std::vector<std::size_t> states_not_reaching(const StochasticMatrix& m,
                                             std::span<const std::size_t> targets) {
  const auto reach = reachable_from(m.transpose(), targets);
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < m.size(); ++i) {
    if (!reach[i]) out.push_back(i);
  }
  return out;
}

}  // namespace rlc
