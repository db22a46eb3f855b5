#pragma once

#include <cstddef>
#include <cstdint>
#include <cstdlib>
#include <numeric>
#include <span>
#include <utility>
#include <vector>

#include "stiffnet/network.hpp"

namespace stiffnet {

using IntMatrix = std::vector<std::vector<std::int64_t>>;

/// Slow invariants y_s = T_s x of a state. Equal keys <=> same fast-class.
struct FastClassKey {
  std::vector<std::int64_t> key;
  bool operator==(const FastClassKey&) const = default;
};

struct FastClassKeyHash {
  std::size_t operator()(const FastClassKey& k) const noexcept {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (auto v : k.key) {
      h ^= static_cast<std::uint64_t>(v);
      h *= 0x100000001b3ULL;
    }
    return static_cast<std::size_t>(h);
  }
};

namespace detail {

inline void row_combine(std::vector<std::int64_t>& a, std::vector<std::int64_t>& b, std::size_t col) {
  // Unimodular 2x2 transform making b[col] == 0 and a[col] == gcd.
  while (b[col] != 0) {
    const std::int64_t q = a[col] / b[col];
    for (std::size_t j = 0; j < a.size(); ++j) a[j] -= q * b[j];
    std::swap(a, b);
  }
  if (a[col] < 0) {
    for (auto& v : a) v = -v;
  }
}

/// Row-style Hermite normal form (positive pivots, reduced above-pivot
/// entries). Zero rows are dropped. Returns the transform's row count used.
inline IntMatrix hermite_rows(IntMatrix rows, std::size_t ncols) {
  std::size_t pivot_row = 0;
  for (std::size_t col = 0; col < ncols && pivot_row < rows.size(); ++col) {
    for (std::size_t r = pivot_row + 1; r < rows.size(); ++r) {
      if (rows[r][col] != 0) row_combine(rows[pivot_row], rows[r], col);
    }
    if (rows[pivot_row][col] == 0) {
      // Pivot row may have been swapped out; find any nonzero below.
      std::size_t found = rows.size();
      for (std::size_t r = pivot_row; r < rows.size(); ++r) {
        if (rows[r][col] != 0) {
          found = r;
          break;
        }
      }
      if (found == rows.size()) continue;
      std::swap(rows[pivot_row], rows[found]);
    }
    if (rows[pivot_row][col] < 0) {
      for (auto& v : rows[pivot_row]) v = -v;
    }
    const std::int64_t p = rows[pivot_row][col];
    for (std::size_t r = 0; r < pivot_row; ++r) {
      std::int64_t q = rows[r][col] / p;
      if (rows[r][col] - q * p < 0) --q;
      if (q != 0) {
        for (std::size_t j = 0; j < rows[r].size(); ++j) rows[r][j] -= q * rows[pivot_row][j];
      }
    }
    ++pivot_row;
  }
  rows.resize(pivot_row);
  return rows;
}

}  // namespace detail

/// Integer basis (rows) of the left null space {y : y S = 0} of an integer
/// d x m matrix, in Hermite normal form so the basis is canonical.
inline IntMatrix integer_left_null_space(const Eigen::MatrixXi& s) {
  const auto d = static_cast<std::size_t>(s.rows());
  const auto m = static_cast<std::size_t>(s.cols());
  // Augmented [S | I]; unimodular row operations preserve the lattice.
  IntMatrix aug(d, std::vector<std::int64_t>(m + d, 0));
  for (std::size_t i = 0; i < d; ++i) {
    for (std::size_t j = 0; j < m; ++j) aug[i][j] = s(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
    aug[i][m + i] = 1;
  }
  std::size_t pivot_row = 0;
  for (std::size_t col = 0; col < m && pivot_row < d; ++col) {
    for (std::size_t r = pivot_row + 1; r < d; ++r) {
      if (aug[r][col] != 0) detail::row_combine(aug[pivot_row], aug[r], col);
    }
    if (aug[pivot_row][col] == 0) {
      std::size_t found = d;
      for (std::size_t r = pivot_row; r < d; ++r) {
        if (aug[r][col] != 0) {
          found = r;
          break;
        }
      }
      if (found == d) continue;
      std::swap(aug[pivot_row], aug[found]);
    }
    ++pivot_row;
  }
  IntMatrix basis;
  for (std::size_t r = pivot_row; r < d; ++r) {
    basis.emplace_back(aug[r].begin() + static_cast<std::ptrdiff_t>(m), aug[r].end());
  }
  return detail::hermite_rows(std::move(basis), d);
}

/// Maps states to fast-class keys via the slow-invariant matrix T_s.
class FastClassPartition {
 public:
  explicit FastClassPartition(const ReactionNetwork& net)
      : d_(net.num_species()), ts_(integer_left_null_space(net.stoichiometry(ReactionSubset::FastOnly))) {}

  /// Rows of T_s.
  const IntMatrix& slow_invariants() const noexcept { return ts_; }

  /// False when the fast stoichiometry has full row rank: every state then
  /// lies in one class and keys are empty.
  bool has_slow_invariants() const noexcept { return !ts_.empty(); }

  FastClassKey key(std::span<const int> x) const {
    FastClassKey k;
    k.key.resize(ts_.size());
    for (std::size_t r = 0; r < ts_.size(); ++r) {
      std::int64_t v = 0;
      for (std::size_t i = 0; i < d_; ++i) v += ts_[r][i] * x[i];
      k.key[r] = v;
    }
    return k;
  }

 private:
  std::size_t d_;
  IntMatrix ts_;
};

/// Convenience: key of one state (builds T_s on the fly).
inline FastClassKey fast_class_key(std::span<const int> x, const ReactionNetwork& net) {
  return FastClassPartition(net).key(x);
}

}  // namespace stiffnet
