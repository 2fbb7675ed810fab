#pragma once

// Multiplicity vectors on the lattice Z_+^K, down-sets, projections onto
// partitions and the combinatorial pmfs that weight mixture components.

#include <algorithm>
#include <compare>
#include <cstdint>
#include <initializer_list>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "measure_filter/errors.hpp"
#include "measure_filter/numeric.hpp"

namespace measure_filter {

using AtomIndex = std::uint32_t;
using Count = std::uint32_t;

/// Counts of distinct observed atoms. Zeros are implicit: only strictly positive
/// counts are stored, sorted by atom index, so vectors built over registries of
/// different sizes compare equal whenever their counts agree.
class MultiplicityVector {
 public:
  using Entry = std::pair<AtomIndex, Count>;

  MultiplicityVector() = default;

  MultiplicityVector(std::initializer_list<Entry> entries) {
    for (const auto& [index, count] : entries) add(index, count);
  }

  /// Dense coordinates (m_0, m_1, ...); zeros dropped.
  static MultiplicityVector from_dense(std::span<const Count> counts) {
    MultiplicityVector m;
    for (std::size_t j = 0; j < counts.size(); ++j) {
      if (counts[j] > 0) m.entries_.emplace_back(static_cast<AtomIndex>(j), counts[j]);
      m.total_ += counts[j];
    }
    return m;
  }
  static MultiplicityVector from_dense(std::initializer_list<Count> counts) {
    return from_dense(std::span<const Count>(counts.begin(), counts.size()));
  }
  static MultiplicityVector from_dense(const std::vector<int>& counts) {
    MultiplicityVector m;
    for (std::size_t j = 0; j < counts.size(); ++j) {
      if (counts[j] < 0) throw PreconditionError("multiplicity counts must be nonnegative");
      if (counts[j] > 0) m.entries_.emplace_back(static_cast<AtomIndex>(j), static_cast<Count>(counts[j]));
      m.total_ += static_cast<std::uint64_t>(counts[j]);
    }
    return m;
  }

  Count operator[](AtomIndex index) const {
    auto it = std::lower_bound(entries_.begin(), entries_.end(), index,
                               [](const Entry& e, AtomIndex i) { return e.first < i; });
    return (it != entries_.end() && it->first == index) ? it->second : 0;
  }

  /// Adds `count` to coordinate `index`.
  void add(AtomIndex index, Count count) {
    if (count == 0) return;
    auto it = std::lower_bound(entries_.begin(), entries_.end(), index,
                               [](const Entry& e, AtomIndex i) { return e.first < i; });
    if (it != entries_.end() && it->first == index) {
      it->second += count;
    } else {
      entries_.insert(it, Entry{index, count});
    }
    total_ += count;
  }

  std::uint64_t total() const noexcept { return total_; }
  bool is_zero() const noexcept { return entries_.empty(); }
  /// Number of nonzero coordinates.
  std::size_t support_size() const noexcept { return entries_.size(); }
  /// One past the largest atom index with a positive count.
  std::size_t dimension() const noexcept { return entries_.empty() ? 0 : entries_.back().first + 1; }
  const std::vector<Entry>& entries() const noexcept { return entries_; }

  std::vector<Count> to_dense(std::size_t k) const {
    std::vector<Count> out(std::max(k, dimension()), 0);
    for (const auto& [index, count] : entries_) out[index] = count;
    return out;
  }

  std::string to_string() const {
    std::string s = "{";
    for (std::size_t j = 0; j < entries_.size(); ++j) {
      if (j) s += ",";
      s += std::to_string(entries_[j].first) + ":" + std::to_string(entries_[j].second);
    }
    return s + "}";
  }

  friend bool operator==(const MultiplicityVector& a, const MultiplicityVector& b) {
    return a.entries_ == b.entries_;
  }
  friend std::strong_ordering operator<=>(const MultiplicityVector& a, const MultiplicityVector& b) {
    if (auto c = a.total_ <=> b.total_; c != 0) return c;
    return a.entries_ <=> b.entries_;
  }

 private:
  friend MultiplicityVector operator+(const MultiplicityVector& a, const MultiplicityVector& b);
  friend MultiplicityVector operator-(const MultiplicityVector& a, const MultiplicityVector& b);

  std::vector<Entry> entries_;
  std::uint64_t total_ = 0;
};

/// Maps observed atoms to cells 0..K-1.
struct Partition {
  std::vector<std::uint32_t> cell_of;
  std::uint32_t cells = 1;

  static Partition identity(std::size_t atoms) {
    Partition p;
    p.cells = static_cast<std::uint32_t>(std::max<std::size_t>(atoms, 1));
    p.cell_of.resize(atoms);
    for (std::size_t j = 0; j < atoms; ++j) p.cell_of[j] = static_cast<std::uint32_t>(j);
    return p;
  }
  static Partition single_cell(std::size_t atoms) {
    Partition p;
    p.cells = 1;
    p.cell_of.assign(atoms, 0);
    return p;
  }

  void validate() const {
    if (cells < 1) throw PreconditionError("partition needs at least one cell");
    for (auto c : cell_of) {
      if (c >= cells) throw PreconditionError("partition maps an atom outside 0..K-1");
    }
  }
};

struct LatticeLimits {
  /// Largest down-set the enumeration routines will materialise.
  std::size_t max_down_set = 10'000'000;
};

inline MultiplicityVector operator+(const MultiplicityVector& a, const MultiplicityVector& b) {
  MultiplicityVector out = a;
  for (const auto& [index, count] : b.entries_) out.add(index, count);
  return out;
}

inline bool leq(const MultiplicityVector& m, const MultiplicityVector& n);

/// Coordinate-wise a - b; requires b <= a.
inline MultiplicityVector operator-(const MultiplicityVector& a, const MultiplicityVector& b) {
  if (!leq(b, a)) throw PreconditionError("subtraction requires b <= a");
  MultiplicityVector out;
  for (const auto& [index, count] : a.entries_) {
    const Count sub = b[index];
    if (count > sub) out.entries_.emplace_back(index, count - sub);
  }
  out.total_ = a.total_ - b.total_;
  return out;
}

/// Partial order: m <= n coordinate-wise.
inline bool leq(const MultiplicityVector& m, const MultiplicityVector& n) {
  if (m.total() > n.total()) return false;
  for (const auto& [index, count] : m.entries()) {
    if (count > n[index]) return false;
  }
  return true;
}

/// |L(m)| = prod_j (m_j + 1), saturating at SIZE_MAX.
inline std::size_t down_set_size(const MultiplicityVector& m) {
  std::size_t size = 1;
  for (const auto& [index, count] : m.entries()) {
    const std::size_t factor = static_cast<std::size_t>(count) + 1;
    if (size > SIZE_MAX / factor) return SIZE_MAX;
    size *= factor;
  }
  return size;
}

/// Calls fn(n) for every n in L(m), in odometer order with the lowest atom
/// index varying fastest: (2,1) -> (0,0),(1,0),(2,0),(0,1),(1,1),(2,1).
template <typename Fn>
void for_each_below(const MultiplicityVector& m, Fn&& fn) {
  const auto& entries = m.entries();
  std::vector<Count> digits(entries.size(), 0);
  while (true) {
    MultiplicityVector n;
    for (std::size_t j = 0; j < entries.size(); ++j) n.add(entries[j].first, digits[j]);
    fn(n);
    std::size_t j = 0;
    for (; j < entries.size(); ++j) {
      if (digits[j] < entries[j].second) {
        ++digits[j];
        break;
      }
      digits[j] = 0;
    }
    if (j == entries.size()) return;
  }
}

inline std::vector<MultiplicityVector> down_set(const MultiplicityVector& m, const LatticeLimits& limits = {}) {
  const std::size_t size = down_set_size(m);
  if (size > limits.max_down_set) {
    throw ResourceCapError("down-set of " + m.to_string() + " has " +
                           (size == SIZE_MAX ? std::string("overflowing") : std::to_string(size)) +
                           " elements, above the cap of " + std::to_string(limits.max_down_set));
  }
  std::vector<MultiplicityVector> out;
  out.reserve(size);
  for_each_below(m, [&](const MultiplicityVector& n) { out.push_back(n); });
  return out;
}

/// Union of L(m) over m in M, deduplicated and sorted.
template <typename Range>
std::vector<MultiplicityVector> down_set_union(const Range& vectors, const LatticeLimits& limits = {}) {
  std::vector<MultiplicityVector> out;
  for (const MultiplicityVector& m : vectors) {
    auto part = down_set(m, limits);
    out.insert(out.end(), std::make_move_iterator(part.begin()), std::make_move_iterator(part.end()));
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    if (out.size() > limits.max_down_set) {
      throw ResourceCapError("down-set union exceeds the cap of " + std::to_string(limits.max_down_set));
    }
  }
  return out;
}

/// Bins the coordinates of m into the cells of `part`.
inline MultiplicityVector project(const MultiplicityVector& m, const Partition& part) {
  MultiplicityVector out;
  for (const auto& [index, count] : m.entries()) {
    if (index >= part.cell_of.size()) {
      throw PreconditionError("project: atom " + std::to_string(index) + " is not mapped by the partition");
    }
    out.add(part.cell_of[index], count);
  }
  return out;
}

/// Multivariate hypergeometric pmf prod_j C(m_j, i_j) / C(|m|, |i|), in log space.
inline double hypergeom_pmf(const MultiplicityVector& i, const MultiplicityVector& m) {
  if (!leq(i, m)) throw PreconditionError("hypergeom_pmf requires 0 <= i <= m");
  double log_p = -log_choose(m.total(), i.total());
  for (const auto& [index, count] : m.entries()) log_p += log_choose(count, i[index]);
  return std::exp(log_p);
}

/// Integer-arithmetic hypergeometric pmf; requires |m| <= 62.
inline double hypergeom_pmf_exact(const MultiplicityVector& i, const MultiplicityVector& m) {
  if (!leq(i, m)) throw PreconditionError("hypergeom_pmf requires 0 <= i <= m");
  if (m.total() > 62) throw PreconditionError("hypergeom_pmf_exact supports |m| <= 62");
  unsigned __int128 numerator = 1;
  for (const auto& [index, count] : m.entries()) numerator *= choose_exact(count, i[index]);
  const std::uint64_t denominator = choose_exact(m.total(), i.total());
  return static_cast<double>(static_cast<long double>(numerator) / static_cast<long double>(denominator));
}

/// Binomial pmf C(n,k) p^k (1-p)^(n-k), evaluated in log space.
inline double binom_pmf(std::uint64_t k, std::uint64_t n, double p) {
  if (k > n) throw PreconditionError("binom_pmf requires 0 <= k <= n");
  if (!(p >= 0.0 && p <= 1.0)) throw PreconditionError("binom_pmf requires p in [0,1]");
  if (p == 0.0) return k == 0 ? 1.0 : 0.0;
  if (p == 1.0) return k == n ? 1.0 : 0.0;
  const double log_p = log_choose(n, k) + static_cast<double>(k) * std::log(p) +
                       static_cast<double>(n - k) * std::log1p(-p);
  return std::exp(log_p);
}

/// Adds the multiplicities of a new sample to m. New atoms are expected to
/// carry fresh (appended) registry indices already.
inline MultiplicityVector t_update(const MultiplicityVector& observed, const MultiplicityVector& m) {
  return m + observed;
}

}  // namespace measure_filter
