#ifndef POPTAVERIF_GRID_HPP
#define POPTAVERIF_GRID_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <string>
#include <vector>

#include "poptaverif/common.hpp"

namespace poptaverif {

/// Resolution-M grid over the belief simplex of one observation class.
struct GridSpec {
  int dim = 1;         // N: number of states in the class
  int resolution = 1;  // M

  void check() const {
    if (dim < 1 || resolution < 1)
      throw ContractError("grid requires dim >= 1 and resolution >= 1");
  }
};

/// Integer count vector v with sum(v) = M; denotes the belief v / M.
struct GridPoint {
  std::vector<int> counts;

  bool operator==(const GridPoint& o) const { return counts == o.counts; }
  bool operator<(const GridPoint& o) const { return counts < o.counts; }
};

struct Corner {
  GridPoint point;
  double weight = 0.0;
};

/// Convex combination of at most N neighbouring grid points rebuilding a belief.
struct CornerWeights {
  std::vector<Corner> entries;
};

namespace detail {

inline std::uint64_t checked_mul(std::uint64_t a, std::uint64_t b) {
  if (a != 0 && b > std::numeric_limits<std::uint64_t>::max() / a)
    throw CapacityError("grid point count overflows 64 bits");
  return a * b;
}

inline std::uint64_t binomial(std::uint64_t n, std::uint64_t k) {
  if (k > n) return 0;
  k = std::min(k, n - k);
  std::uint64_t result = 1;
  for (std::uint64_t i = 1; i <= k; ++i) {
    // multiply first, divide after; the running value stays integral
    result = checked_mul(result, n - k + i) / i;
  }
  return result;
}

}  // namespace detail

/// K = (M+N-1)! / (M! (N-1)!) — the number of resolution-M grid points.
inline std::uint64_t grid_count(const GridSpec& spec) {
  spec.check();
  const std::uint64_t m = spec.resolution, n = spec.dim;
  return detail::binomial(m + n - 1, n - 1);
}

/// All compositions of M into N parts, in lexicographic order.
inline std::vector<GridPoint> enumerate_grid(const GridSpec& spec,
                                             std::uint64_t limit = 50'000'000) {
  const std::uint64_t total = grid_count(spec);
  if (total > limit)
    throw CapacityError("grid of " + std::to_string(total) +
                        " points exceeds the configured limit of " + std::to_string(limit));
  std::vector<GridPoint> out;
  out.reserve(static_cast<std::size_t>(total));
  std::vector<int> v(spec.dim, 0);
  v.back() = spec.resolution;
  for (;;) {
    out.push_back(GridPoint{v});
    // next composition in lex order: bump the rightmost position (except the
    // last) that still has mass to draw from the tail
    int i = spec.dim - 2;
    while (i >= 0) {
      int tail = 0;
      for (int j = i + 1; j < spec.dim; ++j) tail += v[j];
      if (tail > 0) break;
      --i;
    }
    if (i < 0) break;
    ++v[i];
    int rest = 0;
    for (int j = i + 1; j < spec.dim; ++j) {
      rest += v[j];
      v[j] = 0;
    }
    v.back() = rest - 1;
  }
  return out;
}

/// Lexicographic rank of a grid point, matching enumerate_grid order.
inline std::size_t grid_rank(const GridPoint& g, const GridSpec& spec) {
  std::uint64_t rank = 0;
  int remaining = spec.resolution;
  for (int i = 0; i + 1 < spec.dim; ++i) {
    const int parts_after = spec.dim - i - 1;
    for (int c = 0; c < g.counts[i]; ++c)
      rank += detail::binomial(static_cast<std::uint64_t>(remaining - c) + parts_after - 1,
                               parts_after - 1);
    remaining -= g.counts[i];
  }
  return static_cast<std::size_t>(rank);
}

/// Step 1 of the representation: x(i) = M * sum_{j>=i} b(j). x(1) is forced
/// to exactly M and x is non-increasing.
inline std::vector<double> to_cdf(const std::vector<double>& b, int resolution) {
  double total = std::accumulate(b.begin(), b.end(), 0.0);
  if (std::abs(total - 1.0) > 1e-9)
    throw ContractError("belief vector sums to " + std::to_string(total));
  std::vector<double> x(b.size());
  double suffix = 0.0;
  for (int i = static_cast<int>(b.size()) - 1; i >= 0; --i) {
    suffix += b[i] / total;
    x[i] = resolution * suffix;
  }
  if (!x.empty()) x[0] = static_cast<double>(resolution);
  return x;
}

/// Inverse of the cdf transform on integer vectors:
/// q -> (1/M)(q(1)-q(2), ..., q(N-1)-q(N), q(N)).
inline std::vector<double> from_cdf(const std::vector<int>& q, int resolution) {
  if (q.empty() || q.front() != resolution)
    throw ContractError("cdf vector must start with the resolution");
  for (std::size_t i = 0; i + 1 < q.size(); ++i)
    if (q[i] < q[i + 1]) throw ContractError("cdf vector must be non-increasing");
  if (q.back() < 0) throw ContractError("cdf vector must be non-negative");
  std::vector<double> b(q.size());
  for (std::size_t i = 0; i + 1 < q.size(); ++i)
    b[i] = static_cast<double>(q[i] - q[i + 1]) / resolution;
  b.back() = static_cast<double>(q.back()) / resolution;
  return b;
}

namespace detail {

inline GridPoint grid_point_from_cdf(const std::vector<int>& q, int resolution) {
  GridPoint g;
  g.counts.resize(q.size());
  for (std::size_t i = 0; i + 1 < q.size(); ++i) g.counts[i] = q[i] - q[i + 1];
  g.counts.back() = q.back();
  (void)resolution;
  return g;
}

}  // namespace detail

/// Freudenthal triangulation: expresses b as a convex combination of at most
/// N neighbouring grid points. Ties in the fractional parts are broken toward
/// the smaller index so results are reproducible; near-integer cdf values are
/// snapped before flooring to keep representation noise from flipping corners.
inline CornerWeights triangulate(const std::vector<double>& b, const GridSpec& spec) {
  spec.check();
  if (static_cast<int>(b.size()) != spec.dim)
    throw ContractError("belief vector length does not match the grid dimension");
  const int n = spec.dim;
  const std::vector<double> x = to_cdf(b, spec.resolution);

  std::vector<int> v(n);
  std::vector<double> d(n);
  for (int i = 0; i < n; ++i) {
    const double nearest = std::round(x[i]);
    if (std::abs(x[i] - nearest) <= tol::snap) {
      v[i] = static_cast<int>(nearest);
      d[i] = 0.0;
    } else {
      v[i] = static_cast<int>(std::floor(x[i]));
      d[i] = x[i] - v[i];
    }
  }

  std::vector<int> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  std::stable_sort(perm.begin(), perm.end(), [&](int a, int bb) { return d[a] > d[bb]; });

  // lambda_1 sits on the floor vector; each later corner adds one unit vector
  // in permutation order
  std::vector<double> lambda(n);
  double tail = 0.0;
  for (int i = 1; i < n; ++i) {
    lambda[i] = d[perm[i - 1]] - d[perm[i]];
    tail += lambda[i];
  }
  lambda[0] = 1.0 - tail;

  CornerWeights out;
  std::vector<int> q = v;
  for (int i = 0; i < n; ++i) {
    if (i > 0) ++q[perm[i - 1]];
    if (lambda[i] < -tol::dist_sum)
      throw ContractError("negative triangulation weight " + std::to_string(lambda[i]));
    if (lambda[i] <= tol::prune) continue;  // includes vectors that left G'
    out.entries.push_back({detail::grid_point_from_cdf(q, spec.resolution), lambda[i]});
  }
  return out;
}

/// Barycentric interpolation of grid values. The lookup throws if a corner is
/// missing from the table.
template <typename ValueLookup>
inline double interpolate(const CornerWeights& weights, ValueLookup&& values) {
  double total = 0.0;
  for (const auto& corner : weights.entries) total += corner.weight * values(corner.point);
  return total;
}

}  // namespace poptaverif

#endif
