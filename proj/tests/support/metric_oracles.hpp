#pragma once

// Brute-force references for the distribution metrics. These deliberately
// take different routes from the library: permutation enumeration and CDF
// integration for W1, an explicit pooled Gram matrix for MMD.

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <vector>

namespace cftk::testing {

// Min-cost perfect matching over all n! assignments (equal sizes only).
inline double w1_matching(std::vector<double> a, const std::vector<double>& b) {
  std::vector<std::size_t> perm(b.size());
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  double best = std::numeric_limits<double>::infinity();
  do {
    double cost = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) cost += std::abs(a[i] - b[perm[i]]);
    best = std::min(best, cost);
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best / static_cast<double>(a.size());
}

// Integral of |F_a(t) - F_b(t)| over the real line, piecewise on the pooled support.
inline double w1_cdf_integral(const std::vector<double>& a, const std::vector<double>& b) {
  std::vector<double> pts(a);
  pts.insert(pts.end(), b.begin(), b.end());
  std::sort(pts.begin(), pts.end());
  auto cdf = [](const std::vector<double>& s, double t) {
    double c = 0.0;
    for (double v : s) c += v <= t ? 1.0 : 0.0;
    return c / static_cast<double>(s.size());
  };
  double total = 0.0;
  for (std::size_t k = 0; k + 1 < pts.size(); ++k) {
    total += std::abs(cdf(a, pts[k]) - cdf(b, pts[k])) * (pts[k + 1] - pts[k]);
  }
  return total;
}

// MMD^2 from an explicit Gram matrix of the pooled sample.
inline double mmd2_double_sum(const std::vector<double>& a, const std::vector<double>& b, double h) {
  std::vector<double> z(a);
  z.insert(z.end(), b.begin(), b.end());
  const std::size_t n = a.size(), m = b.size(), N = n + m;
  std::vector<std::vector<double>> k(N, std::vector<double>(N));
  for (std::size_t i = 0; i < N; ++i)
    for (std::size_t j = 0; j < N; ++j) k[i][j] = std::exp(-std::pow(z[i] - z[j], 2) / (2 * h * h));
  double aa = 0, bb = 0, ab = 0;
  for (std::size_t i = 0; i < N; ++i)
    for (std::size_t j = 0; j < N; ++j) {
      const bool ia = i < n, ja = j < n;
      if (ia && ja) aa += k[i][j];
      else if (!ia && !ja) bb += k[i][j];
      else if (ia && !ja) ab += k[i][j];
    }
  const double dn = static_cast<double>(n), dm = static_cast<double>(m);
  return aa / (dn * dn) + bb / (dm * dm) - 2.0 * ab / (dn * dm);
}

}  // namespace cftk::testing
