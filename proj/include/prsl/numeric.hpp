#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <span>
#include <stdexcept>
#include <vector>

namespace prsl::numeric {

inline constexpr double neg_inf = -std::numeric_limits<double>::infinity();

// log(sum(exp(x))) over a span, stable under large negative entries.
inline double logsumexp(std::span<const double> xs) {
  double mx = neg_inf;
  for (double x : xs) mx = std::max(mx, x);
  if (!std::isfinite(mx)) return mx;  // all -inf (or a nan propagates below)
  double acc = 0.0;
  for (double x : xs) acc += std::exp(x - mx);
  return mx + std::log(acc);
}

// Mixed-radix index space over a set of digit sizes. Digit 0 is the most
// significant, so linear index order equals lexicographic order of the
// digit vectors.
class MixedRadix {
 public:
  explicit MixedRadix(std::vector<std::size_t> sizes) : sizes_(std::move(sizes)) {
    strides_.resize(sizes_.size());
    std::size_t s = 1;
    for (std::size_t i = sizes_.size(); i-- > 0;) {
      strides_[i] = s;
      s *= sizes_[i];
    }
    total_ = sizes_.empty() ? 1 : s;
  }

  std::size_t total() const { return total_; }
  std::size_t digits() const { return sizes_.size(); }
  std::size_t size(std::size_t i) const { return sizes_[i]; }
  std::size_t stride(std::size_t i) const { return strides_[i]; }

  void decode(std::size_t index, std::vector<std::size_t>& out) const {
    out.resize(sizes_.size());
    for (std::size_t i = 0; i < sizes_.size(); ++i) {
      out[i] = (index / strides_[i]) % sizes_[i];
    }
  }

  std::size_t encode(std::span<const std::size_t> digitv) const {
    std::size_t idx = 0;
    for (std::size_t i = 0; i < sizes_.size(); ++i) idx += digitv[i] * strides_[i];
    return idx;
  }

  // Odometer step; returns false after the last index wraps to zero.
  bool next(std::vector<std::size_t>& digitv) const {
    for (std::size_t i = sizes_.size(); i-- > 0;) {
      if (++digitv[i] < sizes_[i]) return true;
      digitv[i] = 0;
    }
    return false;
  }

 private:
  std::vector<std::size_t> sizes_;
  std::vector<std::size_t> strides_;
  std::size_t total_ = 1;
};

// Pearson correlation of paired samples.
inline double pearson(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size() || a.size() < 2)
    throw std::invalid_argument("pearson: need two equally sized samples");
  const double n = static_cast<double>(a.size());
  double ma = 0, mb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) { ma += a[i]; mb += b[i]; }
  ma /= n; mb /= n;
  double sab = 0, saa = 0, sbb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double da = a[i] - ma, db = b[i] - mb;
    sab += da * db; saa += da * da; sbb += db * db;
  }
  if (saa == 0.0 || sbb == 0.0)
    throw std::invalid_argument("pearson: zero variance sample");
  return sab / std::sqrt(saa * sbb);
}

inline double median(std::vector<double> xs) {
  if (xs.empty()) throw std::invalid_argument("median: empty sample");
  std::sort(xs.begin(), xs.end());
  const std::size_t n = xs.size();
  return (n % 2 == 1) ? xs[n / 2] : 0.5 * (xs[n / 2 - 1] + xs[n / 2]);
}

// ---------------------------------------------------------------------------
// Regularized incomplete beta function I_x(a, b), continued-fraction form.
// ---------------------------------------------------------------------------

namespace detail {

inline double beta_cont_fraction(double a, double b, double x) {
  constexpr int max_iter = 300;
  constexpr double eps = 3e-16;
  constexpr double fpmin = 1e-300;

  const double qab = a + b;
  const double qap = a + 1.0;
  const double qam = a - 1.0;
  double c = 1.0;
  double d = 1.0 - qab * x / qap;
  if (std::fabs(d) < fpmin) d = fpmin;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= max_iter; ++m) {
    const int m2 = 2 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::fabs(d) < fpmin) d = fpmin;
    c = 1.0 + aa / c;
    if (std::fabs(c) < fpmin) c = fpmin;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::fabs(d) < fpmin) d = fpmin;
    c = 1.0 + aa / c;
    if (std::fabs(c) < fpmin) c = fpmin;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::fabs(del - 1.0) < eps) return h;
  }
  throw std::runtime_error("incomplete beta: continued fraction did not converge");
}

}  // namespace detail

inline double log_beta(double a, double b) {
  return std::lgamma(a) + std::lgamma(b) - std::lgamma(a + b);
}

inline double incomplete_beta(double a, double b, double x) {
  if (a <= 0.0 || b <= 0.0) throw std::invalid_argument("incomplete_beta: a, b must be positive");
  if (x < 0.0 || x > 1.0) throw std::invalid_argument("incomplete_beta: x outside [0, 1]");
  if (x == 0.0) return 0.0;
  if (x == 1.0) return 1.0;
  const double front =
      std::exp(a * std::log(x) + b * std::log1p(-x) - log_beta(a, b));
  // Symmetry pick keeps the continued fraction in its fast-converging region.
  if (x < (a + 1.0) / (a + b + 2.0)) {
    return front * detail::beta_cont_fraction(a, b, x) / a;
  }
  return 1.0 - front * detail::beta_cont_fraction(b, a, 1.0 - x) / b;
}

// ---------------------------------------------------------------------------
// Adaptive Simpson quadrature (test oracles and the beta-parameter solver
// cross-check use this as an independent integration route).
// ---------------------------------------------------------------------------

namespace detail {

template <typename F>
double simpson_rec(const F& f, double lo, double hi, double flo, double fmid, double fhi,
                   double whole, double tol, int depth) {
  const double mid = 0.5 * (lo + hi);
  const double lmid = 0.5 * (lo + mid);
  const double rmid = 0.5 * (mid + hi);
  const double flm = f(lmid);
  const double frm = f(rmid);
  const double left = (mid - lo) / 6.0 * (flo + 4.0 * flm + fmid);
  const double right = (hi - mid) / 6.0 * (fmid + 4.0 * frm + fhi);
  if (depth <= 0 || std::fabs(left + right - whole) < 15.0 * tol) {
    return left + right + (left + right - whole) / 15.0;
  }
  return simpson_rec(f, lo, mid, flo, flm, fmid, left, tol / 2, depth - 1) +
         simpson_rec(f, mid, hi, fmid, frm, fhi, right, tol / 2, depth - 1);
}

}  // namespace detail

template <typename F>
double adaptive_simpson(const F& f, double lo, double hi, double tol = 1e-12, int depth = 40) {
  const double mid = 0.5 * (lo + hi);
  const double flo = f(lo), fmid = f(mid), fhi = f(hi);
  const double whole = (hi - lo) / 6.0 * (flo + 4.0 * fmid + fhi);
  return detail::simpson_rec(f, lo, hi, flo, fmid, fhi, whole, tol, depth);
}

// ---------------------------------------------------------------------------
// Seeded sampling helpers. All simulation randomness funnels through
// mt19937_64 so a run is reproducible from its seed.
// ---------------------------------------------------------------------------

using Rng = std::mt19937_64;

// Stateless mix for deriving independent stream seeds (splitmix64 finalizer).
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t salt) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (salt + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

inline std::size_t uniform_index(Rng& rng, std::size_t lo, std::size_t hi) {
  return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
}

inline double uniform_real(Rng& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

// Flat Dirichlet over m categories: normalized standard exponentials.
inline std::vector<double> sample_flat_dirichlet(Rng& rng, std::size_t m) {
  std::exponential_distribution<double> expo(1.0);
  std::vector<double> v(m);
  double sum = 0.0;
  for (auto& x : v) {
    do { x = expo(rng); } while (x <= 0.0);
    sum += x;
  }
  for (auto& x : v) x /= sum;
  return v;
}

// Density f(x) = 2(1-x) on [0,1] by inverse transform: x = 1 - sqrt(1-u).
inline double sample_triangular_decreasing(Rng& rng) {
  const double u = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
  const double x = 1.0 - std::sqrt(1.0 - u);
  return std::max(x, 1e-12);  // keep strictly positive
}

}  // namespace prsl::numeric
