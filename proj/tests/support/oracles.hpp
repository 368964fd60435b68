#pragma once

// Reference implementations used to check the library. They evaluate the
// textbook formulas directly in long double, without sharing any code path
// with src/.

#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <vector>

#include "dfms/losses.hpp"

namespace dfms::testing {

using dfms::losses::Matrix;
using dfms::losses::MatrixView;

inline Matrix random_matrix(std::mt19937_64& rng, std::size_t rows, std::size_t cols, double lo, double hi) {
  std::uniform_real_distribution<double> u(lo, hi);
  Matrix m(rows, cols);
  for (auto& v : m.values) v = u(rng);
  return m;
}

/// Strictly positive rows summing to one.
inline Matrix random_probability_rows(std::mt19937_64& rng, std::size_t rows, std::size_t cols) {
  std::uniform_real_distribution<double> u(0.05, 1.0);
  Matrix m(rows, cols);
  for (std::size_t r = 0; r < rows; ++r) {
    long double sum = 0;
    for (std::size_t c = 0; c < cols; ++c) sum += (m(r, c) = u(rng));
    for (std::size_t c = 0; c < cols; ++c) m(r, c) = static_cast<double>(m(r, c) / sum);
  }
  return m;
}

inline std::vector<std::int64_t> random_labels(std::mt19937_64& rng, std::size_t n, std::size_t k) {
  std::uniform_int_distribution<std::int64_t> u(0, static_cast<std::int64_t>(k) - 1);
  std::vector<std::int64_t> labels(n);
  for (auto& l : labels) l = u(rng);
  return labels;
}

inline std::vector<double> random_unit_interval(std::mt19937_64& rng, std::size_t n, double lo = 0.02,
                                                double hi = 0.98) {
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<double> v(n);
  for (auto& x : v) x = u(rng);
  return v;
}

inline double oracle_softmax_entry(const Matrix& s, std::size_t r, std::size_t c) {
  long double denom = 0;
  for (std::size_t j = 0; j < s.cols; ++j) denom += std::exp(static_cast<long double>(s(r, j)));
  return static_cast<double>(std::exp(static_cast<long double>(s(r, c))) / denom);
}

inline double oracle_ce(const Matrix& s, const std::vector<std::int64_t>& labels) {
  long double total = 0;
  for (std::size_t r = 0; r < s.rows; ++r) {
    long double denom = 0;
    for (std::size_t j = 0; j < s.cols; ++j) denom += std::exp(static_cast<long double>(s(r, j)));
    total += -std::log(std::exp(static_cast<long double>(s(r, static_cast<std::size_t>(labels[r])))) / denom);
  }
  return static_cast<double>(total / s.rows);
}

inline double oracle_adv_real(const std::vector<double>& d) {
  long double t = 0;
  for (double x : d) t += std::log(static_cast<long double>(x));
  return static_cast<double>(t / d.size());
}

inline double oracle_adv_fake(const std::vector<double>& d) {
  long double t = 0;
  for (double x : d) t += std::log(1.0L - x);
  return static_cast<double>(t / d.size());
}

inline double oracle_class_div(const Matrix& p) {
  long double total = 0;
  for (std::size_t j = 0; j < p.cols; ++j) {
    long double a = 0;
    for (std::size_t i = 0; i < p.rows; ++i) a += p(i, j);
    a /= p.rows;
    if (a > 0) total += a * std::log(a);
  }
  return static_cast<double>(total);
}

inline Matrix oracle_victim_logits(const Matrix& v) {
  Matrix out(v.rows, v.cols);
  for (std::size_t r = 0; r < v.rows; ++r) {
    long double mean = 0;
    for (std::size_t c = 0; c < v.cols; ++c) mean += std::log(static_cast<long double>(v(r, c)));
    mean /= v.cols;
    for (std::size_t c = 0; c < v.cols; ++c) out(r, c) = static_cast<double>(std::log(static_cast<long double>(v(r, c))) - mean);
  }
  return out;
}

inline double oracle_l1(const Matrix& v, const Matrix& clone_logits) {
  const Matrix vl = oracle_victim_logits(v);
  long double total = 0;
  for (std::size_t r = 0; r < v.rows; ++r) {
    for (std::size_t c = 0; c < v.cols; ++c) total += std::fabs(static_cast<long double>(vl(r, c)) - clone_logits(r, c));
  }
  return static_cast<double>(total / v.rows);
}

inline double oracle_kl(const Matrix& v, const Matrix& c) {
  long double total = 0;
  for (std::size_t r = 0; r < v.rows; ++r) {
    for (std::size_t j = 0; j < v.cols; ++j) {
      const long double a = v(r, j);
      if (a > 0) total += a * std::log(a / static_cast<long double>(c(r, j)));
    }
  }
  return static_cast<double>(total / v.rows);
}

inline double oracle_query_bound(double q, double delta, double rho) {
  const long double m = 1.0L - 2.0L * rho;
  return static_cast<double>(8.0L / (m * m) * q * std::log(static_cast<long double>(q) / delta));
}

inline double oracle_normalized_entropy(const std::vector<std::int64_t>& counts) {
  long double n = 0;
  for (auto c : counts) n += c;
  long double h = 0;
  for (auto c : counts) {
    if (c > 0) h -= (c / n) * std::log(c / n);
  }
  return static_cast<double>(h / std::log(static_cast<long double>(counts.size())));
}

inline double relative_error(double got, double want) {
  const double scale = std::max(std::fabs(want), 1e-12);
  return std::fabs(got - want) / scale;
}

/// Central differences of f at x with step h.
inline std::vector<double> finite_difference(const std::function<double(const std::vector<double>&)>& f,
                                             std::vector<double> x, double h = 1e-4) {
  std::vector<double> g(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double keep = x[i];
    x[i] = keep + h;
    const double up = f(x);
    x[i] = keep - h;
    const double down = f(x);
    x[i] = keep;
    g[i] = (up - down) / (2.0 * h);
  }
  return g;
}

/// ||a - b|| / max(||a||, ||b||).
inline double gradient_relative_error(const std::vector<double>& a, const std::vector<double>& b) {
  long double diff = 0, na = 0, nb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    diff += (a[i] - b[i]) * static_cast<long double>(a[i] - b[i]);
    na += a[i] * static_cast<long double>(a[i]);
    nb += b[i] * static_cast<long double>(b[i]);
  }
  const long double scale = std::sqrt(std::max(na, nb));
  if (scale == 0) return 0.0;
  return static_cast<double>(std::sqrt(diff) / scale);
}

/// Vector-Jacobian product of the row softmax: maps dL/dp to dL/dlogits.
inline std::vector<double> softmax_vjp(const Matrix& p, const Matrix& grad_p) {
  std::vector<double> out(p.values.size());
  for (std::size_t r = 0; r < p.rows; ++r) {
    long double dot = 0;
    for (std::size_t c = 0; c < p.cols; ++c) dot += p(r, c) * grad_p(r, c);
    for (std::size_t c = 0; c < p.cols; ++c) {
      out[r * p.cols + c] = static_cast<double>(p(r, c) * (grad_p(r, c) - dot));
    }
  }
  return out;
}

inline Matrix as_matrix(const std::vector<double>& values, std::size_t rows, std::size_t cols) {
  Matrix m(rows, cols);
  m.values = values;
  return m;
}

}  // namespace dfms::testing
