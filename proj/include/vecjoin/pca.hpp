#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "vecjoin/core.hpp"

namespace vecjoin {

struct PowerIterationOptions {
  int max_iterations = 100;
  double tolerance = 1e-7;
  std::uint64_t seed = 0;
};

struct PrincipalComponents {
  Vector mean;
  std::vector<Vector> components;  // unit length, decreasing eigenvalue
  std::vector<double> eigenvalues;

  double project(VectorView v, std::size_t component) const {
    const Vector& c = components[component];
    double s = 0.0;
    for (std::size_t j = 0; j < c.size(); ++j) s += (v[j] - mean[j]) * c[j];
    return s;
  }
};

/// Top principal components of a sample via power iteration on the sample
/// covariance, deflating after each component. Stops early (returning fewer
/// components) once the residual spectrum is numerically zero.
inline PrincipalComponents principal_components(std::span<const Vector> sample,
                                                std::size_t count,
                                                const PowerIterationOptions& options = {}) {
  PrincipalComponents pc;
  if (sample.empty()) return pc;
  const std::size_t dim = sample.front().size();
  const auto n = static_cast<double>(sample.size());

  pc.mean.assign(dim, 0.0);
  for (const Vector& v : sample)
    for (std::size_t j = 0; j < dim; ++j) pc.mean[j] += v[j];
  for (double& m : pc.mean) m /= n;

  // Upper triangle accumulation, mirrored afterwards.
  std::vector<double> cov(dim * dim, 0.0);
  Vector centered(dim);
  for (const Vector& v : sample) {
    for (std::size_t j = 0; j < dim; ++j) centered[j] = v[j] - pc.mean[j];
    for (std::size_t a = 0; a < dim; ++a) {
      const double ca = centered[a];
      double* row = &cov[a * dim];
      for (std::size_t b = a; b < dim; ++b) row[b] += ca * centered[b];
    }
  }
  double trace = 0.0;
  for (std::size_t a = 0; a < dim; ++a) {
    for (std::size_t b = a; b < dim; ++b) {
      cov[a * dim + b] /= n;
      cov[b * dim + a] = cov[a * dim + b];
    }
    trace += cov[a * dim + a];
  }
  if (!(trace > 0.0)) return pc;

  std::mt19937_64 rng(options.seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  Vector v(dim), next(dim);
  for (std::size_t k = 0; k < std::min(count, dim); ++k) {
    for (double& x : v) x = gauss(rng);
    double norm = 0.0;
    for (double x : v) norm += x * x;
    norm = std::sqrt(norm);
    for (double& x : v) x /= norm;

    double lambda = 0.0;
    for (int it = 0; it < options.max_iterations; ++it) {
      for (std::size_t a = 0; a < dim; ++a) {
        double s = 0.0;
        const double* row = &cov[a * dim];
        for (std::size_t b = 0; b < dim; ++b) s += row[b] * v[b];
        next[a] = s;
      }
      double nn = 0.0;
      for (double x : next) nn += x * x;
      nn = std::sqrt(nn);
      if (!(nn > 0.0)) {
        lambda = 0.0;
        break;
      }
      double delta = 0.0;
      for (std::size_t a = 0; a < dim; ++a) {
        next[a] /= nn;
        delta += (next[a] - v[a]) * (next[a] - v[a]);
      }
      v.swap(next);
      lambda = nn;
      if (std::sqrt(delta) < options.tolerance) break;
    }
    if (lambda <= 1e-12 * trace) break;

    pc.components.push_back(v);
    pc.eigenvalues.push_back(lambda);
    for (std::size_t a = 0; a < dim; ++a)
      for (std::size_t b = 0; b < dim; ++b) cov[a * dim + b] -= lambda * v[a] * v[b];
  }
  return pc;
}

}  // namespace vecjoin
