#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace beliefs {

struct ShapeError : std::runtime_error {
  explicit ShapeError(const std::string& what) : std::runtime_error(what) {}
};

struct SolverError : std::runtime_error {
  explicit SolverError(const std::string& what) : std::runtime_error(what) {}
};

struct CapacityError : std::runtime_error {
  explicit CapacityError(const std::string& what) : std::runtime_error(what) {}
};

/// Probability vector over a finite support.
struct Distribution {
  std::vector<double> p;

  Distribution() = default;
  explicit Distribution(std::vector<double> mass) : p(std::move(mass)) {}

  std::size_t size() const { return p.size(); }
  double operator[](std::size_t i) const { return p[i]; }
  double& operator[](std::size_t i) { return p[i]; }

  static Distribution dirac(std::size_t i, std::size_t n);
  static Distribution uniform(std::size_t n);

  /// Entries nonnegative and total mass 1 within tol.
  bool is_valid(double tol = 1e-9) const;
  /// Rescale to sum 1. Throws ShapeError on nonpositive total.
  void normalize();
};

bool operator==(const Distribution& a, const Distribution& b);

/// Symmetric metric matrix over a finite support, zero on the diagonal.
struct GroundMetric {
  std::size_t n = 0;
  std::vector<double> d;  // row-major n*n

  GroundMetric() = default;
  GroundMetric(std::size_t n_, std::vector<double> dist) : n(n_), d(std::move(dist)) {}

  double operator()(std::size_t i, std::size_t j) const { return d[i * n + j]; }

  /// 1 off the diagonal, 0 on it.
  static GroundMetric discrete(std::size_t n);
  /// Bit-count distance between indices; n must be a power of two.
  static GroundMetric hamming(std::size_t n);

  /// Checks zero diagonal, symmetry and the triangle inequality within tol.
  /// Throws ShapeError on the first violation.
  void check(double tol = 1e-9) const;
};

/// KL divergence sum p_i log(p_i/q_i), with 0 log 0 = 0.  Returns +infinity
/// when p puts mass outside the support of q.
double kl(const Distribution& p, const Distribution& q);

/// Total variation distance, half the L1 norm.
double tv(const Distribution& p, const Distribution& q);

/// Transport plan with marginals p (rows) and q (columns).
struct Coupling {
  std::size_t rows = 0, cols = 0;
  std::vector<double> flow;  // row-major rows*cols

  double at(std::size_t i, std::size_t j) const { return flow[i * cols + j]; }
  Distribution row_marginal() const;
  Distribution col_marginal() const;
  double cost(const GroundMetric& d) const;
};

struct OtResult {
  double cost = 0.0;
  Coupling coupling;
};

/// Exact optimal transport between p and q under the ground metric d,
/// solved by the transportation simplex with Bland's anti-cycling rule.
/// Throws SolverError if the pivot cap is exceeded (with residual data in
/// the message) and ShapeError on dimension mismatch.
OtResult wasserstein(const Distribution& p, const Distribution& q, const GroundMetric& d);

/// Wasserstein distance under the discrete metric; equals tv(p, q) but is
/// computed through the transport solver.
double wasserstein_discrete(const Distribution& p, const Distribution& q);

}  // namespace beliefs
