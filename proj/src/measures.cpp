#include "beliefs/measures.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>

namespace beliefs {

Distribution Distribution::dirac(std::size_t i, std::size_t n) {
  Distribution out;
  out.p.assign(n, 0.0);
  out.p.at(i) = 1.0;
  return out;
}

Distribution Distribution::uniform(std::size_t n) {
  Distribution out;
  out.p.assign(n, 1.0 / static_cast<double>(n));
  return out;
}

bool Distribution::is_valid(double tol) const {
  double total = 0.0;
  for (double x : p) {
    if (x < 0.0) return false;
    total += x;
  }
  return std::abs(total - 1.0) <= tol;
}

void Distribution::normalize() {
  double total = std::accumulate(p.begin(), p.end(), 0.0);
  if (!(total > 0.0)) throw ShapeError("cannot normalize: total mass " + std::to_string(total));
  for (double& x : p) x /= total;
}

bool operator==(const Distribution& a, const Distribution& b) { return a.p == b.p; }

GroundMetric GroundMetric::discrete(std::size_t n) {
  GroundMetric m;
  m.n = n;
  m.d.assign(n * n, 1.0);
  for (std::size_t i = 0; i < n; ++i) m.d[i * n + i] = 0.0;
  return m;
}

GroundMetric GroundMetric::hamming(std::size_t n) {
  if (n == 0 || (n & (n - 1)) != 0) throw ShapeError("hamming metric needs a power-of-two support");
  GroundMetric m;
  m.n = n;
  m.d.assign(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      m.d[i * n + j] = static_cast<double>(std::popcount(i ^ j));
  return m;
}

void GroundMetric::check(double tol) const {
  for (std::size_t i = 0; i < n; ++i) {
    if (std::abs((*this)(i, i)) > tol)
      throw ShapeError("metric diagonal nonzero at " + std::to_string(i));
    for (std::size_t j = 0; j < n; ++j) {
      if ((*this)(i, j) < -tol) throw ShapeError("negative metric entry");
      if (std::abs((*this)(i, j) - (*this)(j, i)) > tol)
        throw ShapeError("metric not symmetric at (" + std::to_string(i) + "," + std::to_string(j) + ")");
    }
  }
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      for (std::size_t k = 0; k < n; ++k)
        if ((*this)(i, j) > (*this)(i, k) + (*this)(k, j) + tol)
          throw ShapeError("triangle inequality fails at (" + std::to_string(i) + "," +
                           std::to_string(j) + ") via " + std::to_string(k));
}

double kl(const Distribution& p, const Distribution& q) {
  if (p.size() != q.size())
    throw ShapeError("kl: size mismatch " + std::to_string(p.size()) + " vs " + std::to_string(q.size()));
  double out = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] <= 0.0) continue;  // 0 log 0 = 0
    if (q[i] <= 0.0) return std::numeric_limits<double>::infinity();
    out += p[i] * std::log(p[i] / q[i]);
  }
  return out;
}

double tv(const Distribution& p, const Distribution& q) {
  if (p.size() != q.size())
    throw ShapeError("tv: size mismatch " + std::to_string(p.size()) + " vs " + std::to_string(q.size()));
  double out = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) out += std::abs(p[i] - q[i]);
  return 0.5 * out;
}

Distribution Coupling::row_marginal() const {
  Distribution out;
  out.p.assign(rows, 0.0);
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < cols; ++j) out.p[i] += at(i, j);
  return out;
}

Distribution Coupling::col_marginal() const {
  Distribution out;
  out.p.assign(cols, 0.0);
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < cols; ++j) out.p[j] += at(i, j);
  return out;
}

double Coupling::cost(const GroundMetric& d) const {
  double out = 0.0;
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < cols; ++j) out += at(i, j) * d(i, j);
  return out;
}

namespace {

// Transportation simplex over the cells of a reduced (positive-mass) problem.
// The basis is maintained as a spanning tree of the bipartite supply/demand
// graph; Bland's rule picks the lexicographically first improving cell and the
// lexicographically first leaving cell among ties, which excludes cycling.
class TransportSimplex {
 public:
  TransportSimplex(std::vector<double> supply, std::vector<double> demand,
                   std::vector<double> cost, std::size_t n_cols)
      : a_(std::move(supply)), b_(std::move(demand)), c_(std::move(cost)),
        m_(a_.size()), n_(n_cols), flow_(m_ * n_, 0.0), basic_(m_ * n_, false) {}

  void solve() {
    northwest_corner();
    const std::size_t cap = 2000 * (m_ + n_) * (m_ + n_) + 10000;
    for (std::size_t it = 0; it < cap; ++it) {
      compute_duals();
      std::size_t ei = 0, ej = 0;
      if (!find_entering(ei, ej)) return;
      pivot(ei, ej);
    }
    char buf[160];
    std::snprintf(buf, sizeof(buf),
                  "transport simplex: pivot cap exceeded (m=%zu n=%zu, best reduced cost %.3e)",
                  m_, n_, last_reduced_);
    throw SolverError(buf);
  }

  const std::vector<double>& flow() const { return flow_; }

 private:
  std::vector<double> a_, b_, c_;
  std::size_t m_, n_;
  std::vector<double> flow_;
  std::vector<bool> basic_;
  std::vector<double> u_, v_;
  double last_reduced_ = 0.0;

  double cost(std::size_t i, std::size_t j) const { return c_[i * n_ + j]; }

  void northwest_corner() {
    std::vector<double> rem_a = a_, rem_b = b_;
    std::size_t i = 0, j = 0;
    for (std::size_t placed = 0; placed < m_ + n_ - 1; ++placed) {
      basic_[i * n_ + j] = true;
      double move = std::min(rem_a[i], rem_b[j]);
      flow_[i * n_ + j] = move;
      rem_a[i] -= move;
      rem_b[j] -= move;
      if (placed + 1 == m_ + n_ - 1) break;
      // move down when the row is exhausted (ties go down; the degenerate
      // zero lands in the next cell and the basis stays a tree)
      if (j + 1 >= n_)
        ++i;
      else if (i + 1 >= m_)
        ++j;
      else if (rem_a[i] <= rem_b[j])
        ++i;
      else
        ++j;
    }
  }

  // Duals from u_0 = 0 propagated over the basis tree.
  void compute_duals() {
    u_.assign(m_, std::numeric_limits<double>::quiet_NaN());
    v_.assign(n_, std::numeric_limits<double>::quiet_NaN());
    u_[0] = 0.0;
    std::vector<std::size_t> stack = {0};  // node ids: rows [0,m), cols [m, m+n)
    while (!stack.empty()) {
      std::size_t node = stack.back();
      stack.pop_back();
      if (node < m_) {
        for (std::size_t j = 0; j < n_; ++j)
          if (basic_[node * n_ + j] && std::isnan(v_[j])) {
            v_[j] = cost(node, j) - u_[node];
            stack.push_back(m_ + j);
          }
      } else {
        std::size_t j = node - m_;
        for (std::size_t i = 0; i < m_; ++i)
          if (basic_[i * n_ + j] && std::isnan(u_[i])) {
            u_[i] = cost(i, j) - v_[j];
            stack.push_back(i);
          }
      }
    }
  }

  bool find_entering(std::size_t& ei, std::size_t& ej) {
    constexpr double kTol = 1e-12;
    last_reduced_ = 0.0;
    for (std::size_t i = 0; i < m_; ++i)
      for (std::size_t j = 0; j < n_; ++j) {
        if (basic_[i * n_ + j]) continue;
        double r = cost(i, j) - u_[i] - v_[j];
        if (r < last_reduced_) last_reduced_ = r;
        if (r < -kTol) {  // Bland: first improving cell in index order
          ei = i;
          ej = j;
          return true;
        }
      }
    return false;
  }

  // Cycle = entering cell + unique tree path from its row to its column.
  // Signs alternate starting with + on the entering cell.
  void pivot(std::size_t ei, std::size_t ej) {
    const std::size_t nodes = m_ + n_;
    std::vector<int> parent(nodes, -1);
    std::vector<char> seen(nodes, 0);
    std::vector<std::size_t> queue = {ei};
    seen[ei] = 1;
    for (std::size_t qi = 0; qi < queue.size(); ++qi) {
      std::size_t node = queue[qi];
      if (node == m_ + ej) break;
      if (node < m_) {
        for (std::size_t j = 0; j < n_; ++j)
          if (basic_[node * n_ + j] && !seen[m_ + j]) {
            seen[m_ + j] = 1;
            parent[m_ + j] = static_cast<int>(node);
            queue.push_back(m_ + j);
          }
      } else {
        std::size_t j = node - m_;
        for (std::size_t i = 0; i < m_; ++i)
          if (basic_[i * n_ + j] && !seen[i]) {
            seen[i] = 1;
            parent[i] = static_cast<int>(node);
            queue.push_back(i);
          }
      }
    }
    if (!seen[m_ + ej]) throw SolverError("transport simplex: basis tree disconnected");

    // path cells from column ej back to row ei
    std::vector<std::pair<std::size_t, std::size_t>> path;
    std::size_t node = m_ + ej;
    while (node != ei) {
      std::size_t par = static_cast<std::size_t>(parent[node]);
      if (node >= m_)
        path.emplace_back(par, node - m_);
      else
        path.emplace_back(node, par - m_);
      node = par;
    }
    std::reverse(path.begin(), path.end());  // now runs row ei -> ... -> col ej

    // odd positions in the cycle (after the + entering cell) lose flow
    double delta = std::numeric_limits<double>::infinity();
    std::size_t leave = 0;
    for (std::size_t k = 0; k < path.size(); k += 2) {
      double f = flow_[path[k].first * n_ + path[k].second];
      if (f < delta || (f == delta && path[k] < path[leave])) {
        delta = f;
        leave = k;
      }
    }
    flow_[ei * n_ + ej] += delta;
    for (std::size_t k = 0; k < path.size(); ++k) {
      double sign = (k % 2 == 0) ? -1.0 : 1.0;
      flow_[path[k].first * n_ + path[k].second] += sign * delta;
    }
    basic_[ei * n_ + ej] = true;
    basic_[path[leave].first * n_ + path[leave].second] = false;
    flow_[path[leave].first * n_ + path[leave].second] = 0.0;
  }
};

}  // namespace

OtResult wasserstein(const Distribution& p, const Distribution& q, const GroundMetric& d) {
  if (p.size() != q.size() || p.size() != d.n)
    throw ShapeError("wasserstein: shapes disagree (p=" + std::to_string(p.size()) +
                     ", q=" + std::to_string(q.size()) + ", d=" + std::to_string(d.n) + ")");
  const std::size_t n = p.size();

  // strip zero-mass points; the reduced problem keeps the basis nondegenerate
  // at the boundary and maps back losslessly
  std::vector<std::size_t> rows, cols;
  for (std::size_t i = 0; i < n; ++i)
    if (p[i] > 0.0) rows.push_back(i);
  for (std::size_t j = 0; j < n; ++j)
    if (q[j] > 0.0) cols.push_back(j);
  if (rows.empty() || cols.empty()) throw ShapeError("wasserstein: empty distribution");

  std::vector<double> supply, demand, cost;
  supply.reserve(rows.size());
  demand.reserve(cols.size());
  for (std::size_t i : rows) supply.push_back(p[i]);
  for (std::size_t j : cols) demand.push_back(q[j]);
  cost.resize(rows.size() * cols.size());
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < cols.size(); ++j) cost[i * cols.size() + j] = d(rows[i], cols[j]);

  // balance the tiny drift between the two totals so the simplex closes
  double sa = std::accumulate(supply.begin(), supply.end(), 0.0);
  double sb = std::accumulate(demand.begin(), demand.end(), 0.0);
  if (std::abs(sa - sb) > 1e-6)
    throw ShapeError("wasserstein: total masses differ by " + std::to_string(sa - sb));
  demand.back() += sa - sb;

  TransportSimplex simplex(std::move(supply), std::move(demand), std::move(cost), cols.size());
  simplex.solve();

  OtResult out;
  out.coupling.rows = n;
  out.coupling.cols = n;
  out.coupling.flow.assign(n * n, 0.0);
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < cols.size(); ++j) {
      double f = simplex.flow()[i * cols.size() + j];
      if (f != 0.0) out.coupling.flow[rows[i] * n + cols[j]] = f;
    }
  out.cost = out.coupling.cost(d);
  return out;
}

double wasserstein_discrete(const Distribution& p, const Distribution& q) {
  if (p.size() != q.size()) throw ShapeError("wasserstein_discrete: size mismatch");
  return wasserstein(p, q, GroundMetric::discrete(p.size())).cost;
}

}  // namespace beliefs
