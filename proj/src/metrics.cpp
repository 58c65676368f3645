#include "mvlab/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numbers>
#include <numeric>
#include <ostream>
#include <sstream>

namespace mvlab {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double pow_cost(double dist, int p) { return p == 1 ? dist : dist * dist; }

void check_pair(const EmpiricalMeasure& mu, const EmpiricalMeasure& nu) {
  if (mu.size() == 0 || nu.size() == 0) throw ConfigError("metric: empty measure");
  if (mu.dim() != nu.dim()) throw ConfigError("metric: dimension mismatch");
  if (std::abs(mu.weights().sum() - nu.weights().sum()) > 1e-12)
    throw ConfigError("metric: total masses differ");
}

std::vector<double> cost_matrix(const EmpiricalMeasure& mu, const EmpiricalMeasure& nu, int p) {
  const Eigen::Index n = mu.size(), m = nu.size();
  std::vector<double> c(static_cast<std::size_t>(n * m));
  const SampleMatrix& x = mu.samples();
  const SampleMatrix& y = nu.samples();
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < m; ++j)
      c[static_cast<std::size_t>(i * m + j)] = pow_cost((x.row(i) - y.row(j)).norm(), p);
  return c;
}

double finish(double cost, int p) { return p == 1 ? cost : std::sqrt(std::max(0.0, cost)); }

}  // namespace

std::string to_string(TransportMethod m) {
  switch (m) {
    case TransportMethod::kSorted1d: return "sorted_1d";
    case TransportMethod::kAssignment: return "assignment";
    case TransportMethod::kMinCostFlow: return "min_cost_flow";
    case TransportMethod::kSinkhorn: return "sinkhorn_debiased";
  }
  return "unknown";
}

// ---------------------------------------------------------------------------
// Exact solvers
// ---------------------------------------------------------------------------

double wasserstein_1d(const EmpiricalMeasure& mu, const EmpiricalMeasure& nu, int p) {
  check_pair(mu, nu);
  if (mu.dim() != 1) throw ConfigError("wasserstein_1d needs d = 1");
  if (p != 1 && p != 2) throw ConfigError("wasserstein: p must be 1 or 2");
  std::vector<double> x(mu.samples().data(), mu.samples().data() + mu.size());
  std::vector<double> y(nu.samples().data(), nu.samples().data() + nu.size());
  if (mu.uniform() && nu.uniform() && mu.size() == nu.size()) {
    std::sort(x.begin(), x.end());
    std::sort(y.begin(), y.end());
    double acc = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) acc += pow_cost(std::abs(x[i] - y[i]), p);
    return finish(acc / static_cast<double>(x.size()), p);
  }
  std::vector<Eigen::Index> ix(x.size()), iy(y.size());
  std::iota(ix.begin(), ix.end(), 0);
  std::iota(iy.begin(), iy.end(), 0);
  std::sort(ix.begin(), ix.end(), [&](auto a, auto b) { return x[a] < x[b]; });
  std::sort(iy.begin(), iy.end(), [&](auto a, auto b) { return y[a] < y[b]; });
  std::size_t a = 0, b = 0;
  double ra = mu.weights()(ix[0]), rb = nu.weights()(iy[0]), acc = 0.0;
  while (a < ix.size() && b < iy.size()) {
    const double mass = std::min(ra, rb);
    acc += mass * pow_cost(std::abs(x[ix[a]] - y[iy[b]]), p);
    ra -= mass;
    rb -= mass;
    if (ra <= 0.0 && ++a < ix.size()) ra = mu.weights()(ix[a]);
    if (rb <= 0.0 && ++b < iy.size()) rb = nu.weights()(iy[b]);
  }
  return finish(acc, p);
}

std::vector<int> solve_assignment(const std::vector<double>& cost, int n) {
  if (static_cast<std::size_t>(n) * n != cost.size()) throw ConfigError("assignment: cost must be n x n");
  // Shortest augmenting paths with dual potentials (1-based, column 0 is a sentinel).
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0), minv(n + 1);
  std::vector<int> match(n + 1, 0), way(n + 1, 0);
  std::vector<char> used(n + 1);
  for (int i = 1; i <= n; ++i) {
    match[0] = i;
    int j0 = 0;
    std::fill(minv.begin(), minv.end(), kInf);
    std::fill(used.begin(), used.end(), 0);
    do {
      used[j0] = 1;
      const int i0 = match[j0];
      const double* row = cost.data() + static_cast<std::size_t>(i0 - 1) * n;
      const double ui = u[i0];
      double delta = kInf;
      int j1 = 0;
      for (int j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = row[j - 1] - ui - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (int j = 0; j <= n; ++j) {
        if (used[j]) {
          u[match[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (match[j0] != 0);
    do {
      const int j1 = way[j0];
      match[j0] = match[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  std::vector<int> col(n);
  for (int j = 1; j <= n; ++j) col[match[j] - 1] = j - 1;
  return col;
}

double solve_transport_flow(const std::vector<double>& cost, const Vector& a, const Vector& b) {
  const auto n = static_cast<int>(a.size());
  const auto m = static_cast<int>(b.size());
  if (static_cast<std::size_t>(n) * m != cost.size()) throw ConfigError("transport: cost shape");
  const double eps = 1e-15;
  std::vector<double> flow(static_cast<std::size_t>(n) * m, 0.0);
  std::vector<double> supply(a.data(), a.data() + n), demand(b.data(), b.data() + m);
  // Node ids: sources 0..n-1, sinks n..n+m-1.
  std::vector<double> pot(n + m, 0.0), dist(n + m);
  std::vector<int> parent(n + m);
  std::vector<char> done(n + m);
  auto c = [&](int i, int j) { return cost[static_cast<std::size_t>(i) * m + j]; };
  double total = 0.0;
  for (int guard = 0; guard < 8 * (n + m) + 100; ++guard) {
    double left = 0.0;
    for (double s : supply) left += s;
    if (left <= 1e-13) break;
    std::fill(dist.begin(), dist.end(), kInf);
    std::fill(parent.begin(), parent.end(), -1);
    std::fill(done.begin(), done.end(), 0);
    for (int i = 0; i < n; ++i)
      if (supply[i] > eps) dist[i] = 0.0;
    // Dense Dijkstra on reduced costs.
    for (int it = 0; it < n + m; ++it) {
      int best = -1;
      double bd = kInf;
      for (int v = 0; v < n + m; ++v)
        if (!done[v] && dist[v] < bd) {
          bd = dist[v];
          best = v;
        }
      if (best < 0) break;
      done[best] = 1;
      if (best < n) {
        const int i = best;
        for (int j = 0; j < m; ++j) {
          if (done[n + j]) continue;
          const double nd = bd + c(i, j) + pot[i] - pot[n + j];
          if (nd < dist[n + j]) {
            dist[n + j] = nd;
            parent[n + j] = i;
          }
        }
      } else {
        const int j = best - n;
        for (int i = 0; i < n; ++i) {
          if (done[i] || flow[static_cast<std::size_t>(i) * m + j] <= eps) continue;
          const double nd = bd - c(i, j) + pot[n + j] - pot[i];
          if (nd < dist[i]) {
            dist[i] = nd;
            parent[i] = best;
          }
        }
      }
    }
    int t = -1;
    for (int j = 0; j < m; ++j)
      if (demand[j] > eps && (t < 0 || dist[n + j] < dist[n + t])) t = j;
    if (t < 0 || dist[n + t] == kInf) throw NumericalError("transport: no augmenting path");
    double maxd = 0.0;
    for (double dv : dist)
      if (dv < kInf) maxd = std::max(maxd, dv);
    for (int v = 0; v < n + m; ++v) pot[v] += dist[v] < kInf ? dist[v] : maxd;
    // Bottleneck along the path.
    double delta = demand[t];
    int v = n + t;
    for (int hops = 0; parent[v] >= 0; ++hops) {
      if (hops > n + m) throw NumericalError("transport: cycle in shortest-path tree");
      const int pv = parent[v];
      if (v < n) delta = std::min(delta, flow[static_cast<std::size_t>(v) * m + (pv - n)]);
      v = pv;
    }
    delta = std::min(delta, supply[v]);
    const int origin = v;
    v = n + t;
    while (parent[v] >= 0) {
      const int pv = parent[v];
      if (v >= n) {
        flow[static_cast<std::size_t>(pv) * m + (v - n)] += delta;
        total += delta * c(pv, v - n);
      } else {
        flow[static_cast<std::size_t>(v) * m + (pv - n)] -= delta;
        total -= delta * c(v, pv - n);
      }
      v = pv;
    }
    supply[origin] -= delta;
    demand[t] -= delta;
  }
  return total;
}

namespace {

double log_sum_exp(const double* v, Eigen::Index n) {
  double mx = -kInf;
  for (Eigen::Index i = 0; i < n; ++i) mx = std::max(mx, v[i]);
  if (mx == -kInf) return mx;
  double s = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) s += std::exp(v[i] - mx);
  return mx + std::log(s);
}

struct SinkhornOut {
  double value = 0.0;
  int iterations = 0;
  double residual = 0.0;
};

// Entropic OT value sum a f + sum b g (log domain). `sym` averages the
// updates for the symmetric self-transport terms.
SinkhornOut sinkhorn_value(const std::vector<double>& c, const Vector& a, const Vector& b,
                           double eps, int max_iter, double tol, bool sym) {
  const Eigen::Index n = a.size(), m = b.size();
  Vector f = Vector::Zero(n), g = Vector::Zero(m);
  const Vector la = a.array().log(), lb = b.array().log();
  std::vector<double> buf(static_cast<std::size_t>(std::max(n, m)));
  SinkhornOut out;
  for (int it = 1; it <= max_iter; ++it) {
    Vector fn(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      for (Eigen::Index j = 0; j < m; ++j)
        buf[j] = (g(j) - c[static_cast<std::size_t>(i * m + j)]) / eps + lb(j);
      fn(i) = -eps * log_sum_exp(buf.data(), m);
    }
    f = sym ? Vector(0.5 * (f + fn)) : fn;
    if (sym) {
      g = f;
    } else {
      for (Eigen::Index j = 0; j < m; ++j) {
        for (Eigen::Index i = 0; i < n; ++i)
          buf[i] = (f(i) - c[static_cast<std::size_t>(i * m + j)]) / eps + la(i);
        g(j) = -eps * log_sum_exp(buf.data(), n);
      }
    }
    // Row-marginal error of the current plan.
    double err = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      double row = 0.0;
      for (Eigen::Index j = 0; j < m; ++j)
        row += std::exp((f(i) + g(j) - c[static_cast<std::size_t>(i * m + j)]) / eps + lb(j));
      err += std::abs(a(i) * row - a(i));
    }
    out.iterations = it;
    out.residual = err;
    if (err < tol) break;
  }
  out.value = a.dot(f) + b.dot(g);
  return out;
}

double median_cost(const std::vector<double>& c) {
  std::vector<double> s;
  const std::size_t stride = std::max<std::size_t>(1, c.size() / 100000);
  for (std::size_t i = 0; i < c.size(); i += stride) s.push_back(c[i]);
  std::nth_element(s.begin(), s.begin() + s.size() / 2, s.end());
  return s[s.size() / 2];
}

}  // namespace

TransportResult wasserstein(const EmpiricalMeasure& mu, const EmpiricalMeasure& nu, int p,
                            const TransportOptions& options) {
  check_pair(mu, nu);
  if (p != 1 && p != 2) throw ConfigError("wasserstein: p must be 1 or 2");
  TransportResult res;
  if (mu.dim() == 1) {
    res.value = wasserstein_1d(mu, nu, p);
    res.method = TransportMethod::kSorted1d;
    return res;
  }
  const Eigen::Index n = mu.size(), m = nu.size();
  if (n <= options.exact_cap && m <= options.exact_cap) {
    const auto c = cost_matrix(mu, nu, p);
    if (!options.force_flow && n == m && mu.uniform() && nu.uniform()) {
      const auto col = solve_assignment(c, static_cast<int>(n));
      // summed in sorted order so swapping mu and nu gives the same bits
      std::vector<double> matched(static_cast<std::size_t>(n));
      for (Eigen::Index i = 0; i < n; ++i) matched[i] = c[static_cast<std::size_t>(i * n + col[i])];
      std::sort(matched.begin(), matched.end());
      double acc = 0.0;
      for (double v : matched) acc += v;
      res.value = finish(acc / static_cast<double>(n), p);
      res.method = TransportMethod::kAssignment;
    } else {
      res.value = finish(solve_transport_flow(c, mu.weights(), nu.weights()), p);
      res.method = TransportMethod::kMinCostFlow;
    }
    return res;
  }
  const auto cxy = cost_matrix(mu, nu, p);
  const double eps = options.sinkhorn_eps_scale * median_cost(cxy);
  if (!(eps > 0.0)) {
    res.method = TransportMethod::kSinkhorn;
    return res;
  }
  const auto cxx = cost_matrix(mu, mu, p);
  const auto cyy = cost_matrix(nu, nu, p);
  const auto ab = sinkhorn_value(cxy, mu.weights(), nu.weights(), eps, options.sinkhorn_max_iter,
                                 options.sinkhorn_tol, false);
  const auto aa = sinkhorn_value(cxx, mu.weights(), mu.weights(), eps, options.sinkhorn_max_iter,
                                 options.sinkhorn_tol, true);
  const auto bb = sinkhorn_value(cyy, nu.weights(), nu.weights(), eps, options.sinkhorn_max_iter,
                                 options.sinkhorn_tol, true);
  const double worst = std::max({ab.residual, aa.residual, bb.residual});
  if (worst >= options.sinkhorn_tol) {
    std::ostringstream msg;
    msg << "sinkhorn did not converge: marginal residual " << worst;
    throw NumericalError(msg.str());
  }
  res.value = finish(std::max(0.0, ab.value - 0.5 * (aa.value + bb.value)), p);
  res.method = TransportMethod::kSinkhorn;
  res.iterations = ab.iterations;
  res.residual = worst;
  return res;
}

double wasserstein_p(const EmpiricalMeasure& mu, const EmpiricalMeasure& nu, int p,
                     const TransportOptions& options) {
  return wasserstein(mu, nu, p, options).value;
}

// ---------------------------------------------------------------------------
// Grids and KDE
// ---------------------------------------------------------------------------

Vector silverman_bandwidth(const EmpiricalMeasure& mu) {
  const auto d = static_cast<double>(mu.dim());
  const auto n = static_cast<double>(mu.size());
  const double factor = std::pow(4.0 / ((d + 2.0) * n), 1.0 / (d + 4.0));
  Vector sd = mu.covariance().diagonal().cwiseMax(0.0).cwiseSqrt();
  // Degenerate clouds still need a positive smoothing length.
  for (Eigen::Index j = 0; j < sd.size(); ++j)
    if (!(sd(j) > 0.0)) sd(j) = 1e-3;
  return factor * sd;
}

std::vector<Vector> padded_axes(const std::vector<const EmpiricalMeasure*>& clouds,
                                const Vector& pad, int points) {
  if (clouds.empty() || points < 2) throw ConfigError("padded_axes: need clouds and >= 2 points");
  const Eigen::Index d = clouds.front()->dim();
  std::vector<Vector> axes;
  for (Eigen::Index j = 0; j < d; ++j) {
    double lo = kInf, hi = -kInf;
    for (const auto* c : clouds) {
      lo = std::min(lo, c->samples().col(j).minCoeff());
      hi = std::max(hi, c->samples().col(j).maxCoeff());
    }
    axes.push_back(Vector::LinSpaced(points, lo - pad(j), hi + pad(j)));
  }
  return axes;
}

namespace {

double cell_volume_of(const std::vector<Vector>& axes) {
  double vol = 1.0;
  for (const auto& ax : axes) vol *= (ax(ax.size() - 1) - ax(0)) / static_cast<double>(ax.size() - 1);
  return vol;
}

// K_h(axis_g - y_i) w_i for one coordinate: rows grid points, columns samples.
Matrix kernel_columns(const Vector& axis, const Eigen::VectorXd& y, double h, const Vector* w) {
  const double norm = 1.0 / (std::sqrt(2.0 * std::numbers::pi) * h);
  Matrix out(axis.size(), y.size());
  for (Eigen::Index i = 0; i < y.size(); ++i) {
    out.col(i) = ((axis.array() - y(i)) / h).square().cwiseProduct(Eigen::ArrayXd::Constant(axis.size(), -0.5)).exp() * norm;
    if (w) out.col(i) *= (*w)(i);
  }
  return out;
}

}  // namespace

GridDensity kde_on_grid(const EmpiricalMeasure& mu, const Vector& bandwidth,
                        const std::vector<Vector>& axes) {
  const auto d = static_cast<int>(axes.size());
  if (d != mu.dim() || bandwidth.size() != d) throw ConfigError("kde: dimension mismatch");
  if ((bandwidth.array() <= 0.0).any()) throw ConfigError("kde: bandwidth must be positive");
  GridDensity out;
  out.axes = axes;
  out.cell_volume = cell_volume_of(axes);
  const Vector& w = mu.weights();
  if (d == 1) {
    const Matrix k0 = kernel_columns(axes[0], mu.samples().col(0), bandwidth(0), &w);
    out.values = k0.rowwise().sum();
  } else if (d == 2) {
    const Matrix k0 = kernel_columns(axes[0], mu.samples().col(0), bandwidth(0), &w);
    const Matrix k1 = kernel_columns(axes[1], mu.samples().col(1), bandwidth(1), nullptr);
    const Matrix grid = k0 * k1.transpose();  // (i0, i1), first axis fastest when flattened
    out.values = Eigen::Map<const Vector>(grid.data(), grid.size());
  } else {
    throw ConfigError("kde on grids supports d <= 2");
  }
  return out;
}

// ---------------------------------------------------------------------------
// k* sandwich
// ---------------------------------------------------------------------------

KStarEstimate kstar_sandwich(const GridDensity& g, double k, double cell_size, int offsets_per_axis) {
  if (!(k > 1.0)) throw ConfigError("kstar: k must lie in (1, inf]");
  if (!(cell_size > 0.0) || offsets_per_axis < 1) throw ConfigError("kstar: bad cell settings");
  const int d = g.dim();
  if (d < 1 || d > 2) throw ConfigError("kstar: grids support d <= 2");
  const bool sup = std::isinf(k);
  const double kp = sup ? 1.0 : k / (k - 1.0);
  const Eigen::ArrayXd mass = g.values.array().abs().pow(kp) * g.cell_volume;
  KStarEstimate est;
  est.cell_size = cell_size;
  if (sup) {
    est.lower = est.upper = mass.sum();
    return est;
  }
  const Vector& x0 = g.axes[0];
  const Eigen::Index n0 = x0.size();
  const Eigen::Index n1 = d == 2 ? g.axes[1].size() : 1;
  auto at = [&](Eigen::Index i0, Eigen::Index i1) { return mass(i0 + n0 * i1); };

  // Lower: best single window inside one unit ball.
  double best = 0.0;
  if (d == 1) {
    Eigen::Index end = 0;
    double run = 0.0;
    for (Eigen::Index s = 0; s < n0; ++s) {
      if (end < s) {
        end = s;
        run = 0.0;
      }
      while (end < n0 && x0(end) - x0(s) <= 2.0 + 1e-12) run += mass(end++);
      best = std::max(best, run);
      run -= mass(s);
    }
  } else {
    const Vector& x1 = g.axes[1];
    const double h0 = x0(1) - x0(0), h1 = x1(1) - x1(0);
    const auto r0 = static_cast<Eigen::Index>(std::floor(1.0 / h0));
    const auto r1 = static_cast<Eigen::Index>(std::floor(1.0 / h1));
    for (Eigen::Index c1 = 0; c1 < n1; ++c1)
      for (Eigen::Index c0 = 0; c0 < n0; ++c0) {
        double s = 0.0;
        for (Eigen::Index j1 = std::max<Eigen::Index>(0, c1 - r1); j1 <= std::min(n1 - 1, c1 + r1); ++j1) {
          const double dy = x1(j1) - x1(c1);
          for (Eigen::Index j0 = std::max<Eigen::Index>(0, c0 - r0); j0 <= std::min(n0 - 1, c0 + r0); ++j0) {
            const double dx = x0(j0) - x0(c0);
            if (dx * dx + dy * dy <= 1.0 + 1e-12) s += at(j0, j1);
          }
        }
        best = std::max(best, s);
      }
  }
  est.lower = std::pow(best, 1.0 / kp);

  // Upper: Hoelder on a partition into cells that each fit in a unit ball.
  double upper = kInf;
  const int offs1 = d == 2 ? offsets_per_axis : 1;
  for (int o0 = 0; o0 < offsets_per_axis; ++o0)
    for (int o1 = 0; o1 < offs1; ++o1) {
      const double sh0 = cell_size * o0 / offsets_per_axis;
      const double sh1 = cell_size * o1 / offsets_per_axis;
      std::vector<std::pair<long, double>> cells;
      cells.reserve(static_cast<std::size_t>(n0 * n1));
      for (Eigen::Index i1 = 0; i1 < n1; ++i1) {
        const long c1 = d == 2 ? static_cast<long>(std::floor((g.axes[1](i1) - g.axes[1](0) + sh1) / cell_size)) : 0;
        for (Eigen::Index i0 = 0; i0 < n0; ++i0) {
          const long c0 = static_cast<long>(std::floor((x0(i0) - x0(0) + sh0) / cell_size));
          cells.emplace_back(c0 + 100000L * c1, at(i0, i1));
        }
      }
      std::sort(cells.begin(), cells.end(),
                [](const auto& a, const auto& b) { return a.first < b.first; });
      double total = 0.0, acc = 0.0;
      for (std::size_t q = 0; q < cells.size(); ++q) {
        acc += cells[q].second;
        if (q + 1 == cells.size() || cells[q + 1].first != cells[q].first) {
          total += std::pow(acc, 1.0 / kp);
          acc = 0.0;
        }
      }
      upper = std::min(upper, total);
    }
  est.upper = std::max(upper, est.lower);
  return est;
}

double atomic_total_variation(const EmpiricalMeasure& mu, const EmpiricalMeasure& nu) {
  check_pair(mu, nu);
  const Eigen::Index d = mu.dim();
  std::vector<std::pair<std::vector<double>, double>> atoms;
  for (Eigen::Index i = 0; i < mu.size(); ++i) {
    const Vector r = mu.samples().row(i).transpose();
    atoms.emplace_back(std::vector<double>(r.data(), r.data() + d), mu.weights()(i));
  }
  for (Eigen::Index i = 0; i < nu.size(); ++i) {
    const Vector r = nu.samples().row(i).transpose();
    atoms.emplace_back(std::vector<double>(r.data(), r.data() + d), -nu.weights()(i));
  }
  std::sort(atoms.begin(), atoms.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
  double tv = 0.0, acc = 0.0;
  for (std::size_t q = 0; q < atoms.size(); ++q) {
    acc += atoms[q].second;
    if (q + 1 == atoms.size() || atoms[q + 1].first != atoms[q].first) {
      tv += std::abs(acc);
      acc = 0.0;
    }
  }
  return tv;
}

KStarEstimate kstar_distance(const EmpiricalMeasure& mu, const EmpiricalMeasure& nu, double k,
                             const KStarOptions& options) {
  check_pair(mu, nu);
  if (!(k > 1.0)) throw ConfigError("kstar: k must lie in (1, inf]");
  if (options.bandwidth && !(*options.bandwidth > 0.0)) throw ConfigError("kstar: bandwidth must be > 0");
  const auto d = static_cast<int>(mu.dim());
  const double cell = options.cell_size.value_or(2.0 / std::sqrt(static_cast<double>(d)));
  if (options.atomic) {
    if (!std::isinf(k)) throw ConfigError("kstar: the atomic path needs k = inf");
    const double tv = atomic_total_variation(mu, nu);
    return {tv, tv, 0.0, cell};
  }
  if (d > 2) throw ConfigError("kstar: KDE grids support d <= 2");
  const Vector h = options.bandwidth ? Vector::Constant(d, *options.bandwidth)
                                     : Vector(0.5 * (silverman_bandwidth(mu) + silverman_bandwidth(nu)));
  const int pts = d == 1 ? options.points_1d : options.points_2d;
  const auto axes = padded_axes({&mu, &nu}, 3.0 * h, pts);
  GridDensity g = kde_on_grid(mu, h, axes);
  g.values -= kde_on_grid(nu, h, axes).values;
  auto est = kstar_sandwich(g, k, cell, options.offsets_per_axis);
  est.bandwidth = h.mean();
  return est;
}

GridDualResult kstar_grid_dual_1d(const GridDensity& g, double k, int max_iter, double rel_gap) {
  if (g.dim() != 1) throw ConfigError("grid dual oracle is 1-d");
  if (!(k > 1.0) || std::isinf(k)) throw ConfigError("grid dual oracle needs finite k > 1");
  const Vector& x = g.axes[0];
  const Eigen::Index n = x.size();
  const double dx = g.cell_volume;
  const double kp = k / (k - 1.0);
  const Eigen::ArrayXd ag = g.values.array().abs();
  // Window s covers [s, end_s]: every grid set of span <= 2 lies in one.
  std::vector<Eigen::Index> end(n);
  for (Eigen::Index s = 0, e = 0; s < n; ++s) {
    e = std::max(e, s);
    while (e + 1 < n && x(e + 1) - x(s) <= 2.0 + 1e-12) ++e;
    end[s] = e;
  }
  GridDualResult res;
  if (ag.maxCoeff() == 0.0) return res;
  Eigen::ArrayXd lam = Eigen::ArrayXd::Ones(n), Lam(n), f(n), prefix(n + 1), wn(n);
  double best_primal = 0.0, best_dual = kInf;
  const double expo = 1.0 / (k - 1.0);
  for (int it = 1; it <= max_iter; ++it) {
    // Lambda_i = sum of multipliers of windows containing i.
    Eigen::ArrayXd diff = Eigen::ArrayXd::Zero(n + 1);
    for (Eigen::Index s = 0; s < n; ++s) {
      diff(s) += lam(s);
      diff(end[s] + 1) -= lam(s);
    }
    double run = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) Lam(i) = (run += diff(i));
    // Best common rescaling of lambda: D(c lam) = c A + c^{-expo} B.
    f = (ag / (k * Lam)).pow(expo);
    const double A = lam.sum();
    const double B = (ag * f).sum() * dx / kp;
    const double c = std::pow(expo * B / A, 1.0 / (1.0 + expo));
    lam *= c;
    Lam *= c;
    f = (ag / (k * Lam)).pow(expo);
    const double dual = lam.sum() + (ag * f).sum() * dx / kp;
    prefix(0) = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) prefix(i + 1) = prefix(i) + f(i) * std::pow(f(i), k - 1.0) * dx;
    double worst = 0.0;
    for (Eigen::Index s = 0; s < n; ++s) {
      wn(s) = prefix(end[s] + 1) - prefix(s);
      worst = std::max(worst, wn(s));
    }
    const double primal = (ag * f).sum() * dx / std::pow(worst, 1.0 / k);
    best_primal = std::max(best_primal, primal);
    best_dual = std::min(best_dual, dual);
    res.iterations = it;
    if (best_dual - best_primal <= rel_gap * best_dual) break;
    // Multiplicative update toward complementary slackness (wn = 1 where lam > 0).
    lam *= (wn / worst).pow(0.5) * std::pow(worst, 0.5);
    lam = lam.max(1e-300);
  }
  res.primal = best_primal;
  res.dual = best_dual;
  return res;
}

// ---------------------------------------------------------------------------
// Relative entropy
// ---------------------------------------------------------------------------

double gaussian_kl(const Vector& m1, const Matrix& c1, const Vector& m2, const Matrix& c2) {
  const auto d = m1.size();
  if (m2.size() != d || c1.rows() != d || c2.rows() != d) throw ConfigError("gaussian_kl: shapes");
  Eigen::LLT<Matrix> l1(c1), l2(c2);
  if (l1.info() != Eigen::Success || l2.info() != Eigen::Success)
    throw ConfigError("gaussian_kl: covariances must be positive definite");
  const Matrix inv2c1 = l2.solve(c1);
  const Vector dm = m2 - m1;
  const double logdet1 = 2.0 * l1.matrixL().toDenseMatrix().diagonal().array().log().sum();
  const double logdet2 = 2.0 * l2.matrixL().toDenseMatrix().diagonal().array().log().sum();
  return 0.5 * (inv2c1.trace() + dm.dot(l2.solve(dm)) - static_cast<double>(d) + logdet2 - logdet1);
}

namespace {

Vector gaussian_on_grid(const GaussianRef& ref, const std::vector<Vector>& axes) {
  const auto d = static_cast<int>(axes.size());
  Eigen::LLT<Matrix> llt(ref.cov);
  if (llt.info() != Eigen::Success) throw ConfigError("gaussian reference needs a PD covariance");
  const double logdet = 2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
  const double lognorm = -0.5 * (d * std::log(2.0 * std::numbers::pi) + logdet);
  const Eigen::Index n0 = axes[0].size();
  const Eigen::Index n1 = d == 2 ? axes[1].size() : 1;
  Vector out(n0 * n1);
  Vector x(d);
  for (Eigen::Index i1 = 0; i1 < n1; ++i1)
    for (Eigen::Index i0 = 0; i0 < n0; ++i0) {
      x(0) = axes[0](i0);
      if (d == 2) x(1) = axes[1](i1);
      const Vector z = llt.matrixL().solve(x - ref.mean);
      out(i0 + n0 * i1) = std::exp(lognorm - 0.5 * z.squaredNorm());
    }
  return out;
}

}  // namespace

double relative_entropy(const EmpiricalMeasure& mu,
                        const std::variant<EmpiricalMeasure, GaussianRef>& ref,
                        const EntropyOptions& options) {
  const auto d = static_cast<int>(mu.dim());
  if (d > 2) throw ConfigError("relative_entropy supports d <= 2");
  if (mu.size() < 100) throw ConfigError("relative_entropy: KDE path needs N >= 100");
  if (options.bandwidth && !(*options.bandwidth > 0.0)) throw ConfigError("entropy: bandwidth must be > 0");
  const Vector h = options.bandwidth ? Vector::Constant(d, *options.bandwidth) : silverman_bandwidth(mu);
  const int pts = d == 1 ? options.points_1d : options.points_2d;
  std::vector<const EmpiricalMeasure*> clouds{&mu};
  const auto* emp = std::get_if<EmpiricalMeasure>(&ref);
  Vector h_ref = h;
  if (emp) {
    if (emp->dim() != d) throw ConfigError("relative_entropy: dimension mismatch");
    if (emp->size() < 100) throw ConfigError("relative_entropy: KDE reference needs N >= 100");
    clouds.push_back(emp);
    if (!options.bandwidth) h_ref = silverman_bandwidth(*emp);
  } else if (std::get<GaussianRef>(ref).mean.size() != d) {
    throw ConfigError("relative_entropy: dimension mismatch");
  }
  const auto axes = padded_axes(clouds, 3.0 * h.cwiseMax(h_ref), pts);
  GridDensity p = kde_on_grid(mu, h, axes);
  const double dv = p.cell_volume;
  // Rescale grid densities to unit mass so truncation at the padded box
  // does not bias the estimate.
  p.values /= p.values.sum() * dv;
  Vector q;
  if (emp) {
    q = kde_on_grid(*emp, h_ref, axes).values;
    q /= q.sum() * dv;
  } else {
    q = gaussian_on_grid(std::get<GaussianRef>(ref), axes);
  }
  constexpr double floor = 1e-300;
  double ent = 0.0;
  for (Eigen::Index i = 0; i < p.values.size(); ++i) {
    const double pi = p.values(i);
    if (pi <= floor) continue;
    ent += pi * (std::log(pi) - std::log(std::max(q(i), floor)));
  }
  ent *= dv;
  if (ent < -0.1) {
    std::ostringstream msg;
    msg << "relative_entropy: plug-in estimate " << ent << " below -0.1; check the bandwidth";
    throw NumericalError(msg.str());
  }
  return std::max(0.0, ent);
}

// ---------------------------------------------------------------------------
// Combined metric and series output
// ---------------------------------------------------------------------------

CombinedResult combined_w(const EmpiricalMeasure& mu, const EmpiricalMeasure& nu, double k,
                          const KStarOptions& kstar, const TransportOptions& transport) {
  CombinedResult out;
  out.w1 = wasserstein_p(mu, nu, 1, transport);
  out.kstar = kstar_distance(mu, nu, k, kstar);
  out.value = out.w1 + out.kstar.midpoint();
  out.uncertainty = 0.5 * (out.kstar.upper - out.kstar.lower);
  return out;
}

void write_distance_csv(std::ostream& os, const DistanceSeries& s) {
  os << "time,w1,w2,kstar_lower,kstar_upper,entropy\n";
  char buf[256];
  for (std::size_t i = 0; i < s.times.size(); ++i) {
    const double lo = i < s.kstar.size() ? s.kstar[i].lower : NAN;
    const double hi = i < s.kstar.size() ? s.kstar[i].upper : NAN;
    const double w1 = i < s.w1.size() ? s.w1[i] : NAN;
    const double w2 = i < s.w2.size() ? s.w2[i] : NAN;
    const double en = i < s.entropy.size() ? s.entropy[i] : NAN;
    const int n = std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n", s.times[i],
                                w1, w2, lo, hi, en);
    os.write(buf, n);
  }
}

}  // namespace mvlab
