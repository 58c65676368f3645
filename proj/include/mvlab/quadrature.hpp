#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <queue>
#include <vector>

namespace mvlab::quad {

struct Result {
  double value = 0.0;
  double error = 0.0;
  int evaluations = 0;
};

namespace detail {

// 15-point Kronrod nodes on [-1, 1] (non-negative half) with the embedded
// 7-point Gauss weights on the odd-indexed nodes.
inline constexpr std::array<double, 8> kNodes = {
    0.991455371120812639206854697526329, 0.949107912342758524526189684047851,
    0.864864423359769072789712788640926, 0.741531185599394439863864773280788,
    0.586087235467691130294144845693013, 0.405845151377397166906606412076961,
    0.207784955007898467600689403773245, 0.000000000000000000000000000000000};
inline constexpr std::array<double, 8> kKronrod = {
    0.022935322010529224963732008058970, 0.063092092629978553290700663189204,
    0.104790010322250183839876322541518, 0.140653259715525918745189590510238,
    0.169004726639267902826583426598550, 0.190350578064785409913256402421014,
    0.204432940075298892414161999234649, 0.209482141084727828012999174891714};
inline constexpr std::array<double, 4> kGauss = {
    0.129484966168869693270611432679082, 0.279705391489276667901467771423780,
    0.381830050505118944950369775488975, 0.417959183673469387755102040816327};

struct Segment {
  double a, b, value, error;
  bool operator<(const Segment& o) const { return error < o.error; }
};

template <typename F>
Segment kronrod15(F& f, double a, double b) {
  const double center = 0.5 * (a + b);
  const double half = 0.5 * (b - a);
  const double fc = f(center);
  double kronrod = fc * kKronrod[7];
  double gauss = fc * kGauss[3];
  for (int j = 0; j < 7; ++j) {
    const double dx = half * kNodes[j];
    const double sum = f(center - dx) + f(center + dx);
    kronrod += kKronrod[j] * sum;
    if (j % 2 == 1) gauss += kGauss[j / 2] * sum;
  }
  return {a, b, kronrod * half, std::abs((kronrod - gauss) * half)};
}

}  // namespace detail

/// Single non-adaptive 15-point Kronrod panel.
template <typename F>
double kronrod15(F&& f, double a, double b) {
  return detail::kronrod15(f, a, b).value;
}

/// Globally adaptive G7-K15 on [a, b]: bisects the panel with the largest
/// error estimate until the total estimate meets max(abs_tol, rel_tol*|I|).
/// Endpoints are never evaluated, so integrable endpoint singularities are
/// admissible (convergence is slower there).
template <typename F>
Result integrate(F&& f, double a, double b, double abs_tol = 1e-14, double rel_tol = 1e-12,
                 int max_segments = 2000) {
  Result out;
  if (a == b) return out;
  std::priority_queue<detail::Segment> heap;
  auto first = detail::kronrod15(f, a, b);
  out.evaluations = 15;
  double total = first.value;
  double total_err = first.error;
  heap.push(first);
  int segments = 1;
  while (total_err > std::max(abs_tol, rel_tol * std::abs(total)) && segments < max_segments) {
    const auto worst = heap.top();
    heap.pop();
    const double mid = 0.5 * (worst.a + worst.b);
    if (mid <= worst.a || mid >= worst.b) {
      heap.push(worst);
      break;
    }
    const auto left = detail::kronrod15(f, worst.a, mid);
    const auto right = detail::kronrod15(f, mid, worst.b);
    out.evaluations += 30;
    total += left.value + right.value - worst.value;
    total_err += left.error + right.error - worst.error;
    heap.push(left);
    heap.push(right);
    ++segments;
  }
  // Re-sum to shed the drift accumulated by the incremental updates.
  total = 0.0;
  total_err = 0.0;
  while (!heap.empty()) {
    total += heap.top().value;
    total_err += heap.top().error;
    heap.pop();
  }
  out.value = total;
  out.error = total_err;
  return out;
}

}  // namespace mvlab::quad
