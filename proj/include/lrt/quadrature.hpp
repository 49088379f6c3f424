#pragma once

// Panel-adaptive Gauss-Legendre quadrature for vector-valued integrands.
// Each panel is integrated with the 15- and 20-point rules; panels whose two
// estimates disagree by more than their share of the tolerance are bisected.

#include <algorithm>
#include <cmath>
#include <vector>

#include <boost/math/quadrature/gauss.hpp>

namespace lrt::quadrature {

template <class Value>
struct Result {
  Value value;
  double error = 0.0;
  int panels = 0;
};

namespace detail {

template <int Points, class F>
auto gauss_rule(F& f, double a, double b) {
  using Rule = boost::math::quadrature::gauss<double, Points>;
  const auto& x = Rule::abscissa();
  const auto& w = Rule::weights();
  const double c = 0.5 * (a + b), h = 0.5 * (b - a);
  std::size_t start = 0;
  auto sum = (Points % 2 == 1) ? decltype(f(c))(w[0] * f(c)) : decltype(f(c))(0.0 * f(c));
  if (Points % 2 == 1) start = 1;
  for (std::size_t i = start; i < x.size(); ++i) sum += w[i] * (f(c + h * x[i]) + f(c - h * x[i]));
  return decltype(f(c))(h * sum);
}

template <class V>
double magnitude(const V& v) {
  if constexpr (requires { v.cwiseAbs().maxCoeff(); }) {
    return v.size() ? double(v.cwiseAbs().maxCoeff()) : 0.0;
  } else {
    return std::abs(v);
  }
}

}  // namespace detail

// Integrates f over [a, b]; `panel` is the initial panel width.
template <class F>
auto integrate(F f, double a, double b, double abs_tol, double panel, int max_depth = 40) {
  using Value = decltype(f(a));
  Result<Value> out{Value(0.0 * f(a)), 0.0, 0};
  if (!(b > a)) return out;
  const double length = b - a;
  const int initial = std::max(1, int(std::ceil(length / panel)));
  struct Task {
    double lo, hi;
    int depth;
  };
  std::vector<Task> stack;
  for (int i = initial - 1; i >= 0; --i)
    stack.push_back({a + length * i / initial, i + 1 == initial ? b : a + length * (i + 1) / initial, 0});
  while (!stack.empty()) {
    const Task t = stack.back();
    stack.pop_back();
    const Value coarse = detail::gauss_rule<15>(f, t.lo, t.hi);
    const Value fine = detail::gauss_rule<20>(f, t.lo, t.hi);
    const double err = detail::magnitude(Value(fine - coarse));
    const double share = abs_tol * (t.hi - t.lo) / length;
    if (err <= share || t.depth >= max_depth) {
      out.value += fine;
      out.error += err;
      ++out.panels;
      continue;
    }
    const double mid = 0.5 * (t.lo + t.hi);
    stack.push_back({mid, t.hi, t.depth + 1});
    stack.push_back({t.lo, mid, t.depth + 1});
  }
  return out;
}

}  // namespace lrt::quadrature
