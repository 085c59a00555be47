/* Copyright 2026 The qtraj Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#ifndef QTRAJ_QUADRATURE_HPP
#define QTRAJ_QUADRATURE_HPP

#include <cmath>
#include <stdexcept>
#include <vector>

namespace qtraj::quadrature {

/// Composite Simpson weights for `intervals` (even) equal sub-intervals of
/// width h, including the h/3 factor.
inline std::vector<double> simpson_weights(int intervals, double h) {
  if (intervals < 2 || intervals % 2 != 0) {
    throw std::invalid_argument("Simpson's rule needs an even interval count");
  }
  std::vector<double> w(static_cast<std::size_t>(intervals) + 1);
  for (int i = 0; i <= intervals; ++i) {
    const double c = (i == 0 || i == intervals) ? 1.0 : (i % 2 == 1 ? 4.0 : 2.0);
    w[static_cast<std::size_t>(i)] = c * h / 3.0;
  }
  return w;
}

template <typename F>
double simpson(F&& f, double a, double b, int intervals) {
  const double h = (b - a) / intervals;
  const auto w = simpson_weights(intervals, h);
  double sum = 0.0;
  for (int i = 0; i <= intervals; ++i) {
    sum += w[static_cast<std::size_t>(i)] * f(a + i * h);
  }
  return sum;
}

/// Tensor-product composite Simpson over [x0,x1] x [y0,y1].
template <typename F>
double simpson_2d(F&& f, double x0, double x1, double y0, double y1, int nx,
                  int ny) {
  const double hx = (x1 - x0) / nx;
  const double hy = (y1 - y0) / ny;
  const auto wx = simpson_weights(nx, hx);
  const auto wy = simpson_weights(ny, hy);
  double sum = 0.0;
  for (int i = 0; i <= nx; ++i) {
    double row = 0.0;
    for (int j = 0; j <= ny; ++j) {
      row += wy[static_cast<std::size_t>(j)] * f(x0 + i * hx, y0 + j * hy);
    }
    sum += wx[static_cast<std::size_t>(i)] * row;
  }
  return sum;
}

namespace detail {

template <typename F>
double adaptive_step(F& f, double a, double b, double fa, double fm, double fb,
                     double whole, double tol, int depth) {
  const double m = 0.5 * (a + b);
  const double lm = 0.5 * (a + m);
  const double rm = 0.5 * (m + b);
  const double flm = f(lm);
  const double frm = f(rm);
  const double left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
  const double right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
  const double delta = left + right - whole;
  if (depth <= 0 || std::abs(delta) <= 15.0 * tol) {
    return left + right + delta / 15.0;
  }
  return adaptive_step(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1) +
         adaptive_step(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1);
}

} // namespace detail

/// Adaptive Simpson with Richardson correction. The interval is first split
/// into `initial` panels so narrow features are not skipped.
template <typename F>
double adaptive_simpson(F&& f, double a, double b, double tol = 1e-10,
                        int max_depth = 40, int initial = 64) {
  double total = 0.0;
  const double h = (b - a) / initial;
  for (int k = 0; k < initial; ++k) {
    const double lo = a + k * h;
    const double hi = (k + 1 == initial) ? b : lo + h;
    const double fa = f(lo);
    const double fb = f(hi);
    const double fm = f(0.5 * (lo + hi));
    const double whole = (hi - lo) / 6.0 * (fa + 4.0 * fm + fb);
    total += detail::adaptive_step(f, lo, hi, fa, fm, fb, whole, tol / initial,
                                   max_depth);
  }
  return total;
}

} // namespace qtraj::quadrature

#endif
