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

#include "qtraj/model.hpp"

#include <cmath>
#include <numbers>

namespace qtraj {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;
const double kSqrtTwoPi = std::sqrt(kTwoPi);

void require_finite(double value, const char* what) {
  if (!std::isfinite(value)) {
    throw ModelError(std::string("non-finite ") + what);
  }
}

} // namespace

SuperpositionSpec SuperpositionSpec::cat(double alpha0, double c1_sq) {
  SuperpositionSpec spec;
  spec.c1_sq = c1_sq;
  spec.x1 = 2.0 * alpha0;
  spec.r = 0.0;
  return spec;
}

double SuperpositionSpec::cross_weight() const {
  if (kind == StateKind::Mixture) {
    return 0.0;
  }
  return 2.0 * std::sqrt(c1_sq * c2_sq());
}

double SuperpositionSpec::sigma_x_sq() const { return 1.0 + std::exp(-2.0 * r); }

double SuperpositionSpec::sigma_p_sq() const { return 1.0 + std::exp(2.0 * r); }

void SuperpositionSpec::validate() const {
  require_finite(c1_sq, "c1_sq");
  require_finite(x1, "x1");
  require_finite(r, "r");
  if (c1_sq < 0.0 || c1_sq > 1.0) {
    throw ModelError("c1_sq must lie in [0, 1], got " + std::to_string(c1_sq));
  }
  if (x1 < 0.0) {
    throw ModelError("x1 must be non-negative, got " + std::to_string(x1));
  }
  if (r < 0.0 || r > kMaxSqueezing) {
    throw ModelError("squeezing r must lie in [0, " +
                     std::to_string(kMaxSqueezing) + "], got " +
                     std::to_string(r));
  }
}

int MeasurementConfig::n_steps() const {
  const double ratio = t_f / dt;
  const double rounded = std::round(ratio);
  if (rounded < 1.0 || std::abs(ratio - rounded) > 1e-9 * std::max(1.0, ratio)) {
    throw ModelError("t_f / dt must be a whole number of steps >= 1 (t_f=" +
                     std::to_string(t_f) + ", dt=" + std::to_string(dt) + ")");
  }
  return static_cast<int>(rounded);
}

void MeasurementConfig::validate() const {
  require_finite(g, "g");
  require_finite(t_f, "t_f");
  require_finite(dt, "dt");
  if (g <= 0.0) {
    throw ModelError("gain g must be positive, got " + std::to_string(g));
  }
  if (t_f <= 0.0 || dt <= 0.0) {
    throw ModelError("t_f and dt must be positive");
  }
  if (n_samples < 1) {
    throw ModelError("n_samples must be at least 1");
  }
  (void)n_steps();
  if (!std::isfinite(std::exp(2.0 * g * t_f))) {
    throw ModelError("gain factor e^{g t_f} overflows (g t_f = " +
                     std::to_string(g * t_f) + ")");
  }
}

EvolvedWidths evolved_widths(const SuperpositionSpec& spec, double signed_g,
                             double t) {
  const double exponent = 2.0 * (signed_g * t - spec.r);
  EvolvedWidths w;
  w.gain = std::exp(signed_g * t);
  w.var_x = 1.0 + std::exp(exponent);
  w.var_p = 1.0 + std::exp(-exponent);
  if (!std::isfinite(w.gain) || !std::isfinite(w.var_x) ||
      !std::isfinite(w.var_p)) {
    throw ModelError("evolved variance overflows at g t = " +
                     std::to_string(signed_g * t) + ", r = " +
                     std::to_string(spec.r));
  }
  return w;
}

QTerms q_sup_terms(const SuperpositionSpec& spec, const QPoint& pt,
                   const MeasurementConfig& cfg) {
  require_finite(pt.x, "x");
  require_finite(pt.p, "p");
  require_finite(pt.t, "t");
  const EvolvedWidths w = evolved_widths(spec, cfg.signed_gain(), pt.t);
  const double mean = w.gain * spec.x1;
  const double prefactor = 1.0 / (kTwoPi * std::sqrt(w.var_x * w.var_p));

  // Exponents are combined before exponentiation so that the product of a
  // tiny envelope and a tiny hill never underflows prematurely.
  const double ep = -pt.p * pt.p / (2.0 * w.var_p);
  const double a = -(pt.x - mean) * (pt.x - mean) / (2.0 * w.var_x);
  const double b = -(pt.x + mean) * (pt.x + mean) / (2.0 * w.var_x);

  QTerms terms;
  terms.hills = prefactor * (spec.c1_sq * std::exp(ep + a) +
                             spec.c2_sq() * std::exp(ep + b));
  const double cross = spec.cross_weight();
  if (cross > 0.0) {
    const double c = -(pt.x * pt.x + mean * mean) / (2.0 * w.var_x);
    terms.fringe = -prefactor * cross * std::exp(ep + c) *
                   std::sin(pt.p * mean / w.var_x);
  }
  return terms;
}

double q_sup(const SuperpositionSpec& spec, const QPoint& pt,
             const MeasurementConfig& cfg) {
  const QTerms terms = q_sup_terms(spec, pt, cfg);
  // The sum is nonnegative analytically; clip rounding residue at fringe zeros.
  return std::max(0.0, terms.hills + terms.fringe);
}

double marginal_x(const SuperpositionSpec& spec, double x, double t,
                  const MeasurementConfig& cfg) {
  require_finite(x, "x");
  const EvolvedWidths w = evolved_widths(spec, cfg.signed_gain(), t);
  const double mean = w.gain * spec.x1;
  const double sigma = std::sqrt(w.var_x);
  const double a = (x - mean) / sigma;
  const double b = (x + mean) / sigma;
  return (spec.c1_sq * std::exp(-0.5 * a * a) +
          spec.c2_sq() * std::exp(-0.5 * b * b)) /
         (kSqrtTwoPi * sigma);
}

double marginal_x_scaled(const SuperpositionSpec& spec, double x_tilde,
                         double t, const MeasurementConfig& cfg) {
  const double gain = std::exp(cfg.signed_gain() * t);
  return gain * marginal_x(spec, x_tilde * gain, t, cfg);
}

double marginal_p(const SuperpositionSpec& spec, double p, double t,
                  const MeasurementConfig& cfg) {
  require_finite(p, "p");
  const EvolvedWidths w = evolved_widths(spec, cfg.signed_gain(), t);
  const double mean = w.gain * spec.x1;
  const double damping = std::exp(-mean * mean / (2.0 * w.var_x));
  const double fringe =
      1.0 - spec.cross_weight() * damping * std::sin(p * mean / w.var_x);
  return std::exp(-p * p / (2.0 * w.var_p)) / (kSqrtTwoPi * std::sqrt(w.var_p)) *
         fringe;
}

double marginal_p_initial(const SuperpositionSpec& spec, double p) {
  return marginal_p(spec, p, 0.0, MeasurementConfig{});
}

double marginal_p_amplified(const SuperpositionSpec& spec, double p, double t,
                            const MeasurementConfig& cfg) {
  if (cfg.setting != Setting::MeasureP) {
    throw ModelError("marginal_p_amplified requires the MeasureP setting");
  }
  return marginal_p(spec, p, t, cfg);
}

double marginal_p_amplified_scaled(const SuperpositionSpec& spec,
                                   double p_tilde, double t,
                                   const MeasurementConfig& cfg) {
  const double scale = std::exp(cfg.g * t);
  return scale * marginal_p_amplified(spec, p_tilde * scale, t, cfg);
}

double fringe_amplitude_given_x(const SuperpositionSpec& spec, double x_p) {
  const double cross = spec.cross_weight();
  if (cross == 0.0) {
    return 0.0;
  }
  const double u = x_p * spec.x1 / spec.sigma_x_sq();
  const double m = std::abs(u);
  // cross / (c1^2 e^u + c2^2 e^-u), scaled by e^{-|u|} top and bottom.
  const double denom =
      spec.c1_sq * std::exp(u - m) + spec.c2_sq() * std::exp(-u - m);
  return std::min(1.0, cross * std::exp(-m) / denom);
}

double conditional_p_given_x(const SuperpositionSpec& spec, double x_p,
                             double p_p) {
  require_finite(x_p, "x_p");
  require_finite(p_p, "p_p");
  const double var_p = spec.sigma_p_sq();
  const double envelope =
      std::exp(-p_p * p_p / (2.0 * var_p)) / (kSqrtTwoPi * std::sqrt(var_p));
  const double amp = fringe_amplitude_given_x(spec, x_p);
  return envelope * (1.0 - amp * std::sin(p_p * spec.x1 / spec.sigma_x_sq()));
}

double conditional_x_given_p(const SuperpositionSpec& spec, double p_p,
                             double x_p) {
  require_finite(x_p, "x_p");
  require_finite(p_p, "p_p");
  const double var_x = spec.sigma_x_sq();
  const double sigma = std::sqrt(var_x);
  auto gauss = [&](double mu) {
    const double z = (x_p - mu) / sigma;
    return std::exp(-0.5 * z * z) / (kSqrtTwoPi * sigma);
  };
  const double central = spec.cross_weight() *
                         std::exp(-spec.x1 * spec.x1 / (2.0 * var_x)) *
                         std::sin(p_p * spec.x1 / var_x);
  const double num = spec.c1_sq * gauss(spec.x1) +
                     spec.c2_sq() * gauss(-spec.x1) - central * gauss(0.0);
  return std::max(0.0, num / (1.0 - central));
}

Moments reference_moments(const SuperpositionSpec& spec, double t,
                          const MeasurementConfig& cfg) {
  const double var_x0 = spec.sigma_x_sq();
  const double var_p0 = spec.sigma_p_sq();
  const double mean_x0 = (spec.c1_sq - spec.c2_sq()) * spec.x1;
  const double k = spec.x1 / var_x0;
  const double mean_p0 = -spec.cross_weight() *
                         std::exp(-spec.x1 * spec.x1 / (2.0 * var_x0)) * var_p0 *
                         k * std::exp(-0.5 * var_p0 * k * k);

  const double full_var_x0 = var_x0 + spec.x1 * spec.x1 - mean_x0 * mean_x0;
  const double full_var_p0 = var_p0 - mean_p0 * mean_p0;

  const double g = cfg.signed_gain();
  const double up = std::exp(g * t);
  const double down = std::exp(-g * t);
  Moments m;
  m.mean_x = up * mean_x0;
  m.mean_p = down * mean_p0;
  m.var_x = 1.0 + up * up * (full_var_x0 - 1.0);
  m.var_p = 1.0 + down * down * (full_var_p0 - 1.0);
  if (!std::isfinite(m.var_x) || !std::isfinite(m.var_p)) {
    throw ModelError("reference moments overflow at g t = " +
                     std::to_string(g * t));
  }
  return m;
}

std::string to_string(Setting setting) {
  return setting == Setting::MeasureX ? "x" : "p";
}

Setting setting_from_string(const std::string& text) {
  if (text == "x" || text == "X") {
    return Setting::MeasureX;
  }
  if (text == "p" || text == "P") {
    return Setting::MeasureP;
  }
  throw ModelError("measurement setting must be 'x' or 'p', got '" + text + "'");
}

} // namespace qtraj
