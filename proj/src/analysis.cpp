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

#include "qtraj/analysis.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <limits>
#include <numbers>
#include <ostream>

#include "qtraj/quadrature.hpp"

namespace qtraj {

namespace {

const double kInvSqrtTwoPi = 1.0 / std::sqrt(2.0 * std::numbers::pi);

double gaussian(double x, double mean, double var) {
  const double d = x - mean;
  return kInvSqrtTwoPi / std::sqrt(var) * std::exp(-d * d / (2.0 * var));
}

std::vector<double> linear_edges(double lo, double hi, std::size_t bins) {
  std::vector<double> edges(bins + 1);
  for (std::size_t i = 0; i <= bins; ++i) {
    edges[i] = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(bins);
  }
  return edges;
}

std::vector<std::size_t> selected_rows(const TrajectoryBatch& batch,
                                       Outcome outcome,
                                       std::size_t min_selected) {
  if (batch.n_rows == 0) {
    throw AnalysisError("empty trajectory batch");
  }
  const std::size_t last = batch.boundary_slice();
  std::vector<std::size_t> rows;
  for (std::size_t i = 0; i < batch.n_rows; ++i) {
    if (selected(outcome, batch.amplified_at(i, last))) {
      rows.push_back(i);
    }
  }
  if (rows.size() < min_selected) {
    throw AnalysisError("only " + std::to_string(rows.size()) +
                        " rows selected for outcome " + to_string(outcome) +
                        "; at least " + std::to_string(min_selected) +
                        " are needed");
  }
  return rows;
}

/// Shifted block sums for a delete-one-block jackknife of two variances.
struct PairSums {
  double n = 0.0;
  double x = 0.0, xx = 0.0, p = 0.0, pp = 0.0;

  PairSums& operator+=(const PairSums& o) {
    n += o.n;
    x += o.x;
    xx += o.xx;
    p += o.p;
    pp += o.pp;
    return *this;
  }
  PairSums operator-(const PairSums& o) const {
    return {n - o.n, x - o.x, xx - o.xx, p - o.p, pp - o.pp};
  }
  double mean_x() const { return x / n; }
  double mean_p() const { return p / n; }
  double var_x() const { return (xx - x * x / n) / (n - 1.0); }
  double var_p() const { return (pp - p * p / n) / (n - 1.0); }
};

double product_or_nan(double vx, double vp) {
  return (vx > 0.0 && vp > 0.0) ? std::sqrt(vx * vp)
                                : std::numeric_limits<double>::quiet_NaN();
}

double jackknife_se(const std::vector<double>& values) {
  const double b = static_cast<double>(values.size());
  if (values.size() < 2) {
    return 0.0;
  }
  double mean = 0.0;
  for (double v : values) mean += v;
  mean /= b;
  double ss = 0.0;
  for (double v : values) ss += (v - mean) * (v - mean);
  return std::sqrt((b - 1.0) / b * ss);
}

std::string fmt(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v,
                                 std::chars_format::general, 17);
  return std::string(buf, res.ptr);
}

/// Selected initial x density m(x_p), unnormalized.
class SelectedDensity {
public:
  SelectedDensity(const SuperpositionSpec& spec, const MeasurementConfig& cfg,
                  Outcome outcome)
      : spec_(spec), cfg_(cfg) {
    if (cfg.setting != Setting::MeasureX) {
      throw AnalysisError("the postselection oracle models x measurements only");
    }
    spec.validate();
    cfg.validate();
    const EvolvedWidths w = evolved_widths(spec, cfg.g, cfg.t_f);
    decay_ = std::exp(-cfg.g * cfg.t_f);
    kernel_var_ = -std::expm1(-2.0 * cfg.g * cfg.t_f);
    const double reach = w.gain * spec.x1 + 14.0 * std::sqrt(w.var_x);
    lo_ = outcome == Outcome::Plus ? 0.0 : -reach;
    hi_ = outcome == Outcome::Plus ? reach : 0.0;
  }

  double operator()(double x_p) const {
    auto integrand = [&](double x_f) {
      return marginal_x(spec_, x_f, cfg_.t_f, cfg_) *
             gaussian(x_p, x_f * decay_, kernel_var_);
    };
    return quadrature::adaptive_simpson(integrand, lo_, hi_, 1e-13, 30, 64);
  }

private:
  SuperpositionSpec spec_;
  MeasurementConfig cfg_;
  double decay_ = 0.0;
  double kernel_var_ = 1.0;
  double lo_ = 0.0;
  double hi_ = 0.0;
};

/// Simpson interval count resolving the p fringes of conditional_p_given_x.
int p_intervals(const SuperpositionSpec& spec, double half_range) {
  const double freq = spec.x1 / spec.sigma_x_sq();
  const double periods = 2.0 * half_range * freq / (2.0 * std::numbers::pi);
  const int n = static_cast<int>(std::ceil(periods * 32.0));
  return std::max(800, n + (n % 2));
}

} // namespace

std::string to_string(Outcome outcome) {
  return outcome == Outcome::Plus ? "+" : "-";
}

BornFraction born_fraction(const TrajectoryBatch& batch) {
  if (batch.n_rows == 0) {
    throw AnalysisError("empty trajectory batch");
  }
  const std::size_t last = batch.boundary_slice();
  BornFraction out;
  out.n = batch.n_rows;
  for (std::size_t i = 0; i < batch.n_rows; ++i) {
    if (selected(Outcome::Plus, batch.amplified_at(i, last))) {
      ++out.n_plus;
    }
  }
  const double n = static_cast<double>(out.n);
  out.f_plus = static_cast<double>(out.n_plus) / n;
  out.se = std::sqrt(out.f_plus * (1.0 - out.f_plus) / n);
  return out;
}

double hill_overlap_mass(const SuperpositionSpec& spec,
                         const MeasurementConfig& cfg) {
  if (cfg.setting != Setting::MeasureX) {
    throw AnalysisError("hill overlap is defined for x measurements");
  }
  const EvolvedWidths w = evolved_widths(spec, cfg.g, cfg.t_f);
  const double z = w.gain * spec.x1 / std::sqrt(w.var_x);
  return 0.5 * std::erfc(z / std::numbers::sqrt2);
}

double born_x_scaled_limit(const SuperpositionSpec& spec, double x_tilde) {
  const double var = std::exp(-2.0 * spec.r);
  return spec.c1_sq * gaussian(x_tilde, spec.x1, var) +
         spec.c2_sq() * gaussian(x_tilde, -spec.x1, var);
}

double cat_born_x(double alpha0, double x_tilde) {
  return born_x_scaled_limit(SuperpositionSpec::cat(alpha0), x_tilde);
}

double born_p_scaled_limit(const SuperpositionSpec& spec, double p_tilde) {
  const double var = std::exp(2.0 * spec.r);
  return gaussian(p_tilde, 0.0, var) *
         (1.0 - spec.cross_weight() * std::sin(p_tilde * spec.x1));
}

double cat_born_p(double alpha0, double p_tilde) {
  return born_p_scaled_limit(SuperpositionSpec::cat(alpha0), p_tilde);
}

// ---------------------------------------------------------------------------

PostselectionReport postselect(const TrajectoryBatch& batch, Outcome outcome,
                               const PostselectOptions& options) {
  const std::vector<std::size_t> rows =
      selected_rows(batch, outcome, options.min_selected);
  const std::size_t first = batch.slice_of_step(0);

  PostselectionReport report;
  report.outcome = outcome;
  report.n_selected = rows.size();
  report.n_total = batch.n_rows;

  const std::size_t blocks = std::clamp<std::size_t>(
      static_cast<std::size_t>(std::max(options.jackknife_blocks, 1)), 1,
      rows.size() / 2);
  const double shift_x = batch.x(rows[0], first);
  const double shift_p = batch.p(rows[0], first);
  std::vector<PairSums> block(blocks);
  for (std::size_t k = 0; k < rows.size(); ++k) {
    const double x = batch.x(rows[k], first) - shift_x;
    const double p = batch.p(rows[k], first) - shift_p;
    PairSums& b = block[k * blocks / rows.size()];
    b.n += 1.0;
    b.x += x;
    b.xx += x * x;
    b.p += p;
    b.pp += p * p;
  }
  PairSums total;
  for (const auto& b : block) total += b;

  report.mean_x = shift_x + total.mean_x();
  report.mean_p = shift_p + total.mean_p();
  report.sigma_x_sq = total.var_x();
  report.sigma_p_sq = total.var_p();
  report.var_x_cond = report.sigma_x_sq - 1.0;
  report.var_p_cond = report.sigma_p_sq - 1.0;
  report.epsilon_defined = report.var_x_cond > 0.0 && report.var_p_cond > 0.0;
  if (report.epsilon_defined) {
    report.epsilon = std::sqrt(report.var_x_cond * report.var_p_cond);
  }

  if (blocks >= 2) {
    std::vector<double> vx(blocks), vp(blocks), eps;
    for (std::size_t b = 0; b < blocks; ++b) {
      const PairSums rest = total - block[b];
      vx[b] = rest.var_x() - 1.0;
      vp[b] = rest.var_p() - 1.0;
      const double e = product_or_nan(vx[b], vp[b]);
      if (std::isfinite(e)) {
        eps.push_back(e);
      }
    }
    report.se_var_x = jackknife_se(vx);
    report.se_var_p = jackknife_se(vp);
    if (report.epsilon_defined && eps.size() == blocks) {
      report.se_epsilon = jackknife_se(eps);
    }
  }

  QHistogram2D& h = report.q_hist;
  h.x_edges = options.x_edges;
  h.p_edges = options.p_edges;
  if (h.x_edges.size() < 2 || h.p_edges.size() < 2) {
    // Default window from the unconditioned moments at t = 0.
    double var_x = 0.0, var_p = 0.0, max_abs_x = 0.0;
    for (std::size_t i = 0; i < batch.n_rows; ++i) {
      max_abs_x = std::max(max_abs_x, std::abs(batch.x(i, first)));
    }
    var_x = report.sigma_x_sq;
    var_p = report.sigma_p_sq;
    const double hx = std::min(max_abs_x, std::abs(report.mean_x) +
                                              options.n_sigma * std::sqrt(var_x));
    const double hp = options.n_sigma * std::sqrt(var_p);
    if (h.x_edges.size() < 2) {
      h.x_edges = linear_edges(-hx, hx, options.default_bins);
    }
    if (h.p_edges.size() < 2) {
      h.p_edges = linear_edges(-hp, hp, options.default_bins);
    }
  }
  h.counts.assign(h.nx() * h.np(), 0);
  for (std::size_t r : rows) {
    const auto ix = Grid3::locate(h.x_edges, batch.x(r, first));
    const auto ip = Grid3::locate(h.p_edges, batch.p(r, first));
    if (ix < 0 || ip < 0) {
      ++h.outside;
      continue;
    }
    ++h.counts[static_cast<std::size_t>(ix) * h.np() + static_cast<std::size_t>(ip)];
  }
  return report;
}

Histogram1D conditional_p_distribution(const TrajectoryBatch& batch,
                                       Outcome outcome, std::size_t slice,
                                       double lo, double hi, std::size_t bins,
                                       std::size_t min_selected) {
  if (slice >= batch.n_slices()) {
    throw AnalysisError("slice index out of range");
  }
  const std::vector<std::size_t> rows = selected_rows(batch, outcome, min_selected);
  Histogram1D hist = Histogram1D::uniform(lo, hi, bins);
  for (std::size_t r : rows) {
    hist.add(batch.attenuated_at(r, slice));
  }
  return hist;
}

// ---------------------------------------------------------------------------

PostselectionOracle postselection_oracle(const SuperpositionSpec& spec,
                                         const MeasurementConfig& cfg,
                                         Outcome outcome) {
  const SelectedDensity density(spec, cfg, outcome);
  const double sx = std::sqrt(std::max(spec.sigma_x_sq(), 1.0) + 1.0);
  const double x_half = spec.x1 + 12.0 * sx;
  const double sp = std::sqrt(spec.sigma_p_sq());
  const double p_half = 12.0 * sp;
  const int np = p_intervals(spec, p_half);
  const int nx = 2400;

  const double hx = 2.0 * x_half / nx;
  const auto wx = quadrature::simpson_weights(nx, hx);
  const double hp = 2.0 * p_half / np;
  const auto wp = quadrature::simpson_weights(np, hp);

  CompensatedSum m0, m1, m2, q1, q2;
  for (int i = 0; i <= nx; ++i) {
    const double x = -x_half + i * hx;
    const double m = density(x);
    if (m == 0.0) {
      continue;
    }
    double e1 = 0.0;
    double e2 = 0.0;
    for (int j = 0; j <= np; ++j) {
      const double p = -p_half + j * hp;
      const double c = wp[static_cast<std::size_t>(j)] *
                       conditional_p_given_x(spec, x, p);
      e1 += c * p;
      e2 += c * p * p;
    }
    const double w = wx[static_cast<std::size_t>(i)] * m;
    m0.add(w);
    m1.add(w * x);
    m2.add(w * x * x);
    q1.add(w * e1);
    q2.add(w * e2);
  }

  PostselectionOracle out;
  out.mass = m0.value();
  if (!(out.mass > 0.0)) {
    throw AnalysisError("selected outcome carries no probability");
  }
  out.mean_x = m1.value() / out.mass;
  out.mean_p = q1.value() / out.mass;
  out.sigma_x_sq = m2.value() / out.mass - out.mean_x * out.mean_x;
  out.sigma_p_sq = q2.value() / out.mass - out.mean_p * out.mean_p;
  out.var_x_cond = out.sigma_x_sq - 1.0;
  out.var_p_cond = out.sigma_p_sq - 1.0;
  out.epsilon = product_or_nan(out.var_x_cond, out.var_p_cond);
  return out;
}

std::vector<double> postselection_bin_probs(const SuperpositionSpec& spec,
                                            const MeasurementConfig& cfg,
                                            Outcome outcome,
                                            const std::vector<double>& x_edges,
                                            const std::vector<double>& p_edges,
                                            int intervals) {
  if (x_edges.size() < 2 || p_edges.size() < 2) {
    throw AnalysisError("bin edges need at least one bin per axis");
  }
  const SelectedDensity density(spec, cfg, outcome);
  const double mass = postselection_oracle(spec, cfg, outcome).mass;
  const std::size_t nx = x_edges.size() - 1;
  const std::size_t np = p_edges.size() - 1;
  std::vector<double> probs(nx * np, 0.0);
  for (std::size_t i = 0; i < nx; ++i) {
    const double hx = (x_edges[i + 1] - x_edges[i]) / intervals;
    const auto wx = quadrature::simpson_weights(intervals, hx);
    for (int a = 0; a <= intervals; ++a) {
      const double x = x_edges[i] + a * hx;
      const double mw = wx[static_cast<std::size_t>(a)] * density(x) / mass;
      if (mw == 0.0) {
        continue;
      }
      for (std::size_t j = 0; j < np; ++j) {
        probs[i * np + j] += mw * quadrature::simpson(
                                      [&](double p) {
                                        return conditional_p_given_x(spec, x, p);
                                      },
                                      p_edges[j], p_edges[j + 1], intervals);
      }
    }
  }
  return probs;
}

void write_qhist_csv(std::ostream& os, const QHistogram2D& hist,
                     const std::vector<double>& probs) {
  os << "x_lo,x_hi,p_lo,p_hi,count,oracle_prob\n";
  for (std::size_t i = 0; i < hist.nx(); ++i) {
    for (std::size_t j = 0; j < hist.np(); ++j) {
      const std::size_t b = i * hist.np() + j;
      os << fmt(hist.x_edges[i]) << ',' << fmt(hist.x_edges[i + 1]) << ','
         << fmt(hist.p_edges[j]) << ',' << fmt(hist.p_edges[j + 1]) << ','
         << hist.counts[b] << ',' << (probs.empty() ? std::string("")
                                                    : fmt(probs[b]))
         << '\n';
    }
  }
}

} // namespace qtraj
