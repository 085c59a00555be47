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

#include "qtraj/stats.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <limits>
#include <numbers>
#include <ostream>
#include <string>

#include <boost/math/distributions/chi_squared.hpp>

#include "qtraj/parallel.hpp"

namespace qtraj {

namespace {

std::vector<double> make_edges(double lo, double hi, double width) {
  if (!(width > 0.0) || !(hi > lo)) {
    throw StatsError("grid needs hi > lo and a positive bin width");
  }
  const auto n = static_cast<std::size_t>(std::llround((hi - lo) / width));
  std::vector<double> edges(std::max<std::size_t>(n, 1) + 1);
  for (std::size_t i = 0; i < edges.size(); ++i) {
    edges[i] = lo + static_cast<double>(i) * width;
  }
  return edges;
}

void check_edges(const std::vector<double>& edges, const char* axis) {
  if (edges.size() < 2) {
    throw StatsError(std::string(axis) + " axis needs at least one bin");
  }
  for (std::size_t i = 1; i < edges.size(); ++i) {
    if (!(edges[i] > edges[i - 1])) {
      throw StatsError(std::string(axis) + " edges must be strictly increasing");
    }
  }
}

/// Per-bin Simpson sums of f over every bin of `edges`.
template <typename F>
std::vector<double> per_bin_simpson(const std::vector<double>& edges,
                                    int intervals, F&& f) {
  std::vector<double> out(edges.size() - 1);
  for (std::size_t i = 0; i + 1 < edges.size(); ++i) {
    out[i] = quadrature::simpson(f, edges[i], edges[i + 1], intervals);
  }
  return out;
}

std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v,
                                 std::chars_format::general, 17);
  return std::string(buf, res.ptr);
}

} // namespace

// ---------------------------------------------------------------------------

std::ptrdiff_t Grid3::locate(const std::vector<double>& edges, double v) {
  if (!(v >= edges.front()) || !(v < edges.back())) {
    return -1;
  }
  const auto it = std::upper_bound(edges.begin(), edges.end(), v);
  return static_cast<std::ptrdiff_t>(it - edges.begin()) - 1;
}

void Grid3::validate() const {
  check_edges(x_edges, "x");
  check_edges(p_edges, "p");
  if (steps.empty() || steps.size() != times.size()) {
    throw StatsError("grid needs at least one time slice with a time");
  }
}

Grid3 Grid3::uniform(double x_lo, double x_hi, double dx, double p_lo,
                     double p_hi, double dp, std::vector<int> steps,
                     const TimeGrid& time_grid) {
  Grid3 grid;
  grid.x_edges = make_edges(x_lo, x_hi, dx);
  grid.p_edges = make_edges(p_lo, p_hi, dp);
  grid.steps = std::move(steps);
  for (int s : grid.steps) {
    grid.times.push_back(time_grid.time(s));
  }
  grid.validate();
  return grid;
}

Grid3 auto_grid(const SuperpositionSpec& spec, const MeasurementConfig& cfg,
                double dx, double dp, std::vector<int> steps, double n_sigma) {
  const TimeGrid tg = TimeGrid::from_config(cfg);
  double x_half = 0.0;
  double p_half = 0.0;
  for (int s : steps) {
    const EvolvedWidths w = evolved_widths(spec, cfg.signed_gain(), tg.time(s));
    x_half = std::max(x_half, w.gain * spec.x1 + n_sigma * std::sqrt(w.var_x));
    p_half = std::max(p_half, n_sigma * std::sqrt(w.var_p));
  }
  const double nx = std::ceil(x_half / dx);
  const double np = std::ceil(p_half / dp);
  return Grid3::uniform(-nx * dx, nx * dx, dx, -np * dp, np * dp, dp,
                        std::move(steps), tg);
}

Histogram3D::Histogram3D(Grid3 g) : grid(std::move(g)) {
  grid.validate();
  counts.assign(grid.n_slices() * grid.bins_per_slice(), 0);
  out_of_grid.assign(grid.n_slices(), 0);
}

void Histogram3D::merge(const Histogram3D& other) {
  if (other.counts.size() != counts.size()) {
    throw StatsError("cannot merge histograms on different grids");
  }
  for (std::size_t i = 0; i < counts.size(); ++i) {
    counts[i] += other.counts[i];
  }
  for (std::size_t s = 0; s < out_of_grid.size(); ++s) {
    out_of_grid[s] += other.out_of_grid[s];
  }
  n_samples += other.n_samples;
}

void accumulate(Histogram3D& hist, const TrajectoryBatch& batch,
                unsigned workers) {
  const Grid3& grid = hist.grid;
  std::vector<std::size_t> batch_slice(grid.n_slices());
  for (std::size_t s = 0; s < grid.n_slices(); ++s) {
    batch_slice[s] = batch.slice_of_step(grid.steps[s]);
  }
  const unsigned count = static_cast<unsigned>(
      std::min<std::size_t>(resolve_workers(workers),
                            std::max<std::size_t>(batch.n_rows, 1)));

  auto fill = [&](Histogram3D& target, std::size_t begin, std::size_t end) {
    const std::size_t np = grid.np();
    const std::size_t per_slice = grid.bins_per_slice();
    for (std::size_t row = begin; row < end; ++row) {
      for (std::size_t s = 0; s < grid.n_slices(); ++s) {
        const std::size_t bs = batch_slice[s];
        const std::ptrdiff_t ix = Grid3::locate(grid.x_edges, batch.x(row, bs));
        const std::ptrdiff_t ip = Grid3::locate(grid.p_edges, batch.p(row, bs));
        if (ix < 0 || ip < 0) {
          ++target.out_of_grid[s];
          continue;
        }
        ++target.counts[s * per_slice + static_cast<std::size_t>(ix) * np +
                        static_cast<std::size_t>(ip)];
      }
    }
  };

  if (count <= 1) {
    fill(hist, 0, batch.n_rows);
  } else {
    std::vector<Histogram3D> locals(count, Histogram3D(grid));
    parallel_ranges(batch.n_rows, count,
                    [&](unsigned w, std::size_t begin, std::size_t end) {
                      fill(locals[w], begin, end);
                    });
    for (const auto& local : locals) {
      hist.merge(local);
    }
  }
  hist.n_samples += batch.n_rows;
}

Histogram3D bin_counts(const TrajectoryBatch& batch, const Grid3& grid,
                       unsigned workers) {
  Histogram3D hist(grid);
  accumulate(hist, batch, workers);
  return hist;
}

std::vector<double> analytic_slice_probs(const SuperpositionSpec& spec,
                                         const MeasurementConfig& cfg,
                                         const Grid3& grid, std::size_t slice,
                                         int intervals) {
  if (intervals < 2 || intervals % 2 != 0) {
    throw StatsError("Simpson intervals per bin must be even and >= 2");
  }
  const EvolvedWidths w =
      evolved_widths(spec, cfg.signed_gain(), grid.times.at(slice));
  const double mean = w.gain * spec.x1;
  const double c1 = spec.c1_sq;
  const double c2 = spec.c2_sq();
  const double cross = spec.cross_weight();
  const double prefactor =
      1.0 / (2.0 * std::numbers::pi * std::sqrt(w.var_x * w.var_p));

  // q_sup(x, p) = prefactor [A(x) E(p) - cross B(x) S(p)] separates, so the
  // tensor-product Simpson sum over a bin factors into 1-D sums.
  const auto hills = per_bin_simpson(grid.x_edges, intervals, [&](double x) {
    const double a = (x - mean) * (x - mean);
    const double b = (x + mean) * (x + mean);
    return c1 * std::exp(-a / (2.0 * w.var_x)) +
           c2 * std::exp(-b / (2.0 * w.var_x));
  });
  const auto envelope = per_bin_simpson(grid.p_edges, intervals, [&](double p) {
    return std::exp(-p * p / (2.0 * w.var_p));
  });
  std::vector<double> centre;
  std::vector<double> sine;
  if (cross > 0.0) {
    centre = per_bin_simpson(grid.x_edges, intervals, [&](double x) {
      return std::exp(-(x * x + mean * mean) / (2.0 * w.var_x));
    });
    sine = per_bin_simpson(grid.p_edges, intervals, [&](double p) {
      return std::exp(-p * p / (2.0 * w.var_p)) * std::sin(p * mean / w.var_x);
    });
  }

  const std::size_t nx = grid.nx();
  const std::size_t np = grid.np();
  std::vector<double> probs(nx * np);
  for (std::size_t i = 0; i < nx; ++i) {
    for (std::size_t j = 0; j < np; ++j) {
      double v = hills[i] * envelope[j];
      if (cross > 0.0) {
        v -= cross * centre[i] * sine[j];
      }
      v *= prefactor;
      if (!std::isfinite(v)) {
        throw StatsError("non-finite analytic probability in bin (slice " +
                         std::to_string(slice) + ", ix " + std::to_string(i) +
                         ", ip " + std::to_string(j) + ")");
      }
      probs[i * np + j] = std::max(0.0, v);
    }
  }
  return probs;
}

std::vector<double> analytic_bin_probs(const SuperpositionSpec& spec,
                                       const MeasurementConfig& cfg,
                                       const Grid3& grid, int intervals) {
  std::vector<double> all;
  all.reserve(grid.n_slices() * grid.bins_per_slice());
  for (std::size_t s = 0; s < grid.n_slices(); ++s) {
    const auto slice = analytic_slice_probs(spec, cfg, grid, s, intervals);
    all.insert(all.end(), slice.begin(), slice.end());
  }
  return all;
}

// ---------------------------------------------------------------------------

Chi2Accumulator::Chi2Accumulator(std::uint64_t n_samples, Chi2Options options)
    : n_samples_(n_samples), options_(options) {
  if (n_samples == 0) {
    throw StatsError("chi-squared needs at least one sample");
  }
  partial_.n_samples = n_samples;
}

void Chi2Accumulator::add_slice(double t, std::span<const std::uint32_t> counts,
                                std::span<const double> probs,
                                std::uint64_t out_of_grid) {
  if (counts.size() != probs.size()) {
    throw StatsError("count and probability arrays differ in size");
  }
  const double n = static_cast<double>(n_samples_);
  const double threshold = static_cast<double>(options_.min_count);
  CompensatedSum chi2;
  std::size_t k = 0;
  for (std::size_t b = 0; b < counts.size(); ++b) {
    const double expected = probs[b] * n;
    const double observed = counts[b];
    const bool significant = options_.selection == BinSelection::Expected
                                 ? expected >= threshold
                                 : observed >= threshold;
    if (!significant) {
      continue;
    }
    ++k;
    if (expected <= 0.0) {
      chi2.add(std::numeric_limits<double>::infinity());
      continue;
    }
    const double diff = observed - expected;
    chi2.add(diff * diff / expected);
  }
  partial_.per_slice.push_back({t, chi2.value(), k});
  partial_.n_valid += k;
  partial_.total_bins += counts.size();
  partial_.out_of_grid += out_of_grid;
  chi2_total_.add(chi2.value());
}

Chi2Report Chi2Accumulator::finish() const {
  Chi2Report report = partial_;
  if (report.per_slice.empty() || report.n_valid == 0) {
    throw StatsError("no significant bins: cannot form chi-squared");
  }
  const double slices = static_cast<double>(report.per_slice.size());
  report.chi2_bar = chi2_total_.value() / slices;
  report.k = static_cast<double>(report.n_valid) / slices;
  const double half = options_.band_sigmas * std::sqrt(2.0 * report.k);
  report.lower = report.k - half;
  report.upper = report.k + half;
  report.pass = report.chi2_bar >= report.lower && report.chi2_bar <= report.upper;
  return report;
}

Chi2Report chi2_time_averaged(const Histogram3D& counts,
                              std::span<const double> probs,
                              std::uint64_t n_samples,
                              const Chi2Options& options) {
  const std::size_t per_slice = counts.grid.bins_per_slice();
  if (probs.size() != counts.counts.size()) {
    throw StatsError("probability array does not match histogram shape");
  }
  Chi2Accumulator acc(n_samples, options);
  for (std::size_t s = 0; s < counts.grid.n_slices(); ++s) {
    acc.add_slice(counts.grid.times[s], counts.slice_counts(s),
                  probs.subspan(s * per_slice, per_slice),
                  counts.out_of_grid[s]);
  }
  return acc.finish();
}

Chi2Report run_chi2_verification(const SuperpositionSpec& model_spec,
                                 const SuperpositionSpec& sim_spec,
                                 const MeasurementConfig& cfg,
                                 const EngineOptions& engine,
                                 const VerificationPlan& plan,
                                 Grid3* grid_out) {
  model_spec.validate();
  cfg.validate();
  const TimeGrid tg = TimeGrid::from_config(cfg);
  std::vector<int> steps = engine.stored_steps.empty()
                               ? default_stored_steps(tg.n_steps)
                               : engine.stored_steps;
  const Grid3 grid = auto_grid(model_spec, cfg, plan.dx, plan.dp, steps);
  if (grid_out) {
    *grid_out = grid;
  }

  const std::size_t half_budget = std::max<std::size_t>(plan.memory_budget_bytes / 2, 1);
  const std::size_t slice_bytes = grid.bins_per_slice() * sizeof(std::uint32_t) *
                                  std::max(1u, resolve_workers(engine.workers));
  const std::size_t slices_per_chunk =
      std::clamp<std::size_t>(half_budget / std::max<std::size_t>(slice_bytes, 1), 1,
                              grid.n_slices());

  Chi2Accumulator acc(cfg.n_samples, plan.chi2);
  for (std::size_t first = 0; first < grid.n_slices(); first += slices_per_chunk) {
    const std::size_t last = std::min(grid.n_slices(), first + slices_per_chunk);
    Grid3 sub = grid;
    sub.steps.assign(grid.steps.begin() + static_cast<std::ptrdiff_t>(first),
                     grid.steps.begin() + static_cast<std::ptrdiff_t>(last));
    sub.times.assign(grid.times.begin() + static_cast<std::ptrdiff_t>(first),
                     grid.times.begin() + static_cast<std::ptrdiff_t>(last));
    Histogram3D hist(sub);

    EngineOptions chunk_engine = engine;
    chunk_engine.stored_steps = sub.steps;
    const std::size_t row_bytes = 2 * (sub.n_slices() + 2) * sizeof(double) + 1;
    const std::size_t rows_per_chunk =
        std::max<std::size_t>(half_budget / row_bytes, 1);
    for (std::size_t r0 = 0; r0 < cfg.n_samples; r0 += rows_per_chunk) {
      const std::size_t r1 = std::min(cfg.n_samples, r0 + rows_per_chunk);
      const TrajectoryBatch batch = simulate_rows(sim_spec, cfg, chunk_engine, r0, r1);
      accumulate(hist, batch, engine.workers);
    }
    for (std::size_t s = 0; s < sub.n_slices(); ++s) {
      const auto probs = analytic_slice_probs(model_spec, cfg, sub, s, plan.intervals);
      acc.add_slice(sub.times[s], hist.slice_counts(s), probs, hist.out_of_grid[s]);
    }
  }
  return acc.finish();
}

void write_histogram_csv(std::ostream& os, const Histogram3D& hist,
                         std::span<const double> probs) {
  const Grid3& g = hist.grid;
  os << "t,x_lo,x_hi,p_lo,p_hi,count,analytic_prob\n";
  for (std::size_t s = 0; s < g.n_slices(); ++s) {
    for (std::size_t i = 0; i < g.nx(); ++i) {
      for (std::size_t j = 0; j < g.np(); ++j) {
        const std::size_t b = (s * g.nx() + i) * g.np() + j;
        const double prob = probs.empty() ? 0.0 : probs[b];
        if (hist.counts[b] == 0 && prob < 1e-12) {
          continue;
        }
        os << format_double(g.times[s]) << ',' << format_double(g.x_edges[i])
           << ',' << format_double(g.x_edges[i + 1]) << ','
           << format_double(g.p_edges[j]) << ','
           << format_double(g.p_edges[j + 1]) << ',' << hist.counts[b] << ','
           << format_double(prob) << '\n';
      }
    }
  }
}

// ---------------------------------------------------------------------------

MomentEstimate jackknife_moments(std::span<const double> values, int blocks) {
  MomentEstimate est;
  const std::size_t n = values.size();
  if (n == 0) {
    throw StatsError("moments of an empty sample");
  }
  const double shift = values[0];
  const std::size_t b_count =
      std::max<std::size_t>(1, std::min<std::size_t>(static_cast<std::size_t>(blocks), n));
  std::vector<CompensatedSum> s1(b_count), s2(b_count);
  std::vector<std::size_t> nb(b_count, 0);
  CompensatedSum t1, t2;
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t b = i * b_count / n;
    const double d = values[i] - shift;
    s1[b].add(d);
    s2[b].add(d * d);
    t1.add(d);
    t2.add(d * d);
    ++nb[b];
  }
  const double nn = static_cast<double>(n);
  const double mean_d = t1.value() / nn;
  est.mean = shift + mean_d;
  est.var = n > 1 ? (t2.value() - nn * mean_d * mean_d) / (nn - 1.0) : 0.0;
  est.var = std::max(0.0, est.var);
  if (b_count < 2 || n < 2 * b_count) {
    return est;
  }
  std::vector<double> means(b_count), vars(b_count);
  for (std::size_t b = 0; b < b_count; ++b) {
    const double m = nn - static_cast<double>(nb[b]);
    const double md = (t1.value() - s1[b].value()) / m;
    means[b] = md;
    vars[b] = ((t2.value() - s2[b].value()) - m * md * md) / (m - 1.0);
  }
  auto spread = [&](const std::vector<double>& v) {
    double avg = 0.0;
    for (double x : v) avg += x;
    avg /= static_cast<double>(v.size());
    double ss = 0.0;
    for (double x : v) ss += (x - avg) * (x - avg);
    const double bc = static_cast<double>(v.size());
    return std::sqrt((bc - 1.0) / bc * ss);
  };
  est.se_mean = spread(means);
  est.se_var = spread(vars);
  return est;
}

MomentSummary moment_summary(const TrajectoryBatch& batch, std::size_t slice,
                             int blocks) {
  if (slice >= batch.n_slices()) {
    throw StatsError("slice index out of range");
  }
  std::vector<double> xs(batch.n_rows), ps(batch.n_rows);
  for (std::size_t i = 0; i < batch.n_rows; ++i) {
    xs[i] = batch.x(i, slice);
    ps[i] = batch.p(i, slice);
  }
  MomentSummary out;
  out.t = batch.time_of_slice(slice);
  out.n = batch.n_rows;
  out.x = jackknife_moments(xs, blocks);
  out.p = jackknife_moments(ps, blocks);
  return out;
}

// ---------------------------------------------------------------------------

Histogram1D Histogram1D::uniform(double lo, double hi, std::size_t bins) {
  if (bins == 0 || !(hi > lo)) {
    throw StatsError("1-D histogram needs hi > lo and at least one bin");
  }
  Histogram1D h;
  h.edges.resize(bins + 1);
  for (std::size_t i = 0; i <= bins; ++i) {
    h.edges[i] = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(bins);
  }
  h.counts.assign(bins, 0);
  return h;
}

void Histogram1D::add(double v) {
  const std::ptrdiff_t i = Grid3::locate(edges, v);
  if (i >= 0) {
    ++counts[static_cast<std::size_t>(i)];
  } else if (v < edges.front()) {
    ++below;
  } else {
    ++above;
  }
}

std::uint64_t Histogram1D::in_range() const {
  std::uint64_t total = 0;
  for (auto c : counts) total += c;
  return total;
}

GoodnessOfFit chi2_goodness_of_fit(const Histogram1D& hist,
                                   std::span<const double> probs,
                                   std::uint64_t n_total, double min_expected,
                                   double band_sigmas) {
  if (probs.size() != hist.counts.size()) {
    throw StatsError("probability array does not match histogram");
  }
  GoodnessOfFit out;
  const double n = static_cast<double>(n_total);
  for (std::size_t i = 0; i < probs.size(); ++i) {
    const double e = probs[i] * n;
    if (e < min_expected) {
      continue;
    }
    const double d = static_cast<double>(hist.counts[i]) - e;
    out.chi2 += d * d / e;
    ++out.k;
  }
  if (out.k == 0) {
    throw StatsError("no bins reach the expected-count threshold");
  }
  const double k = static_cast<double>(out.k);
  out.lower = k - band_sigmas * std::sqrt(2.0 * k);
  out.upper = k + band_sigmas * std::sqrt(2.0 * k);
  out.p_value = chi2_survival(out.chi2, k);
  out.pass = out.chi2 >= out.lower && out.chi2 <= out.upper;
  return out;
}

TwoSampleResult chi2_two_sample(const Histogram1D& a, const Histogram1D& b,
                                std::uint64_t min_combined) {
  if (a.edges != b.edges) {
    throw StatsError("two-sample test needs identical binning");
  }
  double ra = 0.0, rb = 0.0;
  std::vector<std::size_t> used;
  for (std::size_t i = 0; i < a.counts.size(); ++i) {
    if (a.counts[i] + b.counts[i] >= min_combined) {
      used.push_back(i);
      ra += static_cast<double>(a.counts[i]);
      rb += static_cast<double>(b.counts[i]);
    }
  }
  if (used.size() < 2 || ra == 0.0 || rb == 0.0) {
    throw StatsError("two-sample test needs at least two populated bins");
  }
  const double ka = std::sqrt(rb / ra);
  const double kb = std::sqrt(ra / rb);
  TwoSampleResult out;
  for (std::size_t i : used) {
    const double ai = static_cast<double>(a.counts[i]);
    const double bi = static_cast<double>(b.counts[i]);
    const double d = ka * ai - kb * bi;
    out.chi2 += d * d / (ai + bi);
  }
  out.dof = static_cast<int>(used.size()) - 1;
  out.p_value = chi2_survival(out.chi2, out.dof);
  return out;
}

double chi2_survival(double chi2, double dof) {
  if (!(dof > 0.0)) {
    throw StatsError("chi-squared needs positive degrees of freedom");
  }
  if (!std::isfinite(chi2)) {
    return 0.0;
  }
  const boost::math::chi_squared_distribution<double> dist(dof);
  return boost::math::cdf(boost::math::complement(dist, std::max(0.0, chi2)));
}

double kolmogorov_survival(double lambda) {
  if (lambda <= 0.0) {
    return 1.0;
  }
  if (lambda < 1.0) {
    // P(K <= lambda) = sqrt(2 pi)/lambda sum exp(-(2k-1)^2 pi^2 / 8 lambda^2)
    const double pi2 = std::numbers::pi * std::numbers::pi;
    double cdf = 0.0;
    for (int k = 1; k < 50; ++k) {
      const double m = 2.0 * k - 1.0;
      const double term = std::exp(-m * m * pi2 / (8.0 * lambda * lambda));
      cdf += term;
      if (term < 1e-300) break;
    }
    cdf *= std::sqrt(2.0 * std::numbers::pi) / lambda;
    return std::clamp(1.0 - cdf, 0.0, 1.0);
  }
  double sum = 0.0;
  for (int k = 1; k < 200; ++k) {
    const double term = std::exp(-2.0 * k * k * lambda * lambda);
    sum += (k % 2 == 1 ? term : -term);
    if (term < 1e-300) break;
  }
  return std::clamp(2.0 * sum, 0.0, 1.0);
}

KsResult ks_test(std::vector<double>& sample,
                 const std::function<double(double)>& cdf) {
  if (sample.empty()) {
    throw StatsError("KS test of an empty sample");
  }
  std::sort(sample.begin(), sample.end());
  const double n = static_cast<double>(sample.size());
  double d = 0.0;
  for (std::size_t i = 0; i < sample.size(); ++i) {
    const double f = cdf(sample[i]);
    d = std::max({d, f - static_cast<double>(i) / n,
                  static_cast<double>(i + 1) / n - f});
  }
  KsResult out;
  out.d = d;
  const double root = std::sqrt(n);
  out.p_value = kolmogorov_survival((root + 0.12 + 0.11 / root) * d);
  return out;
}

} // namespace qtraj
