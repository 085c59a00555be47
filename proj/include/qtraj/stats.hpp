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

#ifndef QTRAJ_STATS_HPP
#define QTRAJ_STATS_HPP

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <span>
#include <stdexcept>
#include <vector>

#include "qtraj/engine.hpp"
#include "qtraj/model.hpp"
#include "qtraj/quadrature.hpp"

namespace qtraj {

class StatsError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Neumaier-compensated running sum.
class CompensatedSum {
public:
  void add(double v) {
    const double t = sum_ + v;
    if (std::abs(sum_) >= std::abs(v)) {
      comp_ += (sum_ - t) + v;
    } else {
      comp_ += (v - t) + sum_;
    }
    sum_ = t;
  }
  double value() const { return sum_ + comp_; }

private:
  double sum_ = 0.0;
  double comp_ = 0.0;
};

// ---------------------------------------------------------------------------
// (x, p, t) binning

struct Grid3 {
  std::vector<double> x_edges;
  std::vector<double> p_edges;
  /// Time-grid step indices of the compared slices, and their times.
  std::vector<int> steps;
  std::vector<double> times;

  std::size_t nx() const { return x_edges.size() - 1; }
  std::size_t np() const { return p_edges.size() - 1; }
  std::size_t bins_per_slice() const { return nx() * np(); }
  std::size_t n_slices() const { return steps.size(); }
  /// dx * dp of bin (0, 0); all bins share it on uniform grids.
  double bin_area() const {
    return (x_edges[1] - x_edges[0]) * (p_edges[1] - p_edges[0]);
  }

  /// Index of the bin holding v, or -1 outside. Upper edges are exclusive.
  static std::ptrdiff_t locate(const std::vector<double>& edges, double v);

  void validate() const;

  static Grid3 uniform(double x_lo, double x_hi, double dx, double p_lo,
                       double p_hi, double dp, std::vector<int> steps,
                       const TimeGrid& time_grid);
};

/// Symmetric grid covering each hill out to n_sigma standard deviations at
/// the widest of the given slices; edges are multiples of dx and dp.
Grid3 auto_grid(const SuperpositionSpec& spec, const MeasurementConfig& cfg,
                double dx, double dp, std::vector<int> steps,
                double n_sigma = 6.0);

struct Histogram3D {
  Grid3 grid;
  std::uint64_t n_samples = 0;
  /// [slice][ix][ip] row-major.
  std::vector<std::uint32_t> counts;
  std::vector<std::uint64_t> out_of_grid;

  explicit Histogram3D(Grid3 g);
  std::uint32_t count(std::size_t slice, std::size_t ix, std::size_t ip) const {
    return counts[(slice * grid.nx() + ix) * grid.np() + ip];
  }
  std::span<const std::uint32_t> slice_counts(std::size_t slice) const {
    return {counts.data() + slice * grid.bins_per_slice(),
            grid.bins_per_slice()};
  }
  void merge(const Histogram3D& other);
};

/// Adds the batch's (x(t), p(t)) pairs at the grid's slices. Rows are split
/// across workers with private histograms merged by integer addition.
void accumulate(Histogram3D& hist, const TrajectoryBatch& batch,
                unsigned workers = 1);

Histogram3D bin_counts(const TrajectoryBatch& batch, const Grid3& grid,
                       unsigned workers = 1);

/// Per-bin integral of q_sup at one slice by composite Simpson with
/// `intervals` (even, >= 2) sub-intervals per bin and axis, i.e. at least
/// 3 x 3 nodes. Row-major [ix][ip].
std::vector<double> analytic_slice_probs(const SuperpositionSpec& spec,
                                         const MeasurementConfig& cfg,
                                         const Grid3& grid, std::size_t slice,
                                         int intervals = 16);

/// All slices, [slice][ix][ip].
std::vector<double> analytic_bin_probs(const SuperpositionSpec& spec,
                                       const MeasurementConfig& cfg,
                                       const Grid3& grid, int intervals = 16);

// ---------------------------------------------------------------------------
// Time-averaged chi-squared

enum class BinSelection {
  /// Bins with expected population p N_s >= min_count.
  Expected,
  /// Bins with sampled population N >= min_count.
  Observed,
};

struct Chi2Options {
  std::uint64_t min_count = 10;
  BinSelection selection = BinSelection::Expected;
  double band_sigmas = 3.0;
};

struct SliceChi2 {
  double t = 0.0;
  double chi2 = 0.0;
  std::size_t k = 0;
};

struct Chi2Report {
  double chi2_bar = 0.0;
  /// Mean significant bins per slice.
  double k = 0.0;
  std::size_t n_valid = 0;
  std::size_t total_bins = 0;
  std::uint64_t n_samples = 0;
  std::uint64_t out_of_grid = 0;
  double lower = 0.0;
  double upper = 0.0;
  bool pass = false;
  std::vector<SliceChi2> per_slice;
};

/// Streams slices into a time-averaged report.
class Chi2Accumulator {
public:
  Chi2Accumulator(std::uint64_t n_samples, Chi2Options options);

  void add_slice(double t, std::span<const std::uint32_t> counts,
                 std::span<const double> probs, std::uint64_t out_of_grid = 0);
  Chi2Report finish() const;

private:
  std::uint64_t n_samples_;
  Chi2Options options_;
  Chi2Report partial_;
  CompensatedSum chi2_total_;
};

Chi2Report chi2_time_averaged(const Histogram3D& counts,
                              std::span<const double> probs,
                              std::uint64_t n_samples,
                              const Chi2Options& options = {});

/// Full verification: simulate `sim_spec`, compare against `model_spec`.
/// Slices are processed in chunks that fit `memory_budget_bytes`; rows are
/// regenerated per chunk, which is exact because rows are deterministic.
struct VerificationPlan {
  double dx = 0.1;
  double dp = 0.2;
  int intervals = 16;
  Chi2Options chi2;
  std::size_t memory_budget_bytes = std::size_t{768} << 20;
};

Chi2Report run_chi2_verification(const SuperpositionSpec& model_spec,
                                 const SuperpositionSpec& sim_spec,
                                 const MeasurementConfig& cfg,
                                 const EngineOptions& engine,
                                 const VerificationPlan& plan,
                                 Grid3* grid_out = nullptr);

void write_histogram_csv(std::ostream& os, const Histogram3D& hist,
                         std::span<const double> probs);

// ---------------------------------------------------------------------------
// Moments

struct MomentEstimate {
  double mean = 0.0;
  double var = 0.0;
  double se_mean = 0.0;
  double se_var = 0.0;
};

struct MomentSummary {
  double t = 0.0;
  std::size_t n = 0;
  MomentEstimate x;
  MomentEstimate p;
};

/// Compensated moments with delete-one-block jackknife errors.
MomentEstimate jackknife_moments(std::span<const double> values,
                                 int blocks = 100);

MomentSummary moment_summary(const TrajectoryBatch& batch, std::size_t slice,
                             int blocks = 100);

// ---------------------------------------------------------------------------
// One-dimensional histograms and goodness of fit

struct Histogram1D {
  std::vector<double> edges;
  std::vector<std::uint64_t> counts;
  std::uint64_t below = 0;
  std::uint64_t above = 0;

  static Histogram1D uniform(double lo, double hi, std::size_t bins);
  void add(double v);
  std::uint64_t in_range() const;
  std::uint64_t total() const { return in_range() + below + above; }
};

/// Bin probabilities of a 1-D density by composite Simpson per bin.
template <typename Density>
std::vector<double> bin_probabilities(Density&& density,
                                      const std::vector<double>& edges,
                                      int intervals = 16) {
  std::vector<double> probs(edges.size() - 1);
  for (std::size_t i = 0; i + 1 < edges.size(); ++i) {
    probs[i] = quadrature::simpson(density, edges[i], edges[i + 1], intervals);
  }
  return probs;
}

struct GoodnessOfFit {
  double chi2 = 0.0;
  std::size_t k = 0;
  double lower = 0.0;
  double upper = 0.0;
  double p_value = 0.0;
  bool pass = false;
};

/// Pearson chi-squared of counts against probabilities over bins with
/// expected count >= min_expected; PASS iff chi2 in k +- band_sigmas sqrt(2k).
GoodnessOfFit chi2_goodness_of_fit(const Histogram1D& hist,
                                   std::span<const double> probs,
                                   std::uint64_t n_total,
                                   double min_expected = 10.0,
                                   double band_sigmas = 3.0);

struct TwoSampleResult {
  double chi2 = 0.0;
  int dof = 0;
  double p_value = 0.0;
};

/// Two-sample chi-squared for unequal sample sizes over bins with a combined
/// count >= min_combined.
TwoSampleResult chi2_two_sample(const Histogram1D& a, const Histogram1D& b,
                                std::uint64_t min_combined = 10);

/// Upper-tail probability of the chi-squared distribution.
double chi2_survival(double chi2, double dof);

/// Asymptotic Kolmogorov distribution Q(lambda) = P(K > lambda).
double kolmogorov_survival(double lambda);

struct KsResult {
  double d = 0.0;
  double p_value = 0.0;
};

/// One-sample Kolmogorov-Smirnov test; sorts `sample` in place.
KsResult ks_test(std::vector<double>& sample,
                 const std::function<double(double)>& cdf);

} // namespace qtraj

#endif
