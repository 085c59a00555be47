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

#ifndef QTRAJ_ANALYSIS_HPP
#define QTRAJ_ANALYSIS_HPP

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <vector>

#include "qtraj/engine.hpp"
#include "qtraj/model.hpp"
#include "qtraj/stats.hpp"

namespace qtraj {

class AnalysisError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

enum class Outcome { Plus, Minus };

std::string to_string(Outcome outcome);

/// Sign rule for the amplified value at t_f; zero goes to Plus.
inline bool selected(Outcome outcome, double amplified_final) {
  return outcome == Outcome::Plus ? amplified_final >= 0.0
                                  : amplified_final < 0.0;
}

// ---------------------------------------------------------------------------
// Born fractions

struct BornFraction {
  double f_plus = 0.0;
  /// Binomial standard error sqrt(f (1 - f) / n).
  double se = 0.0;
  std::size_t n = 0;
  std::size_t n_plus = 0;
};

BornFraction born_fraction(const TrajectoryBatch& batch);

/// Mass of one amplified hill that lies across x = 0 at t_f. The sign
/// fraction is ill-defined when this is not small.
double hill_overlap_mass(const SuperpositionSpec& spec,
                         const MeasurementConfig& cfg);

inline constexpr double kOverlapWarning = 1e-3;

/// Large-gain limit of the scaled x marginal: c1^2 N(x1, e^{-2r}) +
/// c2^2 N(-x1, e^{-2r}).
double born_x_scaled_limit(const SuperpositionSpec& spec, double x_tilde);

/// |<x|cat>|^2 in the scaled variable for the cat of amplitude alpha0.
double cat_born_x(double alpha0, double x_tilde);

/// Large-gain limit of the scaled amplified p marginal:
/// e^{-p^2 / 2 e^{2r}} (1 - 2|c1 c2| sin(p x1)) / (sqrt(2 pi) e^r).
double born_p_scaled_limit(const SuperpositionSpec& spec, double p_tilde);

/// |<p|cat>|^2 in the scaled variable for the cat of amplitude alpha0.
double cat_born_p(double alpha0, double p_tilde);

// ---------------------------------------------------------------------------
// Postselection

struct QHistogram2D {
  std::vector<double> x_edges;
  std::vector<double> p_edges;
  /// Row-major [ix][ip].
  std::vector<std::uint64_t> counts;
  std::uint64_t outside = 0;

  std::size_t nx() const { return x_edges.size() - 1; }
  std::size_t np() const { return p_edges.size() - 1; }
};

struct PostselectOptions {
  std::size_t min_selected = 1000;
  int jackknife_blocks = 100;
  /// Histogram of the selected (x(0), p(0)); empty edges pick a default
  /// range of +-n_sigma around the prepared state.
  std::vector<double> x_edges;
  std::vector<double> p_edges;
  std::size_t default_bins = 48;
  double n_sigma = 5.0;
};

struct PostselectionReport {
  Outcome outcome = Outcome::Plus;
  std::size_t n_selected = 0;
  std::size_t n_total = 0;
  double mean_x = 0.0;
  double mean_p = 0.0;
  /// Antinormally ordered variances sigma^2_{x,+-}(0) of the selected rows.
  double sigma_x_sq = 0.0;
  double sigma_p_sq = 0.0;
  /// sigma^2 - 1, reported raw (may dip below zero from sampling noise).
  double var_x_cond = 0.0;
  double var_p_cond = 0.0;
  double se_var_x = 0.0;
  double se_var_p = 0.0;
  /// Defined only when both conditioned variances are positive.
  bool epsilon_defined = false;
  double epsilon = 0.0;
  double se_epsilon = 0.0;
  QHistogram2D q_hist;
};

PostselectionReport postselect(const TrajectoryBatch& batch, Outcome outcome,
                               const PostselectOptions& options = {});

/// Attenuated-variable values at `slice` over rows selected by `outcome`.
Histogram1D conditional_p_distribution(const TrajectoryBatch& batch,
                                       Outcome outcome, std::size_t slice,
                                       double lo, double hi, std::size_t bins,
                                       std::size_t min_selected = 1000);

/// Deterministic counterpart of postselect() for MeasureX. The selected
/// initial density is
///   m(x_p) = int_{x_f in outcome} P(x_f, t_f) K(x_p | x_f) dx_f,
///   K = N(x_f e^{-g t_f}, 1 - e^{-2 g t_f}),
/// and p_p follows conditional_p_given_x(x_p). All three layers are
/// integrated numerically.
struct PostselectionOracle {
  double mass = 0.0;
  double mean_x = 0.0;
  double mean_p = 0.0;
  double sigma_x_sq = 0.0;
  double sigma_p_sq = 0.0;
  double var_x_cond = 0.0;
  double var_p_cond = 0.0;
  double epsilon = 0.0;
};

PostselectionOracle postselection_oracle(const SuperpositionSpec& spec,
                                         const MeasurementConfig& cfg,
                                         Outcome outcome);

/// Bin probabilities of the selected (x(0), p(0)) pair, normalized to the
/// selected mass. Row-major [ix][ip].
std::vector<double> postselection_bin_probs(const SuperpositionSpec& spec,
                                            const MeasurementConfig& cfg,
                                            Outcome outcome,
                                            const std::vector<double>& x_edges,
                                            const std::vector<double>& p_edges,
                                            int intervals = 4);

void write_qhist_csv(std::ostream& os, const QHistogram2D& hist,
                     const std::vector<double>& probs);

} // namespace qtraj

#endif
