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

#ifndef QTRAJ_ENGINE_HPP
#define QTRAJ_ENGINE_HPP

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "qtraj/model.hpp"

namespace qtraj {

/// Forward-backward trajectory engine.
///
/// The amplified quadrature (x for MeasureX, p for MeasureP) is drawn at the
/// future boundary t_f from its evolved marginal and integrated backwards to
/// t = 0 under dy/dt_- = -|g| y + sqrt(2|g|) xi. The complementary quadrature
/// is then drawn at t = 0 from its conditional given the linked amplified
/// value and integrated forwards under the same decaying equation. Rows are
/// independent and each owns its random streams, so a row is a pure function
/// of (seed, row index, spec, config).

enum class Integrator {
  /// Semi-implicit midpoint rule. For the linear drift the implicit equation
  /// is solved exactly, which preserves the unit stationary variance.
  Midpoint,
  /// Exact Ornstein-Uhlenbeck transition; no discretization error.
  ExactOu,
};

struct TimeGrid {
  double t0 = 0.0;
  double t_f = 0.0;
  double dt = 0.0;
  int n_steps = 0;

  static TimeGrid from_config(const MeasurementConfig& cfg);
  double time(int step) const { return t0 + step * dt; }
};

struct EngineOptions {
  Integrator integrator = Integrator::Midpoint;
  /// Step indices to keep. Empty selects default_stored_steps(). Steps 0 and
  /// n_steps are always kept.
  std::vector<int> stored_steps;
  /// 0 means all available hardware threads.
  unsigned workers = 0;
};

/// All steps when there are at most `max_slices`, otherwise `max_slices`
/// evenly spaced steps including both ends.
std::vector<int> default_stored_steps(int n_steps, int max_slices = 31);

/// Linked trajectories on the stored time slices, row-major.
struct TrajectoryBatch {
  TimeGrid grid;
  Setting setting = Setting::MeasureX;
  std::vector<int> steps;
  /// Global index of the first row (non-zero for partial batches).
  std::size_t first_row = 0;
  std::size_t n_rows = 0;
  std::vector<double> amplified;
  std::vector<double> attenuated;
  /// +1 / -1: mixture component that seeded the future boundary. For
  /// MeasureP the boundary is a single fringe distribution and the label is
  /// the sign of the boundary draw.
  std::vector<std::int8_t> boundary_hill;

  std::size_t n_slices() const { return steps.size(); }
  std::size_t boundary_slice() const { return steps.size() - 1; }
  std::size_t slice_of_step(int step) const;
  double time_of_slice(std::size_t slice) const {
    return grid.time(steps[slice]);
  }

  double amplified_at(std::size_t row, std::size_t slice) const {
    return amplified[row * steps.size() + slice];
  }
  double attenuated_at(std::size_t row, std::size_t slice) const {
    return attenuated[row * steps.size() + slice];
  }
  /// Physical quadratures regardless of which one is amplified.
  double x(std::size_t row, std::size_t slice) const {
    return setting == Setting::MeasureX ? amplified_at(row, slice)
                                        : attenuated_at(row, slice);
  }
  double p(std::size_t row, std::size_t slice) const {
    return setting == Setting::MeasureX ? attenuated_at(row, slice)
                                        : amplified_at(row, slice);
  }
};

/// One step of dy = -rate y dt + sqrt(2 rate) dW with dW = sqrt(h) z.
double midpoint_step(double y, double rate, double h, double z);
double exact_ou_step(double y, double rate, double h, double z);

/// Amplified paths and boundary labels, before linking.
struct AmplifiedPaths {
  TimeGrid grid;
  std::vector<int> steps;
  std::size_t first_row = 0;
  std::size_t n_rows = 0;
  std::vector<double> values;
  std::vector<std::int8_t> boundary_hill;

  /// Value at t = 0 for each row, the link to the forward equation.
  std::vector<double> present() const;
};

AmplifiedPaths run_backward(const SuperpositionSpec& spec,
                            const MeasurementConfig& cfg,
                            const EngineOptions& options = {},
                            std::size_t row_begin = 0,
                            std::size_t row_end = SIZE_MAX);

/// Attenuated paths for rows [row_begin, row_begin + present.size()).
std::vector<double> run_forward(const SuperpositionSpec& spec,
                                const MeasurementConfig& cfg,
                                std::span<const double> amplified_present,
                                const EngineOptions& options = {},
                                std::size_t row_begin = 0);

TrajectoryBatch simulate(const SuperpositionSpec& spec,
                         const MeasurementConfig& cfg,
                         const EngineOptions& options = {});

/// Rows [row_begin, row_end) only; identical to the same rows of simulate().
TrajectoryBatch simulate_rows(const SuperpositionSpec& spec,
                              const MeasurementConfig& cfg,
                              const EngineOptions& options,
                              std::size_t row_begin, std::size_t row_end);

} // namespace qtraj

#endif
