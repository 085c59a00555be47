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

#include "qtraj/engine.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "qtraj/parallel.hpp"
#include "qtraj/rng.hpp"
#include "qtraj/sampler.hpp"

namespace qtraj {

TimeGrid TimeGrid::from_config(const MeasurementConfig& cfg) {
  TimeGrid grid;
  grid.t_f = cfg.t_f;
  grid.n_steps = cfg.n_steps();
  grid.dt = cfg.t_f / grid.n_steps;
  return grid;
}

std::vector<int> default_stored_steps(int n_steps, int max_slices) {
  std::vector<int> steps;
  if (n_steps + 1 <= max_slices) {
    for (int i = 0; i <= n_steps; ++i) {
      steps.push_back(i);
    }
    return steps;
  }
  for (int k = 0; k < max_slices; ++k) {
    steps.push_back(static_cast<int>(
        std::llround(static_cast<double>(k) * n_steps / (max_slices - 1))));
  }
  steps.erase(std::unique(steps.begin(), steps.end()), steps.end());
  return steps;
}

std::size_t TrajectoryBatch::slice_of_step(int step) const {
  const auto it = std::lower_bound(steps.begin(), steps.end(), step);
  if (it == steps.end() || *it != step) {
    throw std::out_of_range("step " + std::to_string(step) + " is not stored");
  }
  return static_cast<std::size_t>(it - steps.begin());
}

double midpoint_step(double y, double rate, double h, double z) {
  const double noise = std::sqrt(2.0 * rate * h) * z;
  const double half = 0.5 * rate * h;
  // y' = y - rate h (y + y') / 2 + noise, solved for y'.
  return ((1.0 - half) * y + noise) / (1.0 + half);
}

double exact_ou_step(double y, double rate, double h, double z) {
  const double decay = std::exp(-rate * h);
  return decay * y + std::sqrt(-std::expm1(-2.0 * rate * h)) * z;
}

namespace {

std::vector<int> resolve_steps(const EngineOptions& options, int n_steps) {
  std::vector<int> steps = options.stored_steps.empty()
                               ? default_stored_steps(n_steps)
                               : options.stored_steps;
  steps.push_back(0);
  steps.push_back(n_steps);
  std::sort(steps.begin(), steps.end());
  steps.erase(std::unique(steps.begin(), steps.end()), steps.end());
  if (steps.front() < 0 || steps.back() > n_steps) {
    throw ModelError("stored step index outside [0, n_steps]");
  }
  return steps;
}

class Stepper {
public:
  Stepper(Integrator integrator, double rate, double h)
      : integrator_(integrator), rate_(rate), h_(h) {}

  double operator()(double y, RngStream& rng) const {
    const double z = rng.normal();
    return integrator_ == Integrator::Midpoint ? midpoint_step(y, rate_, h_, z)
                                               : exact_ou_step(y, rate_, h_, z);
  }

private:
  Integrator integrator_;
  double rate_;
  double h_;
};

struct BoundaryDraw {
  double value;
  std::int8_t hill;
};

BoundaryDraw draw_future_boundary(const SuperpositionSpec& spec,
                                  const MeasurementConfig& cfg,
                                  RngStream& rng) {
  const EvolvedWidths w = evolved_widths(spec, cfg.signed_gain(), cfg.t_f);
  const double mean = w.gain * spec.x1;
  if (cfg.setting == Setting::MeasureX) {
    const MixtureDraw d = sample_gaussian_mixture(spec.c1_sq, mean, -mean,
                                                  std::sqrt(w.var_x), rng);
    return {d.value, static_cast<std::int8_t>(d.hill)};
  }
  const double amp =
      spec.cross_weight() * std::exp(-mean * mean / (2.0 * w.var_x));
  const double value = sample_fringe(std::sqrt(w.var_p), std::min(1.0, amp),
                                     mean / w.var_x, 0.0, rng);
  return {value, static_cast<std::int8_t>(value >= 0.0 ? 1 : -1)};
}

double draw_present_conditional(const SuperpositionSpec& spec, Setting setting,
                                double amplified_present, RngStream& rng) {
  if (setting == Setting::MeasureX) {
    return sample_fringe(std::sqrt(spec.sigma_p_sq()),
                         fringe_amplitude_given_x(spec, amplified_present),
                         spec.x1 / spec.sigma_x_sq(), 0.0, rng);
  }
  HillConditional target;
  target.c1_sq = spec.c1_sq;
  target.x1 = spec.x1;
  target.sigma = std::sqrt(spec.sigma_x_sq());
  target.central = spec.cross_weight() *
                   std::sin(amplified_present * spec.x1 / spec.sigma_x_sq());
  return sample_hill_conditional(target, rng);
}

void validate_inputs(const SuperpositionSpec& spec, const MeasurementConfig& cfg) {
  spec.validate();
  cfg.validate();
  (void)evolved_widths(spec, cfg.signed_gain(), cfg.t_f);
}

} // namespace

std::vector<double> AmplifiedPaths::present() const {
  std::vector<double> out(n_rows);
  const std::size_t stride = steps.size();
  for (std::size_t i = 0; i < n_rows; ++i) {
    out[i] = values[i * stride];
  }
  return out;
}

AmplifiedPaths run_backward(const SuperpositionSpec& spec,
                            const MeasurementConfig& cfg,
                            const EngineOptions& options, std::size_t row_begin,
                            std::size_t row_end) {
  validate_inputs(spec, cfg);
  row_end = std::min(row_end, cfg.n_samples);
  if (row_begin > row_end) {
    throw std::out_of_range("row range is inverted");
  }
  AmplifiedPaths out;
  out.grid = TimeGrid::from_config(cfg);
  out.steps = resolve_steps(options, out.grid.n_steps);
  out.first_row = row_begin;
  out.n_rows = row_end - row_begin;
  const std::size_t stride = out.steps.size();
  out.values.assign(out.n_rows * stride, 0.0);
  out.boundary_hill.assign(out.n_rows, 0);

  const Stepper step(options.integrator, cfg.g, out.grid.dt);
  const int n_steps = out.grid.n_steps;

  parallel_ranges(out.n_rows, options.workers,
                  [&](unsigned, std::size_t begin, std::size_t end) {
    std::vector<double> path(static_cast<std::size_t>(n_steps) + 1);
    for (std::size_t i = begin; i < end; ++i) {
      RngStream rng(cfg.seed, row_begin + i, lanes::kBackward);
      const BoundaryDraw boundary = draw_future_boundary(spec, cfg, rng);
      path[static_cast<std::size_t>(n_steps)] = boundary.value;
      for (int n = n_steps; n > 0; --n) {
        path[static_cast<std::size_t>(n - 1)] =
            step(path[static_cast<std::size_t>(n)], rng);
      }
      double* row = out.values.data() + i * stride;
      for (std::size_t s = 0; s < stride; ++s) {
        row[s] = path[static_cast<std::size_t>(out.steps[s])];
      }
      out.boundary_hill[i] = boundary.hill;
    }
  });
  return out;
}

std::vector<double> run_forward(const SuperpositionSpec& spec,
                                const MeasurementConfig& cfg,
                                std::span<const double> amplified_present,
                                const EngineOptions& options,
                                std::size_t row_begin) {
  validate_inputs(spec, cfg);
  const TimeGrid grid = TimeGrid::from_config(cfg);
  const std::vector<int> steps = resolve_steps(options, grid.n_steps);
  const std::size_t stride = steps.size();
  const std::size_t n_rows = amplified_present.size();
  std::vector<double> values(n_rows * stride, 0.0);

  const Stepper step(options.integrator, cfg.g, grid.dt);
  parallel_ranges(n_rows, options.workers,
                  [&](unsigned, std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      RngStream rng(cfg.seed, row_begin + i, lanes::kForward);
      double y = draw_present_conditional(spec, cfg.setting,
                                          amplified_present[i], rng);
      double* row = values.data() + i * stride;
      std::size_t s = 0;
      for (int n = 0; n <= grid.n_steps; ++n) {
        if (n > 0) {
          y = step(y, rng);
        }
        if (s < stride && steps[s] == n) {
          row[s++] = y;
        }
      }
    }
  });
  return values;
}

TrajectoryBatch simulate_rows(const SuperpositionSpec& spec,
                              const MeasurementConfig& cfg,
                              const EngineOptions& options,
                              std::size_t row_begin, std::size_t row_end) {
  AmplifiedPaths backward = run_backward(spec, cfg, options, row_begin, row_end);
  const std::vector<double> present = backward.present();

  TrajectoryBatch batch;
  batch.attenuated =
      run_forward(spec, cfg, present, options, backward.first_row);
  batch.grid = backward.grid;
  batch.setting = cfg.setting;
  batch.steps = std::move(backward.steps);
  batch.first_row = backward.first_row;
  batch.n_rows = backward.n_rows;
  batch.amplified = std::move(backward.values);
  batch.boundary_hill = std::move(backward.boundary_hill);
  return batch;
}

TrajectoryBatch simulate(const SuperpositionSpec& spec,
                         const MeasurementConfig& cfg,
                         const EngineOptions& options) {
  return simulate_rows(spec, cfg, options, 0, cfg.n_samples);
}

} // namespace qtraj
