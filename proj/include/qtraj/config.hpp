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

#ifndef QTRAJ_CONFIG_HPP
#define QTRAJ_CONFIG_HPP

#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "qtraj/engine.hpp"
#include "qtraj/model.hpp"

namespace qtraj {

class ConfigError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Flat run configuration. Times are given in units of 1/g: `gtf` is g t_f
/// and `gdt` is g dt.
struct RunConfig {
  SuperpositionSpec spec;
  double g = 1.0;
  double gtf = 3.0;
  double gdt = 0.1;
  Setting setting = Setting::MeasureX;
  std::size_t n_samples = 200000;
  std::optional<std::uint64_t> seed;
  Integrator integrator = Integrator::Midpoint;
  unsigned workers = 0;
  double grid_dx = 0.1;
  double grid_dp = 0.2;
  bool paper_scale = false;
  /// Offset added to x1 of the simulated state only (verification control).
  double shift_x1 = 0.0;
  std::string out_dir = ".";

  /// Sets one key. Keys accept '-' or '_' as word separators.
  void set(const std::string& key, const std::string& value);

  /// Physical configuration after scaling times by g. Throws ModelError on
  /// invalid parameters.
  MeasurementConfig measurement() const;
  EngineOptions engine() const;

  /// Canonical key=value view; parsing it back reproduces this config.
  std::map<std::string, std::string> entries() const;
};

/// Seed fallback order: explicit value, then $QTRAJ_SEED, then 1.
std::uint64_t resolve_seed(const std::optional<std::uint64_t>& explicit_seed);

/// key = value lines, '#' comments, blank lines ignored. Errors carry
/// `source:line`.
void apply_config_text(RunConfig& config, const std::string& text,
                       const std::string& source);

/// Reads a key=value file, or the "config" object of a run manifest when the
/// file is JSON.
void apply_config_file(RunConfig& config, const std::string& path);

std::string format_double(double v);
Integrator integrator_from_string(const std::string& text);
std::string to_string(Integrator integrator);

} // namespace qtraj

#endif
