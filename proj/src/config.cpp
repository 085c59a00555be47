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

#include "qtraj/config.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "json.hpp"

namespace qtraj {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) {
    return "";
  }
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::string canonical_key(std::string key) {
  std::replace(key.begin(), key.end(), '-', '_');
  std::transform(key.begin(), key.end(), key.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return key;
}

double parse_double(const std::string& key, const std::string& text) {
  double v = 0.0;
  const char* end = text.data() + text.size();
  const auto res = std::from_chars(text.data(), end, v);
  if (res.ec != std::errc() || res.ptr != end || !std::isfinite(v)) {
    throw ConfigError("'" + key + "' expects a finite number, got '" + text + "'");
  }
  return v;
}

std::uint64_t parse_u64(const std::string& key, const std::string& text) {
  std::uint64_t v = 0;
  const char* end = text.data() + text.size();
  const auto res = std::from_chars(text.data(), end, v);
  if (res.ec != std::errc() || res.ptr != end) {
    throw ConfigError("'" + key + "' expects a non-negative integer, got '" +
                      text + "'");
  }
  return v;
}

/// Accepts integral counts written as 2e5 or 200000.
std::size_t parse_count(const std::string& key, const std::string& text) {
  std::uint64_t v = 0;
  const char* end = text.data() + text.size();
  const auto res = std::from_chars(text.data(), end, v);
  if (res.ec == std::errc() && res.ptr == end) {
    return static_cast<std::size_t>(v);
  }
  const double d = parse_double(key, text);
  if (d < 0.0 || d != std::floor(d) || d > 1e15) {
    throw ConfigError("'" + key + "' expects a whole count, got '" + text + "'");
  }
  return static_cast<std::size_t>(d);
}

bool parse_bool(const std::string& key, const std::string& text) {
  std::string t = text;
  std::transform(t.begin(), t.end(), t.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  if (t == "1" || t == "true" || t == "yes" || t == "on") return true;
  if (t == "0" || t == "false" || t == "no" || t == "off") return false;
  throw ConfigError("'" + key + "' expects true or false, got '" + text + "'");
}

} // namespace

std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v,
                                 std::chars_format::general, 17);
  return std::string(buf, res.ptr);
}

Integrator integrator_from_string(const std::string& text) {
  if (text == "midpoint") return Integrator::Midpoint;
  if (text == "exact") return Integrator::ExactOu;
  throw ConfigError("integrator must be 'midpoint' or 'exact', got '" + text + "'");
}

std::string to_string(Integrator integrator) {
  return integrator == Integrator::Midpoint ? "midpoint" : "exact";
}

void RunConfig::set(const std::string& raw_key, const std::string& raw_value) {
  const std::string key = canonical_key(trim(raw_key));
  const std::string value = trim(raw_value);
  if (key == "x1") {
    spec.x1 = parse_double(key, value);
  } else if (key == "r") {
    spec.r = parse_double(key, value);
  } else if (key == "alpha0") {
    const double a = parse_double(key, value);
    spec.r = 0.0;
    spec.x1 = 2.0 * a;
  } else if (key == "c1sq" || key == "c1_sq") {
    spec.c1_sq = parse_double(key, value);
  } else if (key == "mixture") {
    spec.kind = parse_bool(key, value) ? StateKind::Mixture : StateKind::Superposition;
  } else if (key == "g") {
    g = parse_double(key, value);
  } else if (key == "gtf") {
    gtf = parse_double(key, value);
  } else if (key == "dt" || key == "gdt") {
    gdt = parse_double(key, value);
  } else if (key == "measure") {
    try {
      setting = setting_from_string(value);
    } catch (const std::exception&) {
      throw ConfigError("'measure' must be x or p, got '" + value + "'");
    }
  } else if (key == "n") {
    n_samples = parse_count(key, value);
  } else if (key == "seed") {
    seed = parse_u64(key, value);
  } else if (key == "integrator") {
    integrator = integrator_from_string(value);
  } else if (key == "workers") {
    workers = static_cast<unsigned>(parse_u64(key, value));
  } else if (key == "grid_dx") {
    grid_dx = parse_double(key, value);
  } else if (key == "grid_dp") {
    grid_dp = parse_double(key, value);
  } else if (key == "paper_scale") {
    paper_scale = parse_bool(key, value);
  } else if (key == "shift_x1") {
    shift_x1 = parse_double(key, value);
  } else if (key == "out_dir") {
    out_dir = value;
  } else {
    throw ConfigError("unknown key '" + raw_key + "'");
  }
}

MeasurementConfig RunConfig::measurement() const {
  if (!(g > 0.0)) {
    throw ModelError("g must be positive; choose the quadrature with 'measure'");
  }
  if (!(gtf > 0.0) || !(gdt > 0.0)) {
    throw ModelError("gtf and dt must be positive");
  }
  MeasurementConfig cfg;
  cfg.g = g;
  cfg.setting = setting;
  cfg.t_f = gtf / g;
  cfg.dt = gdt / g;
  cfg.n_samples = n_samples;
  cfg.seed = resolve_seed(seed);
  cfg.validate();
  return cfg;
}

EngineOptions RunConfig::engine() const {
  EngineOptions opts;
  opts.integrator = integrator;
  opts.workers = workers;
  return opts;
}

std::map<std::string, std::string> RunConfig::entries() const {
  std::map<std::string, std::string> e;
  e["x1"] = format_double(spec.x1);
  e["r"] = format_double(spec.r);
  e["c1sq"] = format_double(spec.c1_sq);
  e["mixture"] = spec.kind == StateKind::Mixture ? "true" : "false";
  e["g"] = format_double(g);
  e["gtf"] = format_double(gtf);
  e["dt"] = format_double(gdt);
  e["measure"] = to_string(setting);
  e["n"] = std::to_string(n_samples);
  e["seed"] = std::to_string(resolve_seed(seed));
  e["integrator"] = to_string(integrator);
  e["workers"] = std::to_string(workers);
  e["grid_dx"] = format_double(grid_dx);
  e["grid_dp"] = format_double(grid_dp);
  e["paper_scale"] = paper_scale ? "true" : "false";
  e["shift_x1"] = format_double(shift_x1);
  return e;
}

std::uint64_t resolve_seed(const std::optional<std::uint64_t>& explicit_seed) {
  if (explicit_seed) {
    return *explicit_seed;
  }
  if (const char* env = std::getenv("QTRAJ_SEED"); env && *env) {
    return parse_u64("QTRAJ_SEED", trim(env));
  }
  return 1;
}

void apply_config_text(RunConfig& config, const std::string& text,
                       const std::string& source) {
  std::istringstream in(text);
  std::string line;
  int number = 0;
  while (std::getline(in, line)) {
    ++number;
    const auto hash = line.find('#');
    if (hash != std::string::npos) {
      line.erase(hash);
    }
    line = trim(line);
    if (line.empty()) {
      continue;
    }
    const auto eq = line.find('=');
    const std::string where = source + ":" + std::to_string(number) + ": ";
    if (eq == std::string::npos) {
      throw ConfigError(where + "expected key = value, got '" + line + "'");
    }
    const std::string key = trim(line.substr(0, eq));
    if (key.empty()) {
      throw ConfigError(where + "missing key before '='");
    }
    try {
      config.set(key, line.substr(eq + 1));
    } catch (const ConfigError& e) {
      throw ConfigError(where + e.what());
    }
  }
}

void apply_config_file(RunConfig& config, const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw ConfigError("cannot open config file '" + path + "'");
  }
  std::ostringstream buf;
  buf << in.rdbuf();
  const std::string text = buf.str();
  const std::string head = trim(text);
  if (!head.empty() && head.front() == '{') {
    nlohmann::json doc;
    try {
      doc = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError(path + ": invalid JSON: " + e.what());
    }
    if (!doc.contains("config") || !doc["config"].is_object()) {
      throw ConfigError(path + ": manifest has no \"config\" object");
    }
    for (const auto& [key, value] : doc["config"].items()) {
      try {
        config.set(key, value.is_string() ? value.get<std::string>() : value.dump());
      } catch (const ConfigError& e) {
        throw ConfigError(path + ": " + e.what());
      }
    }
    return;
  }
  apply_config_text(config, text, path);
}

} // namespace qtraj
