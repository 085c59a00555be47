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

#include "qtraj/sampler.hpp"

#include <cmath>
#include <string>

namespace qtraj {

namespace {

constexpr int kMaxRejections = 1 << 24;

void check_sigma(double sigma) {
  if (!(sigma > 0.0) || !std::isfinite(sigma)) {
    throw SamplerError("sigma must be positive and finite, got " +
                       std::to_string(sigma));
  }
}

} // namespace

MixtureDraw sample_gaussian_mixture(double w1, double mu1, double mu2,
                                    double sigma, RngStream& rng) {
  if (!(w1 >= 0.0 && w1 <= 1.0)) {
    throw SamplerError("mixture weight must lie in [0, 1], got " +
                       std::to_string(w1));
  }
  check_sigma(sigma);
  // Component choice first, then the Gaussian, so draws consume a fixed
  // number of variates.
  const double u = rng.uniform();
  const double z = rng.normal();
  MixtureDraw draw;
  draw.hill = (u < w1) ? 1 : -1;
  draw.value = (draw.hill > 0 ? mu1 : mu2) + sigma * z;
  return draw;
}

double sample_fringe(double sigma, double fringe_amp, double fringe_freq,
                     double phase, RngStream& rng, RejectionCounter* counter) {
  check_sigma(sigma);
  if (!(fringe_amp >= 0.0) || fringe_amp > 1.0) {
    throw SamplerError("fringe amplitude must lie in [0, 1], got " +
                       std::to_string(fringe_amp));
  }
  for (int attempt = 0; attempt < kMaxRejections; ++attempt) {
    const double p = sigma * rng.normal();
    const double u = rng.uniform();
    if (counter) {
      ++counter->proposals;
    }
    const double ratio =
        (1.0 - fringe_amp * std::sin(fringe_freq * p + phase)) /
        (1.0 + fringe_amp);
    if (u <= ratio) {
      if (counter) {
        ++counter->accepted;
      }
      return p;
    }
  }
  throw SamplerError("fringe sampler exceeded the rejection budget");
}

double sample_hill_conditional(const HillConditional& target, RngStream& rng,
                               RejectionCounter* counter) {
  check_sigma(target.sigma);
  const double c1_sq = target.c1_sq;
  const double c2_sq = 1.0 - c1_sq;
  const double var = target.sigma * target.sigma;
  const double damping = std::exp(-target.x1 * target.x1 / (2.0 * var));
  const double bound = 2.0 * std::sqrt(c1_sq * c2_sq);
  if (std::abs(target.central) > bound * (1.0 + 1e-12)) {
    throw SamplerError("central weight exceeds 2|c1 c2|");
  }

  if (target.central <= 0.0) {
    // All three Gaussians enter with non-negative weight.
    const double w0 = -target.central * damping;
    const double total = 1.0 + w0;
    const double u = rng.uniform() * total;
    const double z = rng.normal();
    if (counter) {
      ++counter->proposals;
      ++counter->accepted;
    }
    double mean = 0.0;
    if (u < c1_sq) {
      mean = target.x1;
    } else if (u < 1.0) {
      mean = -target.x1;
    }
    return mean + target.sigma * z;
  }

  // Subtracted central hill: propose from the two-hill mixture and accept
  // with 1 - central / (c1^2 e^u + c2^2 e^-u), u = x x1 / s^2.
  for (int attempt = 0; attempt < kMaxRejections; ++attempt) {
    const MixtureDraw d =
        sample_gaussian_mixture(c1_sq, target.x1, -target.x1, target.sigma, rng);
    const double v = rng.uniform();
    if (counter) {
      ++counter->proposals;
    }
    const double u = d.value * target.x1 / var;
    const double m = std::abs(u);
    const double denom = c1_sq * std::exp(u - m) + c2_sq * std::exp(-u - m);
    const double accept = 1.0 - target.central * std::exp(-m) / denom;
    if (v <= accept) {
      if (counter) {
        ++counter->accepted;
      }
      return d.value;
    }
  }
  throw SamplerError("hill-conditional sampler exceeded the rejection budget");
}

} // namespace qtraj
