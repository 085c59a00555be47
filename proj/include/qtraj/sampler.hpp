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

#ifndef QTRAJ_SAMPLER_HPP
#define QTRAJ_SAMPLER_HPP

#include <cstdint>
#include <stdexcept>

#include "qtraj/rng.hpp"

namespace qtraj {

class SamplerError : public std::invalid_argument {
public:
  using std::invalid_argument::invalid_argument;
};

/// Attempts and acceptances of a rejection sampler, for diagnostics.
struct RejectionCounter {
  std::uint64_t proposals = 0;
  std::uint64_t accepted = 0;
  double acceptance_rate() const {
    return proposals == 0 ? 0.0 : static_cast<double>(accepted) / proposals;
  }
};

struct MixtureDraw {
  double value = 0.0;
  /// +1 if drawn from the first component, -1 from the second.
  int hill = 1;
};

/// w1 N(mu1, sigma^2) + (1 - w1) N(mu2, sigma^2).
MixtureDraw sample_gaussian_mixture(double w1, double mu1, double mu2,
                                    double sigma, RngStream& rng);

/// Density proportional to e^{-p^2/2 sigma^2} (1 - amp sin(freq p + phase)).
/// Exact rejection sampling from the bare Gaussian; acceptance is
/// (1 - amp sin(.)) / (1 + amp), at least one half on average.
double sample_fringe(double sigma, double fringe_amp, double fringe_freq,
                     double phase, RngStream& rng,
                     RejectionCounter* counter = nullptr);

/// Density proportional to
///   c1^2 N(+x1, s^2) + c2^2 N(-x1, s^2) - central N(0, s^2) e^{-x1^2/2 s^2}
/// with |central| <= 2|c1 c2|. This is the x-conditional of the two-hill
/// state given p, where central = 2|c1 c2| sin(p x1 / s^2).
struct HillConditional {
  double c1_sq = 0.5;
  double x1 = 0.0;
  double sigma = 1.0;
  double central = 0.0;
};

double sample_hill_conditional(const HillConditional& target, RngStream& rng,
                               RejectionCounter* counter = nullptr);

} // namespace qtraj

#endif
