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

#ifndef QTRAJ_MODEL_HPP
#define QTRAJ_MODEL_HPP

#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace qtraj {

/// Raised for physically invalid or numerically unrepresentable parameters.
class ModelError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Largest squeezing parameter accepted; sigma_p^2 = 1 + e^{2r} ~ 1.6e5 here.
inline constexpr double kMaxSqueezing = 6.0;

enum class Setting { MeasureX, MeasureP };

/// A coherent superposition carries the interference term; a mixture drops it.
enum class StateKind { Superposition, Mixture };

/// Two squeezed states at +x1 and -x1 with amplitudes c1 (real) and
/// c2 = i|c2|. With that phase the state is normalized for every (x1, r).
/// r = 0 is the cat state with x1 = 2 alpha0.
struct SuperpositionSpec {
  double c1_sq = 0.5;
  double x1 = 1.0;
  double r = 2.0;
  StateKind kind = StateKind::Superposition;

  static SuperpositionSpec cat(double alpha0, double c1_sq = 0.5);

  double c2_sq() const { return 1.0 - c1_sq; }
  /// 2|c1 c2|, the weight of the interference term.
  double cross_weight() const;
  /// Antinormally ordered variances of one squeezed component.
  double sigma_x_sq() const;
  double sigma_p_sq() const;

  void validate() const;
};

/// Gain g > 0 is a magnitude; MeasureP flips its sign in the Hamiltonian.
struct MeasurementConfig {
  double g = 1.0;
  Setting setting = Setting::MeasureX;
  double t_f = 3.0;
  double dt = 0.1;
  std::size_t n_samples = 200000;
  std::uint64_t seed = 1;

  int n_steps() const;
  /// +g for MeasureX, -g for MeasureP.
  double signed_gain() const { return setting == Setting::MeasureX ? g : -g; }
  void validate() const;
};

struct QPoint {
  double x = 0.0;
  double p = 0.0;
  double t = 0.0;
};

/// sigma_x^2(t), sigma_p^2(t) of each evolved component and G(t) = e^{g t},
/// with g already signed by the measurement setting.
struct EvolvedWidths {
  double gain = 1.0;
  double var_x = 2.0;
  double var_p = 2.0;
};

EvolvedWidths evolved_widths(const SuperpositionSpec& spec, double signed_g,
                             double t);

/// Husimi Q(x, p, t) of the state evolved under the amplifier, normalized
/// over the (x, p) plane.
double q_sup(const SuperpositionSpec& spec, const QPoint& pt,
             const MeasurementConfig& cfg);

/// Interference term of q_sup alone (signed) and the sum of the two hill
/// terms. q_sup = hills + fringe.
struct QTerms {
  double hills = 0.0;
  double fringe = 0.0;
};
QTerms q_sup_terms(const SuperpositionSpec& spec, const QPoint& pt,
                   const MeasurementConfig& cfg);

/// Marginal density of x at time t: a two-Gaussian mixture.
double marginal_x(const SuperpositionSpec& spec, double x, double t,
                  const MeasurementConfig& cfg);

/// Marginal of x-tilde = x / G(t); mixture with variance e^{-2gt} + e^{-2r}.
double marginal_x_scaled(const SuperpositionSpec& spec, double x_tilde,
                         double t, const MeasurementConfig& cfg);

/// Marginal of p at any time for either setting.
double marginal_p(const SuperpositionSpec& spec, double p, double t,
                  const MeasurementConfig& cfg);

/// p-marginal of the prepared state (t = 0).
double marginal_p_initial(const SuperpositionSpec& spec, double p);

/// p-marginal after amplification of p; cfg.setting must be MeasureP.
double marginal_p_amplified(const SuperpositionSpec& spec, double p, double t,
                            const MeasurementConfig& cfg);

/// Same, as a density in p-tilde = p / e^{|g| t}.
double marginal_p_amplified_scaled(const SuperpositionSpec& spec,
                                   double p_tilde, double t,
                                   const MeasurementConfig& cfg);

/// Amplitude of the sine modulation of p given x at t = 0:
/// 2|c1 c2| / (c1^2 e^u + c2^2 e^{-u}), u = x_p x1 / sigma_x^2. Zero for a
/// mixture. Never exceeds 1.
double fringe_amplitude_given_x(const SuperpositionSpec& spec, double x_p);

/// Conditional density of p_p given x_p at t = 0.
double conditional_p_given_x(const SuperpositionSpec& spec, double x_p,
                             double p_p);

/// Conditional density of x_p given p_p at t = 0 (used when p is measured).
double conditional_x_given_p(const SuperpositionSpec& spec, double p_p,
                             double x_p);

/// Means and antinormally ordered variances of the full Q function at t.
struct Moments {
  double mean_x = 0.0;
  double mean_p = 0.0;
  double var_x = 0.0;
  double var_p = 0.0;
};

Moments reference_moments(const SuperpositionSpec& spec, double t,
                          const MeasurementConfig& cfg);

std::string to_string(Setting setting);
Setting setting_from_string(const std::string& text);

} // namespace qtraj

#endif
