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

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <vector>

#include "qtraj/engine.hpp"
#include "qtraj/model.hpp"
#include "qtraj/stats.hpp"

using namespace qtraj;

namespace {

MeasurementConfig config(Setting setting, double gtf, std::size_t n,
                         std::uint64_t seed = 1) {
  MeasurementConfig cfg;
  cfg.setting = setting;
  cfg.t_f = gtf;
  cfg.dt = 0.1;
  cfg.n_samples = n;
  cfg.seed = seed;
  return cfg;
}

SuperpositionSpec two_hills(double x1, double r, double c1_sq = 0.5) {
  SuperpositionSpec s;
  s.x1 = x1;
  s.r = r;
  s.c1_sq = c1_sq;
  return s;
}

double within_sigmas(double sampled, double expected, double se) {
  return std::abs(sampled - expected) / se;
}

} // namespace

TEST_CASE("midpoint step keeps the stationary variance") {
  for (double rate : {0.3, 1.0, 2.5}) {
    for (double h : {0.01, 0.1, 0.5}) {
      const double a = midpoint_step(1.0, rate, h, 0.0);
      const double b = midpoint_step(0.0, rate, h, 1.0);
      CHECK(a * a + b * b == doctest::Approx(1.0).epsilon(1e-14));
      const double ea = exact_ou_step(1.0, rate, h, 0.0);
      const double eb = exact_ou_step(0.0, rate, h, 1.0);
      CHECK(ea * ea + eb * eb == doctest::Approx(1.0).epsilon(1e-14));
      CHECK(a == doctest::Approx(std::exp(-rate * h)).epsilon(rate * rate * h * h * h));
    }
  }
}

TEST_CASE("zero gain leaves paths constant") {
  for (double y : {-3.0, 0.0, 2.5}) {
    CHECK(midpoint_step(y, 0.0, 0.1, 1.7) == y);
    CHECK(exact_ou_step(y, 0.0, 0.1, -0.4) == y);
  }
}

TEST_CASE("stored slices") {
  const auto s30 = default_stored_steps(30);
  CHECK(s30.size() == 31);
  CHECK(s30.front() == 0);
  CHECK(s30.back() == 30);
  const auto s400 = default_stored_steps(400);
  CHECK(s400.size() == 31);
  CHECK(s400.front() == 0);
  CHECK(s400.back() == 400);
  CHECK(s400[1] == 13);

  EngineOptions opts;
  opts.stored_steps = {10};
  const auto batch = simulate(two_hills(1.0, 2.0), config(Setting::MeasureX, 3.0, 10), opts);
  CHECK(batch.steps == std::vector<int>{0, 10, 30});
  CHECK(batch.slice_of_step(10) == 1);
  CHECK(batch.boundary_slice() == 2);
  CHECK_THROWS_AS((void)batch.slice_of_step(5), std::out_of_range);
}

TEST_CASE("single path is reproducible") {
  const auto spec = two_hills(8.0, 2.0);
  const auto cfg = config(Setting::MeasureX, 2.0, 1, 7);
  const auto a = simulate(spec, cfg);
  const auto b = simulate(spec, cfg);
  CHECK(a.amplified == b.amplified);
  CHECK(a.attenuated == b.attenuated);
  CHECK(a.boundary_hill == b.boundary_hill);
  CHECK(a.n_rows == 1);
  CHECK(a.n_slices() == 21);
  auto other = cfg;
  other.seed = 8;
  CHECK(simulate(spec, other).amplified != a.amplified);
}

TEST_CASE("rows do not depend on batching or worker count") {
  const auto spec = two_hills(1.0, 2.0, 0.3);
  for (Setting s : {Setting::MeasureX, Setting::MeasureP}) {
    const auto cfg = config(s, 3.0, 5000, 21);
    EngineOptions one;
    one.workers = 1;
    EngineOptions many;
    many.workers = 7;
    const auto a = simulate(spec, cfg, one);
    const auto b = simulate(spec, cfg, many);
    CHECK(a.amplified == b.amplified);
    CHECK(a.attenuated == b.attenuated);
    CHECK(a.boundary_hill == b.boundary_hill);

    const auto part = simulate_rows(spec, cfg, many, 1234, 2345);
    CHECK(part.first_row == 1234);
    CHECK(part.n_rows == 1111);
    bool same = true;
    for (std::size_t i = 0; i < part.n_rows; ++i) {
      for (std::size_t k = 0; k < part.n_slices(); ++k) {
        same = same && part.x(i, k) == a.x(1234 + i, k) && part.p(i, k) == a.p(1234 + i, k);
      }
    }
    CHECK(same);
  }
}

TEST_CASE("sampled moments follow the analytic moments at every slice") {
  for (Setting s : {Setting::MeasureX, Setting::MeasureP}) {
    for (double r : {0.0, 2.0}) {
      const auto spec = two_hills(1.0, r);
      const auto cfg = config(s, 3.0, 100000, 3);
      const auto batch = simulate(spec, cfg);
      int worst_slice = -1;
      double worst = 0.0;
      for (std::size_t k = 0; k < batch.n_slices(); ++k) {
        const double t = batch.time_of_slice(k);
        const MomentSummary m = moment_summary(batch, k);
        const Moments ref = reference_moments(spec, t, cfg);
        for (double z : {within_sigmas(m.x.mean, ref.mean_x, m.x.se_mean),
                         within_sigmas(m.p.mean, ref.mean_p, m.p.se_mean),
                         within_sigmas(m.x.var, ref.var_x, m.x.se_var),
                         within_sigmas(m.p.var, ref.var_p, m.p.se_var)}) {
          if (z > worst) {
            worst = z;
            worst_slice = static_cast<int>(k);
          }
        }
      }
      CAPTURE(to_string(s));
      CAPTURE(r);
      CAPTURE(worst_slice);
      CHECK(worst < 4.0);
    }
  }
}

TEST_CASE("attenuated variance at the horizon") {
  const auto spec = two_hills(1.0, 2.0);
  const auto cfg = config(Setting::MeasureX, 3.0, 100000, 5);
  const auto batch = simulate(spec, cfg);
  const MomentSummary m = moment_summary(batch, batch.boundary_slice());
  CHECK(reference_moments(spec, 3.0, cfg).var_p == doctest::Approx(1.1353).epsilon(1e-4));
  CHECK(within_sigmas(m.p.var, 1.0 + std::exp(-2.0), m.p.se_var) < 4.0);
  double previous = 1e300;
  for (std::size_t k = 0; k < batch.n_slices(); ++k) {
    const double v = reference_moments(spec, batch.time_of_slice(k), cfg).var_p;
    CHECK(v < previous);
    CHECK(v > 1.0);
    previous = v;
  }
}

TEST_CASE("hidden noise is not amplified") {
  const auto spec = two_hills(4.0, 2.0);
  const auto cfg = config(Setting::MeasureX, 3.0, 100000, 9);
  const auto batch = simulate(spec, cfg);
  for (std::size_t k = 0; k < batch.n_slices(); ++k) {
    const double t = batch.time_of_slice(k);
    const double analytic = 1.0 + std::exp(2.0 * t) * std::exp(-2.0 * spec.r);
    for (int hill : {+1, -1}) {
      std::vector<double> v;
      for (std::size_t i = 0; i < batch.n_rows; ++i) {
        if (batch.boundary_hill[i] == hill) v.push_back(batch.x(i, k));
      }
      const MomentEstimate m = jackknife_moments(v);
      CAPTURE(t);
      CAPTURE(hill);
      CHECK(m.var / analytic > 0.9);
      CHECK(m.var / analytic < 1.1);
      CHECK(m.mean == doctest::Approx(hill * spec.x1 * std::exp(t)).epsilon(0.02));
    }
  }
}

TEST_CASE("trajectories converge from the amplified hills") {
  const auto spec = two_hills(8.0, 2.0);
  const auto cfg = config(Setting::MeasureX, 2.0, 40, 7);
  const auto batch = simulate(spec, cfg);
  for (std::size_t i = 0; i < batch.n_rows; ++i) {
    const double hill = batch.boundary_hill[i];
    const double xf = batch.x(i, batch.boundary_slice());
    const double x0 = batch.x(i, 0);
    CHECK(std::abs(xf - hill * 8.0 * std::exp(2.0)) < 5.0 * std::sqrt(1.0 + std::exp(4.0 - 4.0)));
    CHECK(std::abs(x0 - hill * 8.0) < 5.0);
  }
}

TEST_CASE("mixture draws the attenuated start independently") {
  auto spec = two_hills(1.0, 2.0);
  spec.kind = StateKind::Mixture;
  const auto cfg = config(Setting::MeasureX, 3.0, 100000, 13);
  const auto batch = simulate(spec, cfg);
  std::vector<double> p0(batch.n_rows);
  double cross = 0.0;
  for (std::size_t i = 0; i < batch.n_rows; ++i) {
    p0[i] = batch.p(i, 0);
    cross += std::sin(p0[i] * spec.x1 / spec.sigma_x_sq()) * (batch.x(i, 0) > 0 ? 1.0 : -1.0);
  }
  const double sigma = std::sqrt(spec.sigma_p_sq());
  const KsResult ks = ks_test(p0, [&](double p) {
    return 0.5 * std::erfc(-p / (sigma * std::sqrt(2.0)));
  });
  CHECK(ks.p_value > 1e-3);
  CHECK(std::abs(cross / batch.n_rows) < 4.0 / std::sqrt(batch.n_rows));
}

TEST_CASE("exact integrator agrees with the analytic moments") {
  const auto spec = two_hills(1.0, 1.0);
  const auto cfg = config(Setting::MeasureX, 3.0, 100000, 17);
  EngineOptions opts;
  opts.integrator = Integrator::ExactOu;
  const auto batch = simulate(spec, cfg, opts);
  for (std::size_t k : {std::size_t{0}, std::size_t{15}, batch.boundary_slice()}) {
    const MomentSummary m = moment_summary(batch, k);
    const Moments ref = reference_moments(spec, batch.time_of_slice(k), cfg);
    CHECK(within_sigmas(m.x.var, ref.var_x, m.x.se_var) < 4.0);
    CHECK(within_sigmas(m.p.var, ref.var_p, m.p.se_var) < 4.0);
  }
}

TEST_CASE("joint density matches the evolved Q function at gt 0 1 2") {
  const auto spec = two_hills(1.0, 2.0);
  const auto cfg = config(Setting::MeasureX, 3.0, 200000, 1);
  EngineOptions engine;
  engine.stored_steps = {0, 10, 20};
  const Chi2Report rep = run_chi2_verification(spec, spec, cfg, engine, VerificationPlan{});
  REQUIRE(rep.per_slice.size() == 3);
  for (std::size_t k = 0; k < 3; ++k) {
    const SliceChi2& s = rep.per_slice[k];
    const double kk = static_cast<double>(s.k);
    const double band = 3.0 * std::sqrt(2.0 * kk);
    CAPTURE(s.t);
    CAPTURE(s.chi2);
    CAPTURE(s.k);
    CHECK(std::abs(s.chi2 - kk) < band);
  }
}
