#include "fixtures.hpp"

#include "squeezelab/errors.hpp"
#include "squeezelab/oracle.hpp"
#include "squeezelab/spectra.hpp"
#include "squeezelab/stability.hpp"

#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <numeric>
#include <random>

using namespace squeezelab;

namespace
{
// Lightly damped mode fast enough that short runs mix well.
SystemParams fast_mode(double quality, double temperature_k)
{
    auto p = fixtures::single_mode(0.8, temperature_k, 1e-3);
    p.modes[0].omega = 2e5;
    p.modes[0].gamma = 2e5 / quality;
    p.cavity.locked_detuning = 0.0;
    return resolve_lock(p);
}

TrajectoryConfig quick(double duration, std::uint64_t seed = 1)
{
    TrajectoryConfig cfg;
    cfg.dt = 4e-8;
    cfg.duration = duration;
    cfg.seed = seed;
    cfg.record_stride = 25;
    return cfg;
}

double variance(const std::vector<double> &v)
{
    const double mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
    double acc = 0.0;
    for (double x : v)
    {
        acc += (x - mean) * (x - mean);
    }
    return acc / static_cast<double>(v.size() - 1);
}

// Fraction of bins whose estimate lies within `k` standard errors of `target`.
double fraction_within(const std::vector<double> &est, const std::vector<double> &se, double target, double k)
{
    std::size_t ok = 0;
    for (std::size_t i = 0; i < est.size(); ++i)
    {
        ok += std::abs(est[i] - target) <= k * se[i];
    }
    return static_cast<double>(ok) / static_cast<double>(est.size());
}
} // namespace

TEST_CASE("state-space model reproduces the transfer coefficients")
{
    std::mt19937_64 rng(8);
    for (int trial = 0; trial < 30; ++trial)
    {
        const auto p = fixtures::random_system(rng, 1 + trial % 3, trial % 2 == 1);
        const auto st = fixtures::locked_branch(p);
        const auto fb = FeedbackLaw::proportional_to_coupling(0.05 * (trial % 5) - 0.1, st.coupling);
        const auto lm = build_linear_model(p, st, fb);
        for (double w : {3e3, 2e5, p.modes[0].omega})
        {
            const auto H = lm.transfer(w);
            const auto ra = transfer_coefficients(p, st, fb, w);
            double scale = 0.0;
            for (int k = 0; k < 6; ++k)
            {
                scale = std::max({scale, std::abs(ra.sigma[k]), std::abs(ra.mu[k])});
            }
            for (int k = 0; k < 5; ++k)
            {
                CHECK(std::abs(H(0, k) - ra.sigma[k]) <= 1e-9 * scale);
                CHECK(std::abs(H(1, k) - ra.mu[k]) <= 1e-9 * scale);
            }
            for (std::size_t j = 0; j < p.modes.size(); ++j)
            {
                const cplx via = st.coupling[j] * ra.chi[j];
                const auto col = static_cast<Eigen::Index>(5 + j);
                CHECK(std::abs(H(0, col) - ra.sigma[5] * via) <= 1e-9 * scale * std::abs(via));
                CHECK(std::abs(H(1, col) - ra.mu[5] * via) <= 1e-9 * scale * std::abs(via));
            }
        }
    }
    const auto p = fixtures::single_mode();
    const auto st = fixtures::locked_branch(p);
    const RationalFilter lp{Polynomial({1.0}), Polynomial({1.0, 1.0})};
    CHECK_THROWS_AS(build_linear_model(p, st, FeedbackLaw::rational({lp})), PreconditionError);
}

TEST_CASE("thermal occupation")
{
    CHECK(thermal_occupation(1e5, 0.0) == 0.0);
    const double x = PhysicalConstants::hbar * 1e5 / (PhysicalConstants::k_B * 4.0);
    // x ~ 2e-7, so the Laurent series 1/x - 1/2 + x/12 is exact to double precision.
    CHECK(thermal_occupation(1e5, 4.0) == doctest::Approx(1.0 / x - 0.5 + x / 12.0).epsilon(1e-12));
    // Optical frequencies at room temperature: essentially empty.
    const double y = PhysicalConstants::hbar * 1e15 / (PhysicalConstants::k_B * 300.0);
    CHECK(thermal_occupation(1e15, 300.0) == doctest::Approx(std::exp(-y)).epsilon(1e-6));
}

TEST_CASE("uncoupled oscillator reaches equipartition")
{
    const auto p = fast_mode(10.0, 4.0);
    auto st = fixtures::locked_branch(p);
    st.coupling.assign(1, 0.0);
    const auto traj = simulate(p, st, FeedbackLaw::off(), quick(0.5));
    const double expect = thermal_occupation(p.modes[0].omega, 4.0) + 0.5;
    CHECK(variance(traj.column("q_1")) == doctest::Approx(expect).epsilon(0.05));
    CHECK(variance(traj.column("p_1")) == doctest::Approx(expect).epsilon(0.05));
    CHECK_FALSE(traj.diverged);
}

TEST_CASE("vacuum reflection reads shot noise")
{
    const auto p = fast_mode(10.0, 4.0);
    auto st = fixtures::locked_branch(p);
    st.coupling.assign(1, 0.0);
    const auto traj = simulate(p, st, FeedbackLaw::off(), quick(0.2, 5));
    const auto est = estimate_spectra(traj.column("X_d"), traj.column("Y_d"), traj.record_interval, {1024, 0.5});
    CHECK(est.segments >= 64);
    // Every bin within 3 SE cannot hold over ~500 bins; the bulk must, and
    // nothing may sit far out.
    CHECK(fraction_within(est.s_x, est.se_x, 0.5, 3.0) >= 0.99);
    CHECK(fraction_within(est.s_y, est.se_y, 0.5, 3.0) >= 0.99);
    CHECK(fraction_within(est.s_x, est.se_x, 0.5, 5.0) == 1.0);
    CHECK(fraction_within(est.s_y, est.se_y, 0.5, 5.0) == 1.0);
    CHECK(fraction_within(est.s_xy, est.se_xy, 0.0, 5.0) == 1.0);
    const double mean = std::accumulate(est.s_y.begin(), est.s_y.end(), 0.0) / static_cast<double>(est.s_y.size());
    CHECK(mean == doctest::Approx(0.5).epsilon(0.01));
}

TEST_CASE("estimator calibration on synthetic series")
{
    const double dt = 1e-6;
    const double density = 3.7;
    std::mt19937_64 rng(12);
    std::normal_distribution<double> n(0.0, std::sqrt(density / dt));
    std::vector<double> x(1 << 19), y(1 << 19);
    for (std::size_t i = 0; i < x.size(); ++i)
    {
        x[i] = n(rng);
        y[i] = 0.5 * x[i] + n(rng);
    }
    const auto est = estimate_spectra(x, y, dt, {2048, 0.5});
    CHECK(est.omega.front() == doctest::Approx(kTwoPi / (2048 * dt)));
    CHECK(fraction_within(est.s_x, est.se_x, density, 3.0) >= 0.99);
    CHECK(fraction_within(est.s_x, est.se_x, density, 5.0) == 1.0);
    CHECK(fraction_within(est.s_y, est.se_y, 1.25 * density, 3.0) >= 0.99);
    CHECK(fraction_within(est.s_xy, est.se_xy, 0.5 * density, 3.0) >= 0.99);

    // Standard errors fall like one over root segment count.
    const auto half = estimate_spectra(std::vector<double>(x.begin(), x.begin() + (1 << 17)),
                                       std::vector<double>(y.begin(), y.begin() + (1 << 17)), dt, {2048, 0.5});
    const double se_full = std::accumulate(est.se_x.begin(), est.se_x.end(), 0.0);
    const double se_part = std::accumulate(half.se_x.begin(), half.se_x.end(), 0.0);
    CHECK(se_part / se_full == doctest::Approx(2.0).epsilon(0.1));

    // A pure tone lands in its own bin.
    const double f_bin = 100.0;
    const double w0 = f_bin * kTwoPi / (2048 * dt);
    std::vector<double> tone(1 << 15);
    for (std::size_t i = 0; i < tone.size(); ++i)
    {
        tone[i] = std::sin(w0 * dt * static_cast<double>(i));
    }
    const auto te = estimate_spectra(tone, tone, dt, {2048, 0.5});
    const auto peak = std::max_element(te.s_x.begin(), te.s_x.end()) - te.s_x.begin();
    CHECK(te.omega[static_cast<std::size_t>(peak)] == doctest::Approx(w0));
    // Hann sidelobes: three bins away the leakage is far below the peak.
    CHECK(te.s_x[static_cast<std::size_t>(peak) + 3] < 1e-6 * te.s_x[static_cast<std::size_t>(peak)]);

    CHECK_THROWS_AS(estimate_spectra(std::vector<double>(4000), std::vector<double>(4000), dt, {1024, 0.5}),
                    ParameterError);
    CHECK_THROWS_AS(estimate_spectra(std::vector<double>(9000), std::vector<double>(8000), dt, {1024, 0.5}),
                    ParameterError);
}

TEST_CASE("coupled run matches the analytic spectra")
{
    // Cold bath: with thermal noise dominating S_Y the cross spectrum is a few
    // percent of sqrt(S_X S_Y) and drowns in estimator scatter.
    const auto p = fast_mode(20.0, 0.0);
    const auto st = fixtures::locked_branch(p);
    const auto fb = FeedbackLaw::proportional_to_coupling(2.0 * p.detection.reflection(), st.coupling);
    REQUIRE(is_stable(p, st, fb).verdict == Verdict::Stable);
    const auto traj = simulate(p, st, fb, quick(0.3, 3));
    const auto est = estimate_spectra(traj.column("X_d"), traj.column("Y_d"), traj.record_interval, {4096, 0.5});
    CHECK(est.segments >= 64);

    const auto noise = NoiseModel::vacuum_inputs();
    CompareOptions opt;
    opt.notch_centres = {p.modes[0].omega};
    opt.notch_half_widths = {3.0 * p.modes[0].gamma};
    const auto sy = compare_to_analytic(est.omega, est.s_y, [&](double w) {
        return quadrature_spectra(p, st, fb, noise, w).s_y;
    }, opt);
    const auto sxy = compare_to_analytic(est.omega, est.s_xy, [&](double w) {
        return quadrature_spectra(p, st, fb, noise, w).s_xy;
    }, opt);
    CHECK(sy.pass);
    CHECK(sxy.pass);
    CHECK(sy.max_deviation < 0.1);
    CHECK(sxy.max_deviation < 0.1);
}

TEST_CASE("determinism")
{
    const auto p = fast_mode(10.0, 1.0);
    const auto st = fixtures::locked_branch(p);
    const auto a = simulate(p, st, FeedbackLaw::off(), quick(0.01, 42));
    const auto b = simulate(p, st, FeedbackLaw::off(), quick(0.01, 42));
    const auto c = simulate(p, st, FeedbackLaw::off(), quick(0.01, 43));
    CHECK(a.columns == b.columns);
    CHECK(a.columns != c.columns);
    CHECK(a.rows() == 10000);
    CHECK(a.names.back() == "Y_d");
}

TEST_CASE("unstable loop: refused, or diverges when forced")
{
    auto p = fast_mode(10.0, 1.0);
    p.detection.homodyne_phase = kPi / 2.0;
    const auto st = fixtures::locked_branch(p);
    double c = 1.0;
    FeedbackLaw law = FeedbackLaw::proportional_to_coupling(c, st.coupling);
    while (is_stable(p, st, law).max_im < 2e3)
    {
        c *= 2.0;
        law = FeedbackLaw::proportional_to_coupling(c, st.coupling);
    }
    CHECK_THROWS_AS(simulate(p, st, law, quick(0.05)), InstabilityError);
    auto cfg = quick(0.05);
    cfg.force = true;
    const auto traj = simulate(p, st, law, cfg);
    CHECK(traj.diverged);
    CHECK(traj.diverged_at > 0.0);
    CHECK(traj.rows() < 50000);
}

TEST_CASE("resolution and mixing guards")
{
    const auto p = fast_mode(10.0, 1.0);
    const auto st = fixtures::locked_branch(p);
    auto cfg = quick(0.05);
    cfg.dt = 1e-6;
    CHECK_THROWS_AS(simulate(p, st, FeedbackLaw::off(), cfg), ParameterError);
    cfg = quick(1e-4);
    CHECK_THROWS_AS(simulate(p, st, FeedbackLaw::off(), cfg), ParameterError);
    cfg = quick(0.05);
    cfg.record_stride = 0;
    CHECK_THROWS_AS(cfg.validate(p), ParameterError);
}

TEST_CASE("comparison report")
{
    std::vector<double> w, v;
    for (int i = 1; i <= 1000; ++i)
    {
        w.push_back(100.0 * i);
        v.push_back(1.0 + 1e-4 * i);
    }
    const auto same = [](double x) { return 1.0 + 1e-6 * x; };
    CompareOptions opt;
    opt.lo = 1e3;
    opt.hi = 1e5;
    const auto r = compare_to_analytic(w, v, same, opt);
    CHECK(r.pass);
    CHECK(r.max_deviation < 1e-14);
    CHECK(r.bands.size() == 8);

    const auto shifted = [](double x) { return 1.2 * (1.0 + 1e-6 * x); };
    const auto s = compare_to_analytic(w, v, shifted, opt);
    CHECK_FALSE(s.pass);
    CHECK(s.max_deviation == doctest::Approx(1.0 / 6.0).epsilon(1e-6));

    // Notched bins are ignored.
    auto spiky = v;
    spiky[499] = 1e6; // omega = 5e4
    opt.notch_centres = {5e4};
    opt.notch_half_widths = {150.0};
    CHECK(compare_to_analytic(w, spiky, same, opt).pass);

    CompareOptions far;
    far.lo = 1e6;
    far.hi = 1e7;
    CHECK_THROWS_AS(compare_to_analytic(w, v, same, far), ParameterError);
}

TEST_CASE("trajectory dump round trip")
{
    const auto p = fast_mode(10.0, 1.0);
    const auto st = fixtures::locked_branch(p);
    const auto traj = simulate(p, st, FeedbackLaw::off(), quick(0.01, 9));
    const auto path = std::filesystem::temp_directory_path() / "squeezelab_roundtrip.traj.bin";
    write_trajectory(path, traj);
    const auto back = read_trajectory(path);
    CHECK(back.names == traj.names);
    CHECK(back.columns == traj.columns);
    CHECK(std::filesystem::file_size(path) ==
          8 + 4 + [&] {
              std::size_t s = 0;
              for (const auto &n : traj.names)
              {
                  s += 4 + n.size();
              }
              return s;
          }() + 8 + 8 * traj.rows() * traj.names.size());
    std::filesystem::remove(path);
}
