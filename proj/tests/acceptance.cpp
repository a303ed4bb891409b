// Runs every acceptance criterion at its stated tolerance and prints one
// PASS/FAIL line each. Exit status is the number of failed criteria.

#include "fixtures.hpp"

#include "squeezelab/config.hpp"
#include "squeezelab/optimize.hpp"
#include "squeezelab/oracle.hpp"
#include "squeezelab/spectra.hpp"
#include "squeezelab/stability.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <exception>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

using namespace squeezelab;

namespace
{
const std::filesystem::path kPresets = SQUEEZELAB_PRESETS;
const NoiseModel kVacuum = NoiseModel::vacuum_inputs();

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0)
{
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct Outcome
{
    bool pass = false;
    std::string detail;
};

struct Operating
{
    RunConfig cfg;
    SteadyState steady;
    FeedbackLaw on;
};

Operating preset(const std::string &name)
{
    Operating op{load_config(kPresets / (name + ".yaml")), {}, {}};
    op.steady = solve_steady_state(op.cfg.params).front();
    op.on = op.cfg.feedback.materialize(op.steady, op.cfg.params.detection);
    return op;
}

bool near_resonance(const SystemParams &p, double w, double gammas)
{
    for (const auto &m : p.modes)
    {
        if (std::abs(w - m.omega) <= gammas * m.gamma)
        {
            return true;
        }
    }
    return false;
}

Outcome fig2_reproduction()
{
    const auto op = preset("fig2");
    const auto &p = op.cfg.params;

    const auto t0 = Clock::now();
    const auto report = is_stable(p, op.steady, op.on);
    const auto grid = op.cfg.grid.build(p.modes);
    const auto full = evaluate_grid(p, op.steady, op.on, kVacuum, grid);
    const double runtime = seconds_since(t0);

    // Below shot noise across the band, both loops, away from the resonances.
    const auto band_grid = FrequencyGrid::linear(1e4, 1.2e5, 4000);
    double worst_on = 0.0;
    double worst_off = 0.0;
    for (const auto &[law, worst] :
         {std::pair{op.on, &worst_on}, std::pair{FeedbackLaw::off(), &worst_off}})
    {
        for (const auto &pt : evaluate_grid(p, op.steady, law, kVacuum, band_grid))
        {
            if (!near_resonance(p, pt.omega, 5.0))
            {
                *worst = std::max(*worst, pt.s_opt);
            }
        }
    }
    const double with = band_objective(p, op.steady, op.on, op.cfg.band);
    const double without = band_objective(p, op.steady, FeedbackLaw::off(), op.cfg.band);
    const double ratio = without / with;

    std::ostringstream d;
    d << "max S_opt on " << worst_on << ", off " << worst_off << " (< 0.5); band-mean ratio off/on " << ratio
      << " (in [2, 4]); " << full.size() << "-point grid in " << runtime << " s (< 10 s); verdict "
      << to_string(report.verdict);
    return {worst_on < 0.5 && worst_off < 0.5 && ratio >= 2.0 && ratio <= 4.0 && runtime < 10.0 &&
                grid.points.size() >= 4000 && report.verdict == Verdict::Stable,
            d.str()};
}

Outcome fig3b_depth()
{
    const auto op = preset("fig3b");
    const auto &p = op.cfg.params;
    const auto s = quadrature_spectra(p, op.steady, op.on, kVacuum, op.cfg.phase_scan.omega);
    const auto phis = phase_scan_grid(s, op.cfg.phase_scan.points, op.cfg.phase_scan.refine_points);
    double best = INFINITY;
    for (double phi : phis)
    {
        best = std::min(best, to_decibels(phase_spectrum(s, phi)));
    }
    const double closed = to_decibels(optimal_spectrum(s).s_opt);
    std::ostringstream d;
    d << "min over " << phis.size() << " phases at omega = " << op.cfg.phase_scan.omega << " s^-1: " << best
      << " dB (within [-23, -17]); closed-form S_opt " << closed << " dB; dip half-width "
      << dip_half_width(s) << " rad";
    return {best <= -17.0 && best >= -23.0, d.str()};
}

Outcome fig3a_flatness()
{
    const auto op = preset("fig3a");
    const auto &p = op.cfg.params;
    const auto grid = op.cfg.grid.build(p.modes);
    const auto on = evaluate_grid(p, op.steady, op.on, kVacuum, grid);
    const auto off = evaluate_grid(p, op.steady, FeedbackLaw::off(), kVacuum, grid);
    auto spread = [](const std::vector<SpectrumPoint> &pts) {
        double lo = INFINITY, hi = -INFINITY;
        for (const auto &pt : pts)
        {
            lo = std::min(lo, pt.phi_opt);
            hi = std::max(hi, pt.phi_opt);
        }
        return (hi - lo) / std::max(std::abs(lo), std::abs(hi));
    };
    double diff = 0.0;
    for (std::size_t i = 0; i < on.size(); ++i)
    {
        diff = std::max(diff, std::abs(on[i].phi_opt - off[i].phi_opt) / std::abs(off[i].phi_opt));
    }
    const double v_on = spread(on);
    const double v_off = spread(off);
    std::ostringstream d;
    d << "phi_opt relative variation on " << v_on << ", off " << v_off << " (< 0.05); on-vs-off max relative "
      << "difference " << diff << " (< 0.01)";
    return {v_on < 0.05 && v_off < 0.05 && diff < 0.01, d.str()};
}

Outcome exact_identities()
{
    double sx_err = 0.0;
    double path_err = 0.0;
    double opt_err = 0.0;
    double margin = INFINITY;
    std::size_t points = 0;

    auto check = [&](const SystemParams &p, const SteadyState &st, const FeedbackLaw &law, double w) {
        const auto s = quadrature_spectra(p, st, law, kVacuum, w);
        const auto opt = optimal_spectrum(s);
        opt_err = std::max(opt_err, std::abs(phase_spectrum(s, opt.phi_opt) - opt.s_opt) / opt.s_opt);
        margin = std::min(margin, s.det - 0.25);
        if (std::abs(st.effective_detuning) <= 1e-12 * p.cavity.kappa)
        {
            sx_err = std::max(sx_err, std::abs(s.s_x - 0.5));
            const auto f = resonant_fast_path(p, st, law, w);
            path_err = std::max(path_err, std::abs(s.s_y - f.s_y) / f.s_y);
            // S_XY passes through zero on resonance, so it is measured against sqrt(S_X S_Y).
            path_err = std::max(path_err, std::abs(s.s_xy - f.s_xy) / std::sqrt(s.s_x * s.s_y));
        }
        ++points;
    };

    for (const char *name : {"fig2", "fig3a"})
    {
        const auto op = preset(name);
        const auto grid = op.cfg.grid.build(op.cfg.params.modes);
        for (const auto &law : {op.on, FeedbackLaw::off()})
        {
            for (double w : grid.points)
            {
                check(op.cfg.params, op.steady, law, w);
            }
        }
    }
    std::mt19937_64 rng(2718);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int trial = 0; trial < 200; ++trial)
    {
        const auto p = fixtures::random_system(rng, 1 + trial % 5, trial % 2 == 1);
        const auto st = fixtures::locked_branch(p);
        const auto law = FeedbackLaw::proportional_to_coupling(0.2 * (u(rng) - 0.5), st.coupling);
        if (is_stable(p, st, law).verdict != Verdict::Stable)
        {
            continue;
        }
        for (int k = 0; k < 50; ++k)
        {
            check(p, st, law, std::exp(std::log(10.0) + u(rng) * std::log(1e6)));
        }
    }
    std::ostringstream d;
    d << points << " points: |S_X - 1/2| " << sx_err << " (<= 1e-12); general vs resonant " << path_err
      << " (<= 1e-10); S(phi_opt) vs S_opt " << opt_err << " (<= 1e-12); min Heisenberg margin " << margin
      << " (>= -1e-12)";
    return {sx_err <= 1e-12 && path_err <= 1e-10 && opt_err <= 1e-12 && margin >= -1e-12, d.str()};
}

Outcome asymptotic_law()
{
    std::size_t qualifying = 0;
    double worst = 0.0;
    for (double power : {3e-3, 1e-2, 3e-2})
    {
        for (std::size_t modes : {std::size_t{1}, std::size_t{25}})
        {
            auto p = fixtures::fig2(1.0, 0.0);
            p.drive.input_power_w = power;
            p.modes.resize(modes);
            p = resolve_lock(p);
            const auto st = fixtures::locked_branch(p);
            for (double w : FrequencyGrid::log(1e2, 1e6, 400).points)
            {
                if (near_resonance(p, w, 5.0))
                {
                    continue;
                }
                const auto f = resonant_fast_path(p, st, FeedbackLaw::off(), w);
                if (!(f.s_r < 1e-3 && f.s_xy * f.s_xy > 10.0))
                {
                    continue;
                }
                const auto s = quadrature_spectra(p, st, FeedbackLaw::off(), kVacuum, w);
                const double opt = optimal_spectrum(s).s_opt;
                worst = std::max(worst, std::abs(opt * 8.0 * s.s_xy * s.s_xy - 1.0));
                ++qualifying;
            }
        }
    }
    std::ostringstream d;
    d << qualifying << " qualifying points (S_r < 1e-3, S_XY^2 > 10); max |8 S_opt S_XY^2 - 1| = " << worst
      << " (< 0.05)";
    return {qualifying > 0 && worst < 0.05, d.str()};
}

Outcome feedback_subtraction()
{
    const auto p = fixtures::fig2();
    const auto st = fixtures::locked_branch(p);
    const auto law = closed_form_gains(st, p.detection).law;
    const double k = p.cavity.kappa;
    const double w = 1e-2 * k;
    const auto f = resonant_fast_path(p, st, law, w);
    const double r2 = 1.0 - p.detection.transmission * p.detection.transmission;
    const double lG0 = lambda_G(st, p.modes, 0.0).real();
    const double expect = -4.0 * r2 * p.detection.efficiency * lG0 * lG0 / (k * k);
    const double ratio = f.terms.feedback_injection / expect;
    std::ostringstream d;
    d << "injection term " << f.terms.feedback_injection << " vs -4 r^2 eta lambda_G(0)^2 / kappa^2 = " << expect
      << ", ratio " << ratio << " (negative and within 20%)";
    return {f.terms.feedback_injection < 0.0 && std::abs(ratio - 1.0) <= 0.2, d.str()};
}

Outcome stability_criterion()
{
    std::ostringstream d;
    bool ok = true;

    // No light in the loop, or a pure amplitude-quadrature loop on resonance.
    std::mt19937_64 rng(31415);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::size_t checked = 0, stable = 0;
    for (int trial = 0; trial < 100; ++trial)
    {
        auto p = fixtures::random_system(rng, 1 + trial % 6, false);
        const auto st = fixtures::locked_branch(p);
        const auto law = FeedbackLaw::proportional_to_coupling(100.0 * (u(rng) - 0.5), st.coupling);
        auto open = p;
        open.detection.transmission = 1.0;
        auto amplitude = p;
        amplitude.detection.homodyne_phase = 0.0;
        for (const auto &q : {open, amplitude})
        {
            stable += is_stable(q, st, law).verdict == Verdict::Stable;
            ++checked;
        }
    }
    ok = ok && stable == checked;
    d << stable << "/" << checked << " r = 0 or theta = 0 draws Stable";

    // Sine-quadrature ramp on the lowest mode.
    auto p = fixtures::single_mode(0.8, 4.0, 1e-3);
    p.detection.homodyne_phase = kPi / 2.0;
    const auto st = fixtures::locked_branch(p);
    const auto crit = critical_gain_scale(p, st, 0.0, 1.0);
    if (!crit)
    {
        d << "; gain ramp to 1.0 G_j never turned Unstable";
        return {false, d.str()};
    }
    d << "; ramp turns Unstable at g_j = " << *crit << " G_j";

    // Oracle on both sides of the threshold.
    double above = *crit * 1.05;
    auto law_above = FeedbackLaw::proportional_to_coupling(above, st.coupling);
    while (is_stable(p, st, law_above).max_im < 50.0)
    {
        above *= 1.5;
        law_above = FeedbackLaw::proportional_to_coupling(above, st.coupling);
    }
    TrajectoryConfig cfg;
    cfg.dt = 4e-8;
    cfg.record_stride = 25;
    cfg.duration = 1.1;
    cfg.seed = 11;
    cfg.force = true;
    const auto up = simulate(p, st, law_above, cfg);
    const double below = 0.9 * *crit;
    cfg.force = false;
    const auto down = simulate(p, st, FeedbackLaw::proportional_to_coupling(below, st.coupling), cfg);
    double max_abs = 0.0;
    for (double v : down.column("q_1"))
    {
        max_abs = std::max(max_abs, std::abs(v));
    }
    const double sigma = std::sqrt(thermal_occupation(p.modes[0].omega, 4.0) + 0.5);
    ok = ok && up.diverged && !down.diverged && std::isfinite(max_abs);
    d << "; oracle at " << above / *crit << " x threshold " << (up.diverged ? "diverged" : "did NOT diverge")
      << (up.diverged ? " at t = " + std::to_string(up.diverged_at) + " s" : std::string{}) << "; at 0.9 x "
      << (down.diverged ? "diverged" : "bounded") << ", max |q| = " << max_abs / sigma << " thermal sigma";
    return {ok, d.str()};
}

Outcome oracle_equivalence()
{
    const auto t0 = Clock::now();
    const auto op = preset("single_mode");
    const auto &p = op.cfg.params;
    const auto &oc = op.cfg.oracle;
    const auto traj = simulate(p, op.steady, op.on, oc.trajectory);
    if (traj.diverged)
    {
        return {false, "trajectory diverged"};
    }
    const auto est = estimate_spectra(traj.column("X_d"), traj.column("Y_d"), traj.record_interval, oc.welch);
    auto compare = oc.compare;
    compare.notch_centres = {p.modes[0].omega};
    compare.notch_half_widths = {oc.notch_gammas * p.modes[0].gamma};
    const auto sy = compare_to_analytic(est.omega, est.s_y, [&](double w) {
        return quadrature_spectra(p, op.steady, op.on, kVacuum, w).s_y;
    }, compare);
    const auto sxy = compare_to_analytic(est.omega, est.s_xy, [&](double w) {
        return quadrature_spectra(p, op.steady, op.on, kVacuum, w).s_xy;
    }, compare);
    const double runtime = seconds_since(t0);
    std::ostringstream d;
    d << est.segments << " segments (>= 64); max sub-band deviation S_Y " << sy.max_deviation << ", S_XY "
      << sxy.max_deviation << " (<= 0.1) on [" << compare.lo << ", " << compare.hi << "] s^-1 minus +-"
      << oc.notch_gammas << " gamma; " << runtime << " s (<= 300 s)";
    return {est.segments >= 64 && sy.pass && sxy.pass && compare.tolerance <= 0.1 && runtime <= 300.0, d.str()};
}

Outcome figure_of_merit_scaling()
{
    auto fom = [](double power, double temperature) {
        const auto p = fixtures::single_mode(1.0, temperature, power);
        const auto st = fixtures::locked_branch(p);
        return figure_of_merit(resonant_fast_path(p, st, FeedbackLaw::off(), 1e2));
    };
    const double power_ratio = fom(30e-3, 4.0) / fom(3e-3, 4.0);
    const double w = fixtures::single_mode().modes[0].omega;
    const double n4 = thermal_occupation(w, 4.0);
    const double n40 = thermal_occupation(w, 40.0);
    const double temp_ratio = (fom(30e-3, 40.0) * n40) / (fom(30e-3, 4.0) * n4);
    std::ostringstream d;
    d << "2 S_XY^2 / S_r at 1e2 s^-1: x" << power_ratio << " for 10x power (10 +- 20%); fom * nbar ratio over "
      << "4 K -> 40 K " << temp_ratio << " (1 +- 20%)";
    return {std::abs(power_ratio / 10.0 - 1.0) <= 0.2 && std::abs(temp_ratio - 1.0) <= 0.2, d.str()};
}
} // namespace

int main()
{
    const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
        {"1 fig2 reproduction", fig2_reproduction},
        {"2 fig3b depth", fig3b_depth},
        {"3 fig3a flatness", fig3a_flatness},
        {"4 exact identities", exact_identities},
        {"5 asymptotic law", asymptotic_law},
        {"6 feedback subtraction", feedback_subtraction},
        {"7 stability", stability_criterion},
        {"8 oracle equivalence", oracle_equivalence},
        {"9 figure-of-merit scaling", figure_of_merit_scaling},
    };
    int failed = 0;
    for (const auto &[name, fn] : criteria)
    {
        Outcome o;
        try
        {
            o = fn();
        }
        catch (const std::exception &e)
        {
            o = {false, std::string("threw: ") + e.what()};
        }
        failed += !o.pass;
        std::printf("%s criterion %s: %s\n", o.pass ? "PASS" : "FAIL", name.c_str(), o.detail.c_str());
        std::fflush(stdout);
    }
    std::printf("%d of %zu criteria failed\n", failed, criteria.size());
    return failed;
}
