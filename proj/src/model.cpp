#include "squeezelab/model.hpp"

#include "squeezelab/constants.hpp"
#include "squeezelab/errors.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <sstream>
#include <string>

namespace squeezelab
{
namespace
{
void require(bool condition, const std::string &message)
{
    if (!condition)
    {
        throw ParameterError(message);
    }
}

bool finite(double x) { return std::isfinite(x); }

// Real roots of x^3 + a x^2 + b x + c, unpolished.
std::vector<double> real_cubic_roots(double a, double b, double c)
{
    const double shift = a / 3.0;
    const double p = b - a * a / 3.0;
    const double q = 2.0 * a * a * a / 27.0 - a * b / 3.0 + c;
    const double disc = q * q / 4.0 + p * p * p / 27.0;

    std::vector<double> roots;
    if (disc > 0.0)
    {
        const double sq = std::sqrt(disc);
        // Choose the non-cancelling combination for u.
        const double u = std::cbrt(-q / 2.0 + (q <= 0.0 ? sq : -sq));
        const double v = (u != 0.0) ? -p / (3.0 * u) : 0.0;
        roots.push_back(u + v - shift);
    }
    else if (p == 0.0)
    {
        roots.push_back(-shift);
    }
    else
    {
        const double r = std::sqrt(-p / 3.0);
        const double arg = std::clamp(-q / (2.0 * r * r * r), -1.0, 1.0);
        const double phi = std::acos(arg);
        for (int k = 0; k < 3; ++k)
        {
            roots.push_back(2.0 * r * std::cos((phi - kTwoPi * k) / 3.0) - shift);
        }
    }
    return roots;
}

// The steady-state cubic in dimensionless form. With x = beta I / kappa,
// y = Delta / kappa = d - x and d = Delta_0 / kappa:
//   x (1 + (d - x)^2) = e,   e = beta E^2 / kappa^3.
struct ScaledCubic
{
    double d = 0.0;
    double e = 0.0;

    double fx(double x) const { return x * (1.0 + (d - x) * (d - x)) - e; }
    double dfx(double x) const { return 1.0 + (d - x) * (d - x) - 2.0 * x * (d - x); }
    // Same cubic written in y; (d - e) is formed once from the inputs.
    double gy(double y) const { return (d - e) + d * y * y - y - y * y * y; }
    double dgy(double y) const { return 2.0 * d * y - 1.0 - 3.0 * y * y; }
};

// Newton polish in whichever variable avoids cancellation. Returns (x, y).
std::pair<double, double> polish(const ScaledCubic &cubic, double x)
{
    const bool use_y = x > 0.5 * cubic.d;
    double v = use_y ? cubic.d - x : x;
    for (int it = 0; it < 8; ++it)
    {
        const double f = use_y ? cubic.gy(v) : cubic.fx(v);
        const double df = use_y ? cubic.dgy(v) : cubic.dfx(v);
        if (df == 0.0 || !std::isfinite(f / df))
        {
            break;
        }
        const double step = f / df;
        const double next = v - step;
        const double f_next = use_y ? cubic.gy(next) : cubic.fx(next);
        if (std::abs(f_next) >= std::abs(f))
        {
            break;
        }
        v = next;
        if (std::abs(step) <= 1e-16 * std::max(1.0, std::abs(v)))
        {
            break;
        }
    }
    return use_y ? std::pair{cubic.d - v, v} : std::pair{v, cubic.d - v};
}

SteadyState make_branch(const SystemParams &params, double intensity, double detuning)
{
    SteadyState s;
    s.intensity = intensity;
    s.alpha_s = std::sqrt(intensity);
    s.effective_detuning = detuning;
    const std::size_t n = params.modes.size();
    s.displacement.resize(n);
    s.bare_coupling.resize(n);
    s.coupling.resize(n);
    for (std::size_t j = 0; j < n; ++j)
    {
        const auto &mode = params.modes[j];
        const double g0 = bare_coupling(mode, params.cavity);
        s.bare_coupling[j] = g0;
        s.displacement[j] = g0 * intensity / mode.omega;
        s.coupling[j] = g0 * s.alpha_s * std::sqrt(2.0);
    }
    return s;
}

} // namespace

double DetectionParams::reflection() const
{
    return std::sqrt(std::max(0.0, 1.0 - transmission * transmission));
}

void SystemParams::validate() const
{
    require(finite(cavity.length_m) && cavity.length_m > 0.0, "cavity length must be > 0");
    require(finite(cavity.kappa) && cavity.kappa > 0.0, "cavity kappa must be > 0");
    require(finite(cavity.laser_omega0) && cavity.laser_omega0 > 0.0,
            "laser angular frequency must be > 0");
    require(finite(cavity.detuning0), "cavity detuning must be finite");
    if (cavity.locked_detuning)
    {
        require(finite(*cavity.locked_detuning), "locked detuning must be finite");
    }
    require(finite(drive.input_power_w) && drive.input_power_w >= 0.0, "input power must be >= 0");
    for (std::size_t j = 0; j < modes.size(); ++j)
    {
        const auto &m = modes[j];
        const std::string tag = "mode " + std::to_string(j) + ": ";
        require(finite(m.omega) && m.omega > 0.0, tag + "omega must be > 0");
        require(finite(m.gamma) && m.gamma > 0.0, tag + "gamma must be > 0");
        require(finite(m.mass_kg) && m.mass_kg > 0.0, tag + "mass must be > 0");
        require(finite(m.overlap) && m.overlap >= -1.0 && m.overlap <= 1.0,
                tag + "overlap must lie in [-1, 1]");
    }
    require(finite(bath.temperature_k) && bath.temperature_k >= 0.0, "temperature must be >= 0");
    require(finite(detection.transmission) && detection.transmission > 0.0 &&
                detection.transmission <= 1.0,
            "beam-splitter transmission must lie in (0, 1]");
    require(finite(detection.efficiency) && detection.efficiency >= 0.0 &&
                detection.efficiency <= 1.0,
            "detection efficiency must lie in [0, 1]");
    require(finite(detection.homodyne_phase), "homodyne phase must be finite");
}

NoiseModel NoiseModel::vacuum_inputs()
{
    const auto half = [](double) { return kShotNoise; };
    const auto zero = [](double) { return 0.0; };
    return NoiseModel{half, half, zero, half, half, zero, half, true};
}

double drive_amplitude(double input_power_w, double kappa, double omega0)
{
    if (!(kappa > 0.0) || !(omega0 > 0.0))
    {
        throw ParameterError("drive_amplitude: kappa and omega0 must be > 0");
    }
    if (!(input_power_w >= 0.0))
    {
        throw ParameterError("drive_amplitude: input power must be >= 0");
    }
    return std::sqrt(2.0 * input_power_w * kappa / (PhysicalConstants::hbar * omega0));
}

double bare_coupling(const MechanicalMode &mode, const CavityParams &cavity)
{
    return cavity.laser_omega0 * mode.overlap / cavity.length_m *
           std::sqrt(PhysicalConstants::hbar / (mode.mass_kg * mode.omega));
}

double frequency_pull(const SystemParams &params)
{
    double beta = 0.0;
    for (const auto &mode : params.modes)
    {
        const double g0 = bare_coupling(mode, params.cavity);
        beta += g0 * g0 / mode.omega;
    }
    return beta;
}

OverlapResult overlap_integral(const SampledField &v_opt_sq, const SampledField &u_x,
                               double cell_area)
{
    if (v_opt_sq.nx != u_x.nx || v_opt_sq.ny != u_x.ny ||
        v_opt_sq.values.size() != v_opt_sq.nx * v_opt_sq.ny ||
        u_x.values.size() != u_x.nx * u_x.ny)
    {
        throw ParameterError("overlap_integral: grids are not congruent");
    }
    if (!(cell_area > 0.0))
    {
        throw ParameterError("overlap_integral: cell area must be > 0");
    }
    double norm = 0.0;
    double sum = 0.0;
    for (std::size_t i = 0; i < u_x.values.size(); ++i)
    {
        norm += v_opt_sq.values[i];
        sum += v_opt_sq.values[i] * u_x.values[i];
    }
    norm *= cell_area;
    if (std::abs(norm - 1.0) > 1e-6)
    {
        std::ostringstream oss;
        oss << "overlap_integral: optical profile integrates to " << norm << ", expected 1";
        throw ParameterError(oss.str());
    }

    OverlapResult result{sum * cell_area, false};
    if (std::abs(result.value) > 1.0 + 1e-6)
    {
        std::ostringstream oss;
        oss << "overlap_integral: |c_j| = " << std::abs(result.value) << " exceeds 1";
        throw NormalizationError(oss.str());
    }
    if (std::abs(result.value) > 1.0)
    {
        result.value = std::copysign(1.0, result.value);
        result.clamped = true;
    }
    return result;
}

double detuning_for_lock(const SystemParams &params, double effective_detuning)
{
    const auto &cav = params.cavity;
    const double e = drive_amplitude(params.drive.input_power_w, cav.kappa, cav.laser_omega0);
    const double intensity = e * e / (cav.kappa * cav.kappa + effective_detuning * effective_detuning);
    return effective_detuning + frequency_pull(params) * intensity;
}

SystemParams resolve_lock(SystemParams params)
{
    if (params.cavity.locked_detuning)
    {
        params.cavity.detuning0 = detuning_for_lock(params, *params.cavity.locked_detuning);
    }
    return params;
}

SteadyState steady_state_at_detuning(const SystemParams &params, double effective_detuning)
{
    const auto &cav = params.cavity;
    const double e = drive_amplitude(params.drive.input_power_w, cav.kappa, cav.laser_omega0);
    const double intensity = e * e / (cav.kappa * cav.kappa + effective_detuning * effective_detuning);
    return make_branch(params, intensity, effective_detuning);
}

double steady_state_residual(const SystemParams &params, const SteadyState &state)
{
    const auto &cav = params.cavity;
    const double e = drive_amplitude(params.drive.input_power_w, cav.kappa, cav.laser_omega0);
    const double beta = frequency_pull(params);
    const double detuning = cav.detuning0 - beta * state.intensity;
    const double lhs = state.intensity * (cav.kappa * cav.kappa + detuning * detuning);
    if (e == 0.0)
    {
        return std::abs(lhs);
    }
    return std::abs(lhs - e * e) / (e * e);
}

std::vector<SteadyState> solve_steady_state(const SystemParams &raw)
{
    raw.validate();
    const SystemParams params = resolve_lock(raw);
    const auto &cav = params.cavity;
    const double kappa = cav.kappa;
    const double e = drive_amplitude(params.drive.input_power_w, kappa, cav.laser_omega0);
    const double beta = frequency_pull(params);

    if (e == 0.0)
    {
        return {make_branch(params, 0.0, cav.detuning0)};
    }
    if (beta == 0.0)
    {
        const double intensity = e * e / (kappa * kappa + cav.detuning0 * cav.detuning0);
        return {make_branch(params, intensity, cav.detuning0)};
    }

    const ScaledCubic cubic{cav.detuning0 / kappa, beta * e * e / (kappa * kappa * kappa)};
    // x^3 - 2d x^2 + (1 + d^2) x - e
    const auto raw_roots = real_cubic_roots(-2.0 * cubic.d, 1.0 + cubic.d * cubic.d, -cubic.e);

    std::vector<std::pair<double, double>> roots;
    for (double x0 : raw_roots)
    {
        const auto [x, y] = polish(cubic, x0);
        if (x > 0.0 && std::isfinite(x))
        {
            roots.emplace_back(x, y);
        }
    }
    std::sort(roots.begin(), roots.end());
    const double scale = roots.empty() ? 0.0 : roots.back().first;
    std::vector<std::pair<double, double>> merged;
    for (const auto &r : roots)
    {
        if (!merged.empty() && std::abs(r.first - merged.back().first) < 1e-8 * scale)
        {
            continue;
        }
        merged.push_back(r);
    }
    if (merged.empty())
    {
        throw NumericalError("solve_steady_state: no positive root of the steady-state cubic");
    }

    if (cav.locked_detuning)
    {
        SteadyState pinned = steady_state_at_detuning(params, *cav.locked_detuning);
        pinned.branch_count = merged.size();
        std::size_t closest = 0;
        for (std::size_t i = 0; i < merged.size(); ++i)
        {
            if (std::abs(merged[i].first * kappa / beta - pinned.intensity) <
                std::abs(merged[closest].first * kappa / beta - pinned.intensity))
            {
                closest = i;
            }
        }
        pinned.branch_index = closest;
        return {pinned};
    }

    std::vector<SteadyState> branches;
    for (std::size_t i = 0; i < merged.size(); ++i)
    {
        auto branch = make_branch(params, merged[i].first * kappa / beta, merged[i].second * kappa);
        branch.branch_count = merged.size();
        branch.branch_index = i;
        branches.push_back(std::move(branch));
    }
    return branches;
}

} // namespace squeezelab
