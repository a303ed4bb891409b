#pragma once

#include "squeezelab/constants.hpp"
#include "squeezelab/model.hpp"

#include <cmath>
#include <random>

namespace fixtures
{
using namespace squeezelab;

inline double laser_omega(double wavelength_m = 1064e-9)
{
    return kTwoPi * PhysicalConstants::c / wavelength_m;
}

// Caption parameters of the 25-mode figure, modes read as nu = 150..600 kHz,
// cavity locked to resonance.
inline SystemParams fig2(double transmission = 0.99, double temperature_k = 4.0)
{
    SystemParams p;
    p.cavity.length_m = 0.06;
    p.cavity.kappa = 1e6;
    p.cavity.laser_omega0 = laser_omega();
    p.cavity.locked_detuning = 0.0;
    p.drive.input_power_w = 30e-3;
    for (int j = 0; j < 25; ++j)
    {
        const double w = kTwoPi * (1.5e5 + 1.875e4 * j);
        p.modes.push_back({w, w / 1e4, 1e-10, 1.0});
    }
    p.bath.temperature_k = temperature_k;
    p.detection = {transmission, 1.0, 0.0};
    return resolve_lock(p);
}

inline SystemParams single_mode(double transmission = 0.99, double temperature_k = 4.0,
                                double power_w = 30e-3)
{
    auto p = fig2(transmission, temperature_k);
    p.modes = {p.modes.front()};
    p.drive.input_power_w = power_w;
    p.cavity.locked_detuning = 0.0;
    return resolve_lock(p);
}

// Small random configuration, optionally detuned, in a weak-drive regime.
inline SystemParams random_system(std::mt19937_64 &rng, std::size_t modes, bool detuned)
{
    std::uniform_real_distribution<double> u(0.0, 1.0);
    SystemParams p;
    p.cavity.length_m = 0.02 + 0.08 * u(rng);
    p.cavity.kappa = 1e6 * (0.5 + u(rng));
    p.cavity.laser_omega0 = laser_omega();
    p.drive.input_power_w = 1e-3 * (0.1 + u(rng));
    for (std::size_t j = 0; j < modes; ++j)
    {
        const double w = 2e5 + 2e6 * u(rng);
        p.modes.push_back({w, w / (100.0 + 1e4 * u(rng)), 1e-10 * (0.5 + u(rng)), 2.0 * u(rng) - 1.0});
    }
    p.bath.temperature_k = 10.0 * u(rng);
    p.detection = {0.5 + 0.5 * u(rng), u(rng), kPi * (u(rng) - 0.5)};
    p.cavity.locked_detuning = detuned ? p.cavity.kappa * (2.0 * u(rng) - 1.0) : 0.0;
    return resolve_lock(p);
}

inline SteadyState locked_branch(const SystemParams &p)
{
    return solve_steady_state(p).front();
}

} // namespace fixtures
