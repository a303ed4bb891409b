#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <vector>

namespace squeezelab
{
// All rates and frequencies are angular (s^-1) throughout the engine.

struct CavityParams
{
    double length_m = 0.0;
    double kappa = 0.0;          // amplitude decay rate
    double detuning0 = 0.0;      // bare detuning omega_c - omega_0
    double laser_omega0 = 0.0;   // laser angular frequency
    // When set, the effective (radiation-pressure shifted) detuning is pinned
    // to this value and detuning0 is derived from it.
    std::optional<double> locked_detuning;
};

struct DriveParams
{
    double input_power_w = 0.0;
};

struct MechanicalMode
{
    double omega = 0.0;   // resonance
    double gamma = 0.0;   // energy damping rate
    double mass_kg = 0.0; // effective mass
    double overlap = 1.0; // c_j in [-1, 1]

    double quality() const { return omega / gamma; }
};

struct BathParams
{
    double temperature_k = 0.0;
};

struct DetectionParams
{
    double transmission = 1.0;   // beam-splitter amplitude transmission t
    double efficiency = 1.0;     // homodyne quantum efficiency eta
    double homodyne_phase = 0.0; // theta

    double reflection() const;
};

struct SystemParams
{
    CavityParams cavity;
    DriveParams drive;
    std::vector<MechanicalMode> modes;
    BathParams bath;
    DetectionParams detection;

    // Throws ParameterError on the first violated invariant.
    void validate() const;
};

// Semiclassical operating point. alpha_s is real and non-negative by the
// choice of cavity phase reference.
struct SteadyState
{
    double alpha_s = 0.0;
    double intensity = 0.0;
    double effective_detuning = 0.0;
    std::vector<double> displacement;   // q_s^j
    std::vector<double> bare_coupling;  // G_0^j
    std::vector<double> coupling;       // G_j = sqrt(2) G_0^j alpha_s
    std::size_t branch_count = 1;       // number of coexisting branches
    std::size_t branch_index = 0;       // position in ascending-intensity order
};

// Input noise spectra as functions of omega. Shot noise is 1/2.
struct NoiseModel
{
    using Spectrum = std::function<double(double)>;

    Spectrum a_x, a_y, a_xy;
    Spectrum b_x, b_y, b_xy;
    Spectrum v_theta;
    bool vacuum = true;

    static NoiseModel vacuum_inputs();
};

// E = sqrt(2 P kappa / (hbar omega0)).
double drive_amplitude(double input_power_w, double kappa, double omega0);

// G_0^j = (omega_c c_j / L) sqrt(hbar / (m_j omega_j)), with omega_c taken
// as the laser frequency (|Delta_0| << omega_0).
double bare_coupling(const MechanicalMode &mode, const CavityParams &cavity);

// Radiation-pressure frequency pull per photon, beta = sum_j (G_0^j)^2 / omega_j.
double frequency_pull(const SystemParams &params);

// Scalar field sampled on a regular nx-by-ny grid, row-major.
struct SampledField
{
    std::size_t nx = 0;
    std::size_t ny = 0;
    std::vector<double> values;
};

struct OverlapResult
{
    double value = 0.0;
    bool clamped = false; // |c| exceeded 1 by less than the tolerance and was clamped
};

// c_j = sum over cells of v_opt^2 * u_x * cell_area.
OverlapResult overlap_integral(const SampledField &v_opt_sq, const SampledField &u_x,
                               double cell_area);

// All physical branches of I (kappa^2 + (Delta_0 - beta I)^2) = E^2 in
// ascending intensity. A locked cavity returns the single pinned branch.
std::vector<SteadyState> solve_steady_state(const SystemParams &params);

// Builds the branch with a prescribed effective detuning.
SteadyState steady_state_at_detuning(const SystemParams &params, double effective_detuning);

// Bare detuning that produces the requested effective detuning.
double detuning_for_lock(const SystemParams &params, double effective_detuning);

// Relative residual of the steady-state cubic for a branch.
double steady_state_residual(const SystemParams &params, const SteadyState &state);

// Same system with detuning0 resolved from the lock, if any.
SystemParams resolve_lock(SystemParams params);

} // namespace squeezelab
