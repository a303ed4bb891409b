#pragma once

#include "squeezelab/constants.hpp"
#include "squeezelab/model.hpp"
#include "squeezelab/response.hpp"

#include <optional>
#include <vector>

namespace squeezelab
{
// Symmetrized output quadrature spectra at one frequency, shot noise = 1/2.
// `det` is S_X S_Y - S_XY^2, carried separately because it is computed as a
// sum of non-negative terms and stays accurate when S_Y is huge.
struct QuadratureSpectra
{
    double s_x = kShotNoise;
    double s_y = kShotNoise;
    double s_xy = 0.0;
    double det = kShotNoise * kShotNoise;

    // Triple with the determinant formed directly.
    static QuadratureSpectra from_triple(double s_x, double s_y, double s_xy);
};

struct OptimalSqueezing
{
    double s_opt = 0.0;
    double phi_opt = 0.0;
};

// The four contributions to the resonant residual spectrum S_r.
struct ResidualTerms
{
    double beam_splitter = 0.0;
    double thermal = 0.0;
    double imaginary_response = 0.0;
    double feedback_injection = 0.0;

    double total() const { return beam_splitter + thermal + imaginary_response + feedback_injection; }
};

struct ResonantSpectra
{
    double s_xy = 0.0;
    double s_r = 0.0;
    double s_y = 0.0;
    ResidualTerms terms;
};

struct SpectrumPoint
{
    double omega = 0.0;
    double s_x = 0.0;
    double s_y = 0.0;
    double s_xy = 0.0;
    double s_opt = 0.0;
    double phi_opt = 0.0;
    std::optional<double> s_r; // resonant configurations only
    double heisenberg_margin = 0.0;
};

enum class GridPolicy
{
    Linear,
    Log,
    LogRefined,
};

struct FrequencyGrid
{
    std::vector<double> points;
    GridPolicy policy = GridPolicy::Log;

    static FrequencyGrid linear(double lo, double hi, std::size_t count);
    static FrequencyGrid log(double lo, double hi, std::size_t count);
    // Log grid plus `per_mode` linear points within +-5 gamma_j of every
    // resonance that falls inside [lo, hi].
    static FrequencyGrid log_refined(double lo, double hi, std::size_t count,
                                     const std::vector<MechanicalMode> &modes,
                                     std::size_t per_mode = 41);
};

// coth(hbar omega / 2 k_B T), with the small-argument series below 1e-6 and
// the T = 0 limit sign(omega).
double thermal_coth(double omega, double temperature_k);

// General-path spectra for arbitrary input noise.
QuadratureSpectra quadrature_spectra(const SystemParams &params, const SteadyState &steady,
                                     const FeedbackLaw &feedback, const NoiseModel &noise,
                                     double omega);

// Closed forms valid at zero effective detuning with vacuum inputs.
ResonantSpectra resonant_fast_path(const SystemParams &params, const SteadyState &steady,
                                   const FeedbackLaw &feedback, double omega);

// Squeezing figure of merit 2 S_XY^2 / S_r: correlation strength against the
// residual that limits it. Throws NumericalError if S_r <= 0.
double figure_of_merit(const ResonantSpectra &r);

// S^phi = (S_X + S_Y)/2 + cos(2 phi)(S_X - S_Y)/2 + sin(2 phi) S_XY, evaluated
// in the principal-axis form so that phi = phi_opt returns S_opt exactly.
double phase_spectrum(const QuadratureSpectra &s, double phi);

OptimalSqueezing optimal_spectrum(const QuadratureSpectra &s);

// Width of the sub-shot-noise phase interval, arctan|1/S_XY|.
double squeezing_phase_window(const QuadratureSpectra &s);

// Phase offset from phi_opt where S^phi has doubled from its minimum,
// from S^phi = S_opt + (S_max - S_opt) sin^2(phi - phi_opt).
double dip_half_width(const QuadratureSpectra &s);

// Sorted phases on [-pi/2, pi/2]: `uniform` evenly spaced points plus
// `refine` points across phi_opt +- 10 dip half-widths (skipped if < 2).
std::vector<double> phase_scan_grid(const QuadratureSpectra &s, std::size_t uniform, std::size_t refine);

// 10 log10(S / (1/2)).
double to_decibels(double s);

SpectrumPoint evaluate_point(const SystemParams &params, const SteadyState &steady,
                             const FeedbackLaw &feedback, const NoiseModel &noise, double omega);

// Evaluates every grid point; `threads == 0` picks the hardware count.
std::vector<SpectrumPoint> evaluate_grid(const SystemParams &params, const SteadyState &steady,
                                         const FeedbackLaw &feedback, const NoiseModel &noise,
                                         const FrequencyGrid &grid, unsigned threads = 0);

} // namespace squeezelab
