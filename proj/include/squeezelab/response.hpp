#pragma once

#include "squeezelab/model.hpp"
#include "squeezelab/polynomial.hpp"

#include <array>
#include <complex>
#include <vector>

namespace squeezelab
{
using cplx = std::complex<double>;

enum class FeedbackKind
{
    Off,
    Proportional,
    RationalPerMode,
};

// g(omega) = N(s) / D(s) with s = -i omega, real coefficients in ascending
// powers of s and units chosen so that g carries s^-1.
struct RationalFilter
{
    Polynomial numerator;
    Polynomial denominator;

    cplx operator()(double omega) const;
};

// Causal feedback transfer functions g_j(omega), one per mechanical mode.
class FeedbackLaw
{
public:
    static FeedbackLaw off();
    static FeedbackLaw proportional(std::vector<double> gains);
    // g_j = scale * G_j for every mode.
    static FeedbackLaw proportional_to_coupling(double scale, const std::vector<double> &coupling);
    static FeedbackLaw rational(std::vector<RationalFilter> filters);

    FeedbackKind kind() const { return kind_; }
    const std::vector<double> &gains() const { return gains_; }
    const std::vector<RationalFilter> &filters() const { return filters_; }

    cplx gain(std::size_t mode, double omega) const;

    // Checks mode count, finiteness and (for rational filters) that every
    // denominator root lies in Re s < 0, i.e. Im omega < 0.
    void validate(std::size_t mode_count) const;

private:
    FeedbackKind kind_ = FeedbackKind::Off;
    std::vector<double> gains_;
    std::vector<RationalFilter> filters_;
};

// chi_j(omega) = omega_j / (omega_j^2 - omega^2 - i omega gamma_j).
cplx susceptibility(const MechanicalMode &mode, double omega);

// sum_j G_j^2 chi_j(omega)
cplx lambda_G(const SteadyState &steady, const std::vector<MechanicalMode> &modes, double omega);

// sum_j G_j chi_j(omega) g_j(omega)
cplx lambda_g(const SteadyState &steady, const std::vector<MechanicalMode> &modes,
              const FeedbackLaw &feedback, double omega);

// Response of the output quadratures to every noise input at one frequency.
// X_d = sum sigma_k * input_k, Y_d = sum mu_k * input_k with inputs ordered
// (X_a_in, Y_a_in, X_b_in, Y_b_in, theta_v_in, sum_j G_j chi_j xi_j).
struct ResponseAt
{
    double omega = 0.0;
    double kappa = 0.0;
    double detuning = 0.0;
    std::vector<cplx> chi;
    cplx lambda_G;
    cplx lambda_g;
    cplx D;
    std::array<cplx, 6> sigma{};
    std::array<cplx, 6> mu{};

    // Recomputes D from the stored ingredients; relative mismatch.
    double consistency_error(const DetectionParams &detection) const;
};

// Closed-form transfer coefficients. Throws SingularResponseError when
// |D| < 1e-14 kappa^2.
ResponseAt transfer_coefficients(const SystemParams &params, const SteadyState &steady,
                                 const FeedbackLaw &feedback, double omega);

// D(omega) alone, same conventions.
cplx response_denominator(const SystemParams &params, const SteadyState &steady,
                          const FeedbackLaw &feedback, double omega);

} // namespace squeezelab
