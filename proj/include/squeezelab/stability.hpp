#pragma once

#include "squeezelab/model.hpp"
#include "squeezelab/polynomial.hpp"
#include "squeezelab/response.hpp"

#include <Eigen/Dense>

#include <optional>
#include <string>
#include <vector>

namespace squeezelab
{
enum class Verdict
{
    Stable,
    Marginal,
    Unstable,
};

std::string to_string(Verdict v);

struct StabilityReport
{
    std::vector<cplx> roots; // complex omega, s^-1
    double max_im = 0.0;     // s^-1
    Verdict verdict = Verdict::Stable;
    double margin_threshold = 0.0;
    // Largest backward error of the roots against the expanded polynomial.
    double backward_error = 0.0;

    // Root with the largest imaginary part.
    cplx worst_root() const;
};

// Expanded D(omega) * prod_j (omega_j^2 - omega^2 - i omega gamma_j) *
// prod_j M_j(-i omega) as a polynomial in s = -i omega / kappa.
struct CharacteristicPolynomial
{
    Polynomial poly;
    double rate_scale = 1.0; // kappa

    // Evaluates the polynomial at s = -i omega / rate_scale.
    cplx at_frequency(cplx omega) const;
};

CharacteristicPolynomial characteristic_polynomial(const SystemParams &params,
                                                   const SteadyState &steady,
                                                   const FeedbackLaw &feedback);

// Closed-loop drift of the linearized fluctuation dynamics in units of
// kappa, state (X_a, Y_a, q_1, p_1, ..., q_N, p_N, filter states...).
// det(s I - A) equals the characteristic polynomial up to a constant.
Eigen::MatrixXd drift_matrix(const SystemParams &params, const SteadyState &steady,
                             const FeedbackLaw &feedback);

// Locates every zero of the characteristic polynomial and classifies it.
// `threshold_fraction` scales kappa into the marginality band.
StabilityReport is_stable(const SystemParams &params, const SteadyState &steady,
                          const FeedbackLaw &feedback, double threshold_fraction = 1e-9);

// Smallest c in [lo, hi] at which g_j = c G_j turns the system unstable,
// by bisection on the sign of max Im omega. Returns nullopt if the bracket
// does not contain a flip.
std::optional<double> critical_gain_scale(const SystemParams &params, const SteadyState &steady,
                                          double lo, double hi, double rel_tol = 1e-10);

enum class BranchPolicy
{
    LowestStable,
    Lowest,
    Highest,
    Index,
};

// Picks the operating branch. LowestStable checks branches in ascending
// intensity against `feedback` and throws InstabilityError if none is stable.
SteadyState select_branch(const SystemParams &params, const std::vector<SteadyState> &branches,
                          const FeedbackLaw &feedback, BranchPolicy policy = BranchPolicy::LowestStable,
                          std::size_t index = 0);

} // namespace squeezelab
