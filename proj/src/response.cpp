#include "squeezelab/response.hpp"

#include "squeezelab/errors.hpp"

#include <cmath>
#include <sstream>

namespace squeezelab
{
namespace
{
constexpr cplx kI{0.0, 1.0};
}

cplx RationalFilter::operator()(double omega) const
{
    const cplx s = -kI * omega;
    return numerator(s) / denominator(s);
}

FeedbackLaw FeedbackLaw::off()
{
    return FeedbackLaw{};
}

FeedbackLaw FeedbackLaw::proportional(std::vector<double> gains)
{
    FeedbackLaw law;
    law.kind_ = FeedbackKind::Proportional;
    law.gains_ = std::move(gains);
    return law;
}

FeedbackLaw FeedbackLaw::proportional_to_coupling(double scale, const std::vector<double> &coupling)
{
    std::vector<double> gains(coupling.size());
    for (std::size_t j = 0; j < coupling.size(); ++j)
    {
        gains[j] = scale * coupling[j];
    }
    return proportional(std::move(gains));
}

FeedbackLaw FeedbackLaw::rational(std::vector<RationalFilter> filters)
{
    FeedbackLaw law;
    law.kind_ = FeedbackKind::RationalPerMode;
    law.filters_ = std::move(filters);
    return law;
}

cplx FeedbackLaw::gain(std::size_t mode, double omega) const
{
    switch (kind_)
    {
    case FeedbackKind::Off:
        return 0.0;
    case FeedbackKind::Proportional:
        return gains_.at(mode);
    case FeedbackKind::RationalPerMode:
        return filters_.at(mode)(omega);
    }
    return 0.0;
}

void FeedbackLaw::validate(std::size_t mode_count) const
{
    if (kind_ == FeedbackKind::Proportional)
    {
        if (gains_.size() != mode_count)
        {
            throw ParameterError("feedback: expected one gain per mechanical mode");
        }
        for (double g : gains_)
        {
            if (!std::isfinite(g))
            {
                throw ParameterError("feedback: gains must be finite");
            }
        }
    }
    else if (kind_ == FeedbackKind::RationalPerMode)
    {
        if (filters_.size() != mode_count)
        {
            throw ParameterError("feedback: expected one filter per mechanical mode");
        }
        for (std::size_t j = 0; j < filters_.size(); ++j)
        {
            const auto &f = filters_[j];
            const int dn = f.denominator.degree();
            if (dn < 0)
            {
                throw ParameterError("feedback: zero denominator for mode " + std::to_string(j));
            }
            if (f.numerator.degree() > dn)
            {
                throw ParameterError("feedback: improper filter for mode " + std::to_string(j));
            }
            for (const auto &root : polynomial_roots(f.denominator))
            {
                if (!(root.real() < 0.0))
                {
                    std::ostringstream oss;
                    oss << "feedback: filter for mode " << j << " has pole s = " << root
                        << " outside the open left half-plane";
                    throw ParameterError(oss.str());
                }
            }
        }
    }
}

cplx susceptibility(const MechanicalMode &mode, double omega)
{
    return mode.omega / cplx(mode.omega * mode.omega - omega * omega, -omega * mode.gamma);
}

cplx lambda_G(const SteadyState &steady, const std::vector<MechanicalMode> &modes, double omega)
{
    cplx acc{0.0, 0.0};
    for (std::size_t j = 0; j < modes.size(); ++j)
    {
        const double g = steady.coupling[j];
        acc += g * g * susceptibility(modes[j], omega);
    }
    return acc;
}

cplx lambda_g(const SteadyState &steady, const std::vector<MechanicalMode> &modes,
              const FeedbackLaw &feedback, double omega)
{
    if (feedback.kind() == FeedbackKind::Off)
    {
        return 0.0;
    }
    cplx acc{0.0, 0.0};
    for (std::size_t j = 0; j < modes.size(); ++j)
    {
        acc += steady.coupling[j] * susceptibility(modes[j], omega) * feedback.gain(j, omega);
    }
    return acc;
}

namespace
{
// Dimensionless D: all rates divided by kappa.
cplx scaled_denominator(double w, double delta, cplx lG, cplx lg, double a, double b)
{
    const cplx km = cplx(1.0, -w);
    return km * (km + a * lg) + delta * (delta - lG + b * lg);
}
} // namespace

double ResponseAt::consistency_error(const DetectionParams &detection) const
{
    const double r = detection.reflection();
    const double sqrt_eta = std::sqrt(detection.efficiency);
    const double th = detection.homodyne_phase;
    const cplx km = cplx(kappa, -omega);
    const cplx expected = km * (km + r * sqrt_eta * std::sin(th) * lambda_g) +
                          detuning * (detuning - lambda_G + r * sqrt_eta * std::cos(th) * lambda_g);
    return std::abs(expected - D) / std::max(std::abs(D), 1e-300);
}

cplx response_denominator(const SystemParams &params, const SteadyState &steady,
                          const FeedbackLaw &feedback, double omega)
{
    const double kappa = params.cavity.kappa;
    const auto &det = params.detection;
    const double r = det.reflection();
    const double sqrt_eta = std::sqrt(det.efficiency);
    const double a = r * sqrt_eta * std::sin(det.homodyne_phase);
    const double b = r * sqrt_eta * std::cos(det.homodyne_phase);
    const cplx lG = lambda_G(steady, params.modes, omega) / kappa;
    const cplx lg = lambda_g(steady, params.modes, feedback, omega) / kappa;
    return kappa * kappa *
           scaled_denominator(omega / kappa, steady.effective_detuning / kappa, lG, lg, a, b);
}

ResponseAt transfer_coefficients(const SystemParams &params, const SteadyState &steady,
                                 const FeedbackLaw &feedback, double omega)
{
    const double kappa = params.cavity.kappa;
    const auto &det = params.detection;
    const double t = det.transmission;
    const double r = det.reflection();
    const double eta = det.efficiency;
    const double sqrt_eta = std::sqrt(eta);
    const double sqrt_loss = std::sqrt(1.0 - eta);
    const double cos_th = std::cos(det.homodyne_phase);
    const double sin_th = std::sin(det.homodyne_phase);
    const double a = r * sqrt_eta * sin_th;
    const double b = r * sqrt_eta * cos_th;

    ResponseAt out;
    out.omega = omega;
    out.kappa = kappa;
    out.detuning = steady.effective_detuning;
    out.chi.reserve(params.modes.size());
    for (const auto &mode : params.modes)
    {
        out.chi.push_back(susceptibility(mode, omega));
    }
    out.lambda_G = lambda_G(steady, params.modes, omega);
    out.lambda_g = lambda_g(steady, params.modes, feedback, omega);

    const double w = omega / kappa;
    const double dl = steady.effective_detuning / kappa;
    const cplx lG = out.lambda_G / kappa;
    const cplx lg = out.lambda_g / kappa;
    const cplx km = cplx(1.0, -w);
    const cplx kp = cplx(1.0, w);
    const cplx Dt = scaled_denominator(w, dl, lG, lg, a, b);
    if (std::abs(Dt) < 1e-14)
    {
        std::ostringstream oss;
        oss << "transfer_coefficients: |D| vanishes at omega = " << omega
            << " s^-1 (configuration at the instability threshold)";
        throw SingularResponseError(oss.str());
    }
    out.D = kappa * kappa * Dt;

    const double root2_over_kappa = std::sqrt(2.0 / kappa);
    const cplx inv = 1.0 / Dt;

    out.sigma[0] = t * inv * (kp * (km + a * lg) - dl * (dl - lG));
    out.sigma[1] = t * dl * inv * (2.0 + a * lg);
    out.sigma[2] = -inv * (dl * sqrt_eta * cos_th * lg + r * km * (km + a * lg) + r * (dl * dl - dl * lG));
    out.sigma[3] = -inv * (t * t * dl * sqrt_eta * sin_th * lg);
    out.sigma[4] = -t * dl * inv * sqrt_loss * lg;
    out.sigma[5] = t * dl * inv * root2_over_kappa;

    out.mu[0] = -t * inv * (2.0 * dl - 2.0 * lG + kp * b * lg);
    out.mu[1] = t * inv * (1.0 + w * w - dl * (dl - lG + b * lg));
    out.mu[2] = -inv * t * t * (km * sqrt_eta * cos_th * lg);
    out.mu[3] = -inv * (km * sqrt_eta * sin_th * lg + r * (km * km + dl * dl - dl * lG + dl * b * lg));
    out.mu[4] = -t * inv * (km * sqrt_loss * lg);
    out.mu[5] = t * inv * (km * root2_over_kappa);

    if (out.consistency_error(det) > 1e-10)
    {
        throw NumericalError("transfer_coefficients: denominator failed its self-consistency check");
    }
    return out;
}

} // namespace squeezelab
