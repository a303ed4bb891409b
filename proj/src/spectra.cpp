#include "squeezelab/spectra.hpp"

#include "parallel.hpp"
#include "squeezelab/errors.hpp"

#include <algorithm>
#include <array>
#include <cmath>

namespace squeezelab
{
namespace
{

// Accumulates real 2-vectors v (one per independent white input component)
// with M = sum v v^T. The determinant of M is formed as the Cauchy-Binet sum
// of squared cross products, which has no large cancelling terms.
class CovarianceAccumulator
{
public:
    void add(double x, double y) { vectors_.push_back({x, y}); }

    // Complex response (cx, cy) to a real input of density `density`.
    void add_complex(cplx cx, cplx cy, double density)
    {
        const double s = std::sqrt(density);
        add(s * cx.real(), s * cy.real());
        add(s * cx.imag(), s * cy.imag());
    }

    // Input pair (X, Y) with 2x2 covariance [[nxx, nxy], [nxy, nyy]] feeding
    // the output through response columns (sx, mx) and (sy, my).
    void add_pair(cplx sx, cplx sy, cplx mx, cplx my, double nxx, double nyy, double nxy)
    {
        if (nxy == 0.0)
        {
            add_complex(sx, mx, nxx);
            add_complex(sy, my, nyy);
            return;
        }
        // Eigen-factor the symmetric 2x2 covariance.
        const double mean = 0.5 * (nxx + nyy);
        const double half_diff = 0.5 * (nxx - nyy);
        const double rad = std::hypot(half_diff, nxy);
        const std::array<double, 2> lambda{mean + rad, mean - rad};
        const double angle = 0.5 * std::atan2(2.0 * nxy, nxx - nyy);
        const std::array<std::array<double, 2>, 2> dirs{
            std::array<double, 2>{std::cos(angle), std::sin(angle)},
            std::array<double, 2>{-std::sin(angle), std::cos(angle)}};
        for (int k = 0; k < 2; ++k)
        {
            if (lambda[k] < 0.0)
            {
                indefinite_ = true;
            }
            const double w = std::max(lambda[k], 0.0);
            const auto &f = dirs[k];
            add_complex(sx * f[0] + sy * f[1], mx * f[0] + my * f[1], w);
        }
    }

    QuadratureSpectra result() const
    {
        QuadratureSpectra out;
        out.s_x = 0.0;
        out.s_y = 0.0;
        out.s_xy = 0.0;
        for (const auto &v : vectors_)
        {
            out.s_x += v[0] * v[0];
            out.s_y += v[1] * v[1];
            out.s_xy += v[0] * v[1];
        }
        if (indefinite_)
        {
            out.det = out.s_x * out.s_y - out.s_xy * out.s_xy;
            return out;
        }
        double det = 0.0;
        for (std::size_t m = 0; m < vectors_.size(); ++m)
        {
            for (std::size_t l = m + 1; l < vectors_.size(); ++l)
            {
                const double cross = vectors_[m][0] * vectors_[l][1] - vectors_[m][1] * vectors_[l][0];
                det += cross * cross;
            }
        }
        out.det = det;
        return out;
    }

private:
    std::vector<std::array<double, 2>> vectors_;
    bool indefinite_ = false;
};

void require_increasing_positive(const std::vector<double> &pts)
{
    for (std::size_t i = 0; i < pts.size(); ++i)
    {
        if (!(pts[i] > 0.0) || !std::isfinite(pts[i]))
        {
            throw ParameterError("frequency grid points must be finite and > 0");
        }
        if (i > 0 && !(pts[i] > pts[i - 1]))
        {
            throw ParameterError("frequency grid must be strictly increasing");
        }
    }
}

void check_band(double lo, double hi, std::size_t count)
{
    if (!(lo > 0.0) || !(hi > lo) || !std::isfinite(hi))
    {
        throw ParameterError("frequency grid needs 0 < lo < hi");
    }
    if (count < 2)
    {
        throw ParameterError("frequency grid needs at least two points");
    }
}

} // namespace

QuadratureSpectra QuadratureSpectra::from_triple(double s_x, double s_y, double s_xy)
{
    return QuadratureSpectra{s_x, s_y, s_xy, s_x * s_y - s_xy * s_xy};
}

FrequencyGrid FrequencyGrid::linear(double lo, double hi, std::size_t count)
{
    check_band(lo, hi, count);
    FrequencyGrid g;
    g.policy = GridPolicy::Linear;
    g.points.resize(count);
    for (std::size_t i = 0; i < count; ++i)
    {
        g.points[i] = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(count - 1);
    }
    g.points.back() = hi;
    return g;
}

FrequencyGrid FrequencyGrid::log(double lo, double hi, std::size_t count)
{
    check_band(lo, hi, count);
    FrequencyGrid g;
    g.policy = GridPolicy::Log;
    g.points.resize(count);
    const double a = std::log(lo);
    const double b = std::log(hi);
    for (std::size_t i = 0; i < count; ++i)
    {
        g.points[i] = std::exp(a + (b - a) * static_cast<double>(i) / static_cast<double>(count - 1));
    }
    g.points.front() = lo;
    g.points.back() = hi;
    return g;
}

FrequencyGrid FrequencyGrid::log_refined(double lo, double hi, std::size_t count,
                                         const std::vector<MechanicalMode> &modes,
                                         std::size_t per_mode)
{
    auto g = log(lo, hi, count);
    g.policy = GridPolicy::LogRefined;
    if (per_mode >= 2)
    {
        for (const auto &mode : modes)
        {
            const double a = mode.omega - 5.0 * mode.gamma;
            const double b = mode.omega + 5.0 * mode.gamma;
            for (std::size_t i = 0; i < per_mode; ++i)
            {
                const double w = a + (b - a) * static_cast<double>(i) / static_cast<double>(per_mode - 1);
                if (w >= lo && w <= hi && w > 0.0)
                {
                    g.points.push_back(w);
                }
            }
        }
    }
    std::sort(g.points.begin(), g.points.end());
    std::vector<double> unique;
    unique.reserve(g.points.size());
    for (double w : g.points)
    {
        if (unique.empty() || w > unique.back() * (1.0 + 1e-12))
        {
            unique.push_back(w);
        }
    }
    g.points = std::move(unique);
    require_increasing_positive(g.points);
    return g;
}

double thermal_coth(double omega, double temperature_k)
{
    if (temperature_k <= 0.0)
    {
        return omega > 0.0 ? 1.0 : (omega < 0.0 ? -1.0 : 0.0);
    }
    const double x = PhysicalConstants::hbar * omega / (2.0 * PhysicalConstants::k_B * temperature_k);
    if (std::abs(x) < 1e-6)
    {
        return 1.0 / x + x / 3.0;
    }
    return 1.0 / std::tanh(x);
}

QuadratureSpectra quadrature_spectra(const SystemParams &params, const SteadyState &steady,
                                     const FeedbackLaw &feedback, const NoiseModel &noise,
                                     double omega)
{
    if (omega == 0.0)
    {
        throw ParameterError("quadrature_spectra: omega must be nonzero");
    }
    const ResponseAt r = transfer_coefficients(params, steady, feedback, omega);
    const auto &s = r.sigma;
    const auto &m = r.mu;

    CovarianceAccumulator acc;
    acc.add_pair(s[0], s[1], m[0], m[1], noise.a_x(omega), noise.a_y(omega), noise.a_xy(omega));
    acc.add_pair(s[2], s[3], m[2], m[3], noise.b_x(omega), noise.b_y(omega), noise.b_xy(omega));
    acc.add_complex(s[4], m[4], noise.v_theta(omega));
    const double thermal = thermal_coth(omega, params.bath.temperature_k) * r.lambda_G.imag();
    acc.add_complex(s[5], m[5], std::max(thermal, 0.0));
    return acc.result();
}

ResonantSpectra resonant_fast_path(const SystemParams &params, const SteadyState &steady,
                                   const FeedbackLaw &feedback, double omega)
{
    const double kappa = params.cavity.kappa;
    if (std::abs(steady.effective_detuning) > 1e-12 * kappa)
    {
        throw PreconditionError("resonant_fast_path: effective detuning must be zero");
    }
    const auto &det = params.detection;
    const double t = det.transmission;
    const double r = det.reflection();
    const double sqrt_eta = std::sqrt(det.efficiency);
    const double a = r * sqrt_eta * std::sin(det.homodyne_phase);
    const double b = r * sqrt_eta * std::cos(det.homodyne_phase);

    const cplx lG = lambda_G(steady, params.modes, omega);
    const cplx lg = lambda_g(steady, params.modes, feedback, omega);
    const cplx kp{kappa, omega};
    const cplx den = cplx(kappa, -omega) + a * lg;
    const double den2 = std::norm(den);
    const double k2w2 = kappa * kappa + omega * omega;
    const cplx ratio = lG / (kp * den);

    ResonantSpectra out;
    out.s_xy = kappa * t * t * ratio.real();
    out.terms.beam_splitter = 2.0 * r * r / (t * t) * out.s_xy * out.s_xy;
    out.terms.thermal = 2.0 * kappa * t * t * lG.imag() *
                        thermal_coth(omega, params.bath.temperature_k) / den2;
    out.terms.imaginary_response = 2.0 * kappa * kappa * t * t * ratio.imag() * ratio.imag();
    out.terms.feedback_injection =
        0.5 * t * t *
        (std::norm(lg) * k2w2 - 4.0 * kappa * b * (std::conj(lG) * lg * kp).real()) / (k2w2 * den2);
    out.s_r = out.terms.total();
    out.s_y = 2.0 * out.s_xy * out.s_xy + kShotNoise + out.s_r;
    return out;
}

OptimalSqueezing optimal_spectrum(const QuadratureSpectra &s)
{
    const double half_diff = 0.5 * (s.s_x - s.s_y);
    const double lambda_max = 0.5 * (s.s_x + s.s_y) + std::hypot(half_diff, s.s_xy);
    OptimalSqueezing out;
    out.s_opt = lambda_max > 0.0 ? s.det / lambda_max : 0.0;
    if (s.s_xy == 0.0 && s.s_x == s.s_y)
    {
        out.phi_opt = 0.0;
        return out;
    }
    double phi = 0.5 * std::atan2(-2.0 * s.s_xy, s.s_y - s.s_x);
    if (phi <= -0.5 * kPi)
    {
        phi += kPi;
    }
    out.phi_opt = phi;
    return out;
}

double figure_of_merit(const ResonantSpectra &r)
{
    if (!(r.s_r > 0.0))
    {
        throw NumericalError("figure_of_merit: residual spectrum is not positive");
    }
    return 2.0 * r.s_xy * r.s_xy / r.s_r;
}

double phase_spectrum(const QuadratureSpectra &s, double phi)
{
    const auto opt = optimal_spectrum(s);
    const double lambda_max = 0.5 * (s.s_x + s.s_y) + std::hypot(0.5 * (s.s_x - s.s_y), s.s_xy);
    const double c = std::cos(phi - opt.phi_opt);
    const double sn = std::sin(phi - opt.phi_opt);
    return opt.s_opt * c * c + lambda_max * sn * sn;
}

double squeezing_phase_window(const QuadratureSpectra &s)
{
    if (std::abs(s.s_x - kShotNoise) > 1e-9)
    {
        throw PreconditionError("squeezing_phase_window: requires S_X = 1/2 (resonant regime)");
    }
    if (s.s_xy == 0.0)
    {
        return 0.5 * kPi;
    }
    return std::atan(std::abs(1.0 / s.s_xy));
}

double dip_half_width(const QuadratureSpectra &s)
{
    const double s_opt = optimal_spectrum(s).s_opt;
    const double s_max = s.s_x + s.s_y - s_opt;
    // Isotropic (e.g. dark) spectra give +inf here and hence the full pi/2.
    return std::asin(std::min(1.0, std::sqrt(s_opt / (s_max - s_opt))));
}

std::vector<double> phase_scan_grid(const QuadratureSpectra &s, std::size_t uniform, std::size_t refine)
{
    if (uniform < 2)
    {
        throw ParameterError("phase_scan_grid: need at least 2 uniform points");
    }
    std::vector<double> phis(uniform);
    for (std::size_t i = 0; i < uniform; ++i)
    {
        phis[i] = -kPi / 2.0 + kPi * static_cast<double>(i) / static_cast<double>(uniform - 1);
    }
    if (refine >= 2)
    {
        const double centre = optimal_spectrum(s).phi_opt;
        const double half = dip_half_width(s);
        const double lo = std::max(-kPi / 2.0, centre - 10.0 * half);
        const double hi = std::min(kPi / 2.0, centre + 10.0 * half);
        for (std::size_t i = 0; i < refine; ++i)
        {
            phis.push_back(lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(refine - 1));
        }
        std::sort(phis.begin(), phis.end());
        phis.erase(std::unique(phis.begin(), phis.end()), phis.end());
    }
    return phis;
}

double to_decibels(double s)
{
    if (!(s > 0.0))
    {
        throw ParameterError("to_decibels: spectrum must be > 0");
    }
    return 10.0 * std::log10(s / kShotNoise);
}

SpectrumPoint evaluate_point(const SystemParams &params, const SteadyState &steady,
                             const FeedbackLaw &feedback, const NoiseModel &noise, double omega)
{
    const auto spectra = quadrature_spectra(params, steady, feedback, noise, omega);
    const auto opt = optimal_spectrum(spectra);
    SpectrumPoint p;
    p.omega = omega;
    p.s_x = spectra.s_x;
    p.s_y = spectra.s_y;
    p.s_xy = spectra.s_xy;
    p.s_opt = opt.s_opt;
    p.phi_opt = opt.phi_opt;
    p.heisenberg_margin = spectra.det - 0.25;
    if (noise.vacuum && std::abs(steady.effective_detuning) <= 1e-12 * params.cavity.kappa)
    {
        p.s_r = resonant_fast_path(params, steady, feedback, omega).s_r;
    }
    return p;
}

std::vector<SpectrumPoint> evaluate_grid(const SystemParams &params, const SteadyState &steady,
                                         const FeedbackLaw &feedback, const NoiseModel &noise,
                                         const FrequencyGrid &grid, unsigned threads)
{
    require_increasing_positive(grid.points);
    std::vector<SpectrumPoint> out(grid.points.size());
    detail::parallel_for(grid.points.size(), threads, [&](std::size_t i) {
        out[i] = evaluate_point(params, steady, feedback, noise, grid.points[i]);
    });
    return out;
}

} // namespace squeezelab
