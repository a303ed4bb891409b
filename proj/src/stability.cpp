#include "squeezelab/stability.hpp"

#include "squeezelab/errors.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace squeezelab
{
namespace
{
constexpr int kMaxDegree = 200;

// Filter in kappa units, denominator monic: g(kappa s)/kappa = num(s)/den(s).
struct ScaledFilter
{
    std::vector<double> num;
    std::vector<double> den; // monic, size deg+1
};

ScaledFilter scale_filter(const RationalFilter &f, double kappa)
{
    const auto num = f.numerator.trimmed().coefficients();
    const auto den = f.denominator.trimmed().coefficients();
    ScaledFilter out;
    out.num.resize(num.size());
    out.den.resize(den.size());
    // Power of kappa applied incrementally to keep large degrees finite.
    double kp = 1.0;
    for (std::size_t k = 0; k < den.size(); ++k)
    {
        out.den[k] = den[k] * kp;
        if (k < num.size())
        {
            out.num[k] = num[k] * kp / kappa;
        }
        kp *= kappa;
    }
    const double lead = out.den.back();
    for (auto &c : out.den)
    {
        c /= lead;
    }
    for (auto &c : out.num)
    {
        c /= lead;
    }
    return out;
}

std::vector<ScaledFilter> scaled_filters(const SystemParams &params, const FeedbackLaw &feedback)
{
    const double kappa = params.cavity.kappa;
    const std::size_t n = params.modes.size();
    feedback.validate(n);
    std::vector<ScaledFilter> out(n);
    for (std::size_t j = 0; j < n; ++j)
    {
        switch (feedback.kind())
        {
        case FeedbackKind::Off:
            out[j] = {{0.0}, {1.0}};
            break;
        case FeedbackKind::Proportional:
            out[j] = {{feedback.gains()[j] / kappa}, {1.0}};
            break;
        case FeedbackKind::RationalPerMode:
            out[j] = scale_filter(feedback.filters()[j], kappa);
            break;
        }
    }
    return out;
}

struct LoopConstants
{
    double a = 0.0; // r sqrt(eta) sin(theta)
    double b = 0.0; // r sqrt(eta) cos(theta)
};

LoopConstants loop_constants(const DetectionParams &det)
{
    const double k = det.reflection() * std::sqrt(det.efficiency);
    return {k * std::sin(det.homodyne_phase), k * std::cos(det.homodyne_phase)};
}

double backward_error(const Polynomial &p, cplx s)
{
    const auto &c = p.coefficients();
    double scale = 0.0;
    double mag = 1.0;
    const double as = std::abs(s);
    for (double ck : c)
    {
        scale += std::abs(ck) * mag;
        mag *= as;
    }
    return scale > 0.0 ? std::abs(p(s)) / scale : 0.0;
}

double max_real_eigenvalue(const Eigen::MatrixXd &m, std::vector<cplx> *all)
{
    if (m.rows() == 0)
    {
        return -std::numeric_limits<double>::infinity();
    }
    Eigen::MatrixXd work = m;
    balance_matrix(work);
    Eigen::EigenSolver<Eigen::MatrixXd> solver(work, false);
    if (solver.info() != Eigen::Success)
    {
        throw NumericalError("is_stable: eigen-solver did not converge");
    }
    double best = -std::numeric_limits<double>::infinity();
    for (Eigen::Index i = 0; i < solver.eigenvalues().size(); ++i)
    {
        const cplx s = solver.eigenvalues()[i];
        best = std::max(best, s.real());
        if (all != nullptr)
        {
            all->push_back(s);
        }
    }
    return best;
}
} // namespace

std::string to_string(Verdict v)
{
    switch (v)
    {
    case Verdict::Stable:
        return "stable";
    case Verdict::Marginal:
        return "marginal";
    case Verdict::Unstable:
        return "unstable";
    }
    return "unknown";
}

cplx StabilityReport::worst_root() const
{
    if (roots.empty())
    {
        return {};
    }
    return *std::max_element(roots.begin(), roots.end(),
                             [](cplx x, cplx y) { return x.imag() < y.imag(); });
}

cplx CharacteristicPolynomial::at_frequency(cplx omega) const
{
    return poly(cplx(0.0, -1.0) * omega / rate_scale);
}

CharacteristicPolynomial characteristic_polynomial(const SystemParams &params,
                                                   const SteadyState &steady,
                                                   const FeedbackLaw &feedback)
{
    const double kappa = params.cavity.kappa;
    const std::size_t n = params.modes.size();
    const auto filters = scaled_filters(params, feedback);

    int degree = 2 + 2 * static_cast<int>(n);
    for (const auto &f : filters)
    {
        degree += static_cast<int>(f.den.size()) - 1;
    }
    if (degree > kMaxDegree)
    {
        throw ResourceError("characteristic_polynomial: degree " + std::to_string(degree) +
                            " exceeds " + std::to_string(kMaxDegree));
    }

    // Per-mode blocks P_j M_j, and prefix/suffix products so that the
    // "all but j" products cost O(N) multiplications.
    std::vector<Polynomial> block(n);
    for (std::size_t j = 0; j < n; ++j)
    {
        const auto &m = params.modes[j];
        const double w = m.omega / kappa;
        const double g = m.gamma / kappa;
        block[j] = Polynomial({w * w, g, 1.0}) * Polynomial(filters[j].den);
    }
    std::vector<Polynomial> prefix(n + 1, Polynomial({1.0}));
    std::vector<Polynomial> suffix(n + 1, Polynomial({1.0}));
    for (std::size_t j = 0; j < n; ++j)
    {
        prefix[j + 1] = prefix[j] * block[j];
        suffix[n - 1 - j] = suffix[n - j] * block[n - 1 - j];
    }
    const Polynomial &all = prefix[n];

    Polynomial qG({0.0});
    Polynomial qg({0.0});
    for (std::size_t j = 0; j < n; ++j)
    {
        const auto &m = params.modes[j];
        const double w = m.omega / kappa;
        const double G = steady.coupling[j] / kappa;
        const Polynomial others = prefix[j] * suffix[j + 1];
        qG = qG + others * Polynomial(filters[j].den) * (G * G * w);
        qg = qg + others * Polynomial(filters[j].num) * (G * w);
    }

    const auto lc = loop_constants(params.detection);
    const double dl = steady.effective_detuning / kappa;
    const Polynomial one_s({1.0, 1.0});
    const Polynomial poly =
        one_s * (one_s * all + qg * lc.a) + (all * (dl * dl) + qG * (-dl) + qg * (dl * lc.b));

    CharacteristicPolynomial out;
    out.poly = poly.trimmed();
    out.rate_scale = kappa;
    return out;
}

Eigen::MatrixXd drift_matrix(const SystemParams &params, const SteadyState &steady,
                             const FeedbackLaw &feedback)
{
    const double kappa = params.cavity.kappa;
    const std::size_t n = params.modes.size();
    const auto filters = scaled_filters(params, feedback);
    const auto lc = loop_constants(params.detection);
    const double dl = steady.effective_detuning / kappa;

    Eigen::Index dim = 2 + 2 * static_cast<Eigen::Index>(n);
    for (const auto &f : filters)
    {
        dim += static_cast<Eigen::Index>(f.den.size()) - 1;
    }
    if (dim > kMaxDegree)
    {
        throw ResourceError("drift_matrix: dimension " + std::to_string(dim) + " exceeds " +
                            std::to_string(kMaxDegree));
    }
    Eigen::MatrixXd A = Eigen::MatrixXd::Zero(dim, dim);
    A(0, 0) = -1.0;
    A(0, 1) = dl;
    A(1, 0) = -dl;
    A(1, 1) = -1.0;

    Eigen::Index next = 2 + 2 * static_cast<Eigen::Index>(n);
    for (std::size_t j = 0; j < n; ++j)
    {
        const auto &m = params.modes[j];
        const double w = m.omega / kappa;
        const double G = steady.coupling[j] / kappa;
        const Eigen::Index q = 2 + 2 * static_cast<Eigen::Index>(j);
        const Eigen::Index p = q + 1;
        A(1, q) += G;
        A(q, p) = w;
        A(p, q) = -w;
        A(p, p) = -m.gamma / kappa;
        A(p, 0) = G; // force G X - y on p gives q = chi (G X - y)

        const auto &f = filters[j];
        const Eigen::Index order = static_cast<Eigen::Index>(f.den.size()) - 1;
        const double direct = static_cast<Eigen::Index>(f.num.size()) - 1 == order ? f.num.back() : 0.0;
        // y = sum_k c_k z_k + direct * u, u = b X + a Y.
        A(p, 0) -= direct * lc.b;
        A(p, 1) -= direct * lc.a;
        if (order > 0)
        {
            for (Eigen::Index k = 0; k < order; ++k)
            {
                const double nk = k < static_cast<Eigen::Index>(f.num.size()) ? f.num[static_cast<std::size_t>(k)] : 0.0;
                const double ck = nk - direct * f.den[static_cast<std::size_t>(k)];
                A(p, next + k) -= ck;
                if (k + 1 < order)
                {
                    A(next + k, next + k + 1) = 1.0;
                }
                A(next + order - 1, next + k) = -f.den[static_cast<std::size_t>(k)];
            }
            A(next + order - 1, 0) += lc.b;
            A(next + order - 1, 1) += lc.a;
            next += order;
        }
    }
    return A;
}

StabilityReport is_stable(const SystemParams &params, const SteadyState &steady,
                          const FeedbackLaw &feedback, double threshold_fraction)
{
    const double kappa = params.cavity.kappa;
    const Eigen::MatrixXd A = drift_matrix(params, steady, feedback);

    std::vector<cplx> scaled_roots;
    const double max_re = max_real_eigenvalue(A, &scaled_roots);

    // Every eigenvalue must be a zero of the independently expanded polynomial.
    const auto poly = characteristic_polynomial(params, steady, feedback);
    if (poly.poly.degree() != static_cast<int>(scaled_roots.size()))
    {
        throw NumericalError("is_stable: drift dimension disagrees with polynomial degree");
    }
    StabilityReport report;
    for (const cplx s : scaled_roots)
    {
        report.backward_error = std::max(report.backward_error, backward_error(poly.poly, s));
    }
    if (report.backward_error > 1e-6)
    {
        std::ostringstream oss;
        oss << "is_stable: roots fail the polynomial cross-check (backward error "
            << report.backward_error << ")";
        throw NumericalError(oss.str());
    }

    // On resonance X decouples; the remaining block is the feedback-loop
    // condition kappa - i omega + a lambda_g = 0 and must carry the verdict.
    if (std::abs(steady.effective_detuning) <= 1e-12 * kappa)
    {
        const Eigen::Index d = A.rows() - 1;
        const Eigen::MatrixXd reduced = A.bottomRightCorner(d, d);
        const double reduced_max = std::max(-1.0, max_real_eigenvalue(reduced, nullptr));
        if (std::abs(reduced_max - max_re) > 1e-8 * std::max(1.0, std::abs(max_re)))
        {
            throw NumericalError("is_stable: resonant reduced condition disagrees with full system");
        }
    }

    report.roots.reserve(scaled_roots.size());
    for (const cplx s : scaled_roots)
    {
        // s = -i omega / kappa  =>  omega = i kappa s
        report.roots.push_back(cplx(0.0, kappa) * s);
    }
    std::sort(report.roots.begin(), report.roots.end(),
              [](cplx x, cplx y) { return x.real() < y.real() || (x.real() == y.real() && x.imag() < y.imag()); });
    report.max_im = kappa * max_re;
    report.margin_threshold = threshold_fraction * kappa;
    if (report.max_im > report.margin_threshold)
    {
        report.verdict = Verdict::Unstable;
    }
    else if (report.max_im >= -report.margin_threshold)
    {
        report.verdict = Verdict::Marginal;
    }
    else
    {
        report.verdict = Verdict::Stable;
    }
    return report;
}

std::optional<double> critical_gain_scale(const SystemParams &params, const SteadyState &steady,
                                          double lo, double hi, double rel_tol)
{
    auto max_im = [&](double c) {
        const auto law = FeedbackLaw::proportional_to_coupling(c, steady.coupling);
        return is_stable(params, steady, law).max_im;
    };
    const double f_lo = max_im(lo);
    const double f_hi = max_im(hi);
    if (f_lo > 0.0 || f_hi <= 0.0)
    {
        return std::nullopt;
    }
    while (hi - lo > rel_tol * std::max(std::abs(lo), std::abs(hi)))
    {
        const double mid = 0.5 * (lo + hi);
        if (max_im(mid) > 0.0)
        {
            hi = mid;
        }
        else
        {
            lo = mid;
        }
    }
    return 0.5 * (lo + hi);
}

SteadyState select_branch(const SystemParams &params, const std::vector<SteadyState> &branches,
                          const FeedbackLaw &feedback, BranchPolicy policy, std::size_t index)
{
    if (branches.empty())
    {
        throw PreconditionError("select_branch: no steady-state branches");
    }
    switch (policy)
    {
    case BranchPolicy::Lowest:
        return branches.front();
    case BranchPolicy::Highest:
        return branches.back();
    case BranchPolicy::Index:
        if (index >= branches.size())
        {
            throw ParameterError("select_branch: branch index " + std::to_string(index) +
                                 " out of range (" + std::to_string(branches.size()) + " branches)");
        }
        return branches[index];
    case BranchPolicy::LowestStable:
        break;
    }
    std::ostringstream why;
    for (const auto &b : branches)
    {
        const auto report = is_stable(params, b, feedback);
        if (report.verdict == Verdict::Stable)
        {
            return b;
        }
        why << " branch " << b.branch_index << ": max Im omega = " << report.max_im << " s^-1;";
    }
    throw InstabilityError("select_branch: no stable branch;" + why.str());
}

} // namespace squeezelab
