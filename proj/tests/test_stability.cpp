#include "fixtures.hpp"

#include "squeezelab/errors.hpp"
#include "squeezelab/stability.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>

using namespace squeezelab;

namespace
{
constexpr cplx kI{0.0, 1.0};

// D(omega) times every denominator it carries, straight from the response module.
cplx product_form(const SystemParams &p, const SteadyState &st, const FeedbackLaw &fb, double w)
{
    cplx v = response_denominator(p, st, fb, w);
    const cplx s = -kI * w;
    for (std::size_t j = 0; j < p.modes.size(); ++j)
    {
        const auto &m = p.modes[j];
        v *= m.omega * m.omega + s * s + m.gamma * s;
        if (fb.kind() == FeedbackKind::RationalPerMode)
        {
            v *= fb.filters()[j].denominator(s);
        }
    }
    return v;
}

SystemParams ramp_config()
{
    auto p = fixtures::single_mode(0.8, 0.0, 1e-3);
    p.detection.homodyne_phase = kPi / 2.0;
    return p;
}

// Hurwitz boundary of the reduced single-mode loop at zero detuning.
double hurwitz_scale(const SystemParams &p, const SteadyState &st)
{
    const auto &m = p.modes[0];
    const double k = p.cavity.kappa;
    const double G = st.coupling[0];
    const double loop = p.detection.reflection() * std::sqrt(p.detection.efficiency);
    return m.gamma * (k * k + k * m.gamma + m.omega * m.omega) / (loop * G * G * m.omega);
}

std::vector<RationalFilter> lowpass_filters(const SteadyState &st, double corner, double scale)
{
    std::vector<RationalFilter> out;
    for (double G : st.coupling)
    {
        out.push_back({Polynomial({scale * G * corner}), Polynomial({corner, 1.0})});
    }
    return out;
}
} // namespace

TEST_CASE("decoupled single mode factorizes")
{
    auto p = fixtures::single_mode();
    auto st = fixtures::locked_branch(p);
    const auto cp = characteristic_polynomial(p, st, FeedbackLaw::off());
    const double k = p.cavity.kappa;
    const auto &m = p.modes[0];
    // (1 + s)^2 (w^2 + g s + s^2) in kappa units.
    const Polynomial expect = Polynomial({1.0, 1.0}) * Polynomial({1.0, 1.0}) *
                              Polynomial({m.omega * m.omega / (k * k), m.gamma / k, 1.0});
    REQUIRE(cp.poly.degree() == 4);
    for (int i = 0; i <= 4; ++i)
    {
        CHECK(cp.poly.coefficients()[i] == doctest::Approx(expect.coefficients()[i]).epsilon(1e-12));
    }
    const auto rep = is_stable(p, st, FeedbackLaw::off());
    CHECK(rep.verdict == Verdict::Stable);
    std::size_t cavity_roots = 0;
    for (const auto &w : rep.roots)
    {
        cavity_roots += std::abs(w - cplx(0.0, -k)) < 1e-6 * k;
    }
    CHECK(cavity_roots == 2);
    CHECK(rep.max_im == doctest::Approx(-m.gamma / 2.0).epsilon(1e-6));
}

TEST_CASE("expanded polynomial agrees with the product form")
{
    std::mt19937_64 rng(17);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int trial = 0; trial < 30; ++trial)
    {
        const auto p = fixtures::random_system(rng, 1 + trial % 6, trial % 2 == 1);
        const auto st = fixtures::locked_branch(p);
        FeedbackLaw fb = FeedbackLaw::off();
        if (trial % 3 == 1)
        {
            fb = FeedbackLaw::proportional_to_coupling(u(rng) - 0.5, st.coupling);
        }
        else if (trial % 3 == 2)
        {
            fb = FeedbackLaw::rational(lowpass_filters(st, p.cavity.kappa * (0.2 + u(rng)), u(rng) - 0.5));
        }
        const auto cp = characteristic_polynomial(p, st, fb);
        // Expanded form carries the scaled filter denominators and kappa powers;
        // the ratio against the product form must be one constant.
        cplx ref = 0.0;
        for (int k = 0; k < 50; ++k)
        {
            const double w = std::exp(std::log(1e2) + u(rng) * std::log(1e5));
            const cplx ratio = cp.at_frequency(w) / product_form(p, st, fb, w);
            if (k == 0)
            {
                ref = ratio;
            }
            CHECK(std::abs(ratio - ref) <= 1e-8 * std::abs(ref));
        }
    }
}

TEST_CASE("roots come in conjugate pairs and drift matches the polynomial")
{
    std::mt19937_64 rng(23);
    for (int trial = 0; trial < 10; ++trial)
    {
        const auto p = fixtures::random_system(rng, 3, true);
        const auto st = fixtures::locked_branch(p);
        const auto fb = FeedbackLaw::rational(lowpass_filters(st, 4e5, 0.1));
        const auto rep = is_stable(p, st, fb);
        CHECK(rep.backward_error < 1e-6);
        for (const auto &w : rep.roots)
        {
            // omega -> -omega* under complex conjugation of s.
            double nearest = INFINITY;
            for (const auto &v : rep.roots)
            {
                nearest = std::min(nearest, std::abs(v + std::conj(w)));
            }
            CHECK(nearest <= 1e-7 * std::max(1.0, std::abs(w)));
        }

        const auto A = drift_matrix(p, st, fb);
        const auto cp = characteristic_polynomial(p, st, fb);
        REQUIRE(A.rows() == cp.poly.degree());
        const Eigen::MatrixXcd Ac = A.cast<cplx>();
        cplx ref = 0.0;
        for (int k = 0; k < 5; ++k)
        {
            const cplx s(0.1 * k - 0.2, 0.7 + 0.3 * k);
            const Eigen::MatrixXcd M = s * Eigen::MatrixXcd::Identity(A.rows(), A.cols()) - Ac;
            const cplx ratio = M.determinant() / cp.poly(s);
            if (k == 0)
            {
                ref = ratio;
            }
            CHECK(std::abs(ratio - ref) <= 1e-9 * std::abs(ref));
        }
        CHECK(std::abs(ref - 1.0) < 1e-9);

        // Companion-matrix roots of the same polynomial agree with the eigenvalues.
        auto companion = polynomial_roots(cp.poly);
        REQUIRE(companion.size() == rep.roots.size());
        for (const auto &s : companion)
        {
            const cplx w = cplx(0.0, p.cavity.kappa) * s;
            double nearest = INFINITY;
            for (const auto &v : rep.roots)
            {
                nearest = std::min(nearest, std::abs(v - w));
            }
            CHECK(nearest <= 1e-6 * std::max(p.cavity.kappa, std::abs(w)));
        }
    }
}

TEST_CASE("no light in the loop or no sine component stays stable")
{
    std::mt19937_64 rng(41);
    for (int trial = 0; trial < 20; ++trial)
    {
        auto p = fixtures::random_system(rng, 4, false);
        const auto st = fixtures::locked_branch(p);
        for (double c : {-50.0, 0.3, 50.0})
        {
            auto open = p;
            open.detection.transmission = 1.0;
            CHECK(is_stable(open, st, FeedbackLaw::proportional_to_coupling(c, st.coupling)).verdict ==
                  Verdict::Stable);
            auto cosine = p;
            cosine.detection.homodyne_phase = 0.0;
            CHECK(is_stable(cosine, st, FeedbackLaw::proportional_to_coupling(c, st.coupling)).verdict ==
                  Verdict::Stable);
        }
        CHECK(is_stable(p, st, FeedbackLaw::off()).verdict == Verdict::Stable);
    }
}

TEST_CASE("sine-quadrature gain ramp crosses at the Hurwitz boundary")
{
    const auto p = ramp_config();
    const auto st = fixtures::locked_branch(p);
    const double c_star = hurwitz_scale(p, st);

    const auto crit = critical_gain_scale(p, st, 0.0, 10.0 * c_star, 1e-12);
    REQUIRE(crit.has_value());
    CHECK(*crit == doctest::Approx(c_star).epsilon(1e-8));

    const auto below = is_stable(p, st, FeedbackLaw::proportional_to_coupling(0.99 * c_star, st.coupling));
    const auto above = is_stable(p, st, FeedbackLaw::proportional_to_coupling(1.01 * c_star, st.coupling));
    CHECK(below.verdict == Verdict::Stable);
    CHECK(above.verdict == Verdict::Unstable);
    CHECK(above.worst_root().imag() == above.max_im);

    // Dense ramp: first sign flip lands next to the bisection result and
    // max Im omega never decreases along the way.
    double prev = -INFINITY;
    double first_flip = NAN;
    bool monotone = true;
    for (int i = 0; i <= 400; ++i)
    {
        const double c = 2.0 * c_star * i / 400.0;
        const double m = is_stable(p, st, FeedbackLaw::proportional_to_coupling(c, st.coupling)).max_im;
        monotone = monotone && m >= prev - 1e-9 * p.cavity.kappa;
        if (std::isnan(first_flip) && m > 0.0)
        {
            first_flip = c;
        }
        prev = m;
    }
    CHECK(monotone);
    CHECK(std::abs(first_flip - c_star) <= 2.0 * c_star / 400.0);

    CHECK_FALSE(critical_gain_scale(p, st, 0.0, 0.5 * c_star).has_value());
}

TEST_CASE("marginal band and thresholds")
{
    const auto p = fixtures::fig2();
    const auto st = fixtures::locked_branch(p);
    const auto fb = FeedbackLaw::proportional_to_coupling(2.0 * p.detection.reflection(), st.coupling);
    const auto rep = is_stable(p, st, fb);
    CHECK(rep.verdict == Verdict::Stable);
    CHECK(rep.margin_threshold == doctest::Approx(1e-9 * p.cavity.kappa));
    CHECK(rep.max_im < -rep.margin_threshold);
    const auto wide = is_stable(p, st, fb, 1e-3);
    CHECK(wide.verdict == Verdict::Marginal);
    CHECK(to_string(Verdict::Marginal) == "marginal");
    CHECK(rep.roots.size() == 52);
}

TEST_CASE("degree guard")
{
    auto p = fixtures::single_mode();
    const auto base = p.modes[0];
    p.modes.assign(100, base);
    const auto st = fixtures::locked_branch(p);
    CHECK_THROWS_AS(characteristic_polynomial(p, st, FeedbackLaw::off()), ResourceError);
    CHECK_THROWS_AS(is_stable(p, st, FeedbackLaw::off()), ResourceError);
    p.modes.assign(99, base);
    CHECK_NOTHROW(characteristic_polynomial(p, fixtures::locked_branch(p), FeedbackLaw::off()));
}

TEST_CASE("invalid filters are refused")
{
    const auto p = fixtures::single_mode();
    const auto st = fixtures::locked_branch(p);
    const RationalFilter growing{Polynomial({1.0}), Polynomial({-1e5, 1.0})};
    CHECK_THROWS_AS(is_stable(p, st, FeedbackLaw::rational({growing})), ParameterError);
    CHECK_THROWS_AS(is_stable(p, st, FeedbackLaw::proportional({1.0, 2.0})), ParameterError);
}

TEST_CASE("branch selection")
{
    // Three coexisting branches (scaled detuning 5, scaled drive 10).
    SystemParams p = fixtures::single_mode();
    p.cavity.locked_detuning.reset();
    p.cavity.detuning0 = 5.0 * p.cavity.kappa;
    const double beta = frequency_pull(p);
    const double k = p.cavity.kappa;
    p.drive.input_power_w = 10.0 * k * k * k / beta * PhysicalConstants::hbar * p.cavity.laser_omega0 / (2.0 * k);
    const auto branches = solve_steady_state(p);
    REQUIRE(branches.size() == 3);

    const auto off = FeedbackLaw::off();
    CHECK(select_branch(p, branches, off, BranchPolicy::Lowest).branch_index == 0);
    CHECK(select_branch(p, branches, off, BranchPolicy::Highest).branch_index == 2);
    CHECK(select_branch(p, branches, off, BranchPolicy::Index, 1).branch_index == 1);
    CHECK_THROWS_AS(select_branch(p, branches, off, BranchPolicy::Index, 3), ParameterError);
    CHECK_THROWS_AS(select_branch(p, {}, off), PreconditionError);

    const auto chosen = select_branch(p, branches, off);
    CHECK(is_stable(p, chosen, off).verdict == Verdict::Stable);
    for (std::size_t i = 0; i < chosen.branch_index; ++i)
    {
        CHECK(is_stable(p, branches[i], off).verdict != Verdict::Stable);
    }
    // The middle branch of a bistable cubic has a real root in the right half-plane.
    CHECK(is_stable(p, branches[1], off).verdict == Verdict::Unstable);
}
