#include "squeezelab/polynomial.hpp"

#include "squeezelab/errors.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>

namespace squeezelab
{
Polynomial::Polynomial(std::vector<double> coefficients) : coeffs_(std::move(coefficients)) {}

int Polynomial::degree() const
{
    for (auto i = static_cast<int>(coeffs_.size()) - 1; i >= 0; --i)
    {
        if (coeffs_[static_cast<std::size_t>(i)] != 0.0)
        {
            return i;
        }
    }
    return -1;
}

std::complex<double> Polynomial::operator()(std::complex<double> s) const
{
    std::complex<double> acc{0.0, 0.0};
    for (auto it = coeffs_.rbegin(); it != coeffs_.rend(); ++it)
    {
        acc = acc * s + *it;
    }
    return acc;
}

Polynomial Polynomial::operator+(const Polynomial &other) const
{
    std::vector<double> out(std::max(coeffs_.size(), other.coeffs_.size()), 0.0);
    for (std::size_t i = 0; i < coeffs_.size(); ++i)
    {
        out[i] += coeffs_[i];
    }
    for (std::size_t i = 0; i < other.coeffs_.size(); ++i)
    {
        out[i] += other.coeffs_[i];
    }
    return Polynomial(std::move(out));
}

Polynomial Polynomial::operator*(const Polynomial &other) const
{
    if (coeffs_.empty() || other.coeffs_.empty())
    {
        return Polynomial{};
    }
    std::vector<double> out(coeffs_.size() + other.coeffs_.size() - 1, 0.0);
    for (std::size_t i = 0; i < coeffs_.size(); ++i)
    {
        for (std::size_t j = 0; j < other.coeffs_.size(); ++j)
        {
            out[i + j] += coeffs_[i] * other.coeffs_[j];
        }
    }
    return Polynomial(std::move(out));
}

Polynomial Polynomial::operator*(double factor) const
{
    auto out = coeffs_;
    for (auto &c : out)
    {
        c *= factor;
    }
    return Polynomial(std::move(out));
}

Polynomial Polynomial::trimmed(double tol) const
{
    double biggest = 0.0;
    for (double c : coeffs_)
    {
        biggest = std::max(biggest, std::abs(c));
    }
    auto out = coeffs_;
    while (!out.empty() && std::abs(out.back()) <= tol * biggest)
    {
        out.pop_back();
    }
    return Polynomial(std::move(out));
}

std::vector<std::complex<double>> polynomial_roots(const Polynomial &p)
{
    const auto trimmed = p.trimmed();
    const int n = trimmed.degree();
    if (n < 0)
    {
        throw NumericalError("polynomial_roots: zero polynomial");
    }
    if (n == 0)
    {
        return {};
    }
    const auto &c = trimmed.coefficients();
    Eigen::MatrixXd companion = Eigen::MatrixXd::Zero(n, n);
    for (int i = 1; i < n; ++i)
    {
        companion(i, i - 1) = 1.0;
    }
    for (int i = 0; i < n; ++i)
    {
        companion(i, n - 1) = -c[static_cast<std::size_t>(i)] / c[static_cast<std::size_t>(n)];
    }
    balance_matrix(companion);
    Eigen::EigenSolver<Eigen::MatrixXd> solver(companion, false);
    if (solver.info() != Eigen::Success)
    {
        throw NumericalError("polynomial_roots: eigen-solver did not converge");
    }
    std::vector<std::complex<double>> roots(solver.eigenvalues().begin(),
                                            solver.eigenvalues().end());
    return roots;
}

} // namespace squeezelab
