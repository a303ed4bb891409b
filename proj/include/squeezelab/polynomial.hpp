#pragma once

#include <complex>
#include <span>
#include <vector>

namespace squeezelab
{
// Dense real polynomial, coefficients in ascending powers.
class Polynomial
{
public:
    Polynomial() = default;
    explicit Polynomial(std::vector<double> coefficients);

    const std::vector<double> &coefficients() const { return coeffs_; }
    int degree() const;
    bool is_zero() const { return degree() < 0; }

    std::complex<double> operator()(std::complex<double> s) const;

    Polynomial operator+(const Polynomial &other) const;
    Polynomial operator*(const Polynomial &other) const;
    Polynomial operator*(double factor) const;

    // Drops trailing coefficients with |c| <= tol * max|c|.
    Polynomial trimmed(double tol = 0.0) const;

private:
    std::vector<double> coeffs_;
};

// Roots via eigenvalues of the balanced companion matrix. Throws
// NumericalError if the eigen-solver fails to converge.
std::vector<std::complex<double>> polynomial_roots(const Polynomial &p);

// Diagonal similarity scaling (Parlett-Reinsch) applied in place; improves
// eigenvalue accuracy of badly scaled non-symmetric matrices.
template <typename Matrix>
void balance_matrix(Matrix &a);

} // namespace squeezelab

#include "squeezelab/detail/balance.ipp"
