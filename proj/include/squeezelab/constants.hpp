#pragma once

#include <numbers>

namespace squeezelab
{
// CODATA 2018 exact / recommended values. Nothing else in the code base
// spells these numbers out.
struct PhysicalConstants
{
    static constexpr double hbar = 1.054571817e-34; // J s
    static constexpr double k_B = 1.380649e-23;     // J / K
    static constexpr double c = 299792458.0;        // m / s
};

inline constexpr double kPi = std::numbers::pi;
inline constexpr double kTwoPi = 2.0 * std::numbers::pi;

// Shot-noise level of a quadrature spectrum in this code base's normalization.
inline constexpr double kShotNoise = 0.5;

} // namespace squeezelab
