#pragma once

#include "squeezelab/model.hpp"
#include "squeezelab/response.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

namespace squeezelab
{
// Linearized Langevin system with the zero-delay proportional loop folded in:
//   dz/dt = A z + B w,   y = C z + F w,
// z = (X_a, Y_a, q_1, p_1, ..., q_N, p_N), y = (X_d, Y_d) and w white with
// two-sided densities `density` (vacuum 1/2, thermal gamma_j (2 nbar_j + 1)).
// Inputs w = (X_a_in, Y_a_in, X_b_in, Y_b_in, v_in, xi_1, ..., xi_N).
struct LinearModel
{
    Eigen::MatrixXd A;
    Eigen::MatrixXd B;
    Eigen::MatrixXd C;
    Eigen::MatrixXd F;
    Eigen::VectorXd density;

    // Complex gain from each input to (X_d, Y_d) at omega (e^{-i omega t}).
    Eigen::MatrixXcd transfer(double omega) const;
};

// Refuses anything but Off or Proportional feedback.
LinearModel build_linear_model(const SystemParams &params, const SteadyState &steady,
                               const FeedbackLaw &feedback);

// Mean thermal occupation 1 / (exp(hbar omega / k_B T) - 1); zero at T = 0.
double thermal_occupation(double omega, double temperature_k);

struct TrajectoryConfig
{
    double dt = 4e-8;                // s
    double duration = 1.0;           // s, recorded span
    double burn_in = -1.0;           // s; negative picks 10 / min(gamma_j, kappa)
    std::uint64_t seed = 1;
    std::size_t record_stride = 25;  // steps per output record
    bool force = false;              // run configurations that are not Stable
    double divergence_factor = 1e12; // abort when a window mean square exceeds this x the first
    std::size_t divergence_window = 4096; // records

    // Resolution and mixing guards.
    void validate(const SystemParams &params) const;
};

// Output records are boxcar averages of X_d, Y_d over each record interval;
// state columns are sampled at the end of the interval.
struct Trajectory
{
    double record_interval = 0.0;
    std::vector<std::string> names;
    std::vector<std::vector<double>> columns;
    bool diverged = false;
    double diverged_at = 0.0; // s after burn-in
    std::uint64_t steps = 0;

    std::size_t rows() const { return columns.empty() ? 0 : columns.front().size(); }
    const std::vector<double> &column(const std::string &name) const;
};

Trajectory simulate(const SystemParams &params, const SteadyState &steady,
                    const FeedbackLaw &feedback, const TrajectoryConfig &cfg);

struct WelchOptions
{
    std::size_t segment_length = 4096;
    double overlap = 0.5;
};

// Positive-frequency bins, normalized so white noise of two-sided density D
// reads D. Standard errors are the spread of per-segment periodograms over
// sqrt(segment count).
struct EstimatedSpectra
{
    std::vector<double> omega;
    std::vector<double> s_x, s_y, s_xy;
    std::vector<double> se_x, se_y, se_xy;
    std::size_t segments = 0;
};

EstimatedSpectra estimate_spectra(const std::vector<double> &x, const std::vector<double> &y,
                                  double sample_interval, const WelchOptions &options = {});

struct SubBandResult
{
    double lo = 0.0;
    double hi = 0.0;
    std::size_t bins = 0;
    double estimated = 0.0;
    double analytic = 0.0;
    double deviation = 0.0; // |estimated - analytic| / |analytic|
};

struct ComparisonReport
{
    std::vector<SubBandResult> bands;
    double max_deviation = 0.0;
    double tolerance = 0.0;
    bool pass = false;
};

struct CompareOptions
{
    double lo = 1e4;
    double hi = 1e5;
    double tolerance = 0.1;
    std::size_t sub_bands = 8;        // log-spaced
    std::vector<double> notch_centres; // excluded within +-notch_half_width
    std::vector<double> notch_half_widths;
};

// Compares estimated bins against analytic values by sub-band means.
// `analytic` is evaluated at every retained bin.
ComparisonReport compare_to_analytic(const std::vector<double> &omega,
                                     const std::vector<double> &estimated,
                                     const std::function<double(double)> &analytic,
                                     const CompareOptions &options);

// Columnar binary dump: "SQZTRAJ1", uint32 column count, per column uint32
// name length + bytes, uint64 row count, then row-major float64, all
// little-endian.
void write_trajectory(const std::filesystem::path &path, const Trajectory &traj);
Trajectory read_trajectory(const std::filesystem::path &path);

} // namespace squeezelab
