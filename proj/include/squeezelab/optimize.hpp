#pragma once

#include "squeezelab/model.hpp"
#include "squeezelab/response.hpp"
#include "squeezelab/stability.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace squeezelab
{
enum class BandWeight
{
    Uniform,
    LogUniform,
};

struct Band
{
    double lo = 1e4;
    double hi = 1.2e5;
    BandWeight weight = BandWeight::Uniform;
    std::size_t points_per_decade = 2000;

    void validate() const;
};

struct ClosedFormGains
{
    FeedbackLaw law;
    std::string notice; // empty unless the law had to fall back to Off
};

// g_j = 2 r sqrt(eta) cos(theta) G_j. With r = 0 there is no light in the
// loop and the law is Off.
ClosedFormGains closed_form_gains(const SteadyState &steady, const DetectionParams &detection);

// Weighted mean of S_opt over the band, trapezoidal on a log grid refined
// around every resonance in the band. Throws InstabilityError unless the
// configuration is Stable.
double band_objective(const SystemParams &params, const SteadyState &steady,
                      const FeedbackLaw &feedback, const Band &band, unsigned threads = 0);

struct TuneOptions
{
    std::size_t budget = 400;  // objective evaluations
    std::size_t starts = 3;    // first start is the closed-form point
    std::uint64_t seed = 1;
    double c_max = 0.0;        // 0 picks 10 * 2 r sqrt(eta)
    double tolerance = 1e-9;   // relative tie band on the objective
    unsigned threads = 0;
};

struct TraceRow
{
    std::size_t start = 0;
    double theta = 0.0;
    double scale = 0.0;
    double objective = 0.0; // +inf when refused as not Stable
    Verdict verdict = Verdict::Stable;
};

struct TuneResult
{
    double theta = 0.0;
    double scale = 0.0; // g_j = scale * G_j
    FeedbackLaw law;
    double objective = 0.0;
    double initial_objective = 0.0;
    bool budget_exhausted = false;
    std::vector<TraceRow> trace;
};

// Coordinate descent over (theta, scale) with golden-section line searches,
// restricted to Stable candidates.
TuneResult tune_feedback(const SystemParams &params, const SteadyState &steady, const Band &band,
                         const TuneOptions &options = {});

} // namespace squeezelab
