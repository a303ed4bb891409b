#pragma once

#include "squeezelab/model.hpp"
#include "squeezelab/optimize.hpp"
#include "squeezelab/oracle.hpp"
#include "squeezelab/response.hpp"
#include "squeezelab/spectra.hpp"
#include "squeezelab/stability.hpp"

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace squeezelab
{
enum class FeedbackSource
{
    Off,
    ClosedForm,   // 2 r sqrt(eta) cos(theta) G_j
    GainScale,    // scale * G_j
    Gains,        // explicit g_j
    Rational,
};

struct FeedbackSpec
{
    FeedbackSource source = FeedbackSource::Off;
    double gain_scale = 0.0;
    std::vector<double> gains;
    std::vector<RationalFilter> filters;

    FeedbackLaw materialize(const SteadyState &steady, const DetectionParams &detection) const;
    std::string describe() const;
};

struct GridSpec
{
    GridPolicy policy = GridPolicy::LogRefined;
    double lo = 1e3;
    double hi = 1e6;
    std::size_t points = 4000;
    std::size_t per_mode = 41;

    FrequencyGrid build(const std::vector<MechanicalMode> &modes) const;
};

struct PhaseScanSpec
{
    double omega = 1e4;
    std::size_t points = 4001;
    // Extra points clustered on the dip around phi_opt, which is often far
    // narrower than the uniform spacing. 0 disables.
    std::size_t refine_points = 401;
};

enum class SweepAxis
{
    InputPower,
    Temperature,
    GainScale,
    Theta,
};

struct SweepSpec
{
    SweepAxis axis = SweepAxis::InputPower;
    std::vector<double> values;
};

struct OracleSpec
{
    TrajectoryConfig trajectory;
    WelchOptions welch;
    CompareOptions compare;
    double notch_gammas = 3.0; // notch half-width in units of gamma_j
    bool dump = false;
};

struct BranchSpec
{
    BranchPolicy policy = BranchPolicy::LowestStable;
    std::size_t index = 0;
};

struct RunConfig
{
    std::string source; // file path or "<string>"
    SystemParams params; // lock already resolved
    FeedbackSpec feedback;
    GridSpec grid;
    Band band;
    PhaseScanSpec phase_scan;
    std::optional<SweepSpec> sweep;
    OracleSpec oracle;
    TuneOptions optimize;
    BranchSpec branch;
};

// Parses a YAML document. Unknown keys, missing required keys, malformed
// values and conflicting unit suffixes raise ConfigError with line:column.
RunConfig parse_config(const std::string &text, const std::string &source = "<string>");
RunConfig load_config(const std::filesystem::path &path);

std::string to_string(SweepAxis axis);
std::string to_string(GridPolicy policy);

} // namespace squeezelab
