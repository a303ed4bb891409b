#include "squeezelab/config.hpp"

#include "squeezelab/constants.hpp"
#include "squeezelab/errors.hpp"

#include <yaml-cpp/yaml.h>

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

namespace squeezelab
{
namespace
{
std::string where(const std::string &source, const YAML::Mark &mark)
{
    std::ostringstream oss;
    oss << source;
    if (!mark.is_null())
    {
        oss << ':' << mark.line + 1 << ':' << mark.column + 1;
    }
    return oss.str();
}

// Mapping section with strict key accounting.
class Section
{
public:
    Section(YAML::Node node, std::string path, const std::string &source)
        : node_(std::move(node)), path_(std::move(path)), source_(source)
    {
        if (node_ && !node_.IsMap())
        {
            fail(node_.Mark(), path_, "expected a mapping");
        }
    }

    [[noreturn]] void fail(const YAML::Mark &mark, const std::string &key, const std::string &msg) const
    {
        throw ConfigError(where(source_, mark) + ": '" + key + "': " + msg);
    }

    std::string qualified(const std::string &key) const { return path_.empty() ? key : path_ + "." + key; }

    bool has(const std::string &key) const { return node_ && node_[key]; }

    YAML::Node take(const std::string &key)
    {
        used_.insert(key);
        return node_ ? node_[key] : YAML::Node();
    }

    YAML::Mark mark() const { return node_ ? node_.Mark() : YAML::Mark::null_mark(); }

    double to_double(const YAML::Node &n, const std::string &key) const
    {
        if (!n.IsScalar())
        {
            fail(n.Mark(), qualified(key), "expected a number");
        }
        try
        {
            const double v = n.as<double>();
            if (!std::isfinite(v))
            {
                fail(n.Mark(), qualified(key), "must be finite");
            }
            return v;
        }
        catch (const YAML::BadConversion &)
        {
            fail(n.Mark(), qualified(key), "cannot parse '" + n.Scalar() + "' as a number");
        }
    }

    std::optional<double> opt_number(const std::string &key)
    {
        if (!has(key))
        {
            used_.insert(key);
            return std::nullopt;
        }
        return to_double(take(key), key);
    }

    double number(const std::string &key)
    {
        if (!has(key))
        {
            fail(mark(), qualified(key), "required key is missing");
        }
        return to_double(take(key), key);
    }

    double number_or(const std::string &key, double fallback) { return opt_number(key).value_or(fallback); }

    std::size_t count_or(const std::string &key, std::size_t fallback)
    {
        if (!has(key))
        {
            return fallback;
        }
        const auto n = take(key);
        const double v = to_double(n, key);
        if (v < 0.0 || v != std::floor(v) || v > 1e12)
        {
            fail(n.Mark(), qualified(key), "expected a non-negative integer");
        }
        return static_cast<std::size_t>(v);
    }

    std::string string_or(const std::string &key, const std::string &fallback)
    {
        if (!has(key))
        {
            return fallback;
        }
        const auto n = take(key);
        if (!n.IsScalar())
        {
            fail(n.Mark(), qualified(key), "expected a string");
        }
        return n.Scalar();
    }

    bool bool_or(const std::string &key, bool fallback)
    {
        if (!has(key))
        {
            return fallback;
        }
        const auto n = take(key);
        try
        {
            return n.as<bool>();
        }
        catch (const YAML::BadConversion &)
        {
            fail(n.Mark(), qualified(key), "expected true or false");
        }
    }

    std::vector<double> numbers(const std::string &key)
    {
        const auto n = take(key);
        if (!n.IsSequence())
        {
            fail(n.Mark(), qualified(key), "expected a list of numbers");
        }
        std::vector<double> out;
        for (const auto &item : n)
        {
            out.push_back(to_double(item, key));
        }
        return out;
    }

    // Angular rate given as <base>_rad_per_s or <base>_hz.
    std::optional<double> opt_rate(const std::string &base)
    {
        const bool rad = has(base + "_rad_per_s");
        const bool hz = has(base + "_hz");
        if (rad && hz)
        {
            fail(take(base + "_hz").Mark(), qualified(base), "give either _rad_per_s or _hz, not both");
        }
        if (rad)
        {
            return number(base + "_rad_per_s");
        }
        if (hz)
        {
            return kTwoPi * number(base + "_hz");
        }
        return std::nullopt;
    }

    double rate(const std::string &base)
    {
        const auto v = opt_rate(base);
        if (!v)
        {
            fail(mark(), qualified(base + "_rad_per_s"), "required key is missing (or " + base + "_hz)");
        }
        return *v;
    }

    void finish() const
    {
        if (!node_)
        {
            return;
        }
        for (const auto &kv : node_)
        {
            const auto key = kv.first.as<std::string>();
            if (!used_.count(key))
            {
                fail(kv.first.Mark(), qualified(key), "unknown key");
            }
        }
    }

private:
    YAML::Node node_;
    std::string path_;
    const std::string &source_;
    std::set<std::string> used_;
};

MechanicalMode parse_mode(Section &s)
{
    MechanicalMode m;
    m.omega = s.rate("omega");
    const auto gamma = s.opt_rate("gamma");
    const auto q = s.opt_number("quality");
    if (gamma && q)
    {
        s.fail(s.mark(), s.qualified("gamma"), "give either gamma or quality, not both");
    }
    if (!gamma && !q)
    {
        s.fail(s.mark(), s.qualified("gamma_rad_per_s"), "required key is missing (or quality)");
    }
    m.gamma = gamma ? *gamma : m.omega / *q;
    m.mass_kg = s.number("mass_kg");
    m.overlap = s.number_or("overlap", 1.0);
    return m;
}

std::vector<MechanicalMode> parse_modes(const YAML::Node &node, const std::string &source)
{
    std::vector<MechanicalMode> modes;
    if (!node || node.IsNull())
    {
        return modes;
    }
    if (node.IsSequence())
    {
        std::size_t i = 0;
        for (const auto &item : node)
        {
            Section s(item, "modes[" + std::to_string(i++) + "]", source);
            modes.push_back(parse_mode(s));
            s.finish();
        }
        return modes;
    }
    Section s(node, "modes", source);
    const std::size_t count = s.count_or("count", 0);
    const double lo = s.rate("omega_min");
    const double hi = count > 1 ? s.rate("omega_max") : s.opt_rate("omega_max").value_or(lo);
    const auto q = s.opt_number("quality");
    const auto gamma = s.opt_rate("gamma");
    if (q.has_value() == gamma.has_value())
    {
        s.fail(s.mark(), "modes.quality", "give exactly one of quality or gamma");
    }
    const double mass = s.number("mass_kg");
    const double overlap = s.number_or("overlap", 1.0);
    s.finish();
    for (std::size_t j = 0; j < count; ++j)
    {
        const double w = count > 1 ? lo + (hi - lo) * static_cast<double>(j) / static_cast<double>(count - 1) : lo;
        modes.push_back({w, gamma ? *gamma : w / *q, mass, overlap});
    }
    return modes;
}

Polynomial parse_poly(Section &s, const std::string &key)
{
    if (!s.has(key))
    {
        s.fail(s.mark(), s.qualified(key), "required key is missing");
    }
    return Polynomial(s.numbers(key));
}

FeedbackSpec parse_feedback(const YAML::Node &node, const std::string &source)
{
    FeedbackSpec spec;
    if (!node)
    {
        return spec;
    }
    Section s(node, "feedback", source);
    const auto kind_node = s.has("kind") ? s.take("kind") : YAML::Node();
    const std::string kind = kind_node ? kind_node.Scalar() : "off";
    if (kind == "off")
    {
    }
    else if (kind == "closed_form")
    {
        spec.source = FeedbackSource::ClosedForm;
    }
    else if (kind == "proportional")
    {
        const bool scale = s.has("gain_scale");
        const bool gains = s.has("gains_rad_per_s");
        if (scale == gains)
        {
            s.fail(s.mark(), "feedback", "proportional needs exactly one of gain_scale or gains_rad_per_s");
        }
        if (scale)
        {
            spec.source = FeedbackSource::GainScale;
            spec.gain_scale = s.number("gain_scale");
        }
        else
        {
            spec.source = FeedbackSource::Gains;
            spec.gains = s.numbers("gains_rad_per_s");
        }
    }
    else if (kind == "rational")
    {
        spec.source = FeedbackSource::Rational;
        const auto list = s.take("filters");
        if (!list || !list.IsSequence())
        {
            s.fail(s.mark(), "feedback.filters", "expected a list of {numerator, denominator}");
        }
        std::size_t i = 0;
        for (const auto &item : list)
        {
            Section f(item, "feedback.filters[" + std::to_string(i++) + "]", source);
            RationalFilter filter{parse_poly(f, "numerator"), parse_poly(f, "denominator")};
            f.finish();
            spec.filters.push_back(std::move(filter));
        }
    }
    else
    {
        s.fail(kind_node.Mark(), "feedback.kind",
               "expected off, closed_form, proportional or rational, got '" + kind + "'");
    }
    s.finish();
    return spec;
}

GridPolicy parse_policy(Section &s, const std::string &key, GridPolicy fallback)
{
    if (!s.has(key))
    {
        return fallback;
    }
    const auto n = s.take(key);
    const auto v = n.Scalar();
    if (v == "linear")
    {
        return GridPolicy::Linear;
    }
    if (v == "log")
    {
        return GridPolicy::Log;
    }
    if (v == "log_refined")
    {
        return GridPolicy::LogRefined;
    }
    s.fail(n.Mark(), s.qualified(key), "expected linear, log or log_refined");
}

SweepSpec parse_sweep(const YAML::Node &node, const std::string &source)
{
    Section s(node, "sweep", source);
    SweepSpec spec;
    const auto axis_node = s.take("axis");
    if (!axis_node)
    {
        s.fail(s.mark(), "sweep.axis", "required key is missing");
    }
    const auto axis = axis_node.Scalar();
    if (axis == "input_power_w")
    {
        spec.axis = SweepAxis::InputPower;
    }
    else if (axis == "temperature_k")
    {
        spec.axis = SweepAxis::Temperature;
    }
    else if (axis == "gain_scale")
    {
        spec.axis = SweepAxis::GainScale;
    }
    else if (axis == "homodyne_phase_rad")
    {
        spec.axis = SweepAxis::Theta;
    }
    else
    {
        s.fail(axis_node.Mark(), "sweep.axis",
               "expected input_power_w, temperature_k, gain_scale or homodyne_phase_rad");
    }
    if (s.has("values"))
    {
        spec.values = s.numbers("values");
    }
    else
    {
        const double from = s.number("from");
        const double to = s.number("to");
        const std::size_t points = s.count_or("points", 11);
        const std::string spacing = s.string_or("spacing", "linear");
        if (points < 2)
        {
            s.fail(s.mark(), "sweep.points", "need at least 2 points");
        }
        const bool log = spacing == "log";
        if (!log && spacing != "linear")
        {
            s.fail(s.mark(), "sweep.spacing", "expected linear or log");
        }
        if (log && !(from > 0.0 && to > 0.0))
        {
            s.fail(s.mark(), "sweep.from", "log spacing needs positive end points");
        }
        for (std::size_t i = 0; i < points; ++i)
        {
            const double u = static_cast<double>(i) / static_cast<double>(points - 1);
            spec.values.push_back(log ? from * std::pow(to / from, u) : from + (to - from) * u);
        }
    }
    s.finish();
    if (spec.values.empty())
    {
        throw ConfigError(where(source, node.Mark()) + ": 'sweep.values': empty sweep");
    }
    return spec;
}
} // namespace

FeedbackLaw FeedbackSpec::materialize(const SteadyState &steady, const DetectionParams &detection) const
{
    switch (source)
    {
    case FeedbackSource::Off:
        return FeedbackLaw::off();
    case FeedbackSource::ClosedForm:
        return closed_form_gains(steady, detection).law;
    case FeedbackSource::GainScale:
        return FeedbackLaw::proportional_to_coupling(gain_scale, steady.coupling);
    case FeedbackSource::Gains:
        return FeedbackLaw::proportional(gains);
    case FeedbackSource::Rational:
        return FeedbackLaw::rational(filters);
    }
    return FeedbackLaw::off();
}

std::string FeedbackSpec::describe() const
{
    switch (source)
    {
    case FeedbackSource::Off:
        return "off";
    case FeedbackSource::ClosedForm:
        return "closed_form";
    case FeedbackSource::GainScale:
        return "proportional (gain_scale)";
    case FeedbackSource::Gains:
        return "proportional (explicit gains)";
    case FeedbackSource::Rational:
        return "rational";
    }
    return "unknown";
}

FrequencyGrid GridSpec::build(const std::vector<MechanicalMode> &modes) const
{
    switch (policy)
    {
    case GridPolicy::Linear:
        return FrequencyGrid::linear(lo, hi, points);
    case GridPolicy::Log:
        return FrequencyGrid::log(lo, hi, points);
    case GridPolicy::LogRefined:
        return FrequencyGrid::log_refined(lo, hi, points, modes, per_mode);
    }
    return FrequencyGrid::log(lo, hi, points);
}

std::string to_string(SweepAxis axis)
{
    switch (axis)
    {
    case SweepAxis::InputPower:
        return "input_power_w";
    case SweepAxis::Temperature:
        return "temperature_k";
    case SweepAxis::GainScale:
        return "gain_scale";
    case SweepAxis::Theta:
        return "homodyne_phase_rad";
    }
    return "unknown";
}

std::string to_string(GridPolicy policy)
{
    switch (policy)
    {
    case GridPolicy::Linear:
        return "linear";
    case GridPolicy::Log:
        return "log";
    case GridPolicy::LogRefined:
        return "log_refined";
    }
    return "unknown";
}

RunConfig parse_config(const std::string &text, const std::string &source)
{
    YAML::Node root;
    try
    {
        root = YAML::Load(text);
    }
    catch (const YAML::ParserException &e)
    {
        throw ConfigError(where(source, e.mark) + ": syntax error: " + e.msg);
    }
    if (!root || !root.IsMap())
    {
        throw ConfigError(source + ": expected a mapping at the top level");
    }
    Section top(root, "", source);
    RunConfig cfg;
    cfg.source = source;
    auto &p = cfg.params;

    // A forgotten drive would silently give a dark cavity, so it is required too.
    for (const char *section : {"cavity", "drive", "modes"})
    {
        if (!top.has(section))
        {
            throw ConfigError(source + ": '" + section + "': required section is missing");
        }
    }
    {
        Section s(top.take("cavity"), "cavity", source);
        p.cavity.length_m = s.number("length_m");
        p.cavity.kappa = s.rate("kappa");
        p.cavity.detuning0 = s.opt_rate("detuning0").value_or(0.0);
        p.cavity.locked_detuning = s.opt_rate("locked_detuning");
        const auto wl = s.opt_number("wavelength_m");
        const auto w0 = s.opt_rate("laser_omega0");
        if (wl.has_value() == w0.has_value())
        {
            s.fail(s.mark(), "cavity.wavelength_m", "give exactly one of wavelength_m or laser_omega0");
        }
        p.cavity.laser_omega0 = w0 ? *w0 : kTwoPi * PhysicalConstants::c / *wl;
        s.finish();
    }
    {
        Section s(top.take("drive"), "drive", source);
        p.drive.input_power_w = s.number_or("input_power_w", 0.0);
        s.finish();
    }
    p.modes = parse_modes(top.take("modes"), source);
    {
        Section s(top.take("bath"), "bath", source);
        p.bath.temperature_k = s.number_or("temperature_k", 0.0);
        s.finish();
    }
    {
        Section s(top.take("detection"), "detection", source);
        p.detection.transmission = s.number_or("transmission", 1.0);
        p.detection.efficiency = s.number_or("efficiency", 1.0);
        p.detection.homodyne_phase = s.number_or("homodyne_phase_rad", 0.0);
        s.finish();
    }
    cfg.feedback = parse_feedback(top.take("feedback"), source);
    {
        Section s(top.take("grid"), "grid", source);
        cfg.grid.policy = parse_policy(s, "policy", cfg.grid.policy);
        cfg.grid.lo = s.opt_rate("lo").value_or(cfg.grid.lo);
        cfg.grid.hi = s.opt_rate("hi").value_or(cfg.grid.hi);
        cfg.grid.points = s.count_or("points", cfg.grid.points);
        cfg.grid.per_mode = s.count_or("per_mode", cfg.grid.per_mode);
        s.finish();
    }
    {
        Section s(top.take("band"), "band", source);
        cfg.band.lo = s.opt_rate("lo").value_or(cfg.band.lo);
        cfg.band.hi = s.opt_rate("hi").value_or(cfg.band.hi);
        const auto w = s.string_or("weight", "uniform");
        if (w == "log")
        {
            cfg.band.weight = BandWeight::LogUniform;
        }
        else if (w != "uniform")
        {
            s.fail(s.mark(), "band.weight", "expected uniform or log");
        }
        cfg.band.points_per_decade = s.count_or("points_per_decade", cfg.band.points_per_decade);
        s.finish();
    }
    {
        Section s(top.take("phase_scan"), "phase_scan", source);
        cfg.phase_scan.omega = s.opt_rate("omega").value_or(cfg.phase_scan.omega);
        cfg.phase_scan.points = s.count_or("points", cfg.phase_scan.points);
        cfg.phase_scan.refine_points = s.count_or("refine_points", cfg.phase_scan.refine_points);
        s.finish();
    }
    if (top.has("sweep"))
    {
        cfg.sweep = parse_sweep(top.take("sweep"), source);
    }
    {
        Section s(top.take("oracle"), "oracle", source);
        auto &t = cfg.oracle.trajectory;
        t.dt = s.number_or("dt_s", t.dt);
        t.duration = s.number_or("duration_s", t.duration);
        t.burn_in = s.number_or("burn_in_s", t.burn_in);
        t.record_stride = s.count_or("record_stride", t.record_stride);
        t.seed = s.count_or("seed", t.seed);
        cfg.oracle.welch.segment_length = s.count_or("segment_length", cfg.oracle.welch.segment_length);
        cfg.oracle.welch.overlap = s.number_or("overlap", cfg.oracle.welch.overlap);
        cfg.oracle.compare.lo = s.opt_rate("compare_lo").value_or(cfg.oracle.compare.lo);
        cfg.oracle.compare.hi = s.opt_rate("compare_hi").value_or(cfg.oracle.compare.hi);
        cfg.oracle.compare.tolerance = s.number_or("tolerance", cfg.oracle.compare.tolerance);
        cfg.oracle.compare.sub_bands = s.count_or("sub_bands", cfg.oracle.compare.sub_bands);
        cfg.oracle.notch_gammas = s.number_or("notch_gammas", cfg.oracle.notch_gammas);
        cfg.oracle.dump = s.bool_or("dump", false);
        s.finish();
    }
    {
        Section s(top.take("optimize"), "optimize", source);
        cfg.optimize.budget = s.count_or("budget", cfg.optimize.budget);
        cfg.optimize.starts = s.count_or("starts", cfg.optimize.starts);
        cfg.optimize.seed = s.count_or("seed", cfg.optimize.seed);
        cfg.optimize.c_max = s.number_or("c_max", cfg.optimize.c_max);
        s.finish();
    }
    if (top.has("branch"))
    {
        const auto n = top.take("branch");
        const auto v = n.IsScalar() ? n.Scalar() : std::string{};
        if (v == "lowest_stable")
        {
            cfg.branch.policy = BranchPolicy::LowestStable;
        }
        else if (v == "lowest")
        {
            cfg.branch.policy = BranchPolicy::Lowest;
        }
        else if (v == "highest")
        {
            cfg.branch.policy = BranchPolicy::Highest;
        }
        else
        {
            try
            {
                cfg.branch.index = n.as<std::size_t>();
                cfg.branch.policy = BranchPolicy::Index;
            }
            catch (const YAML::BadConversion &)
            {
                top.fail(n.Mark(), "branch", "expected lowest_stable, lowest, highest or an index");
            }
        }
    }
    top.finish();

    try
    {
        p.validate();
        cfg.band.validate();
        p = resolve_lock(p);
    }
    catch (const ParameterError &e)
    {
        throw ConfigError(source + ": " + e.what());
    }
    return cfg;
}

RunConfig load_config(const std::filesystem::path &path)
{
    std::ifstream in(path);
    if (!in)
    {
        throw ConfigError("cannot open config file " + path.string());
    }
    std::stringstream buf;
    buf << in.rdbuf();
    return parse_config(buf.str(), path.string());
}

} // namespace squeezelab
