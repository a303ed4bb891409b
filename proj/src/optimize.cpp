#include "squeezelab/optimize.hpp"

#include "squeezelab/constants.hpp"
#include "squeezelab/errors.hpp"
#include "squeezelab/spectra.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <random>

namespace squeezelab
{
void Band::validate() const
{
    if (!(lo > 0.0) || !(hi > lo) || !std::isfinite(hi))
    {
        throw ParameterError("band: need 0 < lo < hi");
    }
    if (points_per_decade < 2)
    {
        throw ParameterError("band: points_per_decade must be at least 2");
    }
}

ClosedFormGains closed_form_gains(const SteadyState &steady, const DetectionParams &detection)
{
    const double r = detection.reflection();
    if (r == 0.0)
    {
        return {FeedbackLaw::off(), "beam splitter transmits everything (t = 1): no light for feedback"};
    }
    const double scale = 2.0 * r * std::sqrt(detection.efficiency) * std::cos(detection.homodyne_phase);
    return {FeedbackLaw::proportional_to_coupling(scale, steady.coupling), {}};
}

double band_objective(const SystemParams &params, const SteadyState &steady,
                      const FeedbackLaw &feedback, const Band &band, unsigned threads)
{
    band.validate();
    const auto report = is_stable(params, steady, feedback);
    if (report.verdict != Verdict::Stable)
    {
        throw InstabilityError("band_objective: configuration is " + to_string(report.verdict));
    }
    const double decades = std::log10(band.hi / band.lo);
    const auto count = std::max<std::size_t>(
        16, static_cast<std::size_t>(std::ceil(decades * static_cast<double>(band.points_per_decade))) + 1);
    const auto grid = FrequencyGrid::log_refined(band.lo, band.hi, count, params.modes);
    const auto pts = evaluate_grid(params, steady, feedback, NoiseModel::vacuum_inputs(), grid, threads);

    double acc = 0.0;
    for (std::size_t i = 1; i < pts.size(); ++i)
    {
        const double w = band.weight == BandWeight::Uniform
                             ? pts[i].omega - pts[i - 1].omega
                             : std::log(pts[i].omega / pts[i - 1].omega);
        acc += 0.5 * w * (pts[i].s_opt + pts[i - 1].s_opt);
    }
    const double span = band.weight == BandWeight::Uniform ? band.hi - band.lo : std::log(band.hi / band.lo);
    return acc / span;
}

namespace
{
constexpr double kInvPhi = 0.6180339887498949;

struct Candidate
{
    double theta = 0.0;
    double scale = 0.0;
    double f = std::numeric_limits<double>::infinity();
};

class Search
{
public:
    Search(const SystemParams &params, const SteadyState &steady, const Band &band,
           const TuneOptions &opt, TuneResult &out)
        : params_(params), steady_(steady), band_(band), opt_(opt), out_(out)
    {
    }

    // nullopt once the budget is spent.
    std::optional<Candidate> eval(double theta, double scale, std::size_t start)
    {
        if (out_.trace.size() >= opt_.budget)
        {
            out_.budget_exhausted = true;
            return std::nullopt;
        }
        SystemParams p = params_;
        p.detection.homodyne_phase = theta;
        const auto law = FeedbackLaw::proportional_to_coupling(scale, steady_.coupling);
        TraceRow row{start, theta, scale, std::numeric_limits<double>::infinity(), Verdict::Stable};
        row.verdict = is_stable(p, steady_, law).verdict;
        if (row.verdict == Verdict::Stable)
        {
            row.objective = band_objective(p, steady_, law, band_, opt_.threads);
        }
        out_.trace.push_back(row);
        Candidate c{theta, scale, row.objective};
        offer(c);
        return c;
    }

    // Strictly better, or tied within tolerance and less intervention.
    bool better(const Candidate &a, const Candidate &b) const
    {
        if (!std::isfinite(a.f))
        {
            return false;
        }
        if (!std::isfinite(b.f))
        {
            return true;
        }
        const double tie = opt_.tolerance * std::max(std::abs(a.f), std::abs(b.f));
        if (a.f < b.f - tie)
        {
            return true;
        }
        if (a.f > b.f + tie)
        {
            return false;
        }
        if (std::abs(a.scale) != std::abs(b.scale))
        {
            return std::abs(a.scale) < std::abs(b.scale);
        }
        return std::abs(a.theta) < std::abs(b.theta);
    }

    void offer(const Candidate &c)
    {
        if (better(c, best_))
        {
            best_ = c;
        }
    }

    const Candidate &best() const { return best_; }

    // Golden-section minimization along one coordinate on [lo, hi].
    std::optional<Candidate> line(Candidate cur, bool along_theta, double lo, double hi, std::size_t start)
    {
        if (!(hi > lo))
        {
            return cur;
        }
        auto at = [&](double x) {
            return along_theta ? eval(x, cur.scale, start) : eval(cur.theta, x, start);
        };
        double a = lo;
        double b = hi;
        double x1 = b - kInvPhi * (b - a);
        double x2 = a + kInvPhi * (b - a);
        auto f1 = at(x1);
        auto f2 = at(x2);
        if (!f1 || !f2)
        {
            return std::nullopt;
        }
        Candidate best_line = cur;
        for (const auto &c : {*f1, *f2})
        {
            if (better(c, best_line))
            {
                best_line = c;
            }
        }
        const double stop = 1e-4 * (hi - lo);
        while (b - a > stop)
        {
            // Non-finite values (refused points) compare as +inf.
            if (f1->f <= f2->f)
            {
                b = x2;
                x2 = x1;
                f2 = f1;
                x1 = b - kInvPhi * (b - a);
                f1 = at(x1);
                if (!f1)
                {
                    return std::nullopt;
                }
                if (better(*f1, best_line))
                {
                    best_line = *f1;
                }
            }
            else
            {
                a = x1;
                x1 = x2;
                f1 = f2;
                x2 = a + kInvPhi * (b - a);
                f2 = at(x2);
                if (!f2)
                {
                    return std::nullopt;
                }
                if (better(*f2, best_line))
                {
                    best_line = *f2;
                }
            }
        }
        return best_line;
    }

private:
    const SystemParams &params_;
    const SteadyState &steady_;
    const Band &band_;
    const TuneOptions &opt_;
    TuneResult &out_;
    Candidate best_;
};
} // namespace

TuneResult tune_feedback(const SystemParams &params, const SteadyState &steady, const Band &band,
                         const TuneOptions &options)
{
    band.validate();
    const double loop = 2.0 * params.detection.reflection() * std::sqrt(params.detection.efficiency);
    const double c_max = options.c_max > 0.0 ? options.c_max : 10.0 * loop;
    const double th_lo = -kPi / 2.0;
    const double th_hi = kPi / 2.0;

    TuneResult out;
    Search search(params, steady, band, options, out);

    std::vector<Candidate> starts{{0.0, loop, 0.0}};
    std::mt19937_64 rng(options.seed);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (std::size_t s = 1; s < options.starts; ++s)
    {
        starts.push_back({th_lo + (th_hi - th_lo) * u(rng), c_max * u(rng), 0.0});
    }

    // No intervention at all, so that a flat objective resolves to c = 0.
    if (!search.eval(0.0, 0.0, 0))
    {
        throw ParameterError("tune_feedback: budget must allow at least two evaluations");
    }

    bool first = true;
    for (std::size_t s = 0; s < starts.size() && !out.budget_exhausted; ++s)
    {
        auto cur = search.eval(starts[s].theta, starts[s].scale, s);
        if (!cur)
        {
            break;
        }
        if (first)
        {
            out.initial_objective = cur->f;
            first = false;
        }
        double h_theta = (th_hi - th_lo) / 2.0;
        double h_scale = c_max / 2.0;
        for (int sweep = 0; sweep < 30; ++sweep)
        {
            const Candidate before = *cur;
            auto next = search.line(*cur, true, std::max(th_lo, cur->theta - h_theta),
                                    std::min(th_hi, cur->theta + h_theta), s);
            if (!next)
            {
                break;
            }
            cur = next;
            next = search.line(*cur, false, std::max(0.0, cur->scale - h_scale),
                               std::min(c_max, cur->scale + h_scale), s);
            if (!next)
            {
                break;
            }
            cur = next;
            const bool moved = cur->theta != before.theta || cur->scale != before.scale;
            h_theta *= moved ? 0.5 : 0.25;
            h_scale *= moved ? 0.5 : 0.25;
            if (h_theta < 1e-5 && h_scale < 1e-5 * std::max(c_max, 1e-300))
            {
                break;
            }
        }
    }

    const auto &best = search.best();
    if (!std::isfinite(best.f))
    {
        throw InstabilityError("tune_feedback: no Stable candidate found");
    }
    out.theta = best.theta;
    out.scale = best.scale;
    out.objective = best.f;
    out.law = best.scale == 0.0 ? FeedbackLaw::off()
                                : FeedbackLaw::proportional_to_coupling(best.scale, steady.coupling);
    return out;
}

} // namespace squeezelab
