#include "squeezelab/cli.hpp"

#include "squeezelab/config.hpp"
#include "squeezelab/constants.hpp"
#include "squeezelab/errors.hpp"
#include "squeezelab/io.hpp"
#include "squeezelab/optimize.hpp"
#include "squeezelab/oracle.hpp"
#include "squeezelab/spectra.hpp"
#include "squeezelab/stability.hpp"

#include <nlohmann/json.hpp>

#include <chrono>
#include <algorithm>
#include <cmath>
#include <fstream>
#include <ostream>
#include <sstream>

#ifndef SQUEEZELAB_VERSION
#define SQUEEZELAB_VERSION "0.0.0"
#endif

namespace squeezelab
{
using nlohmann::json;

namespace
{
using Clock = std::chrono::steady_clock;

std::string format_root(cplx w)
{
    std::ostringstream oss;
    oss.precision(6);
    oss << w.real() << (w.imag() < 0 ? " - " : " + ") << std::abs(w.imag()) << "i";
    return oss.str();
}

// Resolved operating point: branch, feedback law and its stability.
struct Operating
{
    SteadyState steady;
    FeedbackLaw law;
    StabilityReport report;
    std::size_t branch_count = 0;
};

Operating operating_point(const RunConfig &cfg, const FeedbackSpec &spec)
{
    const auto branches = solve_steady_state(cfg.params);
    Operating op;
    op.branch_count = branches.size();
    auto take = [&](const SteadyState &b) {
        op.steady = b;
        op.law = spec.materialize(b, cfg.params.detection);
        op.report = is_stable(cfg.params, b, op.law);
    };
    switch (cfg.branch.policy)
    {
    case BranchPolicy::Lowest:
        take(branches.front());
        return op;
    case BranchPolicy::Highest:
        take(branches.back());
        return op;
    case BranchPolicy::Index:
        if (cfg.branch.index >= branches.size())
        {
            throw ConfigError("branch index " + std::to_string(cfg.branch.index) + " out of range (" +
                              std::to_string(branches.size()) + " branches)");
        }
        take(branches[cfg.branch.index]);
        return op;
    case BranchPolicy::LowestStable:
        break;
    }
    for (const auto &b : branches)
    {
        take(b);
        if (op.report.verdict == Verdict::Stable)
        {
            return op;
        }
    }
    // Nothing stable: keep the lowest branch so the gate can name its root.
    take(branches.front());
    return op;
}

void gate(const Operating &op, bool force, std::ostream &log)
{
    if (op.report.verdict == Verdict::Unstable)
    {
        std::ostringstream oss;
        oss << "configuration is unstable: worst root omega = " << format_root(op.report.worst_root())
            << " s^-1 (max Im = " << op.report.max_im << " s^-1)";
        if (!force)
        {
            throw InstabilityError(oss.str() + "; rerun with --force to emit anyway");
        }
        log << "warning: " << oss.str() << " (continuing under --force)\n";
    }
    else if (op.report.verdict == Verdict::Marginal)
    {
        log << "warning: configuration is marginally stable (max Im omega = " << op.report.max_im
            << " s^-1)\n";
    }
}

json params_json(const SystemParams &p)
{
    json modes = json::array();
    for (const auto &m : p.modes)
    {
        modes.push_back({{"omega_rad_per_s", m.omega},
                         {"gamma_rad_per_s", m.gamma},
                         {"mass_kg", m.mass_kg},
                         {"overlap", m.overlap}});
    }
    json cavity = {{"length_m", p.cavity.length_m},
                   {"kappa_rad_per_s", p.cavity.kappa},
                   {"detuning0_rad_per_s", p.cavity.detuning0},
                   {"laser_omega0_rad_per_s", p.cavity.laser_omega0}};
    if (p.cavity.locked_detuning)
    {
        cavity["locked_detuning_rad_per_s"] = *p.cavity.locked_detuning;
    }
    return {{"cavity", cavity},
            {"drive", {{"input_power_w", p.drive.input_power_w}}},
            {"modes", modes},
            {"bath", {{"temperature_k", p.bath.temperature_k}}},
            {"detection",
             {{"transmission", p.detection.transmission},
              {"efficiency", p.detection.efficiency},
              {"homodyne_phase_rad", p.detection.homodyne_phase}}}};
}

json feedback_json(const FeedbackSpec &spec, const FeedbackLaw &law)
{
    json j = {{"source", spec.describe()}};
    switch (law.kind())
    {
    case FeedbackKind::Off:
        j["kind"] = "off";
        break;
    case FeedbackKind::Proportional:
        j["kind"] = "proportional";
        j["gains_rad_per_s"] = law.gains();
        break;
    case FeedbackKind::RationalPerMode:
    {
        j["kind"] = "rational";
        json filters = json::array();
        for (const auto &f : law.filters())
        {
            filters.push_back({{"numerator", f.numerator.coefficients()},
                               {"denominator", f.denominator.coefficients()}});
        }
        j["filters"] = filters;
        break;
    }
    }
    return j;
}

json steady_json(const SteadyState &s, std::size_t branch_count)
{
    return {{"alpha_s", s.alpha_s},
            {"intensity", s.intensity},
            {"effective_detuning_rad_per_s", s.effective_detuning},
            {"displacement", s.displacement},
            {"bare_coupling_rad_per_s", s.bare_coupling},
            {"coupling_rad_per_s", s.coupling},
            {"branch_index", s.branch_index},
            {"branch_count", branch_count}};
}

json stability_json(const StabilityReport &r)
{
    json roots = json::array();
    for (const auto &w : r.roots)
    {
        roots.push_back({w.real(), w.imag()});
    }
    return {{"verdict", to_string(r.verdict)},
            {"max_im_rad_per_s", r.max_im},
            {"margin_threshold_rad_per_s", r.margin_threshold},
            {"backward_error", r.backward_error},
            {"roots_rad_per_s", roots}};
}

class Run
{
public:
    Run(const CliOptions &opt, RunConfig cfg, std::ostream &log)
        : opt_(opt), cfg_(std::move(cfg)), log_(log), start_(Clock::now())
    {
        data_ = opt.out.empty() ? std::filesystem::path(opt.command + ".csv") : opt.out;
        manifest_ = {{"tool", {{"name", "squeezelab"}, {"version", version()}}},
                     {"command", opt.command},
                     {"config", {{"source", cfg_.source}, {"resolved", params_json(cfg_.params)}}},
                     {"data_file", data_.filename().string()}};
    }

    RunConfig &cfg() { return cfg_; }
    bool force() const { return opt_.force; }
    unsigned threads() const { return opt_.threads; }
    std::ostream &log() { return log_; }
    json &manifest() { return manifest_; }
    const std::filesystem::path &data() const { return data_; }

    Table table(std::vector<std::string> columns, const std::string &title) const
    {
        Table t;
        t.comments = {"squeezelab " + std::string(version()) + " " + title,
                      "manifest: " + manifest_path(data_).filename().string()};
        t.columns = std::move(columns);
        return t;
    }

    void record(const Operating &op, const FeedbackSpec &spec)
    {
        manifest_["steady_state"] = steady_json(op.steady, op.branch_count);
        manifest_["feedback"] = feedback_json(spec, op.law);
        manifest_["stability"] = stability_json(op.report);
    }

    void finish(const Table &t)
    {
        if (data_.has_parent_path())
        {
            std::filesystem::create_directories(data_.parent_path());
        }
        write_table(data_, t);
        manifest_["timing_s"] = std::chrono::duration<double>(Clock::now() - start_).count();
        std::ofstream os(manifest_path(data_));
        if (!os)
        {
            throw ParameterError("cannot write " + manifest_path(data_).string());
        }
        os << manifest_.dump(2) << '\n';
        log_ << "wrote " << data_.string() << " (" << t.rows.size() << " rows) and "
             << manifest_path(data_).string() << '\n';
    }

private:
    const CliOptions &opt_;
    RunConfig cfg_;
    std::ostream &log_;
    Clock::time_point start_;
    std::filesystem::path data_;
    json manifest_;
};

json grid_json(const GridSpec &g, std::size_t count)
{
    return {{"policy", to_string(g.policy)},
            {"lo_rad_per_s", g.lo},
            {"hi_rad_per_s", g.hi},
            {"points_requested", g.points},
            {"per_mode", g.per_mode},
            {"points", count}};
}

int cmd_spectrum(Run &run)
{
    auto &cfg = run.cfg();
    const auto op = operating_point(cfg, cfg.feedback);
    run.record(op, cfg.feedback);
    gate(op, run.force(), run.log());
    const auto grid = cfg.grid.build(cfg.params.modes);
    const auto pts =
        evaluate_grid(cfg.params, op.steady, op.law, NoiseModel::vacuum_inputs(), grid, run.threads());
    auto t = run.table({"omega_rad_per_s", "S_X", "S_Y", "S_XY", "S_r", "S_opt", "S_opt_dB", "phi_opt_rad"},
                       "spectrum");
    for (const auto &p : pts)
    {
        t.add_row({p.omega, p.s_x, p.s_y, p.s_xy, p.s_r, p.s_opt, to_decibels(p.s_opt), p.phi_opt});
    }
    run.manifest()["grid"] = grid_json(cfg.grid, grid.points.size());
    run.finish(t);
    return kExitOk;
}

int cmd_phase_scan(Run &run)
{
    auto &cfg = run.cfg();
    const auto op = operating_point(cfg, cfg.feedback);
    run.record(op, cfg.feedback);
    gate(op, run.force(), run.log());
    const double omega = cfg.phase_scan.omega;
    const std::size_t n = cfg.phase_scan.points;
    if (n < 2)
    {
        throw ConfigError("phase_scan.points must be at least 2");
    }
    const auto s = quadrature_spectra(cfg.params, op.steady, op.law, NoiseModel::vacuum_inputs(), omega);
    const auto best = optimal_spectrum(s);
    auto t = run.table({"phi_rad", "S_phi", "S_phi_dB"}, "phase-scan");

    const auto phis = phase_scan_grid(s, n, cfg.phase_scan.refine_points);
    const double half = dip_half_width(s);

    double min_db = std::numeric_limits<double>::infinity();
    double min_phi = 0.0;
    for (double phi : phis)
    {
        const double v = phase_spectrum(s, phi);
        const double db = to_decibels(v);
        if (db < min_db)
        {
            min_db = db;
            min_phi = phi;
        }
        t.add_row({phi, v, db});
    }
    run.manifest()["phase_scan"] = {{"omega_rad_per_s", omega},
                                    {"points", phis.size()},
                                    {"uniform_points", n},
                                    {"dip_half_width_rad", half},
                                    {"S_X", s.s_x},
                                    {"S_Y", s.s_y},
                                    {"S_XY", s.s_xy},
                                    {"S_opt", best.s_opt},
                                    {"S_opt_dB", to_decibels(best.s_opt)},
                                    {"phi_opt_rad", best.phi_opt},
                                    {"grid_min_dB", min_db},
                                    {"grid_min_phi_rad", min_phi}};
    run.log() << "phase scan at omega = " << omega << " s^-1: S_opt = " << to_decibels(best.s_opt)
              << " dB at phi_opt = " << best.phi_opt << " rad\n";
    run.finish(t);
    return kExitOk;
}

int cmd_sweep(Run &run)
{
    auto &cfg = run.cfg();
    if (!cfg.sweep)
    {
        throw ConfigError(cfg.source + ": 'sweep': section required by the sweep command");
    }
    const auto &sweep = *cfg.sweep;
    auto t = run.table({to_string(sweep.axis), "verdict", "max_im_rad_per_s", "band_objective",
                        "figure_of_merit", "refused"},
                       "sweep");
    json points = json::array();
    for (const double v : sweep.values)
    {
        RunConfig point = cfg;
        FeedbackSpec spec = cfg.feedback;
        switch (sweep.axis)
        {
        case SweepAxis::InputPower:
            point.params.drive.input_power_w = v;
            break;
        case SweepAxis::Temperature:
            point.params.bath.temperature_k = v;
            break;
        case SweepAxis::GainScale:
            spec.source = FeedbackSource::GainScale;
            spec.gain_scale = v;
            break;
        case SweepAxis::Theta:
            point.params.detection.homodyne_phase = v;
            break;
        }
        point.params.validate();
        point.params = resolve_lock(point.params);
        const auto op = operating_point(point, spec);
        const double verdict = static_cast<double>(static_cast<int>(op.report.verdict));
        if (op.report.verdict != Verdict::Stable)
        {
            t.add_row({v, verdict, op.report.max_im, std::nullopt, std::nullopt, 1.0});
            points.push_back({{"value", v}, {"verdict", to_string(op.report.verdict)}});
            continue;
        }
        const double objective = band_objective(point.params, op.steady, op.law, point.band, run.threads());
        std::optional<double> merit;
        if (std::abs(op.steady.effective_detuning) <= 1e-12 * point.params.cavity.kappa)
        {
            merit = figure_of_merit(resonant_fast_path(point.params, op.steady, op.law, point.band.lo));
        }
        t.add_row({v, verdict, op.report.max_im, objective, merit, 0.0});
        points.push_back({{"value", v}, {"verdict", "stable"}, {"coupling_rad_per_s", op.steady.coupling}});
    }
    run.manifest()["sweep"] = {{"axis", to_string(sweep.axis)},
                               {"band_rad_per_s", {cfg.band.lo, cfg.band.hi}},
                               {"points", points}};
    run.finish(t);
    return kExitOk;
}

int cmd_optimize(Run &run)
{
    auto &cfg = run.cfg();
    const auto op = operating_point(cfg, cfg.feedback);
    run.record(op, cfg.feedback);
    gate(op, run.force(), run.log());
    auto options = cfg.optimize;
    options.threads = run.threads();
    const auto res = tune_feedback(cfg.params, op.steady, cfg.band, options);
    auto t = run.table({"start", "theta_rad", "gain_scale", "objective", "verdict"}, "optimize trace");
    for (const auto &row : res.trace)
    {
        t.add_row({static_cast<double>(row.start), row.theta, row.scale,
                   std::isfinite(row.objective) ? std::optional<double>(row.objective) : std::nullopt,
                   static_cast<double>(static_cast<int>(row.verdict))});
    }
    const double reference = 2.0 * cfg.params.detection.reflection() * std::sqrt(cfg.params.detection.efficiency);
    run.manifest()["optimize"] = {{"theta_rad", res.theta},
                                  {"gain_scale", res.scale},
                                  {"objective", res.objective},
                                  {"initial_objective", res.initial_objective},
                                  {"closed_form_scale", reference},
                                  {"evaluations", res.trace.size()},
                                  {"budget_exhausted", res.budget_exhausted},
                                  {"band_rad_per_s", {cfg.band.lo, cfg.band.hi}}};
    run.log() << "optimum: theta = " << res.theta << " rad, g_j = " << res.scale
              << " G_j (closed form " << reference << "), band mean S_opt = " << res.objective << '\n';
    if (res.budget_exhausted)
    {
        run.log() << "warning: search budget exhausted; result is the best found so far\n";
    }
    run.finish(t);
    return kExitOk;
}

int cmd_oracle(Run &run)
{
    auto &cfg = run.cfg();
    const auto op = operating_point(cfg, cfg.feedback);
    run.record(op, cfg.feedback);
    auto traj_cfg = cfg.oracle.trajectory;
    traj_cfg.force = run.force();
    const auto traj = simulate(cfg.params, op.steady, op.law, traj_cfg);
    if (cfg.oracle.dump)
    {
        auto dump = run.data();
        dump += ".traj.bin";
        write_trajectory(dump, traj);
        run.manifest()["trajectory_dump"] = dump.filename().string();
    }
    if (traj.diverged)
    {
        run.manifest()["oracle"] = {{"diverged", true}, {"diverged_at_s", traj.diverged_at}};
        std::ostringstream oss;
        oss << "oracle: trajectory diverged at t = " << traj.diverged_at << " s";
        throw NumericalError(oss.str());
    }
    const auto est = estimate_spectra(traj.column("X_d"), traj.column("Y_d"), traj.record_interval,
                                      cfg.oracle.welch);
    auto compare = cfg.oracle.compare;
    for (const auto &m : cfg.params.modes)
    {
        compare.notch_centres.push_back(m.omega);
        compare.notch_half_widths.push_back(cfg.oracle.notch_gammas * m.gamma);
    }
    std::vector<QuadratureSpectra> analytic;
    analytic.reserve(est.omega.size());
    for (const double w : est.omega)
    {
        analytic.push_back(quadrature_spectra(cfg.params, op.steady, op.law, NoiseModel::vacuum_inputs(), w));
    }
    auto lookup = [&](auto member) {
        return [&, member](double w) {
            const auto k = static_cast<std::size_t>(std::lround(w / est.omega.front())) - 1;
            return analytic.at(k).*member;
        };
    };
    const auto rep_y = compare_to_analytic(est.omega, est.s_y, lookup(&QuadratureSpectra::s_y), compare);
    const auto rep_xy = compare_to_analytic(est.omega, est.s_xy, lookup(&QuadratureSpectra::s_xy), compare);

    auto t = run.table({"omega_rad_per_s", "S_X_est", "S_X_se", "S_Y_est", "S_Y_se", "S_XY_est", "S_XY_se",
                        "S_X_analytic", "S_Y_analytic", "S_XY_analytic"},
                       "oracle");
    for (std::size_t k = 0; k < est.omega.size(); ++k)
    {
        t.add_row({est.omega[k], est.s_x[k], est.se_x[k], est.s_y[k], est.se_y[k], est.s_xy[k], est.se_xy[k],
                   analytic[k].s_x, analytic[k].s_y, analytic[k].s_xy});
    }
    auto bands = [](const ComparisonReport &r) {
        json out = json::array();
        for (const auto &b : r.bands)
        {
            out.push_back({{"lo", b.lo}, {"hi", b.hi}, {"bins", b.bins}, {"estimated", b.estimated},
                           {"analytic", b.analytic}, {"deviation", b.deviation}});
        }
        return json{{"max_deviation", r.max_deviation}, {"tolerance", r.tolerance}, {"pass", r.pass},
                    {"sub_bands", out}};
    };
    run.manifest()["oracle"] = {{"diverged", false},
                                {"seed", traj_cfg.seed},
                                {"dt_s", traj_cfg.dt},
                                {"record_interval_s", traj.record_interval},
                                {"records", traj.rows()},
                                {"steps", traj.steps},
                                {"segments", est.segments},
                                {"S_Y", bands(rep_y)},
                                {"S_XY", bands(rep_xy)}};
    run.log() << "oracle: " << est.segments << " segments; S_Y max deviation " << rep_y.max_deviation
              << (rep_y.pass ? " (pass)" : " (FAIL)") << ", S_XY max deviation " << rep_xy.max_deviation
              << (rep_xy.pass ? " (pass)" : " (FAIL)") << " at tolerance " << compare.tolerance << '\n';
    run.finish(t);
    return kExitOk;
}

int cmd_stability(Run &run)
{
    auto &cfg = run.cfg();
    const auto op = operating_point(cfg, cfg.feedback);
    run.record(op, cfg.feedback);
    auto t = run.table({"re_omega_rad_per_s", "im_omega_rad_per_s"}, "stability roots");
    for (const auto &w : op.report.roots)
    {
        t.add_row({w.real(), w.imag()});
    }
    run.log() << "verdict: " << to_string(op.report.verdict) << " (max Im omega = " << op.report.max_im
              << " s^-1, threshold " << op.report.margin_threshold << " s^-1, worst root "
              << format_root(op.report.worst_root()) << ")\n";
    run.finish(t);
    return kExitOk;
}

std::pair<double, double> parse_pair(const std::string &text, const std::string &what)
{
    const auto comma = text.find(',');
    if (comma == std::string::npos)
    {
        throw ConfigError(what + ": expected lo,hi");
    }
    try
    {
        std::size_t used = 0;
        const double lo = std::stod(text.substr(0, comma), &used);
        const double hi = std::stod(text.substr(comma + 1));
        return {lo, hi};
    }
    catch (const std::exception &)
    {
        throw ConfigError(what + ": cannot parse '" + text + "'");
    }
}

void apply_overrides(const CliOptions &opt, RunConfig &cfg)
{
    if (opt.feedback == "on")
    {
        cfg.feedback = FeedbackSpec{};
        cfg.feedback.source = FeedbackSource::ClosedForm;
    }
    else if (opt.feedback == "off")
    {
        cfg.feedback = FeedbackSpec{};
    }
    else if (opt.feedback != "file")
    {
        throw ConfigError("--feedback expects on, off or file, got '" + opt.feedback + "'");
    }
    if (opt.seed)
    {
        cfg.oracle.trajectory.seed = *opt.seed;
        cfg.optimize.seed = *opt.seed;
    }
    if (opt.band)
    {
        cfg.band.lo = opt.band->first;
        cfg.band.hi = opt.band->second;
        cfg.oracle.compare.lo = opt.band->first;
        cfg.oracle.compare.hi = opt.band->second;
        try
        {
            cfg.band.validate();
        }
        catch (const ParameterError &e)
        {
            throw ConfigError(std::string("--band: ") + e.what());
        }
    }
    if (opt.grid)
    {
        const std::string &g = *opt.grid;
        const auto colon = g.find(':');
        try
        {
            if (colon == std::string::npos)
            {
                cfg.grid.points = static_cast<std::size_t>(std::stoul(g));
            }
            else
            {
                const auto policy = g.substr(0, colon);
                if (policy == "linear")
                {
                    cfg.grid.policy = GridPolicy::Linear;
                }
                else if (policy == "log")
                {
                    cfg.grid.policy = GridPolicy::Log;
                }
                else if (policy == "log_refined")
                {
                    cfg.grid.policy = GridPolicy::LogRefined;
                }
                else
                {
                    throw ConfigError("--grid: unknown policy '" + policy + "'");
                }
                const auto rest = g.substr(colon + 1);
                const auto last = rest.rfind(',');
                if (last == std::string::npos)
                {
                    throw ConfigError("--grid: expected policy:lo,hi,N");
                }
                const auto [lo, hi] = parse_pair(rest.substr(0, last), "--grid");
                cfg.grid.lo = lo;
                cfg.grid.hi = hi;
                cfg.grid.points = static_cast<std::size_t>(std::stoul(rest.substr(last + 1)));
            }
        }
        catch (const ConfigError &)
        {
            throw;
        }
        catch (const std::exception &)
        {
            throw ConfigError("--grid: cannot parse '" + g + "'");
        }
    }
}
} // namespace

const char *version()
{
    return SQUEEZELAB_VERSION;
}

std::filesystem::path manifest_path(const std::filesystem::path &data)
{
    auto p = data;
    p += ".manifest.json";
    return p;
}

int exit_code_for(const std::exception &e)
{
    if (dynamic_cast<const InstabilityError *>(&e))
    {
        return kExitUnstable;
    }
    if (dynamic_cast<const ConfigError *>(&e) || dynamic_cast<const ParameterError *>(&e) ||
        dynamic_cast<const NormalizationError *>(&e) || dynamic_cast<const PreconditionError *>(&e))
    {
        return kExitConfig;
    }
    return kExitNumerical;
}

int run_command(const CliOptions &options, std::ostream &log, std::ostream &err)
{
    try
    {
        RunConfig cfg = load_config(options.config);
        apply_overrides(options, cfg);
        Run run(options, std::move(cfg), log);
        const std::string &c = options.command;
        if (c == "spectrum")
        {
            return cmd_spectrum(run);
        }
        if (c == "phase-scan")
        {
            return cmd_phase_scan(run);
        }
        if (c == "sweep")
        {
            return cmd_sweep(run);
        }
        if (c == "optimize")
        {
            return cmd_optimize(run);
        }
        if (c == "oracle")
        {
            return cmd_oracle(run);
        }
        if (c == "stability")
        {
            return cmd_stability(run);
        }
        throw ConfigError("unknown command '" + c + "'");
    }
    catch (const std::exception &e)
    {
        const int code = exit_code_for(e);
        err << "squeezelab " << options.command << ": error: " << e.what() << '\n';
        return code;
    }
}

} // namespace squeezelab
