#include "squeezelab/oracle.hpp"

#include "squeezelab/constants.hpp"
#include "squeezelab/errors.hpp"
#include "squeezelab/stability.hpp"

#include <fftw3.h>
#include <unsupported/Eigen/MatrixFunctions>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <mutex>
#include <random>
#include <sstream>

namespace squeezelab
{
namespace
{
constexpr std::size_t kInputsFixed = 5; // X_a_in, Y_a_in, X_b_in, Y_b_in, v_in
} // namespace

Eigen::MatrixXcd LinearModel::transfer(double omega) const
{
    const Eigen::Index n = A.rows();
    Eigen::MatrixXcd M = -A.cast<cplx>();
    for (Eigen::Index i = 0; i < n; ++i)
    {
        M(i, i) += cplx(0.0, -omega);
    }
    const Eigen::MatrixXcd resolvent_B = M.partialPivLu().solve(B.cast<cplx>());
    return C.cast<cplx>() * resolvent_B + F.cast<cplx>();
}

double thermal_occupation(double omega, double temperature_k)
{
    if (temperature_k <= 0.0)
    {
        return 0.0;
    }
    const double x = PhysicalConstants::hbar * omega / (PhysicalConstants::k_B * temperature_k);
    return 1.0 / std::expm1(x);
}

LinearModel build_linear_model(const SystemParams &params, const SteadyState &steady,
                               const FeedbackLaw &feedback)
{
    if (feedback.kind() == FeedbackKind::RationalPerMode)
    {
        throw PreconditionError("oracle: only Off or Proportional feedback can be simulated");
    }
    const std::size_t N = params.modes.size();
    feedback.validate(N);
    const auto n = static_cast<Eigen::Index>(2 + 2 * N);
    const auto m = static_cast<Eigen::Index>(kInputsFixed + N);

    const double kappa = params.cavity.kappa;
    const double delta = steady.effective_detuning;
    const double root2k = std::sqrt(2.0 * kappa);
    const auto &det = params.detection;
    const double t = det.transmission;
    const double r = det.reflection();
    const double se = std::sqrt(det.efficiency);
    const double sl = std::sqrt(1.0 - det.efficiency);
    const double ct = std::cos(det.homodyne_phase);
    const double st = std::sin(det.homodyne_phase);

    LinearModel lm;
    lm.A = Eigen::MatrixXd::Zero(n, n);
    lm.B = Eigen::MatrixXd::Zero(n, m);
    lm.C = Eigen::MatrixXd::Zero(2, n);
    lm.F = Eigen::MatrixXd::Zero(2, m);
    lm.density = Eigen::VectorXd::Constant(m, kShotNoise);

    lm.A(0, 0) = -kappa;
    lm.A(0, 1) = delta;
    lm.A(1, 0) = -delta;
    lm.A(1, 1) = -kappa;
    lm.B(0, 0) = root2k;
    lm.B(1, 1) = root2k;

    // Homodyne record over sqrt(2 kappa): state part and white part.
    Eigen::RowVectorXd rec_state = Eigen::RowVectorXd::Zero(n);
    rec_state(0) = r * se * ct;
    rec_state(1) = r * se * st;
    Eigen::RowVectorXd rec_noise = Eigen::RowVectorXd::Zero(m);
    rec_noise(0) = -r * se * ct / root2k;
    rec_noise(1) = -r * se * st / root2k;
    rec_noise(2) = t * se * ct / root2k;
    rec_noise(3) = t * se * st / root2k;
    rec_noise(4) = sl / root2k;

    for (std::size_t j = 0; j < N; ++j)
    {
        const auto &mode = params.modes[j];
        const auto q = static_cast<Eigen::Index>(2 + 2 * j);
        const auto p = q + 1;
        const double G = steady.coupling[j];
        const double g = feedback.kind() == FeedbackKind::Proportional ? feedback.gains()[j] : 0.0;
        lm.A(1, q) = G;
        lm.A(q, p) = mode.omega;
        lm.A(p, q) = -mode.omega;
        lm.A(p, p) = -mode.gamma;
        lm.A(p, 0) = G;
        lm.A.row(p) -= g * rec_state;
        lm.B.row(p) -= g * rec_noise;
        const auto xi = static_cast<Eigen::Index>(kInputsFixed + j);
        lm.B(p, xi) = 1.0;
        lm.density(xi) =
            mode.gamma * (2.0 * thermal_occupation(mode.omega, params.bath.temperature_k) + 1.0);
    }

    lm.C(0, 0) = t * root2k;
    lm.C(1, 1) = t * root2k;
    lm.F(0, 0) = -t;
    lm.F(1, 1) = -t;
    lm.F(0, 2) = -r;
    lm.F(1, 3) = -r;
    return lm;
}

void TrajectoryConfig::validate(const SystemParams &params) const
{
    if (!(dt > 0.0) || !(duration > 0.0) || record_stride == 0)
    {
        throw ParameterError("oracle: dt, duration and record_stride must be positive");
    }
    double fastest = std::max(params.cavity.kappa, std::abs(params.cavity.locked_detuning.value_or(0.0)));
    double slowest = params.cavity.kappa;
    for (const auto &m : params.modes)
    {
        fastest = std::max(fastest, m.omega);
        slowest = std::min(slowest, m.gamma);
    }
    if (dt * fastest >= 0.05)
    {
        std::ostringstream oss;
        oss << "oracle: dt * max rate = " << dt * fastest << " violates the resolution guard (< 0.05)";
        throw ParameterError(oss.str());
    }
    if (duration < 100.0 / slowest)
    {
        std::ostringstream oss;
        oss << "oracle: duration " << duration << " s is below the mixing guard 100/min rate = "
            << 100.0 / slowest << " s";
        throw ParameterError(oss.str());
    }
}

const std::vector<double> &Trajectory::column(const std::string &name) const
{
    for (std::size_t i = 0; i < names.size(); ++i)
    {
        if (names[i] == name)
        {
            return columns[i];
        }
    }
    throw ParameterError("trajectory: no column named " + name);
}

Trajectory simulate(const SystemParams &params, const SteadyState &steady,
                    const FeedbackLaw &feedback, const TrajectoryConfig &cfg)
{
    cfg.validate(params);
    const auto report = is_stable(params, steady, feedback);
    if (report.verdict != Verdict::Stable && !cfg.force)
    {
        std::ostringstream oss;
        oss << "oracle: configuration is " << to_string(report.verdict)
            << " (worst root omega = " << report.worst_root() << " s^-1)";
        throw InstabilityError(oss.str());
    }

    const LinearModel lm = build_linear_model(params, steady, feedback);
    const Eigen::Index n = lm.A.rows();
    const Eigen::Index na = n + 2; // plus integrated outputs
    const std::size_t N = params.modes.size();

    Eigen::MatrixXd Aa = Eigen::MatrixXd::Zero(na, na);
    Aa.topLeftCorner(n, n) = lm.A;
    Aa.bottomLeftCorner(2, n) = lm.C;
    Eigen::MatrixXd Ba(na, lm.B.cols());
    Ba << lm.B, lm.F;
    const Eigen::MatrixXd BQB = Ba * lm.density.asDiagonal() * Ba.transpose();

    // Van Loan: exp([[-A, BQB'], [0, A']] dt) = [[., G12], [0, G22]],
    // Phi = G22', Qd = Phi G12.
    Eigen::MatrixXd VL = Eigen::MatrixXd::Zero(2 * na, 2 * na);
    VL.topLeftCorner(na, na) = -Aa * cfg.dt;
    VL.topRightCorner(na, na) = BQB * cfg.dt;
    VL.bottomRightCorner(na, na) = Aa.transpose() * cfg.dt;
    const Eigen::MatrixXd E = VL.exp();
    const Eigen::MatrixXd Phi = E.bottomRightCorner(na, na).transpose();
    Eigen::MatrixXd Qd = Phi * E.topRightCorner(na, na);
    Qd = 0.5 * (Qd + Qd.transpose());

    // Square root via the symmetric eigendecomposition; tolerates the
    // rank-deficient directions exactly.
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(Qd);
    if (eig.info() != Eigen::Success)
    {
        throw NumericalError("oracle: noise covariance decomposition failed");
    }
    const Eigen::VectorXd lam = eig.eigenvalues().cwiseMax(0.0).cwiseSqrt();
    const Eigen::MatrixXd L = eig.eigenvectors() * lam.asDiagonal();

    // Plain row-major copies for the inner loop.
    const auto dim = static_cast<std::size_t>(na);
    std::vector<double> phi(dim * dim);
    std::vector<double> lmat(dim * dim);
    for (std::size_t i = 0; i < dim; ++i)
    {
        for (std::size_t j = 0; j < dim; ++j)
        {
            phi[i * dim + j] = Phi(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
            lmat[i * dim + j] = L(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
        }
    }

    double slowest = params.cavity.kappa;
    for (const auto &m : params.modes)
    {
        slowest = std::min(slowest, m.gamma);
    }
    const double burn_in = cfg.burn_in >= 0.0 ? cfg.burn_in : 10.0 / slowest;
    const auto burn_steps = static_cast<std::uint64_t>(std::ceil(burn_in / cfg.dt));
    const auto records = static_cast<std::size_t>(
        std::floor(cfg.duration / (cfg.dt * static_cast<double>(cfg.record_stride))));
    const double interval = cfg.dt * static_cast<double>(cfg.record_stride);

    Trajectory traj;
    traj.record_interval = interval;
    traj.names = {"t", "X_a", "Y_a"};
    for (std::size_t j = 0; j < N; ++j)
    {
        traj.names.push_back("q_" + std::to_string(j + 1));
        traj.names.push_back("p_" + std::to_string(j + 1));
    }
    traj.names.push_back("X_d");
    traj.names.push_back("Y_d");
    traj.columns.assign(traj.names.size(), {});
    for (auto &c : traj.columns)
    {
        c.reserve(records);
    }

    std::mt19937_64 rng(cfg.seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    std::vector<double> x(dim, 0.0);
    std::vector<double> next(dim, 0.0);
    std::vector<double> draw(dim, 0.0);

    auto step = [&]() {
        for (std::size_t k = 0; k < dim; ++k)
        {
            draw[k] = normal(rng);
        }
        for (std::size_t i = 0; i < dim; ++i)
        {
            double acc = 0.0;
            const double *prow = &phi[i * dim];
            const double *lrow = &lmat[i * dim];
            for (std::size_t j = 0; j < dim; ++j)
            {
                acc += prow[j] * x[j] + lrow[j] * draw[j];
            }
            next[i] = acc;
        }
        std::swap(x, next);
        ++traj.steps;
    };

    for (std::uint64_t s = 0; s < burn_steps; ++s)
    {
        step();
    }

    const std::size_t nz = static_cast<std::size_t>(n);
    std::vector<double> window_ms(nz, 0.0);
    std::vector<double> reference_ms;
    std::size_t in_window = 0;
    for (std::size_t rec = 0; rec < records; ++rec)
    {
        x[nz] = 0.0;
        x[nz + 1] = 0.0;
        for (std::size_t s = 0; s < cfg.record_stride; ++s)
        {
            step();
        }
        traj.columns[0].push_back(static_cast<double>(rec + 1) * interval);
        for (std::size_t k = 0; k < nz; ++k)
        {
            traj.columns[k + 1].push_back(x[k]);
            window_ms[k] += x[k] * x[k];
        }
        traj.columns[nz + 1].push_back(x[nz] / interval);
        traj.columns[nz + 2].push_back(x[nz + 1] / interval);

        if (++in_window == cfg.divergence_window)
        {
            for (auto &v : window_ms)
            {
                v /= static_cast<double>(in_window);
            }
            if (reference_ms.empty())
            {
                reference_ms = window_ms;
            }
            else
            {
                for (std::size_t k = 0; k < nz; ++k)
                {
                    if (!std::isfinite(window_ms[k]) ||
                        window_ms[k] > cfg.divergence_factor * std::max(reference_ms[k], 1e-300))
                    {
                        traj.diverged = true;
                        traj.diverged_at = traj.columns[0].back();
                    }
                }
            }
            std::fill(window_ms.begin(), window_ms.end(), 0.0);
            in_window = 0;
            if (traj.diverged)
            {
                break;
            }
        }
    }
    return traj;
}

EstimatedSpectra estimate_spectra(const std::vector<double> &x, const std::vector<double> &y,
                                  double sample_interval, const WelchOptions &options)
{
    const std::size_t L = options.segment_length;
    if (x.size() != y.size())
    {
        throw ParameterError("estimate_spectra: channel lengths differ");
    }
    if (L < 8 || !(options.overlap >= 0.0) || !(options.overlap < 1.0) || !(sample_interval > 0.0))
    {
        throw ParameterError("estimate_spectra: invalid segment length, overlap or interval");
    }
    const auto hop = std::max<std::size_t>(1, static_cast<std::size_t>(std::floor(L * (1.0 - options.overlap))));
    if (x.size() < 4 * L)
    {
        throw ParameterError("estimate_spectra: series shorter than four segments");
    }
    const std::size_t segments = (x.size() - L) / hop + 1;
    const std::size_t bins = L / 2 + 1;

    std::vector<double> window(L);
    double wsq = 0.0;
    for (std::size_t i = 0; i < L; ++i)
    {
        window[i] = 0.5 - 0.5 * std::cos(kTwoPi * static_cast<double>(i) / static_cast<double>(L));
        wsq += window[i] * window[i];
    }
    const double norm = sample_interval / wsq;

    static std::mutex planner;
    double *in = fftw_alloc_real(L);
    fftw_complex *out_x = fftw_alloc_complex(bins);
    fftw_complex *out_y = fftw_alloc_complex(bins);
    fftw_plan plan_x;
    fftw_plan plan_y;
    {
        std::lock_guard lock(planner);
        plan_x = fftw_plan_dft_r2c_1d(static_cast<int>(L), in, out_x, FFTW_ESTIMATE);
        plan_y = fftw_plan_dft_r2c_1d(static_cast<int>(L), in, out_y, FFTW_ESTIMATE);
    }

    EstimatedSpectra est;
    est.segments = segments;
    est.omega.resize(bins - 1);
    std::vector<double> sum_x(bins, 0.0), sum_y(bins, 0.0), sum_xy(bins, 0.0);
    std::vector<double> sq_x(bins, 0.0), sq_y(bins, 0.0), sq_xy(bins, 0.0);

    for (std::size_t s = 0; s < segments; ++s)
    {
        const std::size_t off = s * hop;
        for (std::size_t i = 0; i < L; ++i)
        {
            in[i] = window[i] * x[off + i];
        }
        fftw_execute(plan_x);
        for (std::size_t i = 0; i < L; ++i)
        {
            in[i] = window[i] * y[off + i];
        }
        fftw_execute(plan_y);
        for (std::size_t k = 0; k < bins; ++k)
        {
            const double px = norm * (out_x[k][0] * out_x[k][0] + out_x[k][1] * out_x[k][1]);
            const double py = norm * (out_y[k][0] * out_y[k][0] + out_y[k][1] * out_y[k][1]);
            const double pxy = norm * (out_x[k][0] * out_y[k][0] + out_x[k][1] * out_y[k][1]);
            sum_x[k] += px;
            sum_y[k] += py;
            sum_xy[k] += pxy;
            sq_x[k] += px * px;
            sq_y[k] += py * py;
            sq_xy[k] += pxy * pxy;
        }
    }
    {
        std::lock_guard lock(planner);
        fftw_destroy_plan(plan_x);
        fftw_destroy_plan(plan_y);
    }
    fftw_free(in);
    fftw_free(out_x);
    fftw_free(out_y);

    const double K = static_cast<double>(segments);
    auto se = [K](double sum, double sq) {
        const double mean = sum / K;
        const double var = std::max(0.0, (sq / K - mean * mean) * K / std::max(K - 1.0, 1.0));
        return std::sqrt(var / K);
    };
    // Bin 0 (DC) is dropped: the grid excludes omega = 0.
    const double dw = kTwoPi / (static_cast<double>(L) * sample_interval);
    for (std::size_t k = 1; k < bins; ++k)
    {
        est.omega[k - 1] = dw * static_cast<double>(k);
        est.s_x.push_back(sum_x[k] / K);
        est.s_y.push_back(sum_y[k] / K);
        est.s_xy.push_back(sum_xy[k] / K);
        est.se_x.push_back(se(sum_x[k], sq_x[k]));
        est.se_y.push_back(se(sum_y[k], sq_y[k]));
        est.se_xy.push_back(se(sum_xy[k], sq_xy[k]));
    }
    return est;
}

ComparisonReport compare_to_analytic(const std::vector<double> &omega,
                                     const std::vector<double> &estimated,
                                     const std::function<double(double)> &analytic,
                                     const CompareOptions &options)
{
    if (omega.size() != estimated.size())
    {
        throw ParameterError("compare_to_analytic: frequency and value counts differ");
    }
    if (!(options.lo > 0.0) || !(options.hi > options.lo) || options.sub_bands == 0)
    {
        throw ParameterError("compare_to_analytic: invalid band");
    }
    if (options.notch_centres.size() != options.notch_half_widths.size())
    {
        throw ParameterError("compare_to_analytic: notch centres and widths differ in count");
    }
    auto notched = [&](double w) {
        for (std::size_t i = 0; i < options.notch_centres.size(); ++i)
        {
            if (std::abs(w - options.notch_centres[i]) <= options.notch_half_widths[i])
            {
                return true;
            }
        }
        return false;
    };

    ComparisonReport rep;
    rep.tolerance = options.tolerance;
    const double ratio = std::log(options.hi / options.lo) / static_cast<double>(options.sub_bands);
    std::size_t used = 0;
    for (std::size_t b = 0; b < options.sub_bands; ++b)
    {
        SubBandResult sb;
        sb.lo = options.lo * std::exp(ratio * static_cast<double>(b));
        sb.hi = b + 1 == options.sub_bands ? options.hi : options.lo * std::exp(ratio * static_cast<double>(b + 1));
        double est_sum = 0.0;
        double ana_sum = 0.0;
        for (std::size_t k = 0; k < omega.size(); ++k)
        {
            const double w = omega[k];
            const bool inside = w >= sb.lo && (w < sb.hi || (b + 1 == options.sub_bands && w <= sb.hi));
            if (!inside || notched(w))
            {
                continue;
            }
            est_sum += estimated[k];
            ana_sum += analytic(w);
            ++sb.bins;
        }
        if (sb.bins == 0)
        {
            continue;
        }
        used += sb.bins;
        sb.estimated = est_sum / static_cast<double>(sb.bins);
        sb.analytic = ana_sum / static_cast<double>(sb.bins);
        sb.deviation = std::abs(sb.estimated - sb.analytic) / std::max(std::abs(sb.analytic), 1e-300);
        rep.max_deviation = std::max(rep.max_deviation, sb.deviation);
        rep.bands.push_back(sb);
    }
    if (used == 0)
    {
        throw ParameterError("compare_to_analytic: no estimator bins inside the band");
    }
    rep.pass = rep.max_deviation <= options.tolerance;
    return rep;
}

namespace
{
constexpr char kMagic[8] = {'S', 'Q', 'Z', 'T', 'R', 'A', 'J', '1'};

template <typename T>
void put(std::ostream &os, T v)
{
    if constexpr (std::endian::native == std::endian::big)
    {
        auto bytes = std::bit_cast<std::array<char, sizeof(T)>>(v);
        std::reverse(bytes.begin(), bytes.end());
        os.write(bytes.data(), sizeof(T));
    }
    else
    {
        os.write(reinterpret_cast<const char *>(&v), sizeof(T));
    }
}

template <typename T>
T get(std::istream &is)
{
    std::array<char, sizeof(T)> bytes{};
    if (!is.read(bytes.data(), sizeof(T)))
    {
        throw ParameterError("trajectory dump: truncated file");
    }
    if constexpr (std::endian::native == std::endian::big)
    {
        std::reverse(bytes.begin(), bytes.end());
    }
    return std::bit_cast<T>(bytes);
}
} // namespace

void write_trajectory(const std::filesystem::path &path, const Trajectory &traj)
{
    std::ofstream os(path, std::ios::binary);
    if (!os)
    {
        throw ParameterError("trajectory dump: cannot open " + path.string());
    }
    os.write(kMagic, sizeof(kMagic));
    put<std::uint32_t>(os, static_cast<std::uint32_t>(traj.names.size()));
    for (const auto &name : traj.names)
    {
        put<std::uint32_t>(os, static_cast<std::uint32_t>(name.size()));
        os.write(name.data(), static_cast<std::streamsize>(name.size()));
    }
    const std::size_t rows = traj.rows();
    put<std::uint64_t>(os, rows);
    for (std::size_t r = 0; r < rows; ++r)
    {
        for (const auto &col : traj.columns)
        {
            put<double>(os, col[r]);
        }
    }
    if (!os)
    {
        throw ParameterError("trajectory dump: write failed for " + path.string());
    }
}

Trajectory read_trajectory(const std::filesystem::path &path)
{
    std::ifstream is(path, std::ios::binary);
    if (!is)
    {
        throw ParameterError("trajectory dump: cannot open " + path.string());
    }
    char magic[8];
    if (!is.read(magic, sizeof(magic)) || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
    {
        throw ParameterError("trajectory dump: bad magic in " + path.string());
    }
    Trajectory traj;
    const auto ncols = get<std::uint32_t>(is);
    for (std::uint32_t c = 0; c < ncols; ++c)
    {
        const auto len = get<std::uint32_t>(is);
        std::string name(len, '\0');
        if (!is.read(name.data(), len))
        {
            throw ParameterError("trajectory dump: truncated column name");
        }
        traj.names.push_back(std::move(name));
    }
    const auto rows = get<std::uint64_t>(is);
    traj.columns.assign(ncols, std::vector<double>(rows));
    for (std::uint64_t r = 0; r < rows; ++r)
    {
        for (std::uint32_t c = 0; c < ncols; ++c)
        {
            traj.columns[c][r] = get<double>(is);
        }
    }
    if (traj.names.size() > 1 && rows > 1)
    {
        traj.record_interval = traj.columns[0][1] - traj.columns[0][0];
    }
    return traj;
}

} // namespace squeezelab
