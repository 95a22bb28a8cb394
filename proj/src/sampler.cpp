#include "dmsbl/sampler.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>

namespace dmsbl {

void SamplerConfig::validate() const {
    if (T < 2) throw ConfigError("sampler.T must be >= 2");
    if (K < 1) throw ConfigError("sampler.K must be >= 1");
    if (!(nu > 0) || !std::isfinite(nu)) throw ConfigError("sampler.nu must be > 0");
    if (!(rho > 0) || !std::isfinite(rho)) throw ConfigError("sampler.rho must be > 0");
    if (corrector_steps < 0) throw ConfigError("sampler.corrector_steps must be >= 0");
    guidance().validate();
}

SampleMoments sample_moments(const CMatrix& X) {
    SampleMoments m;
    m.mean = X.rowwise().mean();
    m.var = (X.colwise() - m.mean).cwiseAbs2().rowwise().mean();
    return m;
}

SampleEnsemble initialize(const SamplerConfig& cfg, Eigen::Index L, Eigen::Index M, const VpSchedule& sched,
                          Rng& rng) {
    cfg.validate();
    const double v = sched.perturb_variance(1.0);
    SampleEnsemble e;
    e.H = complex_normal(rng, L, cfg.K, v);
    e.N = complex_normal(rng, M, cfg.K, v);
    e.gamma = ChannelPriorState::constant(L, cfg.rho);
    e.t = 1.0;
    return e;
}

namespace {

// x += 2 xi g + sqrt(2 xi) z, z ~ CN(0, 2I), xi = nu / |g|^2 per column.
void langevin(CMatrix& X, const CMatrix& G, double nu, Rng& rng, StepStats* stats) {
    for (Eigen::Index k = 0; k < X.cols(); ++k) {
        const double g2 = G.col(k).squaredNorm();
        if (!(g2 > 0)) {
            if (stats) ++stats->zero_gradient_skips;
            continue;
        }
        const double xi = nu / g2;
        X.col(k) += 2.0 * xi * G.col(k) + std::sqrt(2.0 * xi) * complex_normal(rng, X.rows(), 1, 2.0);
    }
}

void check(const CMatrix& X, const char* phase, const char* branch, double t) {
    if (!X.allFinite())
        throw NumericError(std::string("non-finite sample in ") + phase + " (" + branch + " branch) at t = " +
                           std::to_string(t));
}

}  // namespace

void corrector_step(SampleEnsemble& ens, const MeasurementModel& model, const SamplerConfig& cfg,
                    const VpSchedule& sched, const ScoreProvider& nprov, const LikelihoodCache& cache, Rng& rng,
                    StepStats* stats) {
    (void)sched;
    const GuidanceConfig g = cfg.guidance();
    const Priors pri{ens.gamma, nprov};
    CMatrix sn = nprov.score(ens.N, cache.t());
    CMatrix Gh = assemble_channel_scores(ens.H, ens.N, model, cache, g, pri, &sn);
    langevin(ens.H, Gh, cfg.nu, rng, stats);
    check(ens.H, "corrector", "h", cache.t());
    CMatrix Gn = assemble_interference_scores(ens.H, ens.N, model, cache, g, pri, &sn);
    langevin(ens.N, Gn, cfg.nu, rng, stats);
    check(ens.N, "corrector", "n", cache.t());
}

void predictor_step(SampleEnsemble& ens, const MeasurementModel& model, const SamplerConfig& cfg,
                    const VpSchedule& sched, const ScoreProvider& nprov, const LikelihoodCache& cache, double dt,
                    Rng& rng, bool add_noise) {
    const double t = cache.t();
    const double b = sched.beta(t);
    ScorePair G = assemble_posterior_scores(ens.H, ens.N, model, cache, cfg.guidance(), Priors{ens.gamma, nprov});
    ens.H += (0.5 * b * ens.H + 2.0 * b * G.h) * dt;
    ens.N += (0.5 * b * ens.N + 2.0 * b * G.n) * dt;
    if (add_noise) {
        const double s = std::sqrt(b * dt);
        ens.H += s * complex_normal(rng, ens.H.rows(), ens.H.cols(), 2.0);
        ens.N += s * complex_normal(rng, ens.N.rows(), ens.N.cols(), 2.0);
    }
    check(ens.H, "predictor", "h", t);
    check(ens.N, "predictor", "n", t);
    ens.t = std::max(0.0, t - dt);
}

ChannelPriorState em_update_gamma(const SampleEnsemble& ens, double t, const VpSchedule& sched, double ceiling) {
    SampleMoments m = sample_moments(ens.H);
    const double a2 = std::max(sched.alpha(t) * sched.alpha(t), alpha_floor * alpha_floor);
    const double v = sched.perturb_variance(t);
    ChannelPriorState out;
    out.gamma = ((m.var.array() + m.mean.cwiseAbs2().array()) - v) / a2;
    if (!out.gamma.allFinite()) throw NumericError("EM update produced non-finite gamma at t = " + std::to_string(t));
    out.clamp(ceiling);
    return out;
}

double em_objective(const RVector& gamma, const SampleMoments& mom, double t, const VpSchedule& sched) {
    const double a2 = sched.alpha(t) * sched.alpha(t);
    const double v = sched.perturb_variance(t);
    RVector s = v + a2 * gamma.array();
    RVector e = mom.var + mom.mean.cwiseAbs2();
    return -(e.array() / s.array()).sum() - s.array().log().sum();
}

double default_gamma_ceiling(const MeasurementModel& model) {
    const double col = model.A.dense().colwise().squaredNorm().minCoeff();
    const double y2 = model.y.squaredNorm();
    if (!(col > 0) || !(y2 > 0)) return std::numeric_limits<double>::infinity();
    return y2 / col;
}

LikelihoodCache make_cache(const MeasurementModel& model, const SamplerConfig& cfg, const VpSchedule& sched, double t,
                           const ChannelPriorState& gamma, const ScoreProvider& nprov) {
    if (cfg.method == Method::pgdm && cfg.pgdm_variance == PgdmVariance::exact)
        return LikelihoodCache(model, sched, t, Priors{gamma, nprov});
    return LikelihoodCache(model, sched, t, cfg.method);
}

RunResult run(const MeasurementModel& model, const SamplerConfig& cfg, const VpSchedule& sched,
              const ScoreProvider& nprov, const RunOptions& opts) {
    cfg.validate();
    const Eigen::Index L = model.L(), M = model.M();
    if (opts.truth && opts.truth->size() != L) throw DimensionError("run: truth length != L");
    Rng rng(cfg.seed);
    SampleEnsemble ens = initialize(cfg, L, M, sched, rng);
    if (opts.fixed_gamma) {
        if (opts.fixed_gamma->gamma.size() != L) throw DimensionError("run: fixed gamma length != L");
        ens.gamma = *opts.fixed_gamma;
    }
    const double ceiling = cfg.gamma_ceiling > 0 ? cfg.gamma_ceiling : default_gamma_ceiling(model);
    const double dt = 1.0 / cfg.T;
    RunResult res;
    StepStats stats;
    for (int i = cfg.T - 1; i >= 0; --i) {
        const double t = static_cast<double>(i + 1) / cfg.T;
        const double t_next = static_cast<double>(i) / cfg.T;
        const bool gamma_dependent = cfg.method == Method::pgdm && cfg.pgdm_variance == PgdmVariance::exact;
        std::optional<LikelihoodCache> cache;
        cache.emplace(make_cache(model, cfg, sched, t, ens.gamma, nprov));
        for (int c = 0; c < cfg.corrector_steps; ++c) corrector_step(ens, model, cfg, sched, nprov, *cache, rng, &stats);
        if (cfg.em_enabled) {
            ens.gamma = em_update_gamma(ens, t, sched, ceiling);
            if (gamma_dependent) cache.emplace(make_cache(model, cfg, sched, t, ens.gamma, nprov));
        }
        predictor_step(ens, model, cfg, sched, nprov, *cache, dt, rng, !(i == 0 && cfg.denoise_last));
        ens.t = t_next;
        if (cfg.em_enabled) ens.gamma = em_update_gamma(ens, t_next, sched, ceiling);

        TraceRow row{cfg.T - i, t_next, ens.gamma.gamma.minCoeff(), ens.gamma.gamma.maxCoeff(),
                     std::numeric_limits<double>::quiet_NaN(), std::numeric_limits<double>::quiet_NaN()};
        if (opts.truth) {
            const double a = sched.alpha_safe(t_next);
            CMatrix Hs = ens.H / a;
            row.nmse_mean_db = nmse_db(Hs.rowwise().mean(), *opts.truth);
            std::vector<double> per(static_cast<std::size_t>(Hs.cols()));
            for (Eigen::Index k = 0; k < Hs.cols(); ++k) per[k] = nmse_db(Hs.col(k), *opts.truth);
            auto mid = per.begin() + per.size() / 2;
            std::nth_element(per.begin(), mid, per.end());
            double med = *mid;
            if (per.size() % 2 == 0) med = 0.5 * (med + *std::max_element(per.begin(), mid));
            row.nmse_sample_median_db = med;
        }
        res.trace.push_back(row);
        if (opts.record_gamma_history) res.gamma_history.push_back(ens.gamma.gamma);
    }
    res.h_hat = ens.H.rowwise().mean();
    res.n_hat = ens.N.rowwise().mean();
    res.gamma = ens.gamma.gamma;
    res.zero_gradient_skips = stats.zero_gradient_skips;
    return res;
}

void write_trace_csv(const std::string& path, const std::vector<TraceRow>& trace) {
    std::ofstream os(path);
    if (!os) throw IoError("cannot open " + path + " for writing");
    os.precision(17);
    os << "step,t,gamma_min,gamma_max,nmse_mean_db,nmse_sample_median_db\n";
    for (const auto& r : trace) {
        os << r.step << ',' << r.t << ',' << r.gamma_min << ',' << r.gamma_max << ',';
        if (std::isnan(r.nmse_mean_db))
            os << ",\n";
        else
            os << r.nmse_mean_db << ',' << r.nmse_sample_median_db << '\n';
    }
    if (!os) throw IoError("write failed: " + path);
}

}  // namespace dmsbl
