#include "dmsbl/guidance.hpp"

#include <algorithm>

namespace dmsbl {

namespace {

CVector row_mean(const CMatrix& X) { return X.rowwise().mean(); }

void check_dims(const CMatrix& H, const CMatrix& N, const MeasurementModel& model) {
    if (H.rows() != model.L() || N.rows() != model.M())
        throw DimensionError("guidance: sample dimensions do not match the model");
    if (H.cols() == 0 || N.cols() == 0) throw DimensionError("guidance: empty ensemble");
}

}  // namespace

Method parse_method(const std::string& s) {
    if (s == "dmps") return Method::dmps;
    if (s == "pgdm") return Method::pgdm;
    throw ConfigError("unknown guidance method '" + s + "' (expected dmps or pgdm)");
}

std::string to_string(Method m) { return m == Method::dmps ? "dmps" : "pgdm"; }

PgdmVariance parse_pgdm_variance(const std::string& s) {
    if (s == "empirical") return PgdmVariance::empirical;
    if (s == "exact") return PgdmVariance::exact;
    throw ConfigError("unknown pgdm variance '" + s + "' (expected empirical or exact)");
}

std::string to_string(PgdmVariance v) { return v == PgdmVariance::empirical ? "empirical" : "exact"; }

void GuidanceConfig::validate() const {
    if (K < 1) throw ConfigError("guidance.K must be >= 1");
    if (!(mu >= 0) || !(kappa >= 0) || !std::isfinite(mu) || !std::isfinite(kappa))
        throw ConfigError("guidance weights must be finite and >= 0");
}

LikelihoodCache::LikelihoodCache(const MeasurementModel& model, const VpSchedule& sched, double t, Method method)
    : t_(t), method_(method) {
    alpha_ = sched.alpha_safe(t);
    v_ = sched.perturb_variance(t);
    const double c = method == Method::dmps ? v_ / (alpha_ * alpha_) : v_;
    sigma_ = c * model.A.gram();
    sigma_.diagonal().array() += c + model.sigma_y2;
    factorize(model, c + model.sigma_y2);
}

LikelihoodCache::LikelihoodCache(const MeasurementModel& model, const VpSchedule& sched, double t, const Priors& priors)
    : t_(t), method_(Method::pgdm) {
    alpha_ = sched.alpha_safe(t);
    v_ = sched.perturb_variance(t);
    if (priors.gamma.gamma.size() != model.L()) throw DimensionError("likelihood cache: gamma length != L");
    const CMatrix& A = model.A.dense();
    RVector qh = channel_posterior_variance(t, priors.gamma, sched);
    sigma_ = A * qh.cast<cd>().asDiagonal() * A.adjoint();
    double lower = model.sigma_y2;
    if (auto qn = priors.interference.posterior_covariance(model.M(), t)) {
        sigma_ += *qn;
    } else {
        sigma_.diagonal().array() += v_;
        lower += v_;
    }
    sigma_.diagonal().array() += model.sigma_y2;
    sigma_ = 0.5 * (sigma_ + sigma_.adjoint()).eval();
    factorize(model, lower);
}

// lower: a lower bound on the smallest eigenvalue of sigma_.
void LikelihoodCache::factorize(const MeasurementModel& model, double lower) {
    const double M = static_cast<double>(model.M());
    double scale = sigma_.real().trace() / M;
    if (!(scale > 0)) scale = std::max(model.A.gram().real().trace() / M, 1.0);
    const double floor = 1e-10 * scale;
    if (lower < floor) {
        jitter_ = floor - lower;
        sigma_.diagonal().array() += jitter_;
    }
    llt_.compute(sigma_);
    if (llt_.info() != Eigen::Success) throw NumericError("Sigma_y Cholesky failed at t = " + std::to_string(t_));
}

ScorePair dmps_likelihood_scores(const CMatrix& H, const CMatrix& N, const MeasurementModel& model,
                                 const LikelihoodCache& cache) {
    check_dims(H, N, model);
    if (H.cols() != N.cols()) throw DimensionError("dmps: H and N column counts differ");
    const double a = cache.alpha();
    CMatrix R = (-(model.A.apply(H) + N) / a).colwise() + model.y;
    CMatrix S = cache.solve(R) / a;
    return {model.A.apply_adjoint(S), S};
}

ScorePair pgdm_likelihood_scores(const CMatrix& H, const CMatrix& N, const MeasurementModel& model,
                                 const LikelihoodCache& cache, const Priors& priors) {
    check_dims(H, N, model);
    if (H.cols() != N.cols()) throw DimensionError("pgdm: H and N column counts differ");
    const VpSchedule& s = priors.interference.schedule();
    const double t = cache.t();
    CMatrix Hh = tweedie_denoise(H, t, channel_prior_score(H, t, priors.gamma, s), s);
    CMatrix Nh = priors.interference.denoise(N, t);
    CMatrix R = (-(model.A.apply(Hh) + Nh)).colwise() + model.y;
    CMatrix S = cache.solve(R);
    return {channel_tweedie_vjp(model.A.apply_adjoint(S), t, priors.gamma, s),
            priors.interference.tweedie_vjp(S, N, t)};
}

CMatrix assemble_channel_scores(const CMatrix& H, const CMatrix& N, const MeasurementModel& model,
                                const LikelihoodCache& cache, const GuidanceConfig& cfg, const Priors& priors,
                                const CMatrix* n_prior) {
    check_dims(H, N, model);
    const VpSchedule& s = priors.interference.schedule();
    const double t = cache.t();
    const double a = cache.alpha();
    CMatrix prior = channel_prior_score(H, t, priors.gamma, s);
    CMatrix lik;
    if (cache.method() == Method::dmps) {
        CVector nbar = row_mean(N);
        CMatrix R = (-(model.A.apply(H)) / a).colwise() + CVector(model.y - nbar / a);
        lik = model.A.apply_adjoint(cache.solve(R)) / a;
    } else {
        CMatrix sn = n_prior ? *n_prior : priors.interference.score(N, t);
        CVector nhat_bar = row_mean(tweedie_denoise(N, t, sn, s));
        CMatrix Hh = tweedie_denoise(H, t, prior, s);
        CMatrix R = (-model.A.apply(Hh)).colwise() + CVector(model.y - nhat_bar);
        lik = channel_tweedie_vjp(model.A.apply_adjoint(cache.solve(R)), t, priors.gamma, s);
    }
    return cfg.mu * prior + lik;
}

CMatrix assemble_interference_scores(const CMatrix& H, const CMatrix& N, const MeasurementModel& model,
                                     const LikelihoodCache& cache, const GuidanceConfig& cfg, const Priors& priors,
                                     const CMatrix* n_prior) {
    check_dims(H, N, model);
    const VpSchedule& s = priors.interference.schedule();
    const double t = cache.t();
    const double a = cache.alpha();
    CMatrix prior = n_prior ? *n_prior : priors.interference.score(N, t);
    CMatrix lik;
    if (cache.method() == Method::dmps) {
        CVector Ahbar = model.A.apply(row_mean(H));
        CMatrix R = (-N / a).colwise() + CVector(model.y - Ahbar / a);
        lik = cache.solve(R) / a;
    } else {
        CMatrix Hh = tweedie_denoise(H, t, channel_prior_score(H, t, priors.gamma, s), s);
        CVector Ahhat_bar = row_mean(model.A.apply(Hh));
        CMatrix Nh = tweedie_denoise(N, t, prior, s);
        CMatrix R = (-Nh).colwise() + CVector(model.y - Ahhat_bar);
        lik = priors.interference.tweedie_vjp(cache.solve(R), N, t);
    }
    return cfg.kappa * prior + lik;
}

ScorePair assemble_posterior_scores(const CMatrix& H, const CMatrix& N, const MeasurementModel& model,
                                    const LikelihoodCache& cache, const GuidanceConfig& cfg, const Priors& priors) {
    CMatrix sn = priors.interference.score(N, cache.t());
    return {assemble_channel_scores(H, N, model, cache, cfg, priors, &sn),
            assemble_interference_scores(H, N, model, cache, cfg, priors, &sn)};
}

}  // namespace dmsbl
