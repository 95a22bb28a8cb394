#pragma once

#include <Eigen/Cholesky>
#include <string>

#include "dmsbl/score.hpp"
#include "dmsbl/sde.hpp"
#include "dmsbl/signal_model.hpp"

namespace dmsbl {

enum class Method { dmps, pgdm };

Method parse_method(const std::string& s);
std::string to_string(Method m);

// PGDM covariance of x_0 given x_t: empirical r_t^2 = 2 (1 - alpha^2) per coordinate, or the exact
// Gaussian posterior covariance of each prior (providers without one fall back to r_t^2).
enum class PgdmVariance { empirical, exact };

PgdmVariance parse_pgdm_variance(const std::string& s);
std::string to_string(PgdmVariance v);

struct GuidanceConfig {
    Method method = Method::pgdm;
    double mu = 1.0;     // channel prior weight
    double kappa = 1.0;  // interference prior weight
    int K = 64;
    PgdmVariance pgdm_variance = PgdmVariance::empirical;

    void validate() const;
};

struct Priors;

// Cholesky of Sigma_{y,t} = c (A A^H + I) + sigma_y^2 I with c = v / alpha^2 (DMPS) or v (PGDM).
class LikelihoodCache {
public:
    LikelihoodCache(const MeasurementModel& model, const VpSchedule& sched, double t, Method method);
    // PGDM with exact prior covariances: A diag(Cov h_0|h_t) A^H + Cov(n_0|n_t) + sigma_y^2 I.
    LikelihoodCache(const MeasurementModel& model, const VpSchedule& sched, double t, const Priors& priors);

    CMatrix solve(const CMatrix& R) const { return llt_.solve(R); }
    const CMatrix& sigma() const { return sigma_; }
    double t() const { return t_; }
    double alpha() const { return alpha_; }
    double variance() const { return v_; }
    double jitter() const { return jitter_; }
    Method method() const { return method_; }

private:
    CMatrix sigma_;
    Eigen::LLT<CMatrix> llt_;
    double t_, alpha_, v_, jitter_ = 0.0;
    Method method_;

    void factorize(const MeasurementModel& model, double lower);
};

struct Priors {
    const ChannelPriorState& gamma;
    const ScoreProvider& interference;
};

struct ScorePair {
    CMatrix h;  // L x K
    CMatrix n;  // M x K
};

// Column i of H is paired with column i of N.
ScorePair dmps_likelihood_scores(const CMatrix& H, const CMatrix& N, const MeasurementModel& model,
                                 const LikelihoodCache& cache);
ScorePair pgdm_likelihood_scores(const CMatrix& H, const CMatrix& N, const MeasurementModel& model,
                                 const LikelihoodCache& cache, const Priors& priors);

// Weighted posterior scores with the 1/K coupling collapsed to ensemble means.
// n_prior, when given, is the interference prior score at (N, t) and is reused.
CMatrix assemble_channel_scores(const CMatrix& H, const CMatrix& N, const MeasurementModel& model,
                                const LikelihoodCache& cache, const GuidanceConfig& cfg, const Priors& priors,
                                const CMatrix* n_prior = nullptr);
CMatrix assemble_interference_scores(const CMatrix& H, const CMatrix& N, const MeasurementModel& model,
                                     const LikelihoodCache& cache, const GuidanceConfig& cfg, const Priors& priors,
                                     const CMatrix* n_prior = nullptr);
ScorePair assemble_posterior_scores(const CMatrix& H, const CMatrix& N, const MeasurementModel& model,
                                    const LikelihoodCache& cache, const GuidanceConfig& cfg, const Priors& priors);

}  // namespace dmsbl
