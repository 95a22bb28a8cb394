#pragma once

#include <optional>
#include <vector>

#include "dmsbl/guidance.hpp"

namespace dmsbl {

struct SampleEnsemble {
    CMatrix H;  // L x K
    CMatrix N;  // M x K
    ChannelPriorState gamma;
    double t = 1.0;

    Eigen::Index K() const { return H.cols(); }
};

struct SamplerConfig {
    int T = 500;
    int K = 64;
    double nu = 64.0;
    double rho = 1.0;
    double mu = 1.0;
    double kappa = 1.0;
    bool em_enabled = true;
    std::uint64_t seed = 0;
    Method method = Method::pgdm;
    int corrector_steps = 1;
    bool denoise_last = true;
    // <= 0 selects ||y||^2 / min_l ||a_l||^2.
    double gamma_ceiling = 0.0;
    PgdmVariance pgdm_variance = PgdmVariance::empirical;

    void validate() const;
    GuidanceConfig guidance() const { return {method, mu, kappa, K, pgdm_variance}; }
};

struct SampleMoments {
    CVector mean;
    RVector var;  // per-entry mean squared deviation (1/K)
};

SampleMoments sample_moments(const CMatrix& X);

SampleEnsemble initialize(const SamplerConfig& cfg, Eigen::Index L, Eigen::Index M, const VpSchedule& sched,
                          Rng& rng);

struct StepStats {
    int zero_gradient_skips = 0;
};

// Langevin move at fixed t: h first, then n with the updated h.
void corrector_step(SampleEnsemble& ens, const MeasurementModel& model, const SamplerConfig& cfg,
                    const VpSchedule& sched, const ScoreProvider& nprov, const LikelihoodCache& cache, Rng& rng,
                    StepStats* stats = nullptr);

// Reverse VP-SDE Euler-Maruyama step from cache.t() to cache.t() - dt.
void predictor_step(SampleEnsemble& ens, const MeasurementModel& model, const SamplerConfig& cfg,
                    const VpSchedule& sched, const ScoreProvider& nprov, const LikelihoodCache& cache, double dt,
                    Rng& rng, bool add_noise = true);

// gamma = max(floor, (nu + |h_hat|^2) / alpha^2 - 2 (1 - alpha^2) / alpha^2), capped at ceiling.
ChannelPriorState em_update_gamma(const SampleEnsemble& ens, double t, const VpSchedule& sched,
                                  double ceiling = std::numeric_limits<double>::infinity());

// EM objective L(gamma) evaluated with the ensemble's sample moments.
double em_objective(const RVector& gamma, const SampleMoments& mom, double t, const VpSchedule& sched);

double default_gamma_ceiling(const MeasurementModel& model);

struct TraceRow {
    int step;
    double t;
    double gamma_min, gamma_max;
    double nmse_mean_db;            // NaN without truth
    double nmse_sample_median_db;   // NaN without truth
};

struct RunResult {
    CVector h_hat;
    CVector n_hat;
    std::vector<TraceRow> trace;
    std::vector<RVector> gamma_history;  // after each full step
    RVector gamma;
    int zero_gradient_skips = 0;
};

struct RunOptions {
    const CVector* truth = nullptr;
    bool record_gamma_history = false;
    std::optional<ChannelPriorState> fixed_gamma;  // initial gamma override (used with EM off)
};

RunResult run(const MeasurementModel& model, const SamplerConfig& cfg, const VpSchedule& sched,
              const ScoreProvider& nprov, const RunOptions& opts = {});

// The per-step Sigma_y factorization for this configuration (depends on gamma for exact PGDM variance).
LikelihoodCache make_cache(const MeasurementModel& model, const SamplerConfig& cfg, const VpSchedule& sched, double t,
                           const ChannelPriorState& gamma, const ScoreProvider& nprov);

void write_trace_csv(const std::string& path, const std::vector<TraceRow>& trace);

}  // namespace dmsbl
