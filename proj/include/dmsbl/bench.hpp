#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "dmsbl/baselines.hpp"
#include "dmsbl/config.hpp"
#include "dmsbl/score_network.hpp"

namespace dmsbl {

enum class InterferenceCovariance { sinc, se, white };

struct ScenarioConfig {
    ChannelSpec channel;
    InterferenceSpec::Kind interference = InterferenceSpec::Kind::gaussian_process;
    double lfm_B = 1e3;
    double lfm_T = 2.0;
    InterferenceCovariance covariance = InterferenceCovariance::sinc;
    double bandwidth = 0.25;    // sinc, cycles per sample
    double length_scale = 10.0; // se, samples
    Eigen::Index M = 200;
};

// One generated problem instance.
struct Scenario {
    CVector h;
    CVector pilot;
    CVector n;  // scaled interference
    MeasurementModel model;
    CMatrix interference_covariance;  // gaussian_process only, scaled to the realized power
};

CMatrix base_interference_covariance(const ScenarioConfig& sc);
Scenario generate_scenario(const ScenarioConfig& sc, const CMatrix& base_cov, double snr_db, double sir_db, Rng& rng);

struct ExperimentConfig {
    ScenarioConfig scenario;
    std::vector<double> snr_db{30.0};
    std::vector<double> sir_db{5.0};
    std::vector<std::string> methods{"dmsbl-dmps", "dmsbl-pgdm", "mmse", "omp", "sbl"};
    int trials = 50;
    std::uint64_t seed = 0;
    std::string output = "bench_out";
    int threads = 0;  // 0: hardware concurrency

    SamplerConfig sampler;
    VpSchedule schedule;
    std::string weights;  // .dmsc for lfm interference
    bool identity_vjp = false;
    double mmse_prior_var = -1.0;  // <= 0: 1 / L
    int sbl_max_iters = 500;
    double sbl_tol = 1e-6;
    int omp_sparsity = 0;          // <= 0: channel.p0

    void validate() const;
};

ExperimentConfig experiment_from_config(const Config& c);

struct TrialResult {
    double snr_db;
    double sir_db;
    int trial;
    std::string method;
    double nmse_db;
};

struct CellSummary {
    double snr_db;
    double sir_db;
    std::string method;
    int count;
    double mean_db;
    double median_db;
    double std_db;
};

// Estimate with one method on one scenario. Returns h_hat.
CVector run_method(const std::string& method, const Scenario& s, const ExperimentConfig& cfg,
                   std::uint64_t sampler_seed, std::shared_ptr<const ScoreNetwork> net);

std::vector<TrialResult> run_experiment(const ExperimentConfig& cfg,
                                        const std::function<void(const TrialResult&)>& progress = {});

std::vector<CellSummary> summarize(const std::vector<TrialResult>& results);

// results.csv, summary.csv, plotdata/sir_<v>.csv under dir.
void emit_reports(const std::vector<TrialResult>& results, const std::string& dir);

std::vector<TrialResult> load_results_csv(const std::string& path);

// Shortest decimal that round-trips to the same double.
std::string format_double(double x);

// Seed of trial `counter` under a master seed.
std::uint64_t trial_seed(std::uint64_t master, std::uint64_t counter);

}  // namespace dmsbl
