#include "dmsbl/bench.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <sstream>
#include <thread>

namespace dmsbl {

namespace fs = std::filesystem;

std::string format_double(double x) {
    char buf[64];
    auto [p, ec] = std::to_chars(buf, buf + sizeof(buf), x);
    if (ec != std::errc()) throw IoError("format_double failed");
    return std::string(buf, p);
}

std::uint64_t trial_seed(std::uint64_t master, std::uint64_t counter) {
    return splitmix64(splitmix64(master) ^ (counter * 0xd1342543de82ef95ULL + 1));
}

CMatrix base_interference_covariance(const ScenarioConfig& sc) {
    if (sc.interference != InterferenceSpec::Kind::gaussian_process) return {};
    switch (sc.covariance) {
        case InterferenceCovariance::sinc: return sinc_covariance(sc.M, sc.bandwidth);
        case InterferenceCovariance::white: return CMatrix::Identity(sc.M, sc.M);
        case InterferenceCovariance::se: {
            CMatrix S(sc.M, sc.M);
            for (Eigen::Index i = 0; i < sc.M; ++i)
                for (Eigen::Index j = 0; j < sc.M; ++j) {
                    double d = static_cast<double>(i - j);
                    S(i, j) = std::exp(-d * d / (2.0 * sc.length_scale * sc.length_scale));
                }
            return S;
        }
    }
    return {};
}

Scenario generate_scenario(const ScenarioConfig& sc, const CMatrix& base_cov, double snr_db, double sir_db, Rng& rng) {
    const Eigen::Index L = sc.channel.L;
    Scenario s;
    s.pilot = generate_bpsk_pilot(sc.M + L - 1, rng);
    PilotMatrix A(s.pilot, L);
    s.h = generate_channel(sc.channel, rng);
    InterferenceSpec is;
    is.kind = sc.interference;
    is.B = sc.lfm_B;
    is.T_lfm = sc.lfm_T;
    is.symbol_rate = sc.channel.symbol_rate;
    CVector n0;
    if (is.kind == InterferenceSpec::Kind::gaussian_process) {
        n0 = GaussianSampler(base_cov).draw(rng);
    } else {
        n0 = generate_interference(is, sc.M, rng);
    }
    MixResult mix = scale_and_mix(A.apply(s.h), n0, snr_db, sir_db, rng);
    s.n = mix.n_scaled;
    if (is.kind == InterferenceSpec::Kind::gaussian_process)
        s.interference_covariance = (mix.interference_scale * mix.interference_scale) * base_cov;
    s.model = MeasurementModel(std::move(A), mix.y, mix.sigma_y2);
    return s;
}

void ExperimentConfig::validate() const {
    if (trials < 1) throw ConfigError("bench.trials must be >= 1");
    if (snr_db.empty() || sir_db.empty() || methods.empty()) throw ConfigError("bench lists must be nonempty");
    for (const auto& m : methods)
        if (m != "dmsbl-dmps" && m != "dmsbl-pgdm" && m != "mmse" && m != "omp" && m != "sbl")
            throw ConfigError("unknown method '" + m + "'");
    scenario.channel.validate();
    if (scenario.M < 1) throw ConfigError("scenario.M must be >= 1");
    sampler.validate();
}

ExperimentConfig experiment_from_config(const Config& c) {
    ExperimentConfig e;
    auto& ch = e.scenario.channel;
    ch.p0 = static_cast<int>(c.get_int("channel.p0", ch.p0));
    ch.L = static_cast<int>(c.get_int("channel.L", ch.L));
    ch.inter_arrival_mean = c.get_double("channel.inter_arrival_mean", ch.inter_arrival_mean);
    ch.decay_db = c.get_double("channel.decay_db", ch.decay_db);
    ch.decay_span = c.get_double("channel.decay_span", ch.decay_span);
    ch.symbol_rate = c.get_double("channel.symbol_rate", ch.symbol_rate);
    ch.normalize = c.get_bool("channel.normalize", ch.normalize);
    try {
        ch.validate();
    } catch (const DomainError& err) {
        throw ConfigError(err.what());
    }
    std::string kind = c.get_string("interference.kind", "gaussian_process");
    if (kind == "lfm")
        e.scenario.interference = InterferenceSpec::Kind::lfm;
    else if (kind == "gaussian_process")
        e.scenario.interference = InterferenceSpec::Kind::gaussian_process;
    else
        throw ConfigError("interference.kind must be lfm or gaussian_process");
    e.scenario.lfm_B = c.get_double("interference.B", e.scenario.lfm_B);
    e.scenario.lfm_T = c.get_double("interference.T_lfm", e.scenario.lfm_T);
    std::string cov = c.get_string("interference.covariance", "sinc");
    if (cov == "sinc")
        e.scenario.covariance = InterferenceCovariance::sinc;
    else if (cov == "se")
        e.scenario.covariance = InterferenceCovariance::se;
    else if (cov == "white")
        e.scenario.covariance = InterferenceCovariance::white;
    else
        throw ConfigError("interference.covariance must be sinc, se or white");
    e.scenario.bandwidth = c.get_double("interference.bandwidth", e.scenario.bandwidth);
    e.scenario.length_scale = c.get_double("interference.length_scale", e.scenario.length_scale);
    e.scenario.M = c.get_int("scenario.M", e.scenario.M);
    e.snr_db = c.get_doubles("bench.snr_db", c.get_doubles("scenario.snr_db", e.snr_db));
    e.sir_db = c.get_doubles("bench.sir_db", c.get_doubles("scenario.sir_db", e.sir_db));
    e.methods = c.get_strings("bench.methods", e.methods);
    e.trials = static_cast<int>(c.get_int("bench.trials", e.trials));
    e.seed = static_cast<std::uint64_t>(c.get_int("bench.seed", 0));
    e.output = c.get_string("bench.output", e.output);
    e.threads = static_cast<int>(c.get_int("bench.threads", 0));
    e.sampler = sampler_from_config(c);
    e.schedule = schedule_from_config(c);
    e.weights = c.get_string("score.weights", "");
    std::string vjp = c.get_string("sampler.vjp", "fd");
    if (vjp != "fd" && vjp != "identity") throw ConfigError("sampler.vjp must be fd or identity");
    e.identity_vjp = vjp == "identity";
    e.mmse_prior_var = c.get_double("baseline.mmse_prior_var", e.mmse_prior_var);
    e.sbl_max_iters = static_cast<int>(c.get_int("baseline.sbl_max_iters", e.sbl_max_iters));
    e.sbl_tol = c.get_double("baseline.sbl_tol", e.sbl_tol);
    e.omp_sparsity = static_cast<int>(c.get_int("baseline.omp_sparsity", e.omp_sparsity));
    e.validate();
    return e;
}

CVector run_method(const std::string& method, const Scenario& s, const ExperimentConfig& cfg,
                   std::uint64_t sampler_seed, std::shared_ptr<const ScoreNetwork> net) {
    const MeasurementModel& m = s.model;
    if (method == "mmse") {
        double pv = cfg.mmse_prior_var > 0 ? cfg.mmse_prior_var : 1.0 / static_cast<double>(m.L());
        double nv = s.n.squaredNorm() / static_cast<double>(m.M()) + m.sigma_y2;
        return mmse_estimate(m, pv, nv).h_hat;
    }
    if (method == "omp") {
        int k = cfg.omp_sparsity > 0 ? cfg.omp_sparsity : cfg.scenario.channel.p0;
        return omp_estimate(m, k).h_hat;
    }
    if (method == "sbl") return sbl_estimate(m, cfg.sbl_max_iters, cfg.sbl_tol).h_hat;
    if (method == "dmsbl-dmps" || method == "dmsbl-pgdm") {
        SamplerConfig sc = cfg.sampler;
        sc.method = method == "dmsbl-dmps" ? Method::dmps : Method::pgdm;
        sc.seed = sampler_seed;
        std::unique_ptr<ScoreProvider> prov;
        if (cfg.scenario.interference == InterferenceSpec::Kind::gaussian_process) {
            prov = std::make_unique<GaussianScore>(s.interference_covariance, cfg.schedule);
        } else {
            if (!net) throw IoError("dm-sbl with lfm interference needs a score network (score.weights)");
            prov = std::make_unique<LearnedScore>(
                net, cfg.schedule, cfg.identity_vjp ? LearnedScore::Vjp::identity : LearnedScore::Vjp::finite_difference);
        }
        return run(m, sc, cfg.schedule, *prov).h_hat;
    }
    throw ConfigError("unknown method '" + method + "'");
}

std::vector<TrialResult> run_experiment(const ExperimentConfig& cfg,
                                        const std::function<void(const TrialResult&)>& progress) {
    cfg.validate();
    std::shared_ptr<const ScoreNetwork> net;
    const bool needs_net =
        cfg.scenario.interference == InterferenceSpec::Kind::lfm &&
        std::any_of(cfg.methods.begin(), cfg.methods.end(), [](const std::string& m) { return m.rfind("dmsbl", 0) == 0; });
    if (needs_net) {
        if (cfg.weights.empty() || !fs::exists(cfg.weights))
            throw IoError("score network weight file not found: expected a .dmsc at '" +
                          (cfg.weights.empty() ? std::string("<score.weights unset>") : cfg.weights) + "'");
        net = std::make_shared<const ScoreNetwork>(ScoreNetwork::load(cfg.weights));
    }
    const CMatrix base_cov = base_interference_covariance(cfg.scenario);

    struct Job {
        double snr, sir;
        int trial;
        std::uint64_t counter;
    };
    std::vector<Job> jobs;
    std::uint64_t counter = 0;
    for (double sir : cfg.sir_db)
        for (double snr : cfg.snr_db)
            for (int tr = 0; tr < cfg.trials; ++tr) jobs.push_back({snr, sir, tr, counter++});

    const std::size_t nm = cfg.methods.size();
    std::vector<TrialResult> results(jobs.size() * nm);
    std::atomic<std::size_t> next{0};
    std::mutex mu;
    std::exception_ptr failure;

    auto worker = [&] {
        for (;;) {
            std::size_t j = next.fetch_add(1);
            if (j >= jobs.size()) return;
            {
                std::lock_guard<std::mutex> lk(mu);
                if (failure) return;
            }
            try {
                const Job& job = jobs[j];
                const std::uint64_t seed = trial_seed(cfg.seed, job.counter);
                Rng rng(seed);
                Scenario s = generate_scenario(cfg.scenario, base_cov, job.snr, job.sir, rng);
                for (std::size_t k = 0; k < nm; ++k) {
                    CVector est = run_method(cfg.methods[k], s, cfg, splitmix64(seed + 1), net);
                    TrialResult r{job.snr, job.sir, job.trial, cfg.methods[k], nmse_db(est, s.h)};
                    results[j * nm + k] = r;
                    if (progress) {
                        std::lock_guard<std::mutex> lk(mu);
                        progress(r);
                    }
                }
            } catch (...) {
                std::lock_guard<std::mutex> lk(mu);
                if (!failure) failure = std::current_exception();
            }
        }
    };
    int nt = cfg.threads > 0 ? cfg.threads : static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
    nt = static_cast<int>(std::min<std::size_t>(static_cast<std::size_t>(nt), jobs.size()));
    std::vector<std::thread> pool;
    for (int i = 1; i < nt; ++i) pool.emplace_back(worker);
    worker();
    for (auto& th : pool) th.join();
    if (failure) std::rethrow_exception(failure);
    return results;
}

std::vector<CellSummary> summarize(const std::vector<TrialResult>& results) {
    std::vector<std::string> method_order;
    for (const auto& r : results)
        if (std::find(method_order.begin(), method_order.end(), r.method) == method_order.end())
            method_order.push_back(r.method);
    auto rank = [&](const std::string& m) { return std::find(method_order.begin(), method_order.end(), m) - method_order.begin(); };
    std::map<std::tuple<double, double, long>, std::vector<double>> cells;
    for (const auto& r : results) cells[{r.sir_db, r.snr_db, rank(r.method)}].push_back(r.nmse_db);
    std::vector<CellSummary> out;
    for (auto& [key, v] : cells) {
        CellSummary c;
        c.sir_db = std::get<0>(key);
        c.snr_db = std::get<1>(key);
        c.method = method_order[static_cast<std::size_t>(std::get<2>(key))];
        c.count = static_cast<int>(v.size());
        double sum = 0;
        for (double x : v) sum += x;
        c.mean_db = sum / c.count;
        double ss = 0;
        for (double x : v) ss += (x - c.mean_db) * (x - c.mean_db);
        c.std_db = c.count > 1 ? std::sqrt(ss / (c.count - 1)) : 0.0;
        std::vector<double> sorted = v;
        std::sort(sorted.begin(), sorted.end());
        std::size_t n = sorted.size();
        c.median_db = n % 2 ? sorted[n / 2] : 0.5 * (sorted[n / 2 - 1] + sorted[n / 2]);
        out.push_back(c);
    }
    return out;
}

namespace {

std::ofstream open_out(const fs::path& p) {
    std::ofstream os(p);
    if (!os) throw IoError("cannot write " + p.string());
    return os;
}

}  // namespace

void emit_reports(const std::vector<TrialResult>& results, const std::string& dir) {
    if (results.empty()) throw DomainError("emit_reports: no results");
    std::error_code ec;
    fs::create_directories(fs::path(dir) / "plotdata", ec);
    if (ec) throw IoError("cannot create " + dir + ": " + ec.message());
    {
        auto os = open_out(fs::path(dir) / "results.csv");
        os << "snr_db,sir_db,trial,method,nmse_db\n";
        for (const auto& r : results)
            os << format_double(r.snr_db) << ',' << format_double(r.sir_db) << ',' << r.trial << ',' << r.method << ','
               << format_double(r.nmse_db) << '\n';
        if (!os) throw IoError("write failed: results.csv");
    }
    auto cells = summarize(results);
    {
        auto os = open_out(fs::path(dir) / "summary.csv");
        os << "snr_db,sir_db,method,count,mean_db,median_db,std_db\n";
        for (const auto& c : cells)
            os << format_double(c.snr_db) << ',' << format_double(c.sir_db) << ',' << c.method << ',' << c.count << ','
               << format_double(c.mean_db) << ',' << format_double(c.median_db) << ',' << format_double(c.std_db)
               << '\n';
        if (!os) throw IoError("write failed: summary.csv");
    }
    std::vector<std::string> methods;
    for (const auto& c : cells)
        if (std::find(methods.begin(), methods.end(), c.method) == methods.end()) methods.push_back(c.method);
    std::map<double, std::map<double, std::map<std::string, double>>> by_sir;
    for (const auto& c : cells) by_sir[c.sir_db][c.snr_db][c.method] = c.mean_db;
    for (const auto& [sir, rows] : by_sir) {
        auto os = open_out(fs::path(dir) / "plotdata" / ("sir_" + format_double(sir) + ".csv"));
        os << "snr_db";
        for (const auto& m : methods) os << ',' << m;
        os << '\n';
        for (const auto& [snr, vals] : rows) {
            os << format_double(snr);
            for (const auto& m : methods) {
                os << ',';
                auto it = vals.find(m);
                if (it != vals.end()) os << format_double(it->second);
            }
            os << '\n';
        }
    }
}

std::vector<TrialResult> load_results_csv(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw IoError("cannot open " + path);
    std::string line;
    if (!std::getline(is, line) || line != "snr_db,sir_db,trial,method,nmse_db")
        throw IoError(path + ": unexpected header");
    auto num = [&](const std::string& s) {
        double x = 0;
        auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), x);
        if (ec != std::errc() || p != s.data() + s.size()) throw IoError(path + ": bad number '" + s + "'");
        return x;
    };
    std::vector<TrialResult> out;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        std::vector<std::string> f;
        std::stringstream ss(line);
        std::string item;
        while (std::getline(ss, item, ',')) f.push_back(item);
        if (f.size() != 5) throw IoError(path + ": malformed row '" + line + "'");
        out.push_back({num(f[0]), num(f[1]), static_cast<int>(num(f[2])), f[3], num(f[4])});
    }
    return out;
}

}  // namespace dmsbl
