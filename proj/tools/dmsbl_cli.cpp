#include <CLI11.hpp>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include "dmsbl/bench.hpp"
#include "dmsbl/cbin.hpp"

using namespace dmsbl;
namespace fs = std::filesystem;

namespace {

struct Common {
    std::string config_path;
    std::vector<std::string> overrides;

    Config load() const {
        Config c = config_path.empty() ? Config{} : Config::from_file(config_path);
        for (const auto& o : overrides) c.set(o);
        return c;
    }
};

void add_common(CLI::App* app, Common& c) {
    app->add_option("-c,--config", c.config_path, "key=value config file");
    app->add_option("-s,--set", c.overrides, "override, key=value (repeatable)");
}

std::map<std::string, std::string> read_meta(const fs::path& p) {
    std::ifstream is(p);
    if (!is) throw IoError("cannot open " + p.string());
    std::map<std::string, std::string> m;
    std::string line;
    while (std::getline(is, line)) {
        auto eq = line.find('=');
        if (eq != std::string::npos) m[line.substr(0, eq)] = line.substr(eq + 1);
    }
    return m;
}

double meta_double(const std::map<std::string, std::string>& m, const std::string& k) {
    auto it = m.find(k);
    if (it == m.end()) throw IoError("scenario.meta lacks " + k);
    return std::stod(it->second);
}

int cmd_generate(const Common& common, const std::string& out, std::uint64_t seed) {
    Config c = common.load();
    ExperimentConfig e = experiment_from_config(c);
    Rng rng(seed);
    CMatrix base = base_interference_covariance(e.scenario);
    Scenario s = generate_scenario(e.scenario, base, e.snr_db.front(), e.sir_db.front(), rng);
    fs::create_directories(out);
    write_cbin((fs::path(out) / "y.cbin").string(), s.model.y);
    write_cbin((fs::path(out) / "h.cbin").string(), s.h);
    write_cbin((fs::path(out) / "n.cbin").string(), s.n);
    write_cbin((fs::path(out) / "pilot.cbin").string(), s.pilot);
    std::ofstream meta(fs::path(out) / "scenario.meta");
    double scale2 = base.size() ? s.interference_covariance(0, 0).real() / base(0, 0).real() : 1.0;
    meta << "L=" << e.scenario.channel.L << "\nM=" << e.scenario.M << "\nsigma_y2=" << format_double(s.model.sigma_y2)
         << "\nsnr_db=" << format_double(e.snr_db.front()) << "\nsir_db=" << format_double(e.sir_db.front())
         << "\ninterference_scale2=" << format_double(scale2) << "\nseed=" << seed << "\n";
    if (!meta) throw IoError("cannot write scenario.meta");
    std::cout << "wrote scenario to " << out << " (M=" << e.scenario.M << ", L=" << e.scenario.channel.L
              << ", sigma_y2=" << s.model.sigma_y2 << ")\n";
    return 0;
}

int cmd_estimate(const Common& common, const std::string& dir, const std::string& method, const std::string& out,
                 const std::string& trace) {
    Config c = common.load();
    ExperimentConfig e = experiment_from_config(c);
    auto meta = read_meta(fs::path(dir) / "scenario.meta");
    const auto L = static_cast<Eigen::Index>(meta_double(meta, "L"));
    CVector pilot = read_cbin((fs::path(dir) / "pilot.cbin").string());
    CVector y = read_cbin((fs::path(dir) / "y.cbin").string());
    Scenario s;
    s.pilot = pilot;
    s.model = MeasurementModel(PilotMatrix(pilot, L), y, meta_double(meta, "sigma_y2"));
    if (e.scenario.M != s.model.M()) {
        e.scenario.M = s.model.M();
    }
    e.scenario.channel.L = static_cast<int>(L);
    const fs::path hpath = fs::path(dir) / "h.cbin";
    const fs::path npath = fs::path(dir) / "n.cbin";
    bool have_truth = fs::exists(hpath);
    if (have_truth) s.h = read_cbin(hpath.string());
    s.n = fs::exists(npath) ? read_cbin(npath.string()) : CVector::Zero(s.model.M());
    if (e.scenario.interference == InterferenceSpec::Kind::gaussian_process)
        s.interference_covariance = meta_double(meta, "interference_scale2") * base_interference_covariance(e.scenario);

    CVector h_hat;
    if ((method == "dmsbl-dmps" || method == "dmsbl-pgdm") && !trace.empty()) {
        SamplerConfig sc = e.sampler;
        sc.method = method == "dmsbl-dmps" ? Method::dmps : Method::pgdm;
        std::unique_ptr<ScoreProvider> prov;
        if (e.scenario.interference == InterferenceSpec::Kind::gaussian_process)
            prov = std::make_unique<GaussianScore>(s.interference_covariance, e.schedule);
        else {
            if (e.weights.empty()) throw IoError("score.weights not set: expected a .dmsc path");
            prov = std::make_unique<LearnedScore>(
                std::make_shared<const ScoreNetwork>(ScoreNetwork::load(e.weights)), e.schedule,
                e.identity_vjp ? LearnedScore::Vjp::identity : LearnedScore::Vjp::finite_difference);
        }
        RunOptions opts;
        if (have_truth) opts.truth = &s.h;
        RunResult r = run(s.model, sc, e.schedule, *prov, opts);
        write_trace_csv(trace, r.trace);
        h_hat = r.h_hat;
    } else {
        std::shared_ptr<const ScoreNetwork> net;
        if (e.scenario.interference == InterferenceSpec::Kind::lfm && method.rfind("dmsbl", 0) == 0) {
            if (e.weights.empty()) throw IoError("score.weights not set: expected a .dmsc path");
            net = std::make_shared<const ScoreNetwork>(ScoreNetwork::load(e.weights));
        }
        h_hat = run_method(method, s, e, e.sampler.seed, net);
    }
    if (!out.empty()) write_cbin(out, h_hat);
    if (have_truth)
        std::cout << "method=" << method << " nmse_db=" << format_double(nmse_db(h_hat, s.h)) << "\n";
    else
        std::cout << "method=" << method << " (no h.cbin, NMSE not available)\n";
    return 0;
}

int cmd_bench(const Common& common, bool quiet) {
    Config c = common.load();
    ExperimentConfig e = experiment_from_config(c);
    std::size_t total = e.snr_db.size() * e.sir_db.size() * static_cast<std::size_t>(e.trials) * e.methods.size();
    std::size_t done = 0;
    auto results = run_experiment(e, [&](const TrialResult& r) {
        ++done;
        if (!quiet)
            std::cerr << "[" << done << "/" << total << "] snr=" << r.snr_db << " sir=" << r.sir_db << " trial=" << r.trial
                      << " " << r.method << " nmse=" << r.nmse_db << " dB\n";
    });
    emit_reports(results, e.output);
    std::cout << "snr_db,sir_db,method,count,mean_db,median_db,std_db\n";
    for (const auto& s : summarize(results))
        std::cout << s.snr_db << ',' << s.sir_db << ',' << s.method << ',' << s.count << ',' << s.mean_db << ','
                  << s.median_db << ',' << s.std_db << '\n';
    std::cout << "reports written to " << e.output << "\n";
    return 0;
}

int cmd_export(const Common& common, const std::string& out, long long count, long long length, std::uint64_t seed) {
    Config c = common.load();
    ExperimentConfig e = experiment_from_config(c);
    if (count < 1) throw ConfigError("--count must be >= 1");
    const Eigen::Index M = length > 0 ? length : e.scenario.M;
    ScenarioConfig sc = e.scenario;
    sc.M = M;
    InterferenceSpec spec;
    spec.kind = sc.interference;
    spec.B = sc.lfm_B;
    spec.T_lfm = sc.lfm_T;
    spec.symbol_rate = sc.channel.symbol_rate;
    std::unique_ptr<GaussianSampler> gp;
    if (spec.kind == InterferenceSpec::Kind::gaussian_process) gp = std::make_unique<GaussianSampler>(base_interference_covariance(sc));
    Rng rng(seed);
    CVector all(count * M);
    for (long long i = 0; i < count; ++i) all.segment(i * M, M) = gp ? gp->draw(rng) : generate_interference(spec, M, rng);
    write_cbin(out, all);
    std::ofstream meta(out + ".meta");
    meta << "count=" << count << "\nsegment_length=" << M
         << "\nkind=" << (spec.kind == InterferenceSpec::Kind::lfm ? "lfm" : "gaussian_process")
         << "\ncovariance=" << c.get_string("interference.covariance", "sinc") << "\nseed=" << seed
         << "\nB=" << format_double(spec.B) << "\nT_lfm=" << format_double(spec.T_lfm)
         << "\nf_sym=" << format_double(spec.symbol_rate) << "\n";
    if (!meta) throw IoError("cannot write " + out + ".meta");
    std::cout << "wrote " << count << " segments of length " << M << " to " << out << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"DM-SBL channel estimation toolkit"};
    app.require_subcommand(1);

    Common gen_c, est_c, bench_c, exp_c;
    std::string gen_out = "scenario";
    std::uint64_t gen_seed = 0;
    auto* gen = app.add_subcommand("generate", "write a scenario (y, h, n, pilot .cbin files)");
    add_common(gen, gen_c);
    gen->add_option("-o,--out", gen_out, "output directory");
    gen->add_option("--seed", gen_seed, "random seed");

    std::string est_dir = "scenario", est_method = "dmsbl-pgdm", est_out, est_trace;
    auto* est = app.add_subcommand("estimate", "estimate the channel of a generated scenario");
    add_common(est, est_c);
    est->add_option("-d,--dir", est_dir, "scenario directory from generate");
    est->add_option("-m,--method", est_method, "dmsbl-dmps, dmsbl-pgdm, mmse, omp or sbl")
        ->check(CLI::IsMember({"dmsbl-dmps", "dmsbl-pgdm", "mmse", "omp", "sbl"}));
    est->add_option("-o,--out", est_out, "write h_hat to this .cbin");
    est->add_option("--trace", est_trace, "write the sampler trace CSV (dm-sbl methods)");

    bool quiet = false;
    auto* bench = app.add_subcommand("bench", "Monte-Carlo NMSE sweep");
    add_common(bench, bench_c);
    bench->add_flag("-q,--quiet", quiet, "no per-trial progress");

    std::string exp_out = "interference.cbin";
    long long exp_count = 1000, exp_len = 0;
    std::uint64_t exp_seed = 0;
    auto* exp = app.add_subcommand("export-interference-dataset", "write interference segments for score training");
    add_common(exp, exp_c);
    exp->add_option("-o,--out", exp_out, "output .cbin (a .meta sidecar is written next to it)");
    exp->add_option("-n,--count", exp_count, "number of segments");
    exp->add_option("--length", exp_len, "segment length (default scenario.M)");
    exp->add_option("--seed", exp_seed, "random seed");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int rc = app.exit(e);
        return rc == 0 ? 0 : 1;
    }
    try {
        if (gen->parsed()) return cmd_generate(gen_c, gen_out, gen_seed);
        if (est->parsed()) return cmd_estimate(est_c, est_dir, est_method, est_out, est_trace);
        if (bench->parsed()) return cmd_bench(bench_c, quiet);
        if (exp->parsed()) return cmd_export(exp_c, exp_out, exp_count, exp_len, exp_seed);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 1;
    } catch (const IoError& e) {
        std::cerr << "I/O error: " << e.what() << "\n";
        return 3;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
