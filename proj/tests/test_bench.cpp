#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>

#include "dmsbl/bench.hpp"
#include "oracles.hpp"

using namespace dmsbl;
namespace fs = std::filesystem;

namespace {

const char* small_config = R"(
# small experiment
channel.L = 16
channel.p0 = 3
channel.inter_arrival_mean = 5e-4
scenario.M = 24
bench.snr_db = 10, 20
bench.sir_db = 0
bench.trials = 3
bench.methods = mmse, omp, sbl, dmsbl-pgdm
bench.seed = 42
sampler.T = 8
sampler.K = 4
)";

ExperimentConfig small_experiment(int threads) {
    Config c = Config::from_string(small_config);
    c.set("bench.threads", std::to_string(threads));
    return experiment_from_config(c);
}

fs::path scratch(const std::string& name) {
    fs::path p = fs::temp_directory_path() / ("dmsbl_test_" + name);
    fs::remove_all(p);
    return p;
}

}  // namespace

TEST_CASE("config parsing") {
    Config c = Config::from_string("sampler.nu = 2.5  # trailing comment\nguidance.method=dmps\n\nsampler.em = off\n");
    SamplerConfig s = sampler_from_config(c);
    CHECK(s.nu == 2.5);
    CHECK(s.method == Method::dmps);
    CHECK_FALSE(s.em_enabled);
    CHECK(c.get_doubles("bench.snr_db", {1.0}) == std::vector<double>{1.0});

    CHECK_THROWS_AS(Config::from_string("sampler.bogus = 1"), ConfigError);
    CHECK_THROWS_AS(Config::from_string("no equals sign"), ConfigError);
    CHECK_THROWS_AS(sampler_from_config(Config::from_string("sampler.T = ten")), ConfigError);
    CHECK_THROWS_AS(sampler_from_config(Config::from_string("sampler.em = maybe")), ConfigError);
    CHECK_THROWS_AS(sampler_from_config(Config::from_string("sampler.T = 100\nsde.steps = 200")), ConfigError);
    CHECK_THROWS_AS(sampler_from_config(Config::from_string("sampler.K = 4\nguidance.K = 8")), ConfigError);
    CHECK(sampler_from_config(Config::from_string("sampler.T = 100\nsde.steps = 100")).T == 100);
    CHECK_THROWS_AS(schedule_from_config(Config::from_string("sde.alpha_form = other")), ConfigError);
    CHECK(schedule_from_config(Config::from_string("sde.alpha_form = paper")).form() == VpSchedule::Form::paper);
    CHECK_THROWS_AS(experiment_from_config(Config::from_string("bench.methods = mmse, lasso")), ConfigError);
    CHECK_THROWS_AS(Config::from_file("/nonexistent/config.ini"), ConfigError);
}

TEST_CASE("nmse in dB") {
    Rng rng(1);
    CVector h = complex_normal(rng, 10, 1);
    CHECK(nmse_db(h, h) == -100.0);
    CHECK(nmse_db(CVector::Zero(10), h) == doctest::Approx(0.0));
    CHECK(nmse_db(h * 1.1, h) == doctest::Approx(-20.0));
    CHECK_THROWS_AS(nmse_db(h, CVector::Zero(10)), DomainError);
}

TEST_CASE("scenario generation hits the requested SNR and SIR") {
    ScenarioConfig sc;
    sc.channel.L = 16;
    sc.channel.p0 = 3;
    sc.channel.inter_arrival_mean = 5e-4;
    sc.M = 64;
    CMatrix base = base_interference_covariance(sc);
    Rng rng(2);
    Scenario s = generate_scenario(sc, base, 15.0, 3.0, rng);
    CVector Ah = s.model.A.apply(s.h);
    CHECK(10 * std::log10(Ah.squaredNorm() / s.n.squaredNorm()) == doctest::Approx(3.0).epsilon(1e-9));
    CHECK(s.model.sigma_y2 == doctest::Approx(Ah.squaredNorm() / 64 / std::pow(10.0, 1.5)));
    CHECK(s.h.norm() == doctest::Approx(1.0));
    CHECK(s.interference_covariance.rows() == 64);
    // covariance scale matches the realized scaling of the draw
    CHECK(s.interference_covariance(0, 0).real() > 0);
    Rng rng2(2);
    Scenario t = generate_scenario(sc, base, 15.0, 3.0, rng2);
    CHECK(t.model.y == s.model.y);
}

TEST_CASE("summaries recompute from the trial results") {
    std::vector<TrialResult> rs;
    for (int i = 0; i < 5; ++i) rs.push_back({10, 0, i, "mmse", -1.0 * i});
    for (int i = 0; i < 4; ++i) rs.push_back({10, 0, i, "omp", 2.0 * i});
    rs.push_back({20, 0, 0, "mmse", -7.0});
    auto cells = summarize(rs);
    REQUIRE(cells.size() == 3);
    const CellSummary& a = cells[0];
    CHECK(a.method == "mmse");
    CHECK(a.snr_db == 10);
    CHECK(a.count == 5);
    CHECK(a.mean_db == doctest::Approx(-2.0));
    CHECK(a.median_db == doctest::Approx(-2.0));
    CHECK(a.std_db == doctest::Approx(std::sqrt(2.5)));
    CHECK(cells[1].method == "omp");
    CHECK(cells[1].median_db == doctest::Approx(3.0));
    CHECK(cells[2].count == 1);
    CHECK(cells[2].std_db == 0.0);
}

TEST_CASE("format_double round-trips") {
    Rng rng(3);
    std::uniform_real_distribution<double> u(-50, 50);
    for (int i = 0; i < 1000; ++i) {
        double x = u(rng);
        CHECK(std::stod(format_double(x)) == x);
    }
    CHECK(format_double(30.0) == "30");
}

TEST_CASE("trial seeds are distinct") {
    std::set<std::uint64_t> seen;
    for (std::uint64_t m : {0ULL, 1ULL})
        for (std::uint64_t c = 0; c < 1000; ++c) seen.insert(trial_seed(m, c));
    CHECK(seen.size() == 2000);
}

TEST_CASE("experiment results are reproducible and independent of the thread count") {
    auto a = run_experiment(small_experiment(1));
    auto b = run_experiment(small_experiment(3));
    REQUIRE(a.size() == 2 * 3 * 4);
    for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK(a[i].method == b[i].method);
        CHECK(a[i].nmse_db == b[i].nmse_db);
        CHECK(std::isfinite(a[i].nmse_db));
    }

    fs::path d1 = scratch("rep1"), d2 = scratch("rep2");
    emit_reports(a, d1.string());
    emit_reports(b, d2.string());
    auto slurp = [](const fs::path& p) {
        std::ifstream is(p);
        return std::string(std::istreambuf_iterator<char>(is), {});
    };
    CHECK(slurp(d1 / "results.csv") == slurp(d2 / "results.csv"));
    CHECK(slurp(d1 / "summary.csv") == slurp(d2 / "summary.csv"));
    CHECK(fs::exists(d1 / "plotdata" / "sir_0.csv"));

    auto back = load_results_csv((d1 / "results.csv").string());
    REQUIRE(back.size() == a.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK(back[i].nmse_db == a[i].nmse_db);
        CHECK(back[i].snr_db == a[i].snr_db);
        CHECK(back[i].trial == a[i].trial);
        CHECK(back[i].method == a[i].method);
    }
    std::string plot = slurp(d1 / "plotdata" / "sir_0.csv");
    CHECK(plot.rfind("snr_db,mmse,omp,sbl,dmsbl-pgdm\n", 0) == 0);
    fs::remove_all(d1);
    fs::remove_all(d2);
}

TEST_CASE("lfm interference without a score network names the missing file") {
    Config c = Config::from_string(small_config);
    c.set("interference.kind", "lfm");
    c.set("score.weights", "/nonexistent/interference.dmsc");
    ExperimentConfig e = experiment_from_config(c);
    try {
        run_experiment(e);
        FAIL("expected IoError");
    } catch (const IoError& err) {
        CHECK(std::string(err.what()).find("/nonexistent/interference.dmsc") != std::string::npos);
    }
    // baselines alone do not need the network
    c.set("bench.methods", "mmse,omp");
    CHECK(run_experiment(experiment_from_config(c)).size() == 2 * 3 * 2);
}

TEST_CASE("results loader rejects malformed files") {
    fs::path d = scratch("bad");
    fs::create_directories(d);
    {
        std::ofstream os(d / "r.csv");
        os << "wrong,header\n";
    }
    CHECK_THROWS_AS(load_results_csv((d / "r.csv").string()), IoError);
    CHECK_THROWS_AS(load_results_csv((d / "missing.csv").string()), IoError);
    fs::remove_all(d);
}
