#include <optional>
#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "dmsbl/bench.hpp"
#include "dmsbl/cbin.hpp"

namespace py = pybind11;
using namespace dmsbl;

namespace {

VpSchedule::Form parse_form(const std::string& s) {
    if (s == "consistent") return VpSchedule::Form::consistent;
    if (s == "paper") return VpSchedule::Form::paper;
    throw ConfigError("alpha_form must be consistent or paper");
}

}  // namespace

PYBIND11_MODULE(_dmsbl, m) {
    m.doc() = "DM-SBL channel estimation core";

    py::register_exception<Error>(m, "DmsblError", PyExc_RuntimeError);
    py::register_exception<DimensionError>(m, "DimensionError", PyExc_ValueError);
    py::register_exception<DomainError>(m, "DomainError", PyExc_ValueError);

    py::class_<PilotMatrix>(m, "PilotMatrix")
        .def(py::init<CVector, Eigen::Index>(), py::arg("pilot"), py::arg("L"))
        .def_property_readonly("shape", [](const PilotMatrix& a) { return py::make_tuple(a.rows(), a.cols()); })
        .def("dense", &PilotMatrix::dense)
        .def("gram", &PilotMatrix::gram)
        .def("apply", [](const PilotMatrix& a, const CVector& h) -> CVector { return a.apply(h); })
        .def("apply_adjoint", [](const PilotMatrix& a, const CVector& v) -> CVector { return a.apply_adjoint(v); });

    py::class_<MeasurementModel>(m, "MeasurementModel")
        .def(py::init([](const CVector& pilot, Eigen::Index L, const CVector& y, double s2) {
                 return MeasurementModel(PilotMatrix(pilot, L), y, s2);
             }),
             py::arg("pilot"), py::arg("L"), py::arg("y"), py::arg("sigma_y2"))
        .def_readonly("y", &MeasurementModel::y)
        .def_readonly("sigma_y2", &MeasurementModel::sigma_y2)
        .def_property_readonly("A", [](const MeasurementModel& mm) { return mm.A.dense(); });

    py::class_<VpSchedule>(m, "VpSchedule")
        .def(py::init([](double bmin, double bmax, int steps, const std::string& form) {
                 return VpSchedule(bmin, bmax, steps, parse_form(form));
             }),
             py::arg("beta_min") = 0.1, py::arg("beta_max") = 20.0, py::arg("steps") = 500,
             py::arg("alpha_form") = "consistent")
        .def("beta", &VpSchedule::beta)
        .def("alpha", &VpSchedule::alpha)
        .def("perturb_variance", &VpSchedule::perturb_variance);

    m.def("perturb", [](const CVector& x0, double t, const VpSchedule& s, std::uint64_t seed) -> CVector {
        Rng rng(seed);
        return perturb(x0, t, s, rng);
    }, py::arg("x0"), py::arg("t"), py::arg("schedule"), py::arg("seed") = 0);
    m.def("tweedie_denoise", [](const CVector& x, double t, const CVector& score, const VpSchedule& s) -> CVector {
        return tweedie_denoise(x, t, score, s);
    });

    m.def("generate_channel", [](int p0, int L, std::uint64_t seed, bool normalize) -> CVector {
        ChannelSpec spec;
        spec.p0 = p0;
        spec.L = L;
        spec.normalize = normalize;
        Rng rng(seed);
        return generate_channel(spec, rng);
    }, py::arg("p0") = 10, py::arg("L") = 200, py::arg("seed") = 0, py::arg("normalize") = true);
    m.def("generate_lfm_interference", [](Eigen::Index M, std::uint64_t seed, double B, double T_lfm, double fs) -> CVector {
        InterferenceSpec s;
        s.B = B;
        s.T_lfm = T_lfm;
        s.symbol_rate = fs;
        Rng rng(seed);
        return generate_interference(s, M, rng);
    }, py::arg("M"), py::arg("seed") = 0, py::arg("B") = 1e3, py::arg("T_lfm") = 2.0, py::arg("symbol_rate") = 4e3);
    m.def("generate_bpsk_pilot", [](Eigen::Index N, std::uint64_t seed) -> CVector {
        Rng rng(seed);
        return generate_bpsk_pilot(N, rng);
    }, py::arg("N"), py::arg("seed") = 0);
    m.def("scale_and_mix", [](const CVector& Ah, const CVector& n, double snr, double sir, std::uint64_t seed) {
        Rng rng(seed);
        MixResult r = scale_and_mix(Ah, n, snr, sir, rng);
        return py::make_tuple(r.y, r.sigma_y2, r.n_scaled);
    }, py::arg("Ah"), py::arg("n"), py::arg("snr_db"), py::arg("sir_db"), py::arg("seed") = 0);
    m.def("sinc_covariance", &sinc_covariance, py::arg("M"), py::arg("bandwidth") = 0.25);

    m.def("channel_prior_score", [](const CVector& h, double t, const RVector& gamma, const VpSchedule& s) -> CVector {
        return channel_prior_score(h, t, ChannelPriorState(gamma), s);
    });

    py::class_<ScoreProvider>(m, "ScoreProvider")
        .def("score", [](const ScoreProvider& p, const CVector& x, double t) -> CVector { return p.score(x, t); })
        .def("tweedie_vjp", [](const ScoreProvider& p, const CVector& v, const CVector& x, double t) -> CVector {
            return p.tweedie_vjp(v, x, t);
        });
    py::class_<GaussianScore, ScoreProvider>(m, "GaussianScore")
        .def(py::init<const CMatrix&, VpSchedule>(), py::arg("covariance"), py::arg("schedule"));

    py::class_<ScoreNetwork, std::shared_ptr<ScoreNetwork>>(m, "ScoreNetwork")
        .def_static("load", &ScoreNetwork::load)
        .def_static("reference", [](std::uint32_t width, std::uint32_t blocks, std::uint32_t emb, std::uint64_t seed) {
            Rng rng(seed);
            return ScoreNetwork::reference(width, blocks, emb, rng);
        }, py::arg("width") = 64, py::arg("blocks") = 32, py::arg("emb_dim") = 64, py::arg("seed") = 0)
        .def("save", &ScoreNetwork::save)
        .def("evaluate", [](const ScoreNetwork& n, const CVector& x, double t) -> CVector { return n.evaluate(x, t); });

    m.def("likelihood_scores", [](const MeasurementModel& mm, const CVector& h, const CVector& n, double t,
                                  const std::string& method, const RVector& gamma, const CMatrix& cov,
                                  const VpSchedule& s) {
        Method meth = parse_method(method);
        LikelihoodCache cache(mm, s, t, meth);
        ScorePair g;
        if (meth == Method::dmps) {
            g = dmps_likelihood_scores(h, n, mm, cache);
        } else {
            GaussianScore prov(cov, s);
            ChannelPriorState st(gamma);
            g = pgdm_likelihood_scores(h, n, mm, cache, Priors{st, prov});
        }
        return py::make_tuple(CVector(g.h), CVector(g.n));
    });

    m.def("run_sampler", [](const MeasurementModel& mm, const CMatrix& cov, const VpSchedule& s, const std::string& method,
                            int K, double nu, int corrector_steps, bool em, double rho, std::uint64_t seed,
                            std::optional<RVector> gamma, std::optional<CVector> truth, const std::string& pgdm_variance) {
        SamplerConfig cfg;
        cfg.pgdm_variance = parse_pgdm_variance(pgdm_variance);
        cfg.T = s.steps();
        cfg.K = K;
        cfg.nu = nu;
        cfg.corrector_steps = corrector_steps;
        cfg.em_enabled = em;
        cfg.rho = rho;
        cfg.seed = seed;
        cfg.method = parse_method(method);
        GaussianScore prov(cov, s);
        RunOptions opts;
        if (gamma) opts.fixed_gamma = ChannelPriorState(*gamma);
        if (truth) opts.truth = &*truth;
        RunResult r;
        {
            py::gil_scoped_release rel;
            r = run(mm, cfg, s, prov, opts);
        }
        py::dict d;
        d["h_hat"] = r.h_hat;
        d["n_hat"] = r.n_hat;
        d["gamma"] = r.gamma;
        py::list nm;
        for (const auto& row : r.trace) nm.append(row.nmse_mean_db);
        d["nmse_mean_db"] = nm;
        return d;
    }, py::arg("model"), py::arg("covariance"), py::arg("schedule"), py::arg("method") = "pgdm", py::arg("K") = 64,
       py::arg("nu") = 64.0, py::arg("corrector_steps") = 1, py::arg("em") = true, py::arg("rho") = 1.0,
       py::arg("seed") = 0, py::arg("gamma") = py::none(), py::arg("truth") = py::none(),
       py::arg("pgdm_variance") = "empirical");

    m.def("mmse_estimate", [](const MeasurementModel& mm, double pv, double nv) -> CVector {
        return mmse_estimate(mm, pv, nv).h_hat;
    });
    m.def("omp_estimate", [](const MeasurementModel& mm, int k) -> CVector { return omp_estimate(mm, k).h_hat; });
    m.def("sbl_estimate", [](const MeasurementModel& mm, int iters, double tol) -> CVector {
        return sbl_estimate(mm, iters, tol).h_hat;
    }, py::arg("model"), py::arg("max_iters") = 500, py::arg("tol") = 1e-6);

    m.def("read_cbin", &read_cbin);
    m.def("write_cbin", [](const std::string& p, const CVector& x) { write_cbin(p, x); });
    m.def("nmse_db", &nmse_db);
}
