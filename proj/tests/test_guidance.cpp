#include <doctest.h>

#include "dmsbl/guidance.hpp"
#include "oracles.hpp"

using namespace dmsbl;

namespace {

struct Instance {
    MeasurementModel model;
    CMatrix cov;
    RVector gamma;
};

Instance make_instance(std::uint64_t seed, Eigen::Index M = 12, Eigen::Index L = 6, double s2 = 0.05) {
    Rng rng(seed);
    Instance in;
    CVector pilot = complex_normal(rng, M + L - 1, 1);
    in.model = MeasurementModel(PilotMatrix(pilot, L), complex_normal(rng, M, 1), s2);
    in.cov = oracle::random_psd(rng, M);
    in.gamma = RVector::LinSpaced(L, 0.05, 1.5);
    return in;
}

// Dense Sigma_{y,t} built from scratch.
CMatrix sigma_y(const MeasurementModel& m, double t, const VpSchedule& s, Method method) {
    const CMatrix& A = m.A.dense();
    double a = s.alpha(t), v = s.perturb_variance(t);
    double c = method == Method::dmps ? v / (a * a) : v;
    CMatrix I = CMatrix::Identity(m.M(), m.M());
    return c * (A * A.adjoint() + I) + m.sigma_y2 * I;
}

CMatrix dense_channel_sigma(const RVector& gamma, double t, const VpSchedule& s) {
    double a = s.alpha(t);
    return (a * a * gamma.array() + s.perturb_variance(t)).matrix().cast<cd>().asDiagonal();
}

CMatrix dense_noise_sigma(const CMatrix& cov, double t, const VpSchedule& s) {
    double a = s.alpha(t);
    return a * a * cov + s.perturb_variance(t) * CMatrix::Identity(cov.rows(), cov.cols());
}

// Tweedie estimates through dense Gaussian priors.
CVector dense_hhat(const CVector& h, const RVector& gamma, double t, const VpSchedule& s) {
    return (h - s.perturb_variance(t) * dense_channel_sigma(gamma, t, s).inverse() * h) / s.alpha(t);
}
CVector dense_nhat(const CVector& n, const CMatrix& cov, double t, const VpSchedule& s) {
    return (n - s.perturb_variance(t) * dense_noise_sigma(cov, t, s).inverse() * n) / s.alpha(t);
}

}  // namespace

TEST_CASE("DMPS gradients vanish at zero residual") {
    VpSchedule s;
    Instance in = make_instance(1);
    Rng rng(2);
    const double t = 0.4, a = s.alpha(t);
    CVector h = complex_normal(rng, 6, 1), n = complex_normal(rng, 12, 1);
    in.model.y = (in.model.A.apply(h) + n) / a;
    LikelihoodCache cache(in.model, s, t, Method::dmps);
    ScorePair g = dmps_likelihood_scores(h, n, in.model, cache);
    CHECK(g.h.norm() < 1e-12);
    CHECK(g.n.norm() < 1e-12);
}

TEST_CASE("DMPS with A = I treats h and n symmetrically") {
    VpSchedule s;
    const int L = 8;
    CVector pilot = CVector::Zero(2 * L - 1);
    pilot(L - 1) = 1.0;
    Rng rng(3);
    MeasurementModel m(PilotMatrix(pilot, L), complex_normal(rng, L, 1), 0.1);
    REQUIRE(m.A.dense().isApprox(CMatrix::Identity(L, L)));
    LikelihoodCache cache(m, s, 0.3, Method::dmps);
    ScorePair g = dmps_likelihood_scores(complex_normal(rng, L, 1), complex_normal(rng, L, 1), m, cache);
    CHECK(oracle::rel_err(g.h, g.n) < 1e-14);
}

TEST_CASE("DMPS gradients match finite differences of the Gaussian log-likelihood") {
    VpSchedule s;
    for (std::uint64_t seed : {4, 5, 6}) {
        Instance in = make_instance(seed);
        Rng rng(seed + 100);
        const double t = 0.1 + 0.25 * static_cast<double>(seed - 4);
        const double a = s.alpha(t);
        CMatrix Si = sigma_y(in.model, t, s, Method::dmps).inverse();
        CVector h = complex_normal(rng, 6, 1), n = complex_normal(rng, 12, 1);
        auto fh = [&](const CVector& hh) {
            return oracle::gaussian_log_density(in.model.y - (in.model.A.apply(hh) + n) / a, Si);
        };
        auto fn = [&](const CVector& nn) {
            return oracle::gaussian_log_density(in.model.y - (in.model.A.apply(h) + nn) / a, Si);
        };
        LikelihoodCache cache(in.model, s, t, Method::dmps);
        ScorePair g = dmps_likelihood_scores(h, n, in.model, cache);
        CHECK(oracle::rel_err(g.h, oracle::wirtinger_gradient(fh, h)) < 1e-6);
        CHECK(oracle::rel_err(g.n, oracle::wirtinger_gradient(fn, n)) < 1e-6);
    }
}

TEST_CASE("DMPS gradients are affine in the state") {
    VpSchedule s;
    Instance in = make_instance(7);
    Rng rng(8);
    LikelihoodCache cache(in.model, s, 0.5, Method::dmps);
    CMatrix H1 = complex_normal(rng, 6, 1), H2 = complex_normal(rng, 6, 1);
    CMatrix N1 = complex_normal(rng, 12, 1), N2 = complex_normal(rng, 12, 1);
    const double w = 0.3;
    ScorePair a = dmps_likelihood_scores(H1, N1, in.model, cache);
    ScorePair b = dmps_likelihood_scores(H2, N2, in.model, cache);
    ScorePair c = dmps_likelihood_scores(w * H1 + (1 - w) * H2, w * N1 + (1 - w) * N2, in.model, cache);
    CHECK(oracle::rel_err(c.h, w * a.h + (1 - w) * b.h) < 1e-12);
    CHECK(oracle::rel_err(c.n, w * a.n + (1 - w) * b.n) < 1e-12);
}

TEST_CASE("PGDM gradients vanish at zero residual") {
    VpSchedule s;
    Instance in = make_instance(9);
    Rng rng(10);
    const double t = 0.6;
    ZeroScore zero(s);
    ChannelPriorState g(in.gamma);
    CVector h = complex_normal(rng, 6, 1), n = complex_normal(rng, 12, 1);
    in.model.y = in.model.A.apply(dense_hhat(h, in.gamma, t, s)) + n / s.alpha(t);
    LikelihoodCache cache(in.model, s, t, Method::pgdm);
    ScorePair r = pgdm_likelihood_scores(h, n, in.model, cache, Priors{g, zero});
    CHECK(r.h.norm() < 1e-9);
    CHECK(r.n.norm() < 1e-9);
}

TEST_CASE("PGDM channel branch applies the diagonal Tweedie Jacobian") {
    VpSchedule s;
    Instance in = make_instance(11);
    Rng rng(12);
    const double t = 0.45, a = s.alpha(t), v = s.perturb_variance(t);
    GaussianScore prov(in.cov, s);
    ChannelPriorState g(in.gamma);
    CVector h = complex_normal(rng, 6, 1), n = complex_normal(rng, 12, 1);
    LikelihoodCache cache(in.model, s, t, Method::pgdm);
    ScorePair r = pgdm_likelihood_scores(h, n, in.model, cache, Priors{g, prov});
    CVector resid = in.model.y - in.model.A.apply(dense_hhat(h, in.gamma, t, s)) - dense_nhat(n, in.cov, t, s);
    CVector inner = in.model.A.apply_adjoint(sigma_y(in.model, t, s, Method::pgdm).inverse() * resid);
    CVector expected(6);
    for (int l = 0; l < 6; ++l) expected(l) = inner(l) * (1.0 - v / (v + a * a * in.gamma(l))) / a;
    CHECK(oracle::rel_err(r.h, expected) < 1e-10);
}

TEST_CASE("PGDM gradients match finite differences of the induced Gaussian log-likelihood") {
    VpSchedule s;
    for (std::uint64_t seed : {13, 14, 15}) {
        Instance in = make_instance(seed);
        Rng rng(seed + 50);
        const double t = 0.15 + 0.3 * static_cast<double>(seed - 13);
        GaussianScore prov(in.cov, s);
        ChannelPriorState g(in.gamma);
        CMatrix Si = sigma_y(in.model, t, s, Method::pgdm).inverse();
        CVector h = complex_normal(rng, 6, 1), n = complex_normal(rng, 12, 1);
        auto f = [&](const CVector& hh, const CVector& nn) {
            CVector r = in.model.y - in.model.A.apply(dense_hhat(hh, in.gamma, t, s)) - dense_nhat(nn, in.cov, t, s);
            return oracle::gaussian_log_density(r, Si);
        };
        LikelihoodCache cache(in.model, s, t, Method::pgdm);
        ScorePair r = pgdm_likelihood_scores(h, n, in.model, cache, Priors{g, prov});
        CHECK(oracle::rel_err(r.h, oracle::wirtinger_gradient([&](const CVector& x) { return f(x, n); }, h)) < 1e-6);
        CHECK(oracle::rel_err(r.n, oracle::wirtinger_gradient([&](const CVector& x) { return f(h, x); }, n)) < 1e-6);
    }
}

TEST_CASE("Sigma_y factorizes on the whole schedule grid") {
    for (auto form : {VpSchedule::Form::consistent, VpSchedule::Form::paper}) {
        VpSchedule s(0.1, 20, 500, form);
        for (double s2 : {0.0, 1e-12, 0.1}) {
            Instance in = make_instance(16, 12, 6, s2);
            for (int i = 0; i < 500; ++i) {
                double t = s.time_at(i);
                for (Method m : {Method::dmps, Method::pgdm}) {
                    LikelihoodCache c(in.model, s, t, m);
                    CVector b = CVector::Ones(12);
                    CHECK(oracle::rel_err(c.sigma() * c.solve(b), b) < 1e-8);
                }
            }
            // t = 0 with sigma_y2 = 0 needs the regularization floor
            if (s2 == 0.0) {
                LikelihoodCache c(in.model, s, 0.0, Method::pgdm);
                CHECK(c.jitter() > 0);
            }
        }
    }
}

TEST_CASE("assembly with K = 1 is the weighted single-sample score") {
    VpSchedule s;
    Instance in = make_instance(17);
    Rng rng(18);
    GaussianScore prov(in.cov, s);
    ChannelPriorState g(in.gamma);
    const double t = 0.3;
    CMatrix H = complex_normal(rng, 6, 1), N = complex_normal(rng, 12, 1);
    for (Method m : {Method::dmps, Method::pgdm}) {
        GuidanceConfig cfg{m, 0.7, 1.3, 1};
        LikelihoodCache cache(in.model, s, t, m);
        ScorePair as = assemble_posterior_scores(H, N, in.model, cache, cfg, Priors{g, prov});
        ScorePair lik = m == Method::dmps ? dmps_likelihood_scores(H, N, in.model, cache)
                                          : pgdm_likelihood_scores(H, N, in.model, cache, Priors{g, prov});
        CHECK(oracle::rel_err(as.h, 0.7 * channel_prior_score(H, t, g, s) + lik.h) < 1e-12);
        CHECK(oracle::rel_err(as.n, 1.3 * prov.score(N, t) + lik.n) < 1e-12);
        GuidanceConfig zero{m, 0.0, 0.0, 1};
        ScorePair pure = assemble_posterior_scores(H, N, in.model, cache, zero, Priors{g, prov});
        CHECK(oracle::rel_err(pure.h, lik.h) < 1e-12);
        CHECK(oracle::rel_err(pure.n, lik.n) < 1e-12);
    }
}

TEST_CASE("K = 4 assembly equals the explicit double loop") {
    VpSchedule s;
    Instance in = make_instance(19);
    Rng rng(20);
    GaussianScore prov(in.cov, s);
    ChannelPriorState g(in.gamma);
    const int K = 4;
    const double t = 0.55, a = s.alpha(t), mu = 0.8, kappa = 1.1;
    CMatrix H = complex_normal(rng, 6, K, 2.0), N = complex_normal(rng, 12, K, 2.0);
    const CMatrix& A = in.model.A.dense();
    for (Method m : {Method::dmps, Method::pgdm}) {
        CMatrix Si = sigma_y(in.model, t, s, m).inverse();
        CMatrix Sh = dense_channel_sigma(in.gamma, t, s), Sn = dense_noise_sigma(in.cov, t, s);
        CMatrix Jh = (CMatrix::Identity(6, 6) - s.perturb_variance(t) * Sh.inverse()) / a;
        CMatrix Jn = (CMatrix::Identity(12, 12) - s.perturb_variance(t) * Sn.inverse()) / a;
        CMatrix Gh = CMatrix::Zero(6, K), Gn = CMatrix::Zero(12, K);
        for (int i = 0; i < K; ++i) {
            Gh.col(i) = -mu * Sh.inverse() * H.col(i);
            Gn.col(i) = -kappa * Sn.inverse() * N.col(i);
        }
        for (int i = 0; i < K; ++i)
            for (int j = 0; j < K; ++j) {
                // pair (h_i, n_j): contributes to the h score of i and the n score of j
                CVector r;
                if (m == Method::dmps)
                    r = in.model.y - (A * H.col(i) + N.col(j)) / a;
                else
                    r = in.model.y - A * dense_hhat(H.col(i), in.gamma, t, s) - dense_nhat(N.col(j), in.cov, t, s);
                CVector w = Si * r;
                if (m == Method::dmps) {
                    Gh.col(i) += A.adjoint() * w / (a * K);
                    Gn.col(j) += w / (a * K);
                } else {
                    Gh.col(i) += Jh.adjoint() * A.adjoint() * w / static_cast<double>(K);
                    Gn.col(j) += Jn.adjoint() * w / static_cast<double>(K);
                }
            }
        GuidanceConfig cfg{m, mu, kappa, K};
        LikelihoodCache cache(in.model, s, t, m);
        ScorePair as = assemble_posterior_scores(H, N, in.model, cache, cfg, Priors{g, prov});
        CHECK(oracle::rel_err(as.h, Gh) < 1e-12);
        CHECK(oracle::rel_err(as.n, Gn) < 1e-12);
    }
}

TEST_CASE("guidance config validation") {
    CHECK_THROWS_AS((GuidanceConfig{Method::dmps, 1, 1, 0}.validate()), ConfigError);
    CHECK_THROWS_AS((GuidanceConfig{Method::dmps, -1, 1, 1}.validate()), ConfigError);
    CHECK_THROWS_AS(parse_method("dps"), ConfigError);
    CHECK(parse_method("pgdm") == Method::pgdm);
}

TEST_CASE("PGDM with exact prior covariances") {
    VpSchedule s;
    for (std::uint64_t seed : {30, 31, 32}) {
        Instance in = make_instance(seed);
        Rng rng(seed + 7);
        const double t = 0.2 + 0.25 * static_cast<double>(seed - 30);
        const double a = s.alpha(t), v = s.perturb_variance(t);
        GaussianScore prov(in.cov, s);
        ChannelPriorState g(in.gamma);
        LikelihoodCache cache(in.model, s, t, Priors{g, prov});
        CHECK(cache.method() == Method::pgdm);
        // Sigma_y = A Cov(h0|ht) A^H + Cov(n0|nt) + sigma^2 I, built from dense inverses
        const CMatrix& A = in.model.A.dense();
        CMatrix Qh = v * in.gamma.cast<cd>().asDiagonal() * dense_channel_sigma(in.gamma, t, s).inverse();
        CMatrix Qn = v * in.cov * dense_noise_sigma(in.cov, t, s).inverse();
        CMatrix S = A * Qh * A.adjoint() + Qn + in.model.sigma_y2 * CMatrix::Identity(12, 12);
        CHECK(oracle::rel_err(cache.sigma(), S) < 1e-10);

        CMatrix Si = S.inverse();
        CVector h = complex_normal(rng, 6, 1), n = complex_normal(rng, 12, 1);
        auto f = [&](const CVector& hh, const CVector& nn) {
            CVector r = in.model.y - A * dense_hhat(hh, in.gamma, t, s) - dense_nhat(nn, in.cov, t, s);
            return oracle::gaussian_log_density(r, Si);
        };
        ScorePair r = pgdm_likelihood_scores(h, n, in.model, cache, Priors{g, prov});
        CHECK(oracle::rel_err(r.h, oracle::wirtinger_gradient([&](const CVector& x) { return f(x, n); }, h)) < 1e-6);
        CHECK(oracle::rel_err(r.n, oracle::wirtinger_gradient([&](const CVector& x) { return f(h, x); }, n)) < 1e-6);
        (void)a;
    }
    CHECK(parse_pgdm_variance("exact") == PgdmVariance::exact);
    CHECK_THROWS_AS(parse_pgdm_variance("ratio"), ConfigError);
}

TEST_CASE("exact PGDM variance falls back to r_t^2 for providers without a covariance") {
    class Opaque : public ScoreProvider {
    public:
        using ScoreProvider::ScoreProvider;
        CMatrix score(const CMatrix& X, double) const override { return -X; }
    };
    VpSchedule s;
    Instance in = make_instance(33);
    Opaque prov(s);
    ChannelPriorState g(in.gamma);
    const double t = 0.4, v = s.perturb_variance(t);
    LikelihoodCache cache(in.model, s, t, Priors{g, prov});
    const CMatrix& A = in.model.A.dense();
    CMatrix Qh = channel_posterior_variance(t, g, s).cast<cd>().asDiagonal();
    CMatrix S = A * Qh * A.adjoint() + (v + in.model.sigma_y2) * CMatrix::Identity(12, 12);
    CHECK(oracle::rel_err(cache.sigma(), S) < 1e-12);
}
