#include "dmsbl/signal_model.hpp"

#include <Eigen/Eigenvalues>
#include <cmath>
#include <iostream>
#include <numbers>

namespace dmsbl {

PilotMatrix::PilotMatrix(CVector pilot, Eigen::Index L) : pilot_(std::move(pilot)), L_(L) {
    const Eigen::Index N = pilot_.size();
    if (L < 1 || N < L)
        throw DimensionError("pilot length " + std::to_string(N) + " shorter than channel length " +
                             std::to_string(L));
    M_ = N - L + 1;
    A_.resize(M_, L_);
    for (Eigen::Index m = 0; m < M_; ++m)
        for (Eigen::Index l = 0; l < L_; ++l) A_(m, l) = pilot_(L_ - 1 + m - l);
    gram_ = A_ * A_.adjoint();
}

PilotMatrix build_pilot_matrix(const CVector& pilot, Eigen::Index L) { return PilotMatrix(pilot, L); }

MeasurementModel::MeasurementModel(PilotMatrix a, CVector y_, double s2)
    : A(std::move(a)), y(std::move(y_)), sigma_y2(s2) {
    if (y.size() != A.rows())
        throw DimensionError("observation length " + std::to_string(y.size()) + " != M = " +
                             std::to_string(A.rows()));
    if (!(sigma_y2 >= 0.0) || !std::isfinite(sigma_y2)) throw DomainError("sigma_y2 must be finite and >= 0");
}

void ChannelSpec::validate() const {
    if (p0 < 1) throw DomainError("channel: p0 must be >= 1");
    if (L < p0) throw DomainError("channel: L must be >= p0");
    if (!(inter_arrival_mean > 0) || !(symbol_rate > 0) || !(decay_span > 0))
        throw DomainError("channel: timing parameters must be positive");
}

ChannelDraw generate_channel_paths(const ChannelSpec& spec, Rng& rng) {
    spec.validate();
    ChannelDraw out;
    std::exponential_distribution<double> gap(1.0 / spec.inter_arrival_mean);
    const double horizon = spec.L / spec.symbol_rate;
    double tau = 0.0;
    std::vector<double> taus;
    taus.push_back(0.0);
    for (int p = 1; p < spec.p0; ++p) {
        double next = tau + gap(rng);
        int tries = 0;
        while (std::lround(next * spec.symbol_rate) > spec.L - 1 && tries < 100) {
            next = tau + gap(rng);
            ++tries;
        }
        if (std::lround(next * spec.symbol_rate) > spec.L - 1) {
            next = (spec.L - 1) / spec.symbol_rate;
            out.truncated = true;
        }
        tau = std::min(next, horizon);
        taus.push_back(tau);
    }
    if (out.truncated) std::clog << "dmsbl: channel path delays truncated to L-1 after 100 redraws\n";

    out.h = CVector::Zero(spec.L);
    for (double t : taus) {
        int idx = static_cast<int>(std::lround(t * spec.symbol_rate));
        double power = std::pow(10.0, -spec.decay_db / 10.0 * (idx / spec.symbol_rate) / spec.decay_span);
        cd g = complex_normal(rng, power);
        out.delays.push_back(idx);
        out.gains.push_back(g);
        out.h(idx) += g;
    }
    if (spec.normalize) {
        double nrm = out.h.norm();
        if (nrm > 0) out.h /= nrm;
    }
    return out;
}

CVector generate_channel(const ChannelSpec& spec, Rng& rng) { return generate_channel_paths(spec, rng).h; }

void InterferenceSpec::validate() const {
    if (kind == Kind::lfm) {
        if (!(B > 0) || !(T_lfm > 0) || !(symbol_rate > 0)) throw DomainError("lfm: parameters must be positive");
    } else {
        if (covariance.rows() != covariance.cols() || covariance.rows() == 0)
            throw DimensionError("gaussian_process: covariance must be square and nonempty");
        if (!covariance.isApprox(covariance.adjoint(), 1e-10))
            throw DomainError("gaussian_process: covariance not Hermitian");
    }
}

GaussianSampler::GaussianSampler(const CMatrix& covariance) {
    Eigen::SelfAdjointEigenSolver<CMatrix> es(covariance);
    if (es.info() != Eigen::Success) throw NumericError("covariance eigendecomposition failed");
    RVector w = es.eigenvalues();
    double tol = 1e-10 * std::max(1.0, w.cwiseAbs().maxCoeff());
    if (w.minCoeff() < -tol) throw DomainError("covariance is not positive semidefinite");
    root_ = es.eigenvectors() * w.cwiseMax(0.0).cwiseSqrt().asDiagonal();
}

CVector GaussianSampler::draw(Rng& rng) const {
    CVector z = complex_normal(rng, root_.cols(), 1);
    return root_ * z;
}

CVector lfm_waveform(double B, double T_lfm, double fs, double phase0) {
    const auto n = static_cast<Eigen::Index>(std::floor(T_lfm * fs + 1e-9));
    CVector s(n);
    const double k = B / T_lfm;
    for (Eigen::Index i = 0; i < n; ++i) {
        double t = i / fs - T_lfm / 2.0;
        s(i) = std::polar(1.0, std::numbers::pi * k * t * t + phase0);
    }
    return s;
}

CVector generate_interference(const InterferenceSpec& spec, Eigen::Index M, Rng& rng) {
    spec.validate();
    if (M < 1) throw DimensionError("interference length must be >= 1");
    if (spec.kind == InterferenceSpec::Kind::gaussian_process) {
        if (spec.covariance.rows() != M) throw DimensionError("covariance size does not match M");
        return GaussianSampler(spec.covariance).draw(rng);
    }
    const auto total = static_cast<Eigen::Index>(std::floor(spec.T_lfm * spec.symbol_rate + 1e-9));
    if (M > total)
        throw DimensionError("segment length " + std::to_string(M) + " exceeds LFM length " + std::to_string(total));
    std::uniform_real_distribution<double> ph(0.0, 2.0 * std::numbers::pi);
    std::uniform_int_distribution<Eigen::Index> off(0, total - M);
    double phase0 = ph(rng);
    Eigen::Index start = off(rng);
    const double k = spec.B / spec.T_lfm;
    CVector s(M);
    for (Eigen::Index i = 0; i < M; ++i) {
        double t = (start + i) / spec.symbol_rate - spec.T_lfm / 2.0;
        s(i) = std::polar(1.0, std::numbers::pi * k * t * t + phase0);
    }
    return s;
}

CVector generate_bpsk_pilot(Eigen::Index N, Rng& rng) {
    std::bernoulli_distribution coin(0.5);
    CVector p(N);
    for (Eigen::Index i = 0; i < N; ++i) p(i) = coin(rng) ? 1.0 : -1.0;
    return p;
}

MixResult scale_and_mix(const CVector& Ah, const CVector& n, double snr_db, double sir_db, Rng& rng) {
    if (Ah.size() != n.size()) throw DimensionError("scale_and_mix: Ah and n lengths differ");
    const double ps = Ah.squaredNorm();
    if (ps == 0.0) throw DomainError("scale_and_mix: degenerate signal (Ah = 0)");
    const double pn = n.squaredNorm();
    if (pn == 0.0) throw DomainError("scale_and_mix: degenerate interference (n = 0)");
    MixResult r;
    r.interference_scale = std::sqrt(ps / (pn * std::pow(10.0, sir_db / 10.0)));
    r.n_scaled = r.interference_scale * n;
    const auto M = Ah.size();
    r.sigma_y2 = ps / (static_cast<double>(M) * std::pow(10.0, snr_db / 10.0));
    r.noise = complex_normal(rng, M, 1, r.sigma_y2);
    r.y = Ah + r.n_scaled + r.noise;
    return r;
}

CMatrix sinc_covariance(Eigen::Index M, double bw) {
    CMatrix S(M, M);
    for (Eigen::Index i = 0; i < M; ++i)
        for (Eigen::Index j = 0; j < M; ++j) {
            double x = bw * static_cast<double>(i - j);
            S(i, j) = x == 0.0 ? 1.0 : std::sin(std::numbers::pi * x) / (std::numbers::pi * x);
        }
    return S;
}

}  // namespace dmsbl
