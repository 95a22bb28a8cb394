#include "dmsbl/score.hpp"

#include <Eigen/Eigenvalues>
#include <cmath>

#include "dmsbl/score_network.hpp"

namespace dmsbl {

ChannelPriorState::ChannelPriorState(RVector g) : gamma(std::move(g)) {
    if (!gamma.allFinite()) throw NumericError("gamma has non-finite entries");
    clamp();
}

ChannelPriorState ChannelPriorState::constant(Eigen::Index L, double rho) {
    if (!(rho > 0)) throw DomainError("rho must be > 0");
    return ChannelPriorState(RVector::Constant(L, rho));
}

void ChannelPriorState::clamp(double ceiling) {
    gamma = gamma.cwiseMax(gamma_floor).cwiseMin(std::max(ceiling, gamma_floor));
}

CMatrix channel_prior_score(const CMatrix& H, double t, const ChannelPriorState& g, const VpSchedule& s) {
    if (H.rows() != g.gamma.size()) throw DimensionError("channel_prior_score: gamma length mismatch");
    const double a2 = s.alpha(t) * s.alpha(t);
    const double v = s.perturb_variance(t);
    RVector inv = (a2 * g.gamma.array() + v).inverse();
    return -(inv.asDiagonal() * H);
}

CMatrix channel_tweedie_vjp(const CMatrix& V, double t, const ChannelPriorState& g, const VpSchedule& s) {
    if (V.rows() != g.gamma.size()) throw DimensionError("channel_tweedie_vjp: gamma length mismatch");
    const double a = s.alpha(t);
    const double v = s.perturb_variance(t);
    RVector f = (a * g.gamma.array()) / (a * a * g.gamma.array() + v);
    return f.asDiagonal() * V;
}

RVector channel_posterior_variance(double t, const ChannelPriorState& g, const VpSchedule& s) {
    const double a2 = s.alpha(t) * s.alpha(t);
    const double v = s.perturb_variance(t);
    return (v * g.gamma.array()) / (a2 * g.gamma.array() + v);
}

std::optional<CMatrix> ScoreProvider::posterior_covariance(Eigen::Index, double) const { return std::nullopt; }

std::optional<CMatrix> ZeroScore::posterior_covariance(Eigen::Index dim, double t) const {
    const double a = sched_.alpha_safe(t);
    return CMatrix(CMatrix::Identity(dim, dim) * (sched_.perturb_variance(t) / (a * a)));
}

CMatrix ScoreProvider::denoise(const CMatrix& X, double t) const {
    return tweedie_denoise(X, t, score(X, t), sched_);
}

CMatrix ScoreProvider::tweedie_vjp(const CMatrix& V, const CMatrix& X, double t) const {
    return finite_difference_vjp(*this, V, X, t);
}

CMatrix finite_difference_vjp(const ScoreProvider& p, const CMatrix& V, const CMatrix& X, double t) {
    if (V.rows() != X.rows() || V.cols() != X.cols()) throw DimensionError("vjp: shape mismatch");
    const Eigen::Index M = X.rows(), K = X.cols();
    CMatrix U(M, K), Xp(M, K), Xm(M, K);
    RVector scale(K), eps(K);
    for (Eigen::Index k = 0; k < K; ++k) {
        double nv = V.col(k).norm();
        scale(k) = nv;
        eps(k) = 1e-3 * (1.0 + X.col(k).norm() / std::sqrt(static_cast<double>(M)));
        U.col(k) = nv > 0 ? CVector(V.col(k) / nv) : CVector::Zero(M);
        Xp.col(k) = X.col(k) + eps(k) * U.col(k);
        Xm.col(k) = X.col(k) - eps(k) * U.col(k);
    }
    CMatrix Dp = p.denoise(Xp, t);
    CMatrix Dm = p.denoise(Xm, t);
    CMatrix out(M, K);
    for (Eigen::Index k = 0; k < K; ++k) out.col(k) = (Dp.col(k) - Dm.col(k)) * (scale(k) / (2.0 * eps(k)));
    return out;
}

GaussianScore::GaussianScore(const CMatrix& covariance, VpSchedule s) : ScoreProvider(s), cov_(covariance) {
    if (cov_.rows() != cov_.cols()) throw DimensionError("GaussianScore: covariance must be square");
    if (!cov_.isApprox(cov_.adjoint(), 1e-10)) throw DomainError("GaussianScore: covariance not Hermitian");
    Eigen::SelfAdjointEigenSolver<CMatrix> es(cov_);
    if (es.info() != Eigen::Success) throw NumericError("GaussianScore: eigendecomposition failed");
    w_ = es.eigenvalues();
    double tol = 1e-10 * std::max(1.0, w_.cwiseAbs().maxCoeff());
    if (w_.minCoeff() < -tol) throw DomainError("GaussianScore: covariance not positive semidefinite");
    w_ = w_.cwiseMax(0.0);
    U_ = es.eigenvectors();
}

CMatrix GaussianScore::score(const CMatrix& X, double t) const {
    if (X.rows() != U_.rows()) throw DimensionError("GaussianScore: input length mismatch");
    const double a2 = sched_.alpha(t) * sched_.alpha(t);
    const double v = sched_.perturb_variance(t);
    RVector d = a2 * w_.array() + v;
    if (d.minCoeff() <= 0.0) throw NumericError("GaussianScore: singular perturbed covariance at t = 0");
    CMatrix C = U_.adjoint() * X;
    return -(U_ * (d.cwiseInverse().asDiagonal() * C));
}

CMatrix GaussianScore::tweedie_vjp(const CMatrix& V, const CMatrix& X, double t) const {
    if (V.rows() != U_.rows() || V.cols() != X.cols()) throw DimensionError("GaussianScore: vjp shape mismatch");
    const double a = sched_.alpha(t);
    const double v = sched_.perturb_variance(t);
    RVector f = (a * w_.array()) / (a * a * w_.array() + v);
    CMatrix C = U_.adjoint() * V;
    return U_ * (f.asDiagonal() * C);
}

std::optional<CMatrix> GaussianScore::posterior_covariance(Eigen::Index dim, double t) const {
    if (dim != U_.rows()) throw DimensionError("GaussianScore: posterior covariance size mismatch");
    const double a2 = sched_.alpha(t) * sched_.alpha(t);
    const double v = sched_.perturb_variance(t);
    RVector f = (v * w_.array()) / (a2 * w_.array() + v);
    if (!f.allFinite()) f = RVector::Zero(w_.size());  // t = 0 with a zero eigenvalue
    return CMatrix(U_ * f.asDiagonal() * U_.adjoint());
}

LearnedScore::LearnedScore(std::shared_ptr<const ScoreNetwork> net, VpSchedule s, Vjp mode)
    : ScoreProvider(s), net_(std::move(net)), mode_(mode) {
    if (!net_) throw DomainError("LearnedScore: null network");
}

CMatrix LearnedScore::score(const CMatrix& X, double t) const {
    CMatrix out = net_->evaluate(X, t);
    require_finite(out, "learned score output");
    return out;
}

CMatrix LearnedScore::tweedie_vjp(const CMatrix& V, const CMatrix& X, double t) const {
    if (mode_ == Vjp::identity) return V / sched_.alpha_safe(t);
    return finite_difference_vjp(*this, V, X, t);
}

}  // namespace dmsbl
