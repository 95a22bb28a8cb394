#pragma once

#include <limits>
#include <memory>
#include <optional>

#include "dmsbl/sde.hpp"
#include "dmsbl/types.hpp"

namespace dmsbl {

inline constexpr double gamma_floor = 1e-6;

class ScoreNetwork;

// Per-tap prior variances of the channel, clamped to gamma_floor.
struct ChannelPriorState {
    RVector gamma;

    ChannelPriorState() = default;
    explicit ChannelPriorState(RVector g);
    static ChannelPriorState constant(Eigen::Index L, double rho);
    void clamp(double ceiling = std::numeric_limits<double>::infinity());
};

// Columns of H are samples. Score is -h / (2 (1 - alpha^2) + alpha^2 gamma).
CMatrix channel_prior_score(const CMatrix& H, double t, const ChannelPriorState& g, const VpSchedule& s);
// (d h_hat / d h)^H V for the Tweedie estimate through the diagonal prior: alpha gamma / Sigma_{h,t}.
CMatrix channel_tweedie_vjp(const CMatrix& V, double t, const ChannelPriorState& g, const VpSchedule& s);
// Per-tap Cov(h_0 | h_t) under the prior: gamma v / (alpha^2 gamma + v).
RVector channel_posterior_variance(double t, const ChannelPriorState& g, const VpSchedule& s);

// Prior score of the perturbed interference, batched over columns.
class ScoreProvider {
public:
    explicit ScoreProvider(VpSchedule s) : sched_(s) {}
    virtual ~ScoreProvider() = default;

    virtual CMatrix score(const CMatrix& X, double t) const = 0;
    // (d x_hat / d x)^H V, columnwise, where x_hat is the Tweedie estimate through this provider.
    virtual CMatrix tweedie_vjp(const CMatrix& V, const CMatrix& X, double t) const;

    CMatrix denoise(const CMatrix& X, double t) const;
    // Cov(x_0 | x_t) when the prior makes it state-independent, otherwise empty.
    virtual std::optional<CMatrix> posterior_covariance(Eigen::Index dim, double t) const;
    const VpSchedule& schedule() const { return sched_; }

protected:
    VpSchedule sched_;
};

// Central difference of the Tweedie map along v / |v|, in the real 2M representation.
// The Jacobian of a score field is symmetric, so the JVP equals the VJP.
CMatrix finite_difference_vjp(const ScoreProvider& p, const CMatrix& V, const CMatrix& X, double t);

class ZeroScore : public ScoreProvider {
public:
    using ScoreProvider::ScoreProvider;
    CMatrix score(const CMatrix& X, double) const override { return CMatrix::Zero(X.rows(), X.cols()); }
    CMatrix tweedie_vjp(const CMatrix& V, const CMatrix&, double t) const override {
        return V / sched_.alpha_safe(t);
    }
    std::optional<CMatrix> posterior_covariance(Eigen::Index dim, double t) const override;
};

// CN(0, Sigma) prior via a cached eigendecomposition.
class GaussianScore : public ScoreProvider {
public:
    GaussianScore(const CMatrix& covariance, VpSchedule s);
    CMatrix score(const CMatrix& X, double t) const override;
    CMatrix tweedie_vjp(const CMatrix& V, const CMatrix& X, double t) const override;
    std::optional<CMatrix> posterior_covariance(Eigen::Index dim, double t) const override;
    const CMatrix& covariance() const { return cov_; }

private:
    CMatrix cov_;
    CMatrix U_;
    RVector w_;
};

// Network score with finite-difference or identity (1 / alpha) vjp.
class LearnedScore : public ScoreProvider {
public:
    enum class Vjp { finite_difference, identity };
    LearnedScore(std::shared_ptr<const ScoreNetwork> net, VpSchedule s, Vjp mode = Vjp::finite_difference);
    CMatrix score(const CMatrix& X, double t) const override;
    CMatrix tweedie_vjp(const CMatrix& V, const CMatrix& X, double t) const override;

private:
    std::shared_ptr<const ScoreNetwork> net_;
    Vjp mode_;
};

}  // namespace dmsbl
