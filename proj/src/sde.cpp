#include "dmsbl/sde.hpp"

#include <cmath>
#include <string>

namespace dmsbl {

VpSchedule::VpSchedule(double beta_min, double beta_max, int steps, Form form)
    : bmin_(beta_min), bmax_(beta_max), T_(steps), form_(form) {
    if (!(beta_min > 0)) throw DomainError("beta_min must be > 0");
    if (!(beta_max > beta_min)) throw DomainError("beta_max must exceed beta_min");
    if (steps < 2) throw DomainError("steps must be >= 2");
}

void VpSchedule::check_t(double t) const {
    if (!(t >= 0.0 && t <= 1.0)) throw DomainError("t = " + std::to_string(t) + " outside [0, 1]");
}

double VpSchedule::beta(double t) const {
    check_t(t);
    return bmin_ + t * (bmax_ - bmin_);
}

double VpSchedule::alpha(double t) const {
    double b = beta(t);
    double s = form_ == Form::consistent ? b + bmin_ : b - bmin_;
    return std::exp(-0.25 * t * s);
}

double VpSchedule::perturb_variance(double t) const {
    double a = alpha(t);
    return 2.0 * (1.0 - a * a);
}

CMatrix perturb(const CMatrix& x0, double t, const VpSchedule& sched, Rng& rng) {
    double a = sched.alpha(t);
    double v = sched.perturb_variance(t);
    if (v == 0.0) return x0;
    return a * x0 + complex_normal(rng, x0.rows(), x0.cols(), v);
}

CMatrix tweedie_denoise(const CMatrix& x_t, double t, const CMatrix& score, const VpSchedule& sched) {
    if (x_t.rows() != score.rows() || x_t.cols() != score.cols())
        throw DimensionError("tweedie_denoise: score shape mismatch");
    double a = sched.alpha_safe(t);
    double v = sched.perturb_variance(t);
    return (x_t + v * score) / a;
}

}  // namespace dmsbl
