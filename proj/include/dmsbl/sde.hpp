#pragma once

#include "dmsbl/types.hpp"

namespace dmsbl {

inline constexpr double alpha_floor = 1e-5;

class VpSchedule {
public:
    // consistent: alpha = exp(-1/2 int_0^t beta) = exp(-t (beta(t) + beta_min) / 4).
    // paper: exp(-t (beta(t) - beta_min) / 4).
    enum class Form { consistent, paper };

    VpSchedule(double beta_min = 0.1, double beta_max = 20.0, int steps = 500, Form form = Form::consistent);

    double beta_min() const { return bmin_; }
    double beta_max() const { return bmax_; }
    int steps() const { return T_; }
    Form form() const { return form_; }
    double dt() const { return 1.0 / T_; }

    double beta(double t) const;
    double alpha(double t) const;
    // alpha clamped below by alpha_floor, for use as a divisor.
    double alpha_safe(double t) const { return std::max(alpha(t), alpha_floor); }
    // Complex kernel variance 2 (1 - alpha^2).
    double perturb_variance(double t) const;
    // t for reverse step i: (i + 1) / T.
    double time_at(int i) const { return static_cast<double>(i + 1) / T_; }

private:
    void check_t(double t) const;
    double bmin_, bmax_;
    int T_;
    Form form_;
};

// alpha x0 + w, w ~ CN(0, 2 (1 - alpha^2) I).
CMatrix perturb(const CMatrix& x0, double t, const VpSchedule& sched, Rng& rng);

// (x_t + 2 (1 - alpha^2) score) / alpha.
CMatrix tweedie_denoise(const CMatrix& x_t, double t, const CMatrix& score, const VpSchedule& sched);

}  // namespace dmsbl
