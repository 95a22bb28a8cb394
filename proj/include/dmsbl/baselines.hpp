#pragma once

#include <string>
#include <vector>

#include "dmsbl/signal_model.hpp"

namespace dmsbl {

struct BaselineResult {
    CVector h_hat;
    std::string method;
    int iterations = 0;
    bool converged = true;

    std::vector<Eigen::Index> support;     // omp
    std::vector<double> residual_norms;    // omp, after each iteration
    RVector gamma;                         // sbl
    double noise_var = 0.0;                // sbl
    std::vector<double> evidence;          // sbl, log p(y) per iteration
};

// prior_var A^H (prior_var A A^H + noise_var I)^-1 y
BaselineResult mmse_estimate(const MeasurementModel& model, double prior_var, double noise_var);

// Greedy selection of max |A^H r|, ties to the lowest index, least-squares refit on the support.
BaselineResult omp_estimate(const MeasurementModel& model, int sparsity);

// EM-SBL with the noise variance estimated in the loop.
BaselineResult sbl_estimate(const MeasurementModel& model, int max_iters = 500, double tol = 1e-6);

}  // namespace dmsbl
