#include "dmsbl/baselines.hpp"

#include <Eigen/Cholesky>
#include <Eigen/QR>
#include <cmath>
#include <numbers>

#include "dmsbl/score.hpp"

namespace dmsbl {

BaselineResult mmse_estimate(const MeasurementModel& model, double prior_var, double noise_var) {
    if (!(noise_var > 0)) throw DomainError("mmse: noise_var must be > 0");
    if (!(prior_var >= 0)) throw DomainError("mmse: prior_var must be >= 0");
    CMatrix C = prior_var * model.A.gram();
    C.diagonal().array() += noise_var;
    Eigen::LLT<CMatrix> llt(C);
    if (llt.info() != Eigen::Success) throw NumericError("mmse: covariance factorization failed");
    BaselineResult r;
    r.method = "mmse";
    r.h_hat = prior_var * model.A.apply_adjoint(llt.solve(model.y));
    r.iterations = 1;
    return r;
}

BaselineResult omp_estimate(const MeasurementModel& model, int sparsity) {
    const Eigen::Index L = model.L(), M = model.M();
    if (sparsity < 1 || sparsity > std::min(L, M))
        throw DomainError("omp: sparsity must be in [1, min(M, L)], got " + std::to_string(sparsity));
    const CMatrix& A = model.A.dense();
    BaselineResult r;
    r.method = "omp";
    r.h_hat = CVector::Zero(L);
    std::vector<char> used(static_cast<std::size_t>(L), 0);
    CVector resid = model.y;
    CVector coef;
    for (int it = 0; it < sparsity; ++it) {
        CVector corr = A.adjoint() * resid;
        Eigen::Index best = -1;
        double best_val = -1.0;
        for (Eigen::Index l = 0; l < L; ++l) {
            if (used[l]) continue;
            double c = std::abs(corr(l));
            if (c > best_val) {
                best_val = c;
                best = l;
            }
        }
        if (best < 0 || best_val == 0.0) break;
        used[best] = 1;
        r.support.push_back(best);
        CMatrix As(M, static_cast<Eigen::Index>(r.support.size()));
        for (std::size_t j = 0; j < r.support.size(); ++j) As.col(j) = A.col(r.support[j]);
        Eigen::ColPivHouseholderQR<CMatrix> qr(As);
        if (qr.rank() < As.cols()) {
            r.support.pop_back();
            r.converged = false;
            continue;
        }
        coef = qr.solve(model.y);
        resid = model.y - As * coef;
        r.residual_norms.push_back(resid.norm());
        r.iterations = it + 1;
    }
    for (std::size_t j = 0; j < r.support.size(); ++j) r.h_hat(r.support[j]) = coef(j);
    return r;
}

BaselineResult sbl_estimate(const MeasurementModel& model, int max_iters, double tol) {
    if (max_iters < 1) throw DomainError("sbl: max_iters must be >= 1");
    const Eigen::Index L = model.L(), M = model.M();
    const CMatrix& A = model.A.dense();
    BaselineResult r;
    r.method = "sbl";
    const double y2 = model.y.squaredNorm();
    if (y2 == 0.0) {
        r.h_hat = CVector::Zero(L);
        r.gamma = RVector::Constant(L, gamma_floor);
        r.iterations = 0;
        return r;
    }
    const double noise_floor = 1e-12 * y2 / M;
    RVector gamma = RVector::Ones(L);
    double s2 = 0.1 * y2 / M;
    double best_ev = -std::numeric_limits<double>::infinity();
    r.converged = false;
    for (int it = 0; it < max_iters; ++it) {
        CMatrix Sy = A * gamma.asDiagonal() * A.adjoint();
        Sy.diagonal().array() += s2;
        Eigen::LLT<CMatrix> llt(Sy);
        if (llt.info() != Eigen::Success) throw NumericError("sbl: covariance factorization failed");
        CVector w = llt.solve(model.y);
        CMatrix SiA = llt.solve(A);
        double logdet = 2.0 * llt.matrixL().toDenseMatrix().diagonal().real().array().log().sum();
        double ev = -logdet - model.y.dot(w).real() - M * std::log(std::numbers::pi);
        r.evidence.push_back(ev);

        CVector mu = gamma.asDiagonal() * (A.adjoint() * w);
        RVector quad = (A.adjoint() * SiA).diagonal().real();
        RVector sig = gamma.array() - gamma.array().square() * quad.array();
        sig = sig.cwiseMax(0.0);
        if (ev >= best_ev) {
            best_ev = ev;
            r.h_hat = mu;
            r.gamma = gamma;
            r.noise_var = s2;
        }
        RVector g_new = (sig.array() + mu.cwiseAbs2().array()).cwiseMax(gamma_floor);
        double dof = (1.0 - sig.array() / gamma.array()).sum();
        double s2_new = std::max(noise_floor, ((model.y - A * mu).squaredNorm() + s2 * dof) / M);
        double change = (g_new - gamma).norm() / std::max(gamma.norm(), 1e-300);
        gamma = g_new;
        s2 = s2_new;
        r.iterations = it + 1;
        if (change < tol) {
            r.converged = true;
            break;
        }
    }
    // Posterior mean at the final hyperparameters.
    CMatrix Sy = A * gamma.asDiagonal() * A.adjoint();
    Sy.diagonal().array() += s2;
    Eigen::LLT<CMatrix> llt(Sy);
    if (r.converged && llt.info() == Eigen::Success) {
        r.h_hat = gamma.asDiagonal() * (A.adjoint() * llt.solve(model.y));
        r.gamma = gamma;
        r.noise_var = s2;
    }
    return r;
}

}  // namespace dmsbl
