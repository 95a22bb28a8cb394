#pragma once

#include <Eigen/Dense>
#include <complex>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>

namespace dmsbl {

using cd = std::complex<double>;
using CVector = Eigen::VectorXcd;
using CMatrix = Eigen::MatrixXcd;
using RVector = Eigen::VectorXd;
using RMatrix = Eigen::MatrixXd;

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct DimensionError : Error { using Error::Error; };
struct DomainError : Error { using Error::Error; };
struct NumericError : Error { using Error::Error; };
struct IoError : Error { using Error::Error; };
struct ConfigError : Error { using Error::Error; };

using Rng = std::mt19937_64;

// CN(0, var): real and imaginary parts each N(0, var/2).
inline cd complex_normal(Rng& rng, double var = 1.0) {
    std::normal_distribution<double> nd(0.0, std::sqrt(var / 2.0));
    double re = nd(rng);
    double im = nd(rng);
    return {re, im};
}

inline CMatrix complex_normal(Rng& rng, Eigen::Index rows, Eigen::Index cols, double var = 1.0) {
    CMatrix out(rows, cols);
    for (Eigen::Index j = 0; j < cols; ++j)
        for (Eigen::Index i = 0; i < rows; ++i) out(i, j) = complex_normal(rng, var);
    return out;
}

inline void require_finite(const CMatrix& x, const std::string& what) {
    if (!x.allFinite()) throw NumericError("non-finite values in " + what);
}

// splitmix64, used to derive independent per-trial seeds from a master seed.
inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline double nmse_db(const CVector& est, const CVector& truth) {
    double num = (est - truth).squaredNorm();
    double den = truth.squaredNorm();
    if (den == 0.0) throw DomainError("nmse: zero reference");
    if (num == 0.0) return -100.0;
    return std::max(-100.0, 10.0 * std::log10(num / den));
}

}  // namespace dmsbl
