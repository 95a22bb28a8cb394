#pragma once

#include <optional>
#include <vector>

#include "dmsbl/types.hpp"

namespace dmsbl {

// M x L Toeplitz operator with A(m, l) = pilot[L - 1 + m - l].
class PilotMatrix {
public:
    PilotMatrix() = default;
    PilotMatrix(CVector pilot, Eigen::Index L);

    Eigen::Index rows() const { return M_; }
    Eigen::Index cols() const { return L_; }
    const CVector& pilot() const { return pilot_; }
    const CMatrix& dense() const { return A_; }
    const CMatrix& gram() const { return gram_; }  // A A^H

    // Columns of H are independent channel vectors.
    CMatrix apply(const CMatrix& H) const { return A_ * H; }
    CMatrix apply_adjoint(const CMatrix& V) const { return A_.adjoint() * V; }

private:
    CVector pilot_;
    Eigen::Index L_ = 0, M_ = 0;
    CMatrix A_;
    CMatrix gram_;
};

PilotMatrix build_pilot_matrix(const CVector& pilot, Eigen::Index L);

struct MeasurementModel {
    PilotMatrix A;
    CVector y;
    double sigma_y2 = 0.0;

    MeasurementModel() = default;
    MeasurementModel(PilotMatrix a, CVector y_, double s2);
    Eigen::Index M() const { return A.rows(); }
    Eigen::Index L() const { return A.cols(); }
};

struct ChannelSpec {
    int p0 = 10;
    int L = 200;
    double inter_arrival_mean = 3e-3;
    double decay_db = 20.0;
    double decay_span = 30e-3;
    double symbol_rate = 4e3;
    bool normalize = true;

    void validate() const;
};

struct ChannelDraw {
    CVector h;
    std::vector<int> delays;  // tap index per path
    std::vector<cd> gains;    // before normalization
    bool truncated = false;
};

ChannelDraw generate_channel_paths(const ChannelSpec& spec, Rng& rng);
CVector generate_channel(const ChannelSpec& spec, Rng& rng);

struct InterferenceSpec {
    enum class Kind { lfm, gaussian_process };
    Kind kind = Kind::lfm;
    double B = 1e3;
    double T_lfm = 2.0;
    double symbol_rate = 4e3;
    CMatrix covariance;  // gaussian_process only

    void validate() const;
};

// Draws from CN(0, covariance) through a cached Hermitian square root.
class GaussianSampler {
public:
    explicit GaussianSampler(const CMatrix& covariance);
    CVector draw(Rng& rng) const;
    const CMatrix& root() const { return root_; }

private:
    CMatrix root_;
};

CVector generate_interference(const InterferenceSpec& spec, Eigen::Index M, Rng& rng);

// Full complex-baseband chirp of length floor(T_lfm * f_sym), centered in time.
CVector lfm_waveform(double B, double T_lfm, double fs, double phase0);

CVector generate_bpsk_pilot(Eigen::Index N, Rng& rng);

struct MixResult {
    CVector y;
    double sigma_y2 = 0.0;
    CVector n_scaled;
    CVector noise;
    double interference_scale = 1.0;  // n_scaled = interference_scale * n
};

MixResult scale_and_mix(const CVector& Ah, const CVector& n, double snr_db, double sir_db, Rng& rng);

// Band-limited covariance sinc(bw * (i - j)) with normalized sinc.
CMatrix sinc_covariance(Eigen::Index M, double bw);

}  // namespace dmsbl
