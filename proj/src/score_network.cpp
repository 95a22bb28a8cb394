#include "dmsbl/score_network.hpp"

#include <cmath>
#include <cstring>
#include <fstream>

#include "dmsbl/binio.hpp"

namespace dmsbl {

namespace {

using FMatrix = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic>;
using FRowMajor = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using FVector = Eigen::VectorXf;

const char* kind_name(Layer::Kind k) {
    switch (k) {
        case Layer::conv1d: return "conv1d";
        case Layer::relu: return "relu";
        case Layer::skip_begin: return "skip-begin";
        case Layer::skip_end: return "skip-end";
        case Layer::time_bias: return "time-bias";
        case Layer::dense: return "dense";
    }
    return "?";
}

Eigen::Map<const FRowMajor> weight_map(const Layer& l) {
    Eigen::Index cols = static_cast<Eigen::Index>(l.in_ch) * (l.kind == Layer::conv1d ? l.kernel : 1);
    return {l.weights.data(), static_cast<Eigen::Index>(l.out_ch), cols};
}

Eigen::Map<const FVector> bias_map(const Layer& l) {
    return {l.bias.data(), static_cast<Eigen::Index>(l.bias.size())};
}

// F is C x (M K), sample k occupies columns [k M, (k + 1) M).
FMatrix conv(const Layer& l, const FMatrix& F, Eigen::Index M) {
    const Eigen::Index C = F.rows(), MK = F.cols();
    const int k = static_cast<int>(l.kernel), p = static_cast<int>(l.padding);
    FMatrix cols = FMatrix::Zero(C * k, MK);
    for (Eigen::Index s = 0; s < MK / M; ++s)
        for (Eigen::Index c = 0; c < C; ++c)
            for (int j = 0; j < k; ++j) {
                const int shift = j - p;
                const Eigen::Index lo = std::max<Eigen::Index>(0, -shift);
                const Eigen::Index hi = std::min<Eigen::Index>(M, M - shift);
                if (hi <= lo) continue;
                cols.row(c * k + j).segment(s * M + lo, hi - lo) = F.row(c).segment(s * M + lo + shift, hi - lo);
            }
    FMatrix out = weight_map(l) * cols;
    out.colwise() += bias_map(l);
    return out;
}

}  // namespace

std::size_t Layer::weight_count() const {
    switch (kind) {
        case conv1d: return std::size_t(out_ch) * in_ch * kernel;
        case dense:
        case time_bias: return std::size_t(out_ch) * in_ch;
        default: return 0;
    }
}

std::size_t Layer::bias_count() const {
    switch (kind) {
        case conv1d:
        case dense:
        case time_bias: return out_ch;
        default: return 0;
    }
}

std::vector<float> sinusoidal_embedding(double t, std::uint32_t dim) {
    std::vector<float> e(dim);
    const std::uint32_t half = dim / 2;
    for (std::uint32_t k = 0; k < half; ++k) {
        double f = std::exp(-std::log(10000.0) * k / half);
        e[k] = static_cast<float>(std::sin(1000.0 * t * f));
        e[half + k] = static_cast<float>(std::cos(1000.0 * t * f));
    }
    return e;
}

ScoreNetwork::ScoreNetwork(std::vector<Layer> layers) : layers_(std::move(layers)) { validate(); }

void ScoreNetwork::validate() {
    if (layers_.empty()) throw IoError("score network: empty layer list");
    std::uint32_t emb = 0;
    std::uint32_t feat = 2;
    bool last_emb = false;
    std::vector<std::uint32_t> stack;
    emb_dim_ = 0;
    for (std::size_t i = 0; i < layers_.size(); ++i) {
        const Layer& l = layers_[i];
        auto fail = [&](const std::string& msg) {
            throw IoError("score network layer " + std::to_string(i) + " (" + kind_name(l.kind) + "): " + msg);
        };
        if (l.kind > Layer::dense) fail("unknown kind");
        if (l.weights.size() != l.weight_count()) fail("weight count mismatch");
        if (l.bias.size() != l.bias_count()) fail("bias count mismatch");
        switch (l.kind) {
            case Layer::dense:
            case Layer::time_bias:
                if (emb == 0) {
                    if (l.in_ch == 0 || l.in_ch % 2) fail("embedding size must be even and positive");
                    emb = emb_dim_ = l.in_ch;
                }
                if (l.in_ch != emb) fail("in_ch " + std::to_string(l.in_ch) + " != embedding size " + std::to_string(emb));
                if (l.kind == Layer::dense) {
                    emb = l.out_ch;
                    last_emb = true;
                } else {
                    if (l.out_ch != feat) fail("out_ch must equal feature channels " + std::to_string(feat));
                    last_emb = false;
                }
                break;
            case Layer::relu: {
                std::uint32_t c = last_emb ? emb : feat;
                if (l.in_ch != c || l.out_ch != c) fail("channel count mismatch");
                break;
            }
            case Layer::conv1d:
                if (l.in_ch != feat) fail("in_ch " + std::to_string(l.in_ch) + " != " + std::to_string(feat));
                if (l.kernel != 2 * l.padding + 1) fail("kernel must equal 2 * padding + 1");
                feat = l.out_ch;
                last_emb = false;
                break;
            case Layer::skip_begin:
                if (l.in_ch != feat || l.out_ch != feat) fail("channel count mismatch");
                stack.push_back(feat);
                last_emb = false;
                break;
            case Layer::skip_end:
                if (stack.empty()) fail("skip-end without skip-begin");
                if (l.in_ch != feat || l.out_ch != feat + stack.back()) fail("channel count mismatch");
                feat = l.out_ch;
                stack.pop_back();
                last_emb = false;
                break;
        }
    }
    if (!stack.empty()) throw IoError("score network: unmatched skip-begin");
    if (feat != 2) throw IoError("score network: output must have 2 channels, has " + std::to_string(feat));
}

CMatrix ScoreNetwork::evaluate(const CMatrix& X, double t) const {
    const Eigen::Index M = X.rows(), K = X.cols();
    if (M == 0 || K == 0) throw DimensionError("score network: empty input");
    FMatrix F(2, M * K);
    for (Eigen::Index k = 0; k < K; ++k)
        for (Eigen::Index m = 0; m < M; ++m) {
            F(0, k * M + m) = static_cast<float>(X(m, k).real());
            F(1, k * M + m) = static_cast<float>(X(m, k).imag());
        }
    FVector emb;
    if (emb_dim_ > 0) {
        auto e = sinusoidal_embedding(t, emb_dim_);
        emb = Eigen::Map<FVector>(e.data(), e.size());
    }
    bool last_emb = false;
    std::vector<FMatrix> stack;
    for (const Layer& l : layers_) {
        switch (l.kind) {
            case Layer::dense:
                emb = weight_map(l) * emb + bias_map(l);
                last_emb = true;
                break;
            case Layer::relu:
                if (last_emb)
                    emb = emb.cwiseMax(0.0f);
                else
                    F = F.cwiseMax(0.0f);
                break;
            case Layer::time_bias: {
                FVector b = weight_map(l) * emb + bias_map(l);
                F.colwise() += b;
                last_emb = false;
                break;
            }
            case Layer::conv1d:
                F = conv(l, F, M);
                last_emb = false;
                break;
            case Layer::skip_begin:
                stack.push_back(F);
                last_emb = false;
                break;
            case Layer::skip_end: {
                FMatrix G(F.rows() + stack.back().rows(), F.cols());
                G << F, stack.back();
                stack.pop_back();
                F = std::move(G);
                last_emb = false;
                break;
            }
        }
    }
    if (!F.allFinite()) throw NumericError("score network: non-finite activations");
    CMatrix out(M, K);
    for (Eigen::Index k = 0; k < K; ++k)
        for (Eigen::Index m = 0; m < M; ++m) out(m, k) = cd(F(0, k * M + m), F(1, k * M + m));
    return out;
}

void ScoreNetwork::save(const std::string& path) const {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot open " + path + " for writing");
    os.write("DMSC", 4);
    binio::put<std::uint32_t>(os, 1);
    binio::put<std::uint32_t>(os, static_cast<std::uint32_t>(layers_.size()));
    for (const Layer& l : layers_) {
        binio::put<std::uint8_t>(os, l.kind);
        binio::put<std::uint32_t>(os, l.in_ch);
        binio::put<std::uint32_t>(os, l.out_ch);
        binio::put<std::uint32_t>(os, l.kernel);
        binio::put<std::uint32_t>(os, l.padding);
        os.write(reinterpret_cast<const char*>(l.weights.data()), std::streamsize(l.weights.size() * sizeof(float)));
        os.write(reinterpret_cast<const char*>(l.bias.data()), std::streamsize(l.bias.size() * sizeof(float)));
    }
    if (!os) throw IoError("write failed: " + path);
}

ScoreNetwork ScoreNetwork::load(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open weight file " + path);
    char magic[4];
    is.read(magic, 4);
    if (!is || std::memcmp(magic, "DMSC", 4) != 0) throw IoError(path + ": bad magic, expected DMSC");
    auto version = binio::get<std::uint32_t>(is, "version");
    if (version != 1) throw IoError(path + ": unsupported version " + std::to_string(version));
    auto n = binio::get<std::uint32_t>(is, "layer count");
    std::vector<Layer> layers(n);
    for (auto& l : layers) {
        auto kind = binio::get<std::uint8_t>(is, "layer kind");
        if (kind > Layer::dense) throw IoError(path + ": unknown layer kind " + std::to_string(kind));
        l.kind = static_cast<Layer::Kind>(kind);
        l.in_ch = binio::get<std::uint32_t>(is, "in_ch");
        l.out_ch = binio::get<std::uint32_t>(is, "out_ch");
        l.kernel = binio::get<std::uint32_t>(is, "kernel");
        l.padding = binio::get<std::uint32_t>(is, "padding");
        l.weights.resize(l.weight_count());
        l.bias.resize(l.bias_count());
        is.read(reinterpret_cast<char*>(l.weights.data()), std::streamsize(l.weights.size() * sizeof(float)));
        is.read(reinterpret_cast<char*>(l.bias.data()), std::streamsize(l.bias.size() * sizeof(float)));
        if (!is) throw IoError(path + ": truncated weights");
    }
    is.peek();
    if (!is.eof()) throw IoError(path + ": trailing bytes after last layer");
    return ScoreNetwork(std::move(layers));
}

ScoreNetwork ScoreNetwork::reference(std::uint32_t width, std::uint32_t blocks, std::uint32_t emb_dim, Rng& rng) {
    std::normal_distribution<float> nd(0.0f, 1.0f);
    std::vector<Layer> L;
    auto add = [&](Layer::Kind kind, std::uint32_t in, std::uint32_t out, std::uint32_t kernel = 0) {
        Layer l;
        l.kind = kind;
        l.in_ch = in;
        l.out_ch = out;
        l.kernel = kernel;
        l.padding = kernel ? (kernel - 1) / 2 : 0;
        l.weights.resize(l.weight_count());
        l.bias.assign(l.bias_count(), 0.0f);
        float fan = static_cast<float>(std::max<std::size_t>(1, in * std::max<std::uint32_t>(1, kernel)));
        float sd = std::sqrt(2.0f / fan);
        for (auto& w : l.weights) w = sd * nd(rng);
        L.push_back(std::move(l));
    };
    add(Layer::dense, emb_dim, width);
    add(Layer::relu, width, width);
    add(Layer::dense, width, width);
    add(Layer::conv1d, 2, width, 3);
    const std::uint32_t half = blocks / 2;
    for (std::uint32_t b = 0; b < half; ++b) {
        add(Layer::conv1d, width, width, 3);
        add(Layer::time_bias, width, width);
        add(Layer::relu, width, width);
        add(Layer::skip_begin, width, width);
    }
    for (std::uint32_t b = 0; b < half; ++b) {
        add(Layer::skip_end, width, 2 * width);
        add(Layer::conv1d, 2 * width, width, 3);
        add(Layer::relu, width, width);
    }
    add(Layer::conv1d, width, 2, 3);
    return ScoreNetwork(std::move(L));
}

}  // namespace dmsbl
