#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dmsbl/types.hpp"

namespace dmsbl {

// Layer program of a resolution-preserving 1-D conv net with time conditioning.
//
// Registers: an embedding vector (starts as the sinusoidal embedding of t, sized by the
// first dense layer's in_ch) and a C x M feature map (starts as [re; im], C = 2).
//   dense       emb <- W emb + b
//   relu        applies to the register written by the previous layer
//   time-bias   feat[c] += (W emb + b)[c]
//   conv1d      feat <- conv(feat), weights [out][in][k], kernel = 2 * padding + 1
//   skip-begin  push feat
//   skip-end    feat <- [feat; pop]
// The final feature map must have 2 channels: [re; im] of the score.
struct Layer {
    enum Kind : std::uint8_t { conv1d = 0, relu = 1, skip_begin = 2, skip_end = 3, time_bias = 4, dense = 5 };
    Kind kind = relu;
    std::uint32_t in_ch = 0, out_ch = 0, kernel = 0, padding = 0;
    std::vector<float> weights;
    std::vector<float> bias;

    std::size_t weight_count() const;
    std::size_t bias_count() const;
};

class ScoreNetwork {
public:
    ScoreNetwork() = default;
    explicit ScoreNetwork(std::vector<Layer> layers);

    static ScoreNetwork load(const std::string& path);
    void save(const std::string& path) const;

    // Reference architecture: 2-layer time MLP, stem conv, blocks/2 encoder and blocks/2
    // decoder blocks joined by skips, 2-channel head. Weights drawn with fan-in scaling.
    static ScoreNetwork reference(std::uint32_t width, std::uint32_t blocks, std::uint32_t emb_dim, Rng& rng);

    // Columns of X are samples; output has the same shape.
    CMatrix evaluate(const CMatrix& X, double t) const;

    const std::vector<Layer>& layers() const { return layers_; }
    std::vector<Layer>& mutable_layers() { return layers_; }
    std::uint32_t embedding_dim() const { return emb_dim_; }

    // Throws IoError describing the first inconsistency.
    void validate();

private:
    std::vector<Layer> layers_;
    std::uint32_t emb_dim_ = 0;
};

std::vector<float> sinusoidal_embedding(double t, std::uint32_t dim);

}  // namespace dmsbl
