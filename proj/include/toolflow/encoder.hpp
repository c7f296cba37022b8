#pragma once

#include "toolflow/common.hpp"
#include "toolflow/errors.hpp"
#include "toolflow/memory.hpp"
#include "toolflow/supernet.hpp"

#include <functional>
#include <string>

namespace toolflow {

// Projection output widths; their concatenation is the controller state.
inline constexpr int kImageProjDim = 256;
inline constexpr int kQueryProjDim = 128;
inline constexpr int kMemoryProjDim = 128;
inline constexpr int kStateDim = kImageProjDim + kQueryProjDim + kMemoryProjDim;

inline constexpr int kDefaultFeatureDim = 64;
inline constexpr double kLayerNormEps = 1e-5;

// Episode state the controller conditions on. `position` is a container id,
// or empty before the first step.
struct State {
    std::string query;
    ImageBlock image;
    std::string context;
    Memory memory;
    std::string position;

    StateView view() const { return StateView{query, image, context, memory}; }
};

// Frozen deterministic featurizers: image grid, query+context text, and the
// rendered memory context. Bit-stable pure functions, never trained.
struct FeatureExtractors {
    int dim = kDefaultFeatureDim;
    std::function<Vec(const ImageBlock&)> image_fn;
    std::function<Vec(const std::string& query, const std::string& context)> text_fn;
    std::function<Vec(const Memory&)> memory_fn;
};

// Hash-based featurizers: signed feature hashing of grid cells, of word
// uni+bigrams of "query <sep> context", and the mean of hashed token
// embeddings of the rendered memory (zero vector when memory is empty).
FeatureExtractors default_extractors(int dim = kDefaultFeatureDim);

// Trainable projections onto the three state segments.
struct EncoderParams {
    Mat w_image;   // kImageProjDim  x feature_dim
    Mat w_query;   // kQueryProjDim  x feature_dim
    Mat w_memory;  // kMemoryProjDim x feature_dim
};

// Uniform(-1/sqrt(fan_in), +1/sqrt(fan_in)) initialization.
EncoderParams init_encoder_params(int feature_dim, Rng& rng);

// Normalizes to zero mean / unit variance (population variance, epsilon
// inside the square root, no learned affine). A constant vector maps to zero.
Vec layer_norm(const Vec& z, double eps = kLayerNormEps);

struct EncodeCache {
    Vec xi;    // image features
    Vec zeta;  // text features
    Vec mu;    // memory features
    Vec z;     // pre-normalization concatenation
    Vec h;     // normalized state, kStateDim
    double inv_sigma = 0.0;
};

// h = LayerNorm([W_image xi ; W_query zeta ; W_memory mu]).
// Throws DimensionMismatch when extractor widths do not match the projections.
EncodeCache encode_state_cached(const State& state, const FeatureExtractors& ext,
                                const EncoderParams& params);
Vec encode_state(const State& state, const FeatureExtractors& ext, const EncoderParams& params);

}  // namespace toolflow
