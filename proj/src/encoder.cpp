#include "toolflow/encoder.hpp"

#include <cmath>

namespace toolflow {

namespace {

constexpr std::uint64_t kImageSalt = 0x696d616765ull;   // distinct hash domains
constexpr std::uint64_t kTextSalt = 0x74657874ull;
constexpr std::uint64_t kMemorySalt = 0x6d656d6full;
constexpr int kHashProbes = 4;
constexpr char kQueryContextSep = '\x1f';

void add_hashed(Vec& acc, std::uint64_t key, double weight, int dim) {
    for (int p = 0; p < kHashProbes; ++p) {
        const std::uint64_t h = splitmix64(key + static_cast<std::uint64_t>(p) * 0x9e3779b9ull);
        const int idx = static_cast<int>(h % static_cast<std::uint64_t>(dim));
        const double sign = (h >> 63) ? -1.0 : 1.0;
        acc[idx] += sign * weight;
    }
}

Vec normalized_or_zero(Vec v) {
    const double norm = v.norm();
    if (norm > 0.0) v /= norm;
    return v;
}

Vec hash_image(const ImageBlock& img, int dim) {
    Vec acc = Vec::Zero(dim);
    for (std::size_t i = 0; i < img.data.size(); ++i) {
        add_hashed(acc, mix64(kImageSalt, i), img.data[i], dim);
    }
    return normalized_or_zero(std::move(acc));
}

Vec hash_text(const std::string& query, const std::string& context, int dim) {
    std::string joined = query;
    joined.push_back(kQueryContextSep);
    joined += context;
    const std::vector<std::string> tokens = tokenize(joined);
    Vec acc = Vec::Zero(dim);
    for (std::size_t i = 0; i < tokens.size(); ++i) {
        add_hashed(acc, mix64(kTextSalt, fnv1a64(tokens[i])), 1.0, dim);
        if (i + 1 < tokens.size()) {
            add_hashed(acc, mix64(kTextSalt, fnv1a64(tokens[i] + " " + tokens[i + 1])), 1.0, dim);
        }
    }
    return normalized_or_zero(std::move(acc));
}

Vec hash_memory(const Memory& memory, int dim) {
    const std::vector<std::string> tokens = memory.render_context();
    Vec acc = Vec::Zero(dim);
    if (tokens.empty()) return acc;
    for (const std::string& t : tokens) {
        add_hashed(acc, mix64(kMemorySalt, fnv1a64(t)), 1.0, dim);
    }
    acc /= static_cast<double>(tokens.size());
    return normalized_or_zero(std::move(acc));
}

Mat uniform_init(int rows, int cols, Rng& rng) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(cols));
    std::uniform_real_distribution<double> dist(-bound, bound);
    Mat m(rows, cols);
    for (int r = 0; r < rows; ++r) {
        for (int c = 0; c < cols; ++c) m(r, c) = dist(rng);
    }
    return m;
}

}  // namespace

FeatureExtractors default_extractors(int dim) {
    FeatureExtractors ext;
    ext.dim = dim;
    ext.image_fn = [dim](const ImageBlock& img) { return hash_image(img, dim); };
    ext.text_fn = [dim](const std::string& q, const std::string& c) { return hash_text(q, c, dim); };
    ext.memory_fn = [dim](const Memory& m) { return hash_memory(m, dim); };
    return ext;
}

EncoderParams init_encoder_params(int feature_dim, Rng& rng) {
    EncoderParams p;
    p.w_image = uniform_init(kImageProjDim, feature_dim, rng);
    p.w_query = uniform_init(kQueryProjDim, feature_dim, rng);
    p.w_memory = uniform_init(kMemoryProjDim, feature_dim, rng);
    return p;
}

Vec layer_norm(const Vec& z, double eps) {
    const double n = static_cast<double>(z.size());
    const double mean = z.mean();
    const Vec centered = z.array() - mean;
    const double var = centered.squaredNorm() / n;
    return centered / std::sqrt(var + eps);
}

EncodeCache encode_state_cached(const State& state, const FeatureExtractors& ext,
                                const EncoderParams& params) {
    EncodeCache cache;
    cache.xi = ext.image_fn(state.image);
    cache.zeta = ext.text_fn(state.query, state.context);
    cache.mu = ext.memory_fn(state.memory);

    auto check = [](const Mat& w, const Vec& v, const char* name) {
        if (w.cols() != v.size()) {
            throw DimensionMismatch(std::string("projection ") + name + " expects width " +
                                    std::to_string(w.cols()) + " but the extractor produced " +
                                    std::to_string(v.size()));
        }
    };
    check(params.w_image, cache.xi, "w_image");
    check(params.w_query, cache.zeta, "w_query");
    check(params.w_memory, cache.mu, "w_memory");

    cache.z.resize(kStateDim);
    cache.z.head(kImageProjDim).noalias() = params.w_image * cache.xi;
    cache.z.segment(kImageProjDim, kQueryProjDim).noalias() = params.w_query * cache.zeta;
    cache.z.tail(kMemoryProjDim).noalias() = params.w_memory * cache.mu;

    const double mean = cache.z.mean();
    const Vec centered = cache.z.array() - mean;
    const double var = centered.squaredNorm() / static_cast<double>(kStateDim);
    cache.inv_sigma = 1.0 / std::sqrt(var + kLayerNormEps);
    cache.h = centered * cache.inv_sigma;
    return cache;
}

Vec encode_state(const State& state, const FeatureExtractors& ext, const EncoderParams& params) {
    return encode_state_cached(state, ext, params).h;
}

}  // namespace toolflow
