#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <random>
#include <string>
#include <string_view>
#include <vector>

namespace toolflow {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;
using Rng = std::mt19937_64;

// ---- hashing ----------------------------------------------------------

inline constexpr std::uint64_t kFnvOffset = 1469598103934665603ull;
inline constexpr std::uint64_t kFnvPrime = 1099511628211ull;

inline std::uint64_t fnv1a64(std::string_view s, std::uint64_t h = kFnvOffset) {
    for (unsigned char c : s) {
        h ^= c;
        h *= kFnvPrime;
    }
    return h;
}

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

inline std::uint64_t mix64(std::uint64_t a, std::uint64_t b) {
    return splitmix64(a ^ splitmix64(b));
}

// Derives an independent generator for a named sub-stream of a master seed.
inline Rng make_rng(std::uint64_t seed, std::uint64_t stream = 0) {
    return Rng(mix64(seed, stream));
}

// ---- text -------------------------------------------------------------

// Whitespace-delimited word tokenizer; the default unit of all token budgets.
std::vector<std::string> tokenize(std::string_view text);
std::size_t token_count(std::string_view text);
std::string join_tokens(const std::vector<std::string>& tokens);

// Keeps the last `budget` tokens (drops from the front).
std::string truncate_tokens_front(std::string_view text, std::size_t budget);
// Keeps the first `budget` tokens (drops from the back).
std::string truncate_tokens_back(std::string_view text, std::size_t budget);

// Lowercase, collapse runs of whitespace to single spaces, trim ends.
std::string canonicalize_text(std::string_view text);

// Stable numeric renderings used in reports and payloads.
std::string format_double(double v);   // compact, reproducible ("%.12g")
std::string format_metric2(double v);  // fixed two decimals ("%.2f")
std::string hex64(std::uint64_t v);    // zero-padded 16-digit hex

}  // namespace toolflow
