#include "toolflow/common.hpp"

#include <cctype>
#include <cstdio>

namespace toolflow {

std::vector<std::string> tokenize(std::string_view text) {
    std::vector<std::string> out;
    std::size_t i = 0;
    const std::size_t n = text.size();
    while (i < n) {
        while (i < n && std::isspace(static_cast<unsigned char>(text[i]))) ++i;
        std::size_t start = i;
        while (i < n && !std::isspace(static_cast<unsigned char>(text[i]))) ++i;
        if (i > start) out.emplace_back(text.substr(start, i - start));
    }
    return out;
}

std::size_t token_count(std::string_view text) {
    return tokenize(text).size();
}

std::string join_tokens(const std::vector<std::string>& tokens) {
    std::string out;
    for (std::size_t i = 0; i < tokens.size(); ++i) {
        if (i) out.push_back(' ');
        out += tokens[i];
    }
    return out;
}

std::string truncate_tokens_front(std::string_view text, std::size_t budget) {
    std::vector<std::string> tokens = tokenize(text);
    if (tokens.size() <= budget) return join_tokens(tokens);
    std::vector<std::string> kept(tokens.end() - static_cast<std::ptrdiff_t>(budget), tokens.end());
    return join_tokens(kept);
}

std::string truncate_tokens_back(std::string_view text, std::size_t budget) {
    std::vector<std::string> tokens = tokenize(text);
    if (tokens.size() > budget) tokens.resize(budget);
    return join_tokens(tokens);
}

std::string canonicalize_text(std::string_view text) {
    std::string out;
    out.reserve(text.size());
    bool pending_space = false;
    for (char ch : text) {
        if (std::isspace(static_cast<unsigned char>(ch))) {
            if (!out.empty()) pending_space = true;
            continue;
        }
        if (pending_space) {
            out.push_back(' ');
            pending_space = false;
        }
        out.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(ch))));
    }
    return out;
}

std::string format_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.12g", v);
    return buf;
}

std::string format_metric2(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.2f", v);
    return buf;
}

std::string hex64(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

}  // namespace toolflow
