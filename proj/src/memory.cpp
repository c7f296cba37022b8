#include "toolflow/memory.hpp"

#include <algorithm>

namespace toolflow {

Summarizer template_summarizer(std::size_t entry_token_budget) {
    return [entry_token_budget](const ToolOutput& output) {
        const Payload& p = output.payload;
        if (!p.informative()) return std::string{};
        std::vector<std::string> parts;
        parts.push_back(p.source + ":");
        for (const auto& [key, value] : p.fields) {
            (void)key;
            parts.push_back(value);
        }
        for (const auto& [key, value] : p.metrics) {
            (void)key;
            parts.push_back("(" + format_metric2(value) + ")");
        }
        if (!p.image.empty()) parts.push_back("[image]");
        return truncate_tokens_back(join_tokens(parts), entry_token_budget);
    };
}

std::string summarize(const ToolOutput& output, const Summarizer& summarizer,
                      std::size_t entry_token_budget) {
    return truncate_tokens_back(summarizer(output), entry_token_budget);
}

void Memory::append(MemoryEntry entry) {
    if (!entries_.empty() && entry.step <= entries_.back().step) {
        throw NonMonotonicStep("memory step " + std::to_string(entry.step) +
                               " does not advance past step " +
                               std::to_string(entries_.back().step));
    }
    entry.summary = truncate_tokens_back(entry.summary, config_.entry_token_budget);
    entries_.push_back(std::move(entry));

    if (entries_.size() > config_.capacity) {
        // Fold the two oldest entries into the digest slot. The digest keeps
        // the newer of the two steps so entry steps stay strictly increasing.
        MemoryEntry digest;
        digest.container_id = kMemoryDigestId;
        digest.step = entries_[1].step;
        std::string folded = entries_[0].summary;
        if (!folded.empty() && !entries_[1].summary.empty()) folded.push_back(' ');
        folded += entries_[1].summary;
        digest.summary = truncate_tokens_back(folded, config_.entry_token_budget);
        entries_.erase(entries_.begin());
        entries_[0] = std::move(digest);
    }
}

std::vector<std::string> Memory::render_context() const {
    std::vector<std::string> tokens;
    for (const MemoryEntry& e : entries_) {
        for (std::string& t : tokenize(e.summary)) tokens.push_back(std::move(t));
    }
    if (tokens.size() > config_.token_budget) {
        tokens.erase(tokens.begin(),
                     tokens.begin() + static_cast<std::ptrdiff_t>(tokens.size() - config_.token_budget));
    }
    return tokens;
}

std::string Memory::rendered_text() const { return join_tokens(render_context()); }

}  // namespace toolflow
