#pragma once

#include <algorithm>
#include <cstdint>
#include <string>
#include <unordered_set>
#include <vector>

#include "splate/error.hpp"

namespace splate {

struct ranked_entry {
    std::uint64_t doc = 0;
    double score = 0.0;
    friend bool operator==(const ranked_entry&, const ranked_entry&) = default;
};

/// Global result order: descending score, ties by ascending doc-id.
inline bool ranks_before(const ranked_entry& a, const ranked_entry& b) noexcept
{
    return a.score != b.score ? a.score > b.score : a.doc < b.doc;
}

struct ranked_list {
    std::vector<ranked_entry> entries;

    [[nodiscard]] std::size_t size() const noexcept { return entries.size(); }
    [[nodiscard]] bool empty() const noexcept { return entries.empty(); }

    [[nodiscard]] std::vector<std::uint64_t> ids() const
    {
        std::vector<std::uint64_t> out;
        out.reserve(entries.size());
        for (const auto& e : entries) {
            out.push_back(e.doc);
        }
        return out;
    }

    void validate() const
    {
        std::unordered_set<std::uint64_t> seen;
        for (std::size_t i = 0; i < entries.size(); ++i) {
            if (!seen.insert(entries[i].doc).second) {
                throw validation_error("ranked_list: duplicate doc-id " + std::to_string(entries[i].doc));
            }
            if (i > 0 && !ranks_before(entries[i - 1], entries[i])) {
                throw validation_error("ranked_list: entries out of order at position " + std::to_string(i));
            }
        }
    }

    friend bool operator==(const ranked_list&, const ranked_list&) = default;
};

/// Sorts by the global order and keeps the first k.
inline ranked_list top_k(std::vector<ranked_entry> entries, std::size_t k)
{
    if (entries.size() > k) {
        std::partial_sort(entries.begin(), entries.begin() + static_cast<std::ptrdiff_t>(k), entries.end(),
                          ranks_before);
        entries.resize(k);
    } else {
        std::sort(entries.begin(), entries.end(), ranks_before);
    }
    return ranked_list{std::move(entries)};
}

}  // namespace splate
