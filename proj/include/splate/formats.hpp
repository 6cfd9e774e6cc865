#pragma once

// Line-oriented text files exchanged by the command-line tools: corpora,
// vocabularies, relevance judgments and run files.

#include <algorithm>
#include <cctype>
#include <cstdint>
#include <map>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "splate/embedding_store.hpp"
#include "splate/error.hpp"
#include "splate/ranked_list.hpp"
#include "splate/text_format.hpp"

namespace splate {

/// term -> id, read from `term \t id` lines.
class vocabulary {
public:
    void add(std::string term, term_id id)
    {
        if (!m_ids.emplace(term, id).second) {
            throw validation_error("vocabulary: duplicate term \"" + term + "\"");
        }
        if (m_terms.size() <= id) {
            m_terms.resize(id + 1);
        }
        if (!m_terms[id].empty()) {
            throw validation_error("vocabulary: duplicate id " + std::to_string(id));
        }
        m_terms[id] = std::move(term);
    }

    [[nodiscard]] const term_id* find(std::string_view term) const
    {
        auto it = m_ids.find(std::string(term));
        return it == m_ids.end() ? nullptr : &it->second;
    }

    /// The term for an id, or the id in decimal when unknown.
    [[nodiscard]] std::string term(term_id id) const
    {
        return id < m_terms.size() && !m_terms[id].empty() ? m_terms[id] : std::to_string(id);
    }

    [[nodiscard]] std::size_t size() const noexcept { return m_ids.size(); }

    [[nodiscard]] std::string format() const
    {
        std::ostringstream out;
        for (term_id id = 0; id < m_terms.size(); ++id) {
            if (!m_terms[id].empty()) {
                out << m_terms[id] << '\t' << id << '\n';
            }
        }
        return out.str();
    }

    [[nodiscard]] static vocabulary parse(std::string_view contents, const std::string& what = "vocabulary")
    {
        vocabulary v;
        std::size_t line_no = 0;
        for (auto line : text::lines(contents)) {
            ++line_no;
            const auto where = what + ":" + std::to_string(line_no);
            auto fields = text::split(line, '\t');
            if (fields.size() != 2 || fields[0].empty()) {
                throw format_error(where + ": expected `term<TAB>id`");
            }
            try {
                v.add(std::string(fields[0]), text::parse_number<term_id>(fields[1], where));
            } catch (const validation_error& e) {
                throw format_error(where + ": " + e.what());
            }
        }
        return v;
    }

private:
    std::map<std::string, term_id> m_ids;
    std::vector<std::string> m_terms;
};

inline std::string lowercase(std::string_view s)
{
    std::string out(s);
    std::transform(out.begin(), out.end(), out.begin(), [](unsigned char c) { return std::tolower(c); });
    return out;
}

/// Lowercased whitespace tokenization against a vocabulary; unknown words
/// are skipped and reported through `unknown`.
inline std::vector<term_id> tokenize_text(std::string_view text_in, const vocabulary& vocab,
                                          std::vector<std::string>* unknown = nullptr)
{
    std::vector<term_id> out;
    for (auto word : text::split_ws(text_in)) {
        const auto lowered = lowercase(word);
        if (const term_id* id = vocab.find(lowered)) {
            out.push_back(*id);
        } else if (unknown != nullptr) {
            unknown->push_back(lowered);
        }
    }
    return out;
}

inline std::vector<term_id> parse_term_ids(std::string_view field, std::uint32_t vocab_size, const std::string& where)
{
    std::vector<term_id> out;
    for (auto tok : text::split_ws(field)) {
        const auto t = text::parse_number<term_id>(tok, where);
        if (t >= vocab_size) {
            throw format_error(where + ": term-id " + std::to_string(t) + " >= vocab_size " + std::to_string(vocab_size));
        }
        out.push_back(t);
    }
    return out;
}

/// Corpus records: `id \t body` per line. In integer mode the body is
/// space-separated term-ids; in text mode it is raw text tokenized against
/// `vocab` (records left without known tokens are an error).
inline std::map<record_id, std::vector<term_id>> parse_corpus(std::string_view contents, std::uint32_t vocab_size,
                                                              const vocabulary* vocab = nullptr,
                                                              const std::string& what = "corpus")
{
    std::map<record_id, std::vector<term_id>> out;
    std::size_t line_no = 0;
    for (auto line : text::lines(contents)) {
        ++line_no;
        const auto where = what + ":" + std::to_string(line_no);
        const auto tab = line.find('\t');
        if (tab == std::string_view::npos) {
            throw format_error(where + ": expected `id<TAB>tokens`");
        }
        const auto id = text::parse_number<record_id>(line.substr(0, tab), where);
        const auto body = line.substr(tab + 1);
        std::vector<term_id> tokens = vocab != nullptr ? tokenize_text(body, *vocab) : parse_term_ids(body, vocab_size, where);
        if (tokens.empty()) {
            throw format_error(where + ": record " + std::to_string(id) + " has no tokens");
        }
        if (!out.emplace(id, std::move(tokens)).second) {
            throw format_error(where + ": duplicate id " + std::to_string(id));
        }
    }
    return out;
}

inline std::string format_corpus(const std::map<record_id, std::vector<term_id>>& corpus)
{
    std::ostringstream out;
    for (const auto& [id, tokens] : corpus) {
        out << id << '\t';
        for (std::size_t i = 0; i < tokens.size(); ++i) {
            out << (i ? " " : "") << tokens[i];
        }
        out << '\n';
    }
    return out.str();
}

/// Relevance judgments: `query \t doc` per line, one relevant doc per query.
inline std::map<record_id, record_id> parse_qrels(std::string_view contents, const std::string& what = "qrels")
{
    std::map<record_id, record_id> out;
    std::size_t line_no = 0;
    for (auto line : text::lines(contents)) {
        ++line_no;
        const auto where = what + ":" + std::to_string(line_no);
        auto fields = text::split(line, '\t');
        if (fields.size() != 2) {
            throw format_error(where + ": expected `query<TAB>doc`");
        }
        const auto q = text::parse_number<record_id>(fields[0], where);
        if (!out.emplace(q, text::parse_number<record_id>(fields[1], where)).second) {
            throw format_error(where + ": duplicate query " + std::to_string(q));
        }
    }
    return out;
}

inline std::string format_qrels(const std::map<record_id, record_id>& qrels)
{
    std::ostringstream out;
    for (const auto& [q, d] : qrels) {
        out << q << '\t' << d << '\n';
    }
    return out.str();
}

/// Ranked results per query.
using run = std::map<record_id, ranked_list>;

/// `query \t doc \t rank \t score` per line, ranks from 1, scores in
/// shortest round-trip decimal form.
inline std::string format_run(const run& r)
{
    std::ostringstream out;
    for (const auto& [q, list] : r) {
        for (std::size_t i = 0; i < list.size(); ++i) {
            out << q << '\t' << list.entries[i].doc << '\t' << (i + 1) << '\t'
                << text::format_double(list.entries[i].score) << '\n';
        }
    }
    return out.str();
}

inline run parse_run(std::string_view contents, const std::string& what = "run")
{
    run out;
    std::size_t line_no = 0;
    for (auto line : text::lines(contents)) {
        ++line_no;
        const auto where = what + ":" + std::to_string(line_no);
        auto fields = text::split(line, '\t');
        if (fields.size() != 4) {
            throw format_error(where + ": expected `query<TAB>doc<TAB>rank<TAB>score`");
        }
        const auto q = text::parse_number<record_id>(fields[0], where);
        const auto doc = text::parse_number<std::uint64_t>(fields[1], where);
        const auto rank = text::parse_number<std::size_t>(fields[2], where);
        const auto score = text::parse_number<double>(fields[3], where);
        auto& list = out[q];
        if (rank != list.size() + 1) {
            throw format_error(where + ": rank " + std::to_string(rank) + " for query " + std::to_string(q)
                               + " is not contiguous (expected " + std::to_string(list.size() + 1) + ")");
        }
        list.entries.push_back({doc, score});
    }
    return out;
}

}  // namespace splate
