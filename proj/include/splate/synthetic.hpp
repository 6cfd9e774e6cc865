#pragma once

// Deterministic synthetic corpora: Zipf-distributed document term sequences
// and queries cut from a source document plus noise tokens. The source
// document is the query's only relevant item.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "splate/embedding_store.hpp"
#include "splate/error.hpp"
#include "splate/parallel.hpp"
#include "splate/rng.hpp"

namespace splate {

struct synth_config {
    std::uint32_t num_docs = 2000;
    std::uint32_t num_queries = 200;
    std::uint32_t num_train_queries = 1000;
    std::uint32_t vocab_size = 5000;
    std::uint32_t dim = 32;
    std::uint64_t seed = 7;
    std::uint32_t doc_len_min = 20;
    std::uint32_t doc_len_max = 60;
    std::uint32_t query_len_min = 3;
    std::uint32_t query_len_max = 6;
    std::uint32_t query_noise_max = 2;
    double zipf_exponent = 1.0;

    void validate() const
    {
        if (num_docs < 1 || vocab_size < 2 || dim < 2) {
            throw validation_error("synth: need docs >= 1, vocab >= 2, dim >= 2");
        }
        if (doc_len_min < 1 || doc_len_min > doc_len_max || query_len_min < 1 || query_len_min > query_len_max) {
            throw validation_error("synth: bad length bounds");
        }
    }

    [[nodiscard]] vocabulary_config vocabulary() const { return {vocab_size, dim, seed}; }
};

/// Inverse-CDF sampler over ranks 0..n-1 with P(r) proportional to 1/(r+1)^s.
class zipf_sampler {
public:
    zipf_sampler(std::uint32_t n, double exponent) : m_cdf(n)
    {
        double total = 0.0;
        for (std::uint32_t r = 0; r < n; ++r) {
            total += 1.0 / std::pow(static_cast<double>(r) + 1.0, exponent);
            m_cdf[r] = total;
        }
        for (double& c : m_cdf) {
            c /= total;
        }
    }

    std::uint32_t operator()(rng& gen) const
    {
        const double u = gen.uniform();
        auto it = std::upper_bound(m_cdf.begin(), m_cdf.end(), u);
        if (it == m_cdf.end()) {
            --it;
        }
        return static_cast<std::uint32_t>(it - m_cdf.begin());
    }

private:
    std::vector<double> m_cdf;
};

using token_sequences = std::map<record_id, std::vector<term_id>>;

struct synthetic_corpus {
    synth_config config;
    token_sequences docs;
    token_sequences queries;
    token_sequences train_queries;
    std::map<record_id, record_id> qrels;        // query -> relevant doc
    std::map<record_id, record_id> train_qrels;
};

namespace detail {

inline std::vector<term_id> query_from(const std::vector<term_id>& doc, const synth_config& cfg,
                                       const zipf_sampler& zipf, rng& gen)
{
    const std::uint32_t span = cfg.query_len_max - cfg.query_len_min + 1;
    std::size_t len = cfg.query_len_min + gen.below(span);
    len = std::min(len, doc.size());
    const std::size_t start = gen.below(doc.size() - len + 1);
    std::vector<term_id> q(doc.begin() + static_cast<std::ptrdiff_t>(start),
                           doc.begin() + static_cast<std::ptrdiff_t>(start + len));
    const auto noise = gen.below(cfg.query_noise_max + 1);
    for (std::uint64_t n = 0; n < noise; ++n) {
        const auto pos = gen.below(q.size() + 1);
        q.insert(q.begin() + static_cast<std::ptrdiff_t>(pos), zipf(gen));
    }
    return q;
}

}  // namespace detail

inline synthetic_corpus generate_corpus(const synth_config& cfg)
{
    cfg.validate();
    synthetic_corpus out;
    out.config = cfg;
    const zipf_sampler zipf(cfg.vocab_size, cfg.zipf_exponent);

    rng doc_gen(derive_seed(cfg.seed, 1));
    for (std::uint32_t d = 0; d < cfg.num_docs; ++d) {
        const auto len = cfg.doc_len_min + doc_gen.below(cfg.doc_len_max - cfg.doc_len_min + 1);
        std::vector<term_id> tokens(len);
        for (auto& t : tokens) {
            t = zipf(doc_gen);
        }
        out.docs.emplace(d, std::move(tokens));
    }

    auto make_queries = [&](std::uint32_t count, std::uint64_t stream, token_sequences& queries,
                            std::map<record_id, record_id>& qrels) {
        rng gen(derive_seed(cfg.seed, stream));
        for (std::uint32_t q = 0; q < count; ++q) {
            const record_id source = gen.below(cfg.num_docs);
            queries.emplace(q, detail::query_from(out.docs.at(source), cfg, zipf, gen));
            qrels.emplace(q, source);
        }
    };
    make_queries(cfg.num_queries, 2, out.queries, out.qrels);
    make_queries(cfg.num_train_queries, 3, out.train_queries, out.train_qrels);
    return out;
}

/// Encodes every sequence and returns the frozen store.
inline embedding_store encode_sequences(const synth_encoder& encoder, const token_sequences& sequences)
{
    std::vector<const std::pair<const record_id, std::vector<term_id>>*> items;
    for (const auto& item : sequences) {
        items.push_back(&item);
    }
    std::vector<token_embedding_record> records(items.size());
    parallel_for(items.size(), [&](std::size_t i) { records[i] = encoder.encode(items[i]->second, items[i]->first); });
    embedding_store store(encoder.config().vocab_size, encoder.config().dim);
    for (auto& r : records) {
        store.put(std::move(r));
    }
    store.freeze();
    return store;
}

/// Pronounceable, unique pseudo-word for a term-id (used for text mode and
/// for readable explanations).
inline std::string pseudo_word(term_id t)
{
    static constexpr const char* consonants = "bdfgklmnprstvz";
    static constexpr const char* vowels = "aeiou";
    constexpr std::uint32_t base = 14 * 5;
    std::string word;
    std::uint32_t v = t;
    do {
        const auto syllable = v % base;
        word += consonants[syllable / 5];
        word += vowels[syllable % 5];
        v /= base;
    } while (v > 0);
    if (t < base) {
        word += "n";
    }
    return word;
}

}  // namespace splate
