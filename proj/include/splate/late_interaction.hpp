#pragma once

// Exact MaxSim scoring over the frozen token embeddings: the re-ranking stage
// and the distillation teacher.

#include <algorithm>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "splate/embedding_store.hpp"
#include "splate/error.hpp"
#include "splate/numerics.hpp"
#include "splate/ranked_list.hpp"

namespace splate {

/// sum_i max_j q_i . d_j
inline double maxsim_score(const token_embedding_record& query, const token_embedding_record& doc)
{
    if (query.dim() != doc.dim()) {
        throw dimension_error("maxsim_score: query dimension " + std::to_string(query.dim()) + " != document dimension "
                              + std::to_string(doc.dim()));
    }
    if (query.num_tokens() == 0 || doc.num_tokens() == 0) {
        throw validation_error("maxsim_score: empty record");
    }
    double total = 0.0;
    for (std::size_t i = 0; i < query.num_tokens(); ++i) {
        auto q = query.embeddings.row(i);
        double best = -std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < doc.num_tokens(); ++j) {
            best = std::max(best, dot(q, doc.embeddings.row(j)));
        }
        total += best;
    }
    return total;
}

/// A frozen store together with the ids that make up the rerankable corpus.
class dense_doc_store {
public:
    dense_doc_store(const embedding_store& store, std::vector<record_id> ids) : m_store(&store), m_ids(std::move(ids))
    {
        if (!store.frozen()) {
            throw usage_error("dense_doc_store: embedding store must be frozen");
        }
        for (auto id : m_ids) {
            if (!store.contains(id)) {
                throw not_found_error("dense_doc_store: unknown document id " + std::to_string(id));
            }
        }
    }

    /// The whole store is the corpus.
    explicit dense_doc_store(const embedding_store& store) : dense_doc_store(store, store.ids()) {}

    [[nodiscard]] const embedding_store& store() const noexcept { return *m_store; }
    [[nodiscard]] const std::vector<record_id>& ids() const noexcept { return m_ids; }

private:
    const embedding_store* m_store;
    std::vector<record_id> m_ids;
};

/// Top-k of the candidates by exact MaxSim under the global tie order.
inline ranked_list rerank(const token_embedding_record& query, std::span<const record_id> candidates,
                          const dense_doc_store& docs, std::size_t k)
{
    std::vector<ranked_entry> scored;
    scored.reserve(candidates.size());
    for (auto id : candidates) {
        if (!docs.store().contains(id)) {
            throw not_found_error("rerank: unknown candidate id " + std::to_string(id));
        }
        scored.push_back({id, maxsim_score(query, docs.store().get(id))});
    }
    std::sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) { return a.doc < b.doc; });
    scored.erase(std::unique(scored.begin(), scored.end(), [](const auto& a, const auto& b) { return a.doc == b.doc; }),
                 scored.end());
    return top_k(std::move(scored), k);
}

/// Exhaustive MaxSim ranking of the whole corpus, top-n.
inline ranked_list teacher_rank(const token_embedding_record& query, const dense_doc_store& docs, std::size_t n)
{
    return rerank(query, docs.ids(), docs, n);
}

}  // namespace splate
