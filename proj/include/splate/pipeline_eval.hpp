#pragma once

// Retrieve-then-rerank pipeline and its evaluation surface: MRR@k,
// Success@k, candidate overlap R(k) against the exact MaxSim ranking, and
// mean response time of the sparse stage.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <unordered_set>
#include <vector>

#include "splate/embedding_store.hpp"
#include "splate/error.hpp"
#include "splate/late_interaction.hpp"
#include "splate/parallel.hpp"
#include "splate/ranked_list.hpp"
#include "splate/sparse_index.hpp"
#include "splate/splate_head.hpp"
#include "splate/text_format.hpp"

namespace splate {

struct pipeline_config {
    std::uint32_t k_q = 10;
    std::uint32_t k_d = 100;
    std::size_t k_candidates = 50;
    std::size_t k_final = 10;
    retrieval_algorithm algorithm = retrieval_algorithm::bmw;

    void validate() const
    {
        if (k_q < 1 || k_d < 1) {
            throw validation_error("pooling sizes must be >= 1");
        }
        if (k_candidates < 1 || k_final < 1) {
            throw validation_error("k_candidates and k_final must be >= 1");
        }
        if (k_final > k_candidates) {
            throw validation_error("k_final (" + std::to_string(k_final) + ") must not exceed k_candidates ("
                                   + std::to_string(k_candidates) + ")");
        }
    }
};

/// Encodes every record of a store with pooling size k.
inline std::map<record_id, sparse_vector> encode_corpus(const adapter_head& head, const embedding_store& store,
                                                        std::size_t k)
{
    const auto ids = store.ids();
    std::vector<sparse_vector> vecs(ids.size());
    parallel_for(ids.size(), [&](std::size_t i) { vecs[i] = encode(head, store.get(ids[i]), k); });
    std::map<record_id, sparse_vector> out;
    for (std::size_t i = 0; i < ids.size(); ++i) {
        out.emplace(ids[i], std::move(vecs[i]));
    }
    return out;
}

/// Binds a head, a sparse index over documents encoded by that head, and the
/// dense store used for exact re-ranking.
class pipeline {
public:
    pipeline(const adapter_head& head, const inverted_index& index, const dense_doc_store& docs,
             pipeline_config config)
        : m_head(&head), m_index(&index), m_docs(&docs), m_config(config)
    {
        m_config.validate();
    }

    [[nodiscard]] const pipeline_config& config() const noexcept { return m_config; }

    [[nodiscard]] sparse_vector encode_query(const token_embedding_record& query) const
    {
        return encode(*m_head, query, m_config.k_q);
    }

    /// Sparse retrieval only: top k_candidates for the encoded query.
    [[nodiscard]] ranked_list run_retrieval(const token_embedding_record& query,
                                            retrieval_stats* stats = nullptr) const
    {
        return retrieve(m_config.algorithm, *m_index, encode_query(query), m_config.k_candidates, stats);
    }

    [[nodiscard]] ranked_list retrieve_encoded(const sparse_vector& query, std::size_t k,
                                               retrieval_stats* stats = nullptr) const
    {
        return retrieve(m_config.algorithm, *m_index, query, k, stats);
    }

    /// Sparse candidates re-ranked exactly by MaxSim, top k_final.
    [[nodiscard]] ranked_list run_e2e(const token_embedding_record& query) const
    {
        return rerank_candidates(query, run_retrieval(query));
    }

    [[nodiscard]] ranked_list rerank_candidates(const token_embedding_record& query,
                                                const ranked_list& candidates) const
    {
        const auto ids = candidates.ids();
        return rerank(query, ids, *m_docs, m_config.k_final);
    }

    [[nodiscard]] const dense_doc_store& docs() const noexcept { return *m_docs; }

private:
    const adapter_head* m_head;
    const inverted_index* m_index;
    const dense_doc_store* m_docs;
    pipeline_config m_config;
};

// ---------------------------------------------------------------------------
// Metrics

struct overlap_result {
    double value = 0.0;
    /// Set when k or k' exceeded the available list lengths and the fraction
    /// was computed over the available prefix.
    bool truncated = false;
};

/// |top-k(exact) intersect top-k'(approx)| / k. A short exact list is
/// measured over its available prefix.
inline overlap_result recall_overlap_checked(const ranked_list& approx, const ranked_list& exact, std::size_t k,
                                             std::size_t k_prime)
{
    if (k == 0) {
        throw validation_error("recall_overlap: k must be >= 1");
    }
    overlap_result out;
    out.truncated = k > exact.size() || k_prime > approx.size();
    std::unordered_set<std::uint64_t> candidates;
    for (std::size_t i = 0; i < std::min(k_prime, approx.size()); ++i) {
        candidates.insert(approx.entries[i].doc);
    }
    const std::size_t depth = std::min(k, exact.size());
    std::size_t hits = 0;
    for (std::size_t i = 0; i < depth; ++i) {
        hits += candidates.contains(exact.entries[i].doc) ? 1 : 0;
    }
    out.value = depth == 0 ? 0.0 : static_cast<double>(hits) / static_cast<double>(depth);
    return out;
}

inline double recall_overlap(const ranked_list& approx, const ranked_list& exact, std::size_t k, std::size_t k_prime)
{
    return recall_overlap_checked(approx, exact, k, k_prime).value;
}

inline double mrr_at_k(const ranked_list& ranked, const std::set<std::uint64_t>& relevant, std::size_t k)
{
    if (k < 1) {
        throw validation_error("mrr_at_k: k must be >= 1");
    }
    if (relevant.empty()) {
        throw validation_error("mrr_at_k: empty relevant set");
    }
    for (std::size_t i = 0; i < std::min(k, ranked.size()); ++i) {
        if (relevant.contains(ranked.entries[i].doc)) {
            return 1.0 / static_cast<double>(i + 1);
        }
    }
    return 0.0;
}

inline double success_at_k(const ranked_list& ranked, const std::set<std::uint64_t>& relevant, std::size_t k)
{
    return mrr_at_k(ranked, relevant, k) > 0.0 ? 1.0 : 0.0;
}

struct mrt_report {
    double mean_ms = 0.0;
    std::vector<double> per_query_ms;
};

/// Mean wall-clock latency of the sparse retrieval stage (queries already
/// encoded), averaged over `repetitions` timed runs per query after one
/// untimed warm-up run. Runs on the calling thread only.
inline mrt_report measure_mrt(const pipeline& p, const std::vector<sparse_vector>& encoded_queries,
                              std::size_t repetitions)
{
    if (encoded_queries.empty()) {
        throw validation_error("measure_mrt: empty query set");
    }
    if (repetitions == 0) {
        throw validation_error("measure_mrt: repetitions must be >= 1");
    }
    using clock = std::chrono::steady_clock;
    mrt_report out;
    volatile std::size_t sink = 0;
    for (const auto& q : encoded_queries) {
        sink = sink + p.retrieve_encoded(q, p.config().k_candidates).size();
    }
    for (const auto& q : encoded_queries) {
        const auto start = clock::now();
        for (std::size_t r = 0; r < repetitions; ++r) {
            sink = sink + p.retrieve_encoded(q, p.config().k_candidates).size();
        }
        const std::chrono::duration<double, std::milli> elapsed = clock::now() - start;
        out.per_query_ms.push_back(elapsed.count() / static_cast<double>(repetitions));
    }
    double total = 0.0;
    for (double ms : out.per_query_ms) {
        total += ms;
    }
    out.mean_ms = total / static_cast<double>(out.per_query_ms.size());
    return out;
}

/// Mean wall-clock latency of the whole pipeline per query: encoding,
/// sparse retrieval and exact re-ranking. Calling thread only.
inline double measure_e2e_mrt(const pipeline& p, const embedding_store& queries, std::size_t repetitions)
{
    const auto ids = queries.ids();
    if (ids.empty() || repetitions == 0) {
        throw validation_error("measure_e2e_mrt: need queries and repetitions >= 1");
    }
    using clock = std::chrono::steady_clock;
    volatile std::size_t sink = 0;
    const auto start = clock::now();
    for (std::size_t r = 0; r < repetitions; ++r) {
        for (auto id : ids) {
            sink = sink + p.run_e2e(queries.get(id)).size();
        }
    }
    const std::chrono::duration<double, std::milli> elapsed = clock::now() - start;
    return elapsed.count() / static_cast<double>(repetitions * ids.size());
}

// ---------------------------------------------------------------------------
// Reports

struct eval_options {
    std::size_t metric_k = 10;         // MRR@k
    std::size_t success_k = 5;         // Success@k
    std::size_t overlap_k = 10;        // R(k)
    std::size_t overlap_multiples = 5; // k' = i * overlap_k for i = 1..multiples
    std::size_t mrt_repetitions = 3;
    bool measure_latency = true;
    /// Also time encode + retrieval + re-ranking. Not comparable to the
    /// sparse-stage MRT.
    bool measure_e2e_latency = false;
    std::uint64_t seed = 0;
};

struct query_metrics {
    record_id query = 0;
    double mrr_retrieval = 0.0;
    double mrr_e2e = 0.0;
    double mrr_exact = 0.0;
    double success_e2e = 0.0;
    std::vector<double> overlap;  // one per k' multiple
    double latency_ms = 0.0;
};

struct eval_report {
    pipeline_config config;
    eval_options options;
    std::vector<query_metrics> per_query;
    double mrr_retrieval = 0.0;
    double mrr_e2e = 0.0;
    double mrr_exact = 0.0;
    double success_e2e = 0.0;
    std::vector<double> overlap_mean;
    std::vector<double> overlap_std;
    double mean_response_time_ms = 0.0;
    double e2e_mean_response_time_ms = 0.0;
    retrieval_stats stats;

    /// One `key=value` per line.
    [[nodiscard]] std::string format() const
    {
        std::ostringstream out;
        const auto k = std::to_string(options.metric_k);
        out << "algorithm=" << to_string(config.algorithm) << '\n'
            << "k_q=" << config.k_q << '\n'
            << "k_d=" << config.k_d << '\n'
            << "k_candidates=" << config.k_candidates << '\n'
            << "k_final=" << config.k_final << '\n'
            << "seed=" << options.seed << '\n'
            << "num_queries=" << per_query.size() << '\n'
            << "mrr_at_" << k << "_retrieval=" << text::format_double(mrr_retrieval) << '\n'
            << "mrr_at_" << k << "_e2e=" << text::format_double(mrr_e2e) << '\n'
            << "mrr_at_" << k << "_exact=" << text::format_double(mrr_exact) << '\n'
            << "success_at_" << options.success_k << "_e2e=" << text::format_double(success_e2e) << '\n';
        for (std::size_t i = 0; i < overlap_mean.size(); ++i) {
            const auto kp = (i + 1) * options.overlap_k;
            out << "r_overlap_k" << options.overlap_k << "_kprime" << kp << "=" << text::format_double(overlap_mean[i])
                << '\n'
                << "r_overlap_k" << options.overlap_k << "_kprime" << kp << "_std=" << text::format_double(overlap_std[i])
                << '\n';
        }
        if (options.measure_latency) {
            out << "mean_response_time_ms=" << text::format_double(mean_response_time_ms) << '\n';
        }
        if (options.measure_e2e_latency) {
            out << "e2e_mean_response_time_ms_noncomparable=" << text::format_double(e2e_mean_response_time_ms)
                << '\n';
        }
        out << "postings_total=" << stats.postings_total << '\n'
            << "postings_scored=" << stats.postings_scored << '\n';
        return out.str();
    }
};

/// Parses `key=value` lines.
inline std::map<std::string, std::string> parse_key_values(std::string_view contents)
{
    std::map<std::string, std::string> out;
    std::size_t line_no = 0;
    for (auto line : text::lines(contents)) {
        ++line_no;
        if (line.empty()) {
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string_view::npos) {
            throw format_error("line " + std::to_string(line_no) + ": expected key=value");
        }
        out.emplace(std::string(line.substr(0, eq)), std::string(line.substr(eq + 1)));
    }
    return out;
}

inline double mean_of(const std::vector<double>& xs)
{
    double total = 0.0;
    for (double x : xs) {
        total += x;
    }
    return xs.empty() ? 0.0 : total / static_cast<double>(xs.size());
}

inline double std_of(const std::vector<double>& xs)
{
    if (xs.empty()) {
        return 0.0;
    }
    const double m = mean_of(xs);
    double acc = 0.0;
    for (double x : xs) {
        acc += (x - m) * (x - m);
    }
    return std::sqrt(acc / static_cast<double>(xs.size()));
}

/// Runs the pipeline over a query set and aggregates per-query metrics.
/// `relevant` maps each query to its relevant document.
inline eval_report evaluate(const pipeline& p, const embedding_store& queries,
                            const std::map<record_id, record_id>& relevant, const eval_options& options)
{
    const auto ids = queries.ids();
    if (ids.empty()) {
        throw validation_error("evaluate: empty query set");
    }
    eval_report report;
    report.config = p.config();
    report.options = options;
    report.per_query.resize(ids.size());
    std::vector<sparse_vector> encoded(ids.size());
    std::vector<retrieval_stats> stats(ids.size());
    const std::size_t max_k_prime = options.overlap_k * options.overlap_multiples;
    const std::size_t retrieve_depth = std::max(p.config().k_candidates, max_k_prime);

    parallel_for(ids.size(), [&](std::size_t i) {
        const auto& q = queries.get(ids[i]);
        auto it = relevant.find(ids[i]);
        if (it == relevant.end()) {
            throw not_found_error("evaluate: no relevance judgment for query " + std::to_string(ids[i]));
        }
        const std::set<std::uint64_t> rel{it->second};
        encoded[i] = p.encode_query(q);
        auto deep = p.retrieve_encoded(encoded[i], retrieve_depth, &stats[i]);
        ranked_list candidates = deep;
        candidates.entries.resize(std::min(deep.size(), p.config().k_candidates));
        auto e2e = p.rerank_candidates(q, candidates);
        auto exact = teacher_rank(q, p.docs(), std::max(options.overlap_k, options.metric_k));

        auto& m = report.per_query[i];
        m.query = ids[i];
        m.mrr_retrieval = mrr_at_k(candidates, rel, options.metric_k);
        m.mrr_e2e = mrr_at_k(e2e, rel, options.metric_k);
        m.mrr_exact = mrr_at_k(exact, rel, options.metric_k);
        m.success_e2e = success_at_k(e2e, rel, options.success_k);
        for (std::size_t mult = 1; mult <= options.overlap_multiples; ++mult) {
            m.overlap.push_back(recall_overlap(deep, exact, options.overlap_k, mult * options.overlap_k));
        }
    });

    if (options.measure_latency) {
        auto mrt = measure_mrt(p, encoded, options.mrt_repetitions);
        for (std::size_t i = 0; i < ids.size(); ++i) {
            report.per_query[i].latency_ms = mrt.per_query_ms[i];
        }
        report.mean_response_time_ms = mrt.mean_ms;
    }
    if (options.measure_e2e_latency) {
        report.e2e_mean_response_time_ms = measure_e2e_mrt(p, queries, options.mrt_repetitions);
    }

    std::vector<double> col;
    auto aggregate = [&](auto member) {
        col.clear();
        for (const auto& m : report.per_query) {
            col.push_back(m.*member);
        }
        return mean_of(col);
    };
    report.mrr_retrieval = aggregate(&query_metrics::mrr_retrieval);
    report.mrr_e2e = aggregate(&query_metrics::mrr_e2e);
    report.mrr_exact = aggregate(&query_metrics::mrr_exact);
    report.success_e2e = aggregate(&query_metrics::success_e2e);
    for (std::size_t j = 0; j < options.overlap_multiples; ++j) {
        col.clear();
        for (const auto& m : report.per_query) {
            col.push_back(m.overlap[j]);
        }
        report.overlap_mean.push_back(mean_of(col));
        report.overlap_std.push_back(std_of(col));
    }
    for (const auto& s : stats) {
        report.stats += s;
    }
    return report;
}

}  // namespace splate
