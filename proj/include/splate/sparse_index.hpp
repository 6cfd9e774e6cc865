#pragma once

// Impact-quantized inverted index over sparse document vectors, with an
// exhaustive scorer and two safe dynamic-pruning top-k strategies
// (block-max WAND and MaxScore). All three accumulate integer impact
// products and share one result order, so their outputs compare exactly.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <map>
#include <queue>
#include <span>
#include <string>
#include <vector>

#include "splate/binary_io.hpp"
#include "splate/error.hpp"
#include "splate/ranked_list.hpp"
#include "splate/splate_head.hpp"

namespace splate {

using doc_ordinal = std::uint32_t;
inline constexpr doc_ordinal end_of_list = std::numeric_limits<doc_ordinal>::max();

struct block_max {
    doc_ordinal last_doc = 0;
    std::uint32_t max_impact = 0;
    friend bool operator==(const block_max&, const block_max&) = default;
};

struct postings_list {
    term_id term = 0;
    std::vector<doc_ordinal> docs;
    std::vector<std::uint32_t> impacts;
    std::uint32_t max_impact = 0;
    std::vector<block_max> blocks;

    [[nodiscard]] std::size_t size() const noexcept { return docs.size(); }
    [[nodiscard]] bool empty() const noexcept { return docs.empty(); }

    friend bool operator==(const postings_list&, const postings_list&) = default;
};

struct index_meta {
    std::uint32_t vocab_size = 0;
    std::uint32_t num_docs = 0;
    std::uint32_t quantization_bits = 8;
    double global_scale = 1.0;
    std::uint32_t block_length = 64;

    [[nodiscard]] std::uint32_t max_level() const noexcept { return (1U << quantization_bits) - 1U; }

    void validate() const
    {
        if (quantization_bits < 1 || quantization_bits > 16) {
            throw validation_error("quantization_bits must be in [1, 16], got " + std::to_string(quantization_bits));
        }
        if (!(global_scale > 0.0) || !std::isfinite(global_scale)) {
            throw validation_error("global_scale must be positive and finite");
        }
        if (block_length < 1) {
            throw validation_error("block_length must be >= 1");
        }
    }

    friend bool operator==(const index_meta&, const index_meta&) = default;
};

/// Linear quantization onto 1..2^bits-1 levels: ceil(weight / scale).
inline std::uint32_t quantize_weight(double weight, double scale, std::uint32_t max_level)
{
    const double level = std::ceil(weight / scale);
    if (level < 1.0) {
        return 1;
    }
    if (level > static_cast<double>(max_level)) {
        return max_level;
    }
    return static_cast<std::uint32_t>(level);
}

/// Counters reported by every retrieval strategy. postings_total is the
/// length sum of the query's lists, i.e. what the exhaustive scorer touches.
struct retrieval_stats {
    std::uint64_t postings_total = 0;
    std::uint64_t postings_scored = 0;
    std::uint64_t docs_scored = 0;

    [[nodiscard]] std::uint64_t postings_skipped() const noexcept { return postings_total - postings_scored; }

    retrieval_stats& operator+=(const retrieval_stats& o) noexcept
    {
        postings_total += o.postings_total;
        postings_scored += o.postings_scored;
        docs_scored += o.docs_scored;
        return *this;
    }
};

/// Serialized layout (all little-endian):
///   "SPIX" | version u32 = 1 | vocab_size u32 | num_docs u32 | quantization_bits u32 |
///   global_scale f64 | block_length u32 | doc_ids u64[num_docs] | num_lists u32 |
///   num_lists x ( term u32 | count u32 | max_impact u16 | gap_bytes u32 |
///                 varbyte doc gaps (first gap from 0) | impacts u16[count] |
///                 num_blocks u32 | (last_doc u32 | block_max u16)[num_blocks] )
/// Lists appear in ascending term order; empty lists are omitted.
class inverted_index {
public:
    static constexpr std::uint32_t format_version = 1;

    inverted_index() = default;
    inverted_index(index_meta meta, std::vector<record_id> doc_ids, std::vector<postings_list> lists)
        : m_meta(meta), m_doc_ids(std::move(doc_ids)), m_lists(std::move(lists))
    {
        m_meta.validate();
        if (m_doc_ids.size() != m_meta.num_docs) {
            throw validation_error("inverted_index: doc id table size mismatch");
        }
        if (m_lists.size() != m_meta.vocab_size) {
            throw validation_error("inverted_index: expected one (possibly empty) list per term");
        }
        if (!std::is_sorted(m_doc_ids.begin(), m_doc_ids.end())
            || std::adjacent_find(m_doc_ids.begin(), m_doc_ids.end()) != m_doc_ids.end()) {
            throw validation_error("inverted_index: doc ids must be strictly increasing");
        }
        for (const auto& list : m_lists) {
            check_list(list);
        }
    }

    [[nodiscard]] const index_meta& meta() const noexcept { return m_meta; }
    [[nodiscard]] const std::vector<record_id>& doc_ids() const noexcept { return m_doc_ids; }
    [[nodiscard]] record_id external_id(doc_ordinal d) const { return m_doc_ids.at(d); }

    /// Empty list for terms outside the vocabulary or without postings.
    [[nodiscard]] const postings_list& list(term_id t) const
    {
        static const postings_list none{};
        return t < m_lists.size() ? m_lists[t] : none;
    }

    [[nodiscard]] std::uint64_t total_postings() const noexcept
    {
        std::uint64_t n = 0;
        for (const auto& l : m_lists) {
            n += l.size();
        }
        return n;
    }

    [[nodiscard]] double decode(std::uint32_t impact) const noexcept { return impact * m_meta.global_scale; }

    [[nodiscard]] std::vector<std::uint8_t> serialize() const
    {
        io::byte_writer w;
        w.magic("SPIX");
        w.put<std::uint32_t>(format_version);
        w.put<std::uint32_t>(m_meta.vocab_size);
        w.put<std::uint32_t>(m_meta.num_docs);
        w.put<std::uint32_t>(m_meta.quantization_bits);
        w.put<double>(m_meta.global_scale);
        w.put<std::uint32_t>(m_meta.block_length);
        w.put_all<std::uint64_t>(m_doc_ids);
        std::uint32_t non_empty = 0;
        for (const auto& l : m_lists) {
            non_empty += l.empty() ? 0 : 1;
        }
        w.put<std::uint32_t>(non_empty);
        for (const auto& l : m_lists) {
            if (l.empty()) {
                continue;
            }
            w.put<std::uint32_t>(l.term);
            w.put<std::uint32_t>(static_cast<std::uint32_t>(l.size()));
            w.put<std::uint16_t>(static_cast<std::uint16_t>(l.max_impact));
            io::byte_writer gaps;
            doc_ordinal prev = 0;
            for (auto d : l.docs) {
                gaps.put_varbyte(d - prev);
                prev = d;
            }
            w.put<std::uint32_t>(static_cast<std::uint32_t>(gaps.bytes().size()));
            w.put_bytes(gaps.bytes());
            for (auto impact : l.impacts) {
                w.put<std::uint16_t>(static_cast<std::uint16_t>(impact));
            }
            w.put<std::uint32_t>(static_cast<std::uint32_t>(l.blocks.size()));
            for (const auto& b : l.blocks) {
                w.put<std::uint32_t>(b.last_doc);
                w.put<std::uint16_t>(static_cast<std::uint16_t>(b.max_impact));
            }
        }
        return w.take();
    }

    [[nodiscard]] static inverted_index deserialize(std::span<const std::uint8_t> bytes,
                                                    const std::string& what = "index")
    {
        io::byte_reader r(bytes, what);
        r.expect_magic("SPIX");
        const auto version = r.get<std::uint32_t>();
        if (version != format_version) {
            r.fail("unsupported index version " + std::to_string(version));
        }
        index_meta meta;
        meta.vocab_size = r.get<std::uint32_t>();
        meta.num_docs = r.get<std::uint32_t>();
        meta.quantization_bits = r.get<std::uint32_t>();
        meta.global_scale = r.get<double>();
        meta.block_length = r.get<std::uint32_t>();
        std::vector<record_id> doc_ids(meta.num_docs);
        for (auto& id : doc_ids) {
            id = r.get<std::uint64_t>();
        }
        std::vector<postings_list> lists(meta.vocab_size);
        for (std::uint32_t t = 0; t < meta.vocab_size; ++t) {
            lists[t].term = t;
        }
        const auto num_lists = r.get<std::uint32_t>();
        std::int64_t prev_term = -1;
        for (std::uint32_t n = 0; n < num_lists; ++n) {
            const auto term = r.get<std::uint32_t>();
            if (term >= meta.vocab_size || static_cast<std::int64_t>(term) <= prev_term) {
                r.fail("bad term id " + std::to_string(term));
            }
            prev_term = term;
            postings_list& l = lists[term];
            const auto count = r.get<std::uint32_t>();
            l.max_impact = r.get<std::uint16_t>();
            const auto gap_bytes = r.get<std::uint32_t>();
            io::byte_reader gaps(r.get_bytes(gap_bytes), what + " postings");
            l.docs.resize(count);
            std::uint64_t doc = 0;
            for (auto& d : l.docs) {
                doc += gaps.get_varbyte();
                if (doc >= meta.num_docs) {
                    r.fail("doc ordinal out of range in term " + std::to_string(term));
                }
                d = static_cast<doc_ordinal>(doc);
            }
            gaps.expect_end();
            l.impacts.resize(count);
            for (auto& i : l.impacts) {
                i = r.get<std::uint16_t>();
            }
            const auto num_blocks = r.get<std::uint32_t>();
            l.blocks.resize(num_blocks);
            for (auto& b : l.blocks) {
                b.last_doc = r.get<std::uint32_t>();
                b.max_impact = r.get<std::uint16_t>();
            }
        }
        r.expect_end();
        try {
            return inverted_index(meta, std::move(doc_ids), std::move(lists));
        } catch (const std::invalid_argument& e) {
            throw format_error(what + ": " + e.what());
        }
    }

    void save(const std::filesystem::path& path) const { io::write_file(path, serialize()); }

    [[nodiscard]] static inverted_index load(const std::filesystem::path& path)
    {
        return deserialize(io::read_file(path), path.string());
    }

private:
    void check_list(const postings_list& l) const
    {
        const auto where = "term " + std::to_string(l.term);
        if (l.docs.size() != l.impacts.size()) {
            throw validation_error(where + ": docs/impacts length mismatch");
        }
        std::uint32_t max_impact = 0;
        for (std::size_t i = 0; i < l.size(); ++i) {
            if (i > 0 && l.docs[i - 1] >= l.docs[i]) {
                throw validation_error(where + ": doc ordinals not strictly increasing");
            }
            if (l.docs[i] >= m_meta.num_docs) {
                throw validation_error(where + ": doc ordinal out of range");
            }
            if (l.impacts[i] < 1 || l.impacts[i] > m_meta.max_level()) {
                throw validation_error(where + ": impact out of range");
            }
            max_impact = std::max(max_impact, l.impacts[i]);
        }
        if (max_impact != l.max_impact) {
            throw validation_error(where + ": max_impact mismatch");
        }
        const std::size_t bl = m_meta.block_length;
        if (l.blocks.size() != (l.size() + bl - 1) / bl) {
            throw validation_error(where + ": wrong number of blocks");
        }
        for (std::size_t b = 0; b < l.blocks.size(); ++b) {
            const std::size_t lo = b * bl;
            const std::size_t hi = std::min(lo + bl, l.size());
            const auto bmax = *std::max_element(l.impacts.begin() + static_cast<std::ptrdiff_t>(lo),
                                                l.impacts.begin() + static_cast<std::ptrdiff_t>(hi));
            if (l.blocks[b].last_doc != l.docs[hi - 1] || l.blocks[b].max_impact != bmax) {
                throw validation_error(where + ": block " + std::to_string(b) + " metadata mismatch");
            }
        }
    }

    index_meta m_meta;
    std::vector<record_id> m_doc_ids;
    std::vector<postings_list> m_lists;
};

/// Builds the index; documents are assigned ordinals in ascending id order.
inline inverted_index build_index(const std::map<record_id, sparse_vector>& docs, std::uint32_t vocab_size,
                                  std::uint32_t bits = 8, std::uint32_t block_length = 64)
{
    if (docs.empty()) {
        throw validation_error("build_index: empty corpus");
    }
    index_meta meta;
    meta.vocab_size = vocab_size;
    meta.num_docs = static_cast<std::uint32_t>(docs.size());
    meta.quantization_bits = bits;
    meta.block_length = block_length;
    if (bits < 1 || bits > 16) {
        throw validation_error("build_index: bits must be in [1, 16]");
    }
    if (block_length < 1) {
        throw validation_error("build_index: block_length must be >= 1");
    }
    double max_weight = 0.0;
    for (const auto& [id, vec] : docs) {
        vec.validate();
        for (const auto& e : vec.entries) {
            if (e.term >= vocab_size) {
                throw validation_error("build_index: document " + std::to_string(id) + " has term-id "
                                       + std::to_string(e.term) + " >= vocab_size " + std::to_string(vocab_size));
            }
            max_weight = std::max(max_weight, e.weight);
        }
    }
    if (!(max_weight > 0.0)) {
        throw validation_error("build_index: all document weights are zero");
    }
    meta.global_scale = max_weight / static_cast<double>(meta.max_level());

    std::vector<postings_list> lists(vocab_size);
    for (std::uint32_t t = 0; t < vocab_size; ++t) {
        lists[t].term = t;
    }
    std::vector<record_id> doc_ids;
    doc_ids.reserve(docs.size());
    for (const auto& [id, vec] : docs) {
        const auto ordinal = static_cast<doc_ordinal>(doc_ids.size());
        doc_ids.push_back(id);
        for (const auto& e : vec.entries) {
            auto& l = lists[e.term];
            l.docs.push_back(ordinal);
            l.impacts.push_back(quantize_weight(e.weight, meta.global_scale, meta.max_level()));
        }
    }
    for (auto& l : lists) {
        for (std::size_t lo = 0; lo < l.size(); lo += block_length) {
            const std::size_t hi = std::min<std::size_t>(lo + block_length, l.size());
            block_max b{l.docs[hi - 1], 0};
            for (std::size_t i = lo; i < hi; ++i) {
                b.max_impact = std::max(b.max_impact, l.impacts[i]);
            }
            l.max_impact = std::max(l.max_impact, b.max_impact);
            l.blocks.push_back(b);
        }
    }
    return inverted_index(meta, std::move(doc_ids), std::move(lists));
}

/// Query weights quantized with the same linear scheme as the documents,
/// scaled by the query's own maximum.
struct quantized_query {
    struct term_weight {
        term_id term;
        std::uint32_t weight;
    };
    std::vector<term_weight> terms;
    double scale = 0.0;
};

inline quantized_query quantize_query(const sparse_vector& q, std::uint32_t bits)
{
    quantized_query out;
    double max_weight = 0.0;
    for (const auto& e : q.entries) {
        max_weight = std::max(max_weight, e.weight);
    }
    if (!(max_weight > 0.0)) {
        return out;
    }
    const std::uint32_t max_level = (1U << bits) - 1U;
    out.scale = max_weight / static_cast<double>(max_level);
    for (const auto& e : q.entries) {
        out.terms.push_back({e.term, quantize_weight(e.weight, out.scale, max_level)});
    }
    return out;
}

namespace detail {

struct scored_doc {
    std::uint64_t score;
    doc_ordinal doc;
};

/// Bounded top-k under (score desc, ordinal asc). Documents arrive in
/// increasing ordinal order, so a newcomer only enters with a strictly
/// greater score than the current k-th.
class topk_queue {
public:
    explicit topk_queue(std::size_t k) : m_k(k) {}

    [[nodiscard]] std::uint64_t threshold() const noexcept { return m_heap.size() < m_k ? 0 : m_heap.top().score; }

    bool insert(std::uint64_t score, doc_ordinal doc)
    {
        if (score <= threshold()) {
            return false;
        }
        if (m_heap.size() == m_k) {
            m_heap.pop();
        }
        m_heap.push({score, doc});
        return true;
    }

    [[nodiscard]] std::vector<scored_doc> drain()
    {
        std::vector<scored_doc> out;
        while (!m_heap.empty()) {
            out.push_back(m_heap.top());
            m_heap.pop();
        }
        return out;
    }

private:
    struct worse_first {
        bool operator()(const scored_doc& a, const scored_doc& b) const noexcept
        {
            // priority_queue keeps the "largest" on top; make that the worst entry.
            return a.score != b.score ? a.score > b.score : a.doc < b.doc;
        }
    };

    std::size_t m_k;
    std::priority_queue<scored_doc, std::vector<scored_doc>, worse_first> m_heap;
};

struct cursor {
    const postings_list* list;
    std::uint64_t query_weight;
    std::uint64_t upper_bound;
    std::size_t pos = 0;
    std::size_t block = 0;

    [[nodiscard]] doc_ordinal doc() const noexcept { return pos < list->size() ? list->docs[pos] : end_of_list; }

    [[nodiscard]] std::uint64_t score(retrieval_stats& stats) const noexcept
    {
        ++stats.postings_scored;
        return query_weight * list->impacts[pos];
    }

    void next() noexcept { ++pos; }

    /// Moves to the first posting with ordinal >= target.
    void next_geq(doc_ordinal target, std::size_t block_length) noexcept
    {
        if (doc() >= target) {
            return;
        }
        while (block < list->blocks.size() && list->blocks[block].last_doc < target) {
            ++block;
        }
        if (block == list->blocks.size()) {
            pos = list->size();
            return;
        }
        const auto lo = list->docs.begin() + static_cast<std::ptrdiff_t>(std::max(pos, block * block_length));
        const auto hi =
            list->docs.begin() + static_cast<std::ptrdiff_t>(std::min(list->size(), (block + 1) * block_length));
        pos = static_cast<std::size_t>(std::lower_bound(lo, hi, target) - list->docs.begin());
    }

    /// Index of the block that would hold `target`, without moving the cursor;
    /// blocks.size() when the list ends before it.
    [[nodiscard]] std::size_t shallow_block(doc_ordinal target) noexcept
    {
        while (block < list->blocks.size() && list->blocks[block].last_doc < target) {
            ++block;
        }
        return block;
    }
};

inline std::vector<cursor> open_cursors(const inverted_index& index, const quantized_query& q,
                                        retrieval_stats& stats)
{
    std::vector<cursor> cursors;
    for (const auto& tw : q.terms) {
        const auto& l = index.list(tw.term);
        if (l.empty()) {
            continue;
        }
        stats.postings_total += l.size();
        cursors.push_back(cursor{&l, tw.weight, static_cast<std::uint64_t>(tw.weight) * l.max_impact});
    }
    return cursors;
}

inline ranked_list finish(const inverted_index& index, const quantized_query& q, std::vector<scored_doc> docs)
{
    const double scale = q.scale * index.meta().global_scale;
    std::vector<ranked_entry> out;
    out.reserve(docs.size());
    for (const auto& d : docs) {
        out.push_back({index.external_id(d.doc), static_cast<double>(d.score) * scale});
    }
    // Ordinals follow external ids, and scaling by a positive constant keeps
    // the integer order, so this matches the integer-score order.
    std::sort(out.begin(), out.end(), ranks_before);
    return ranked_list{std::move(out)};
}

}  // namespace detail

/// Scores every document sharing a term with the query (term-at-a-time) and
/// keeps the exact top-k. Reference for the pruning strategies.
inline ranked_list retrieve_exhaustive(const inverted_index& index, const sparse_vector& query, std::size_t k,
                                       retrieval_stats* stats_out = nullptr)
{
    if (k < 1) {
        throw validation_error("retrieve: k must be >= 1");
    }
    retrieval_stats stats;
    const auto q = quantize_query(query, index.meta().quantization_bits);
    std::vector<std::uint64_t> acc(index.meta().num_docs, 0);
    for (const auto& tw : q.terms) {
        const auto& l = index.list(tw.term);
        stats.postings_total += l.size();
        stats.postings_scored += l.size();
        for (std::size_t i = 0; i < l.size(); ++i) {
            acc[l.docs[i]] += static_cast<std::uint64_t>(tw.weight) * l.impacts[i];
        }
    }
    detail::topk_queue topk(k);
    for (doc_ordinal d = 0; d < acc.size(); ++d) {
        if (acc[d] > 0) {
            ++stats.docs_scored;
            topk.insert(acc[d], d);
        }
    }
    if (stats_out != nullptr) {
        *stats_out = stats;
    }
    return detail::finish(index, q, topk.drain());
}

/// Block-max WAND, document-at-a-time. Safe: returns exactly the exhaustive
/// top-k.
inline ranked_list retrieve_bmw(const inverted_index& index, const sparse_vector& query, std::size_t k,
                                retrieval_stats* stats_out = nullptr)
{
    if (k < 1) {
        throw validation_error("retrieve: k must be >= 1");
    }
    retrieval_stats stats;
    const auto q = quantize_query(query, index.meta().quantization_bits);
    auto cursors = detail::open_cursors(index, q, stats);
    const std::size_t bl = index.meta().block_length;
    detail::topk_queue topk(k);
    std::vector<detail::cursor*> order;
    for (auto& c : cursors) {
        order.push_back(&c);
    }
    auto by_doc = [](const detail::cursor* a, const detail::cursor* b) { return a->doc() < b->doc(); };

    while (true) {
        std::sort(order.begin(), order.end(), by_doc);
        const std::uint64_t theta = topk.threshold();

        // Pivot: first position where the summed list upper bounds exceed theta.
        std::uint64_t acc = 0;
        std::size_t pivot = order.size();
        for (std::size_t i = 0; i < order.size(); ++i) {
            if (order[i]->doc() == end_of_list) {
                break;
            }
            acc += order[i]->upper_bound;
            if (acc > theta) {
                pivot = i;
                break;
            }
        }
        if (pivot == order.size()) {
            break;
        }
        const doc_ordinal pivot_doc = order[pivot]->doc();
        while (pivot + 1 < order.size() && order[pivot + 1]->doc() == pivot_doc) {
            ++pivot;
        }

        // Refine with the block maxima covering pivot_doc.
        std::uint64_t block_bound = 0;
        doc_ordinal next_boundary = end_of_list;
        for (std::size_t i = 0; i <= pivot; ++i) {
            auto* c = order[i];
            const auto b = c->shallow_block(pivot_doc);
            if (b < c->list->blocks.size()) {
                block_bound += c->query_weight * c->list->blocks[b].max_impact;
                next_boundary = std::min(next_boundary, c->list->blocks[b].last_doc + 1);
            }
        }

        if (block_bound > theta) {
            if (order[0]->doc() == pivot_doc) {
                std::uint64_t score = 0;
                for (std::size_t i = 0; i <= pivot; ++i) {
                    score += order[i]->score(stats);
                    order[i]->next();
                }
                ++stats.docs_scored;
                topk.insert(score, pivot_doc);
            } else {
                for (std::size_t i = 0; i < pivot; ++i) {
                    if (order[i]->doc() < pivot_doc) {
                        order[i]->next_geq(pivot_doc, bl);
                    }
                }
            }
        } else {
            // No document up to the end of the shallowest current block can
            // beat theta with these lists.
            doc_ordinal target = next_boundary;
            if (pivot + 1 < order.size()) {
                target = std::min(target, order[pivot + 1]->doc());
            }
            if (target <= pivot_doc) {
                target = pivot_doc + 1;
            }
            for (std::size_t i = 0; i <= pivot; ++i) {
                order[i]->next_geq(target, bl);
            }
        }
    }
    if (stats_out != nullptr) {
        *stats_out = stats;
    }
    return detail::finish(index, q, topk.drain());
}

/// MaxScore, document-at-a-time: lists are split into essential and
/// non-essential by cumulative upper bound; only essential lists drive the
/// candidate selection. Safe.
inline ranked_list retrieve_maxscore(const inverted_index& index, const sparse_vector& query, std::size_t k,
                                     retrieval_stats* stats_out = nullptr)
{
    if (k < 1) {
        throw validation_error("retrieve: k must be >= 1");
    }
    retrieval_stats stats;
    const auto q = quantize_query(query, index.meta().quantization_bits);
    auto cursors = detail::open_cursors(index, q, stats);
    const std::size_t bl = index.meta().block_length;
    std::stable_sort(cursors.begin(), cursors.end(),
                     [](const auto& a, const auto& b) { return a.upper_bound < b.upper_bound; });
    // prefix[i] = sum of upper bounds of cursors[0..i]
    std::vector<std::uint64_t> prefix(cursors.size());
    std::uint64_t running = 0;
    for (std::size_t i = 0; i < cursors.size(); ++i) {
        running += cursors[i].upper_bound;
        prefix[i] = running;
    }
    detail::topk_queue topk(k);
    std::size_t first_essential = 0;

    while (true) {
        std::uint64_t theta = topk.threshold();
        while (first_essential < cursors.size() && prefix[first_essential] <= theta) {
            ++first_essential;
        }
        if (first_essential == cursors.size()) {
            break;
        }
        doc_ordinal current = end_of_list;
        for (std::size_t i = first_essential; i < cursors.size(); ++i) {
            current = std::min(current, cursors[i].doc());
        }
        if (current == end_of_list) {
            break;
        }
        std::uint64_t score = 0;
        for (std::size_t i = first_essential; i < cursors.size(); ++i) {
            if (cursors[i].doc() == current) {
                score += cursors[i].score(stats);
                cursors[i].next();
            }
        }
        for (std::size_t i = first_essential; i-- > 0;) {
            if (score + prefix[i] <= theta) {
                break;
            }
            cursors[i].next_geq(current, bl);
            if (cursors[i].doc() == current) {
                score += cursors[i].score(stats);
            }
        }
        ++stats.docs_scored;
        topk.insert(score, current);
    }
    if (stats_out != nullptr) {
        *stats_out = stats;
    }
    return detail::finish(index, q, topk.drain());
}

enum class retrieval_algorithm { exhaustive, bmw, maxscore };

inline retrieval_algorithm parse_algorithm(const std::string& name)
{
    if (name == "exhaustive") {
        return retrieval_algorithm::exhaustive;
    }
    if (name == "bmw") {
        return retrieval_algorithm::bmw;
    }
    if (name == "maxscore") {
        return retrieval_algorithm::maxscore;
    }
    throw validation_error("unknown retrieval algorithm \"" + name + "\" (expected exhaustive, bmw or maxscore)");
}

inline std::string to_string(retrieval_algorithm a)
{
    switch (a) {
    case retrieval_algorithm::exhaustive: return "exhaustive";
    case retrieval_algorithm::bmw: return "bmw";
    case retrieval_algorithm::maxscore: return "maxscore";
    }
    return "?";
}

inline ranked_list retrieve(retrieval_algorithm algo, const inverted_index& index, const sparse_vector& query,
                            std::size_t k, retrieval_stats* stats = nullptr)
{
    switch (algo) {
    case retrieval_algorithm::exhaustive: return retrieve_exhaustive(index, query, k, stats);
    case retrieval_algorithm::bmw: return retrieve_bmw(index, query, k, stats);
    case retrieval_algorithm::maxscore: return retrieve_maxscore(index, query, k, stats);
    }
    throw validation_error("unknown retrieval algorithm");
}

}  // namespace splate
