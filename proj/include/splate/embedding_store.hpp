#pragma once

// Frozen per-token dense representations and the deterministic synthetic
// encoder that produces them.

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "splate/binary_io.hpp"
#include "splate/error.hpp"
#include "splate/numerics.hpp"
#include "splate/rng.hpp"

namespace splate {

using term_id = std::uint32_t;
using record_id = std::uint64_t;

struct vocabulary_config {
    std::uint32_t vocab_size = 0;
    std::uint32_t dim = 0;
    std::uint64_t seed = 0;
    /// Strength of the neighbor mixture added to each token's base vector.
    double context_weight = 0.3;
    /// Neighbors considered on each side of a token.
    std::uint32_t context_window = 2;

    void validate() const
    {
        if (vocab_size < 2) {
            throw validation_error("vocab_size must be >= 2, got " + std::to_string(vocab_size));
        }
        if (dim < 2) {
            throw validation_error("dim must be >= 2, got " + std::to_string(dim));
        }
        if (!(context_weight >= 0.0) || !std::isfinite(context_weight)) {
            throw validation_error("context_weight must be finite and >= 0");
        }
    }
};

struct token_embedding_record {
    record_id id = 0;
    std::vector<term_id> tokens;
    /// num_tokens x dim, unit-norm rows.
    Matrix embeddings;

    [[nodiscard]] std::size_t num_tokens() const noexcept { return tokens.size(); }
    [[nodiscard]] std::size_t dim() const noexcept { return embeddings.cols(); }

    void validate(std::uint32_t vocab_size, std::uint32_t dim) const
    {
        if (tokens.empty()) {
            throw validation_error("record " + std::to_string(id) + " has no tokens");
        }
        if (embeddings.rows() != tokens.size() || embeddings.cols() != dim) {
            throw dimension_error("record " + std::to_string(id) + " embeddings are " + std::to_string(embeddings.rows())
                                  + "x" + std::to_string(embeddings.cols()) + ", expected "
                                  + std::to_string(tokens.size()) + "x" + std::to_string(dim));
        }
        for (term_id t : tokens) {
            if (t >= vocab_size) {
                throw validation_error("record " + std::to_string(id) + ": term-id " + std::to_string(t)
                                       + " >= vocab_size " + std::to_string(vocab_size));
            }
        }
        for (std::size_t r = 0; r < embeddings.rows(); ++r) {
            const double norm = std::sqrt(dot(embeddings.row(r), embeddings.row(r)));
            if (std::abs(norm - 1.0) > 1e-6) {
                throw validation_error("record " + std::to_string(id) + ": row " + std::to_string(r)
                                       + " is not unit norm (" + std::to_string(norm) + ")");
            }
        }
    }

    friend bool operator==(const token_embedding_record&, const token_embedding_record&) = default;
};

inline void normalize_in_place(std::span<double> v)
{
    const double norm = std::sqrt(dot(v, v));
    if (norm == 0.0) {
        throw numeric_error("cannot normalize a zero vector");
    }
    for (double& x : v) {
        x /= norm;
    }
}

/// The frozen vocabulary projection E (|V| x d): seeded isotropic Gaussian
/// rows, each scaled to unit norm. Doubles as the synthetic encoder's
/// per-term base vectors.
inline Matrix make_projection(const vocabulary_config& config)
{
    config.validate();
    rng gen(derive_seed(config.seed, 0xE));
    Matrix e(config.vocab_size, config.dim);
    for (std::size_t v = 0; v < e.rows(); ++v) {
        auto row = e.row(v);
        for (double& x : row) {
            x = gen.normal();
        }
        normalize_in_place(row);
    }
    return e;
}

/// Desk-scale stand-in for a frozen contextual encoder.
///
/// Token i's embedding is normalize(E[t_i] + w * mean_j(c_ij * E[t_j])) over
/// neighbors j within the context window, where c_ij in [0.5, 1.5) is a hash
/// of (seed, t_i, t_j, j - i). Values are rounded to float so that the f32
/// store format reproduces them exactly.
class synth_encoder {
public:
    explicit synth_encoder(vocabulary_config config) : m_config(config), m_projection(make_projection(config)) {}

    [[nodiscard]] const vocabulary_config& config() const noexcept { return m_config; }
    [[nodiscard]] const Matrix& projection() const noexcept { return m_projection; }

    [[nodiscard]] token_embedding_record encode(std::span<const term_id> tokens, record_id id = 0) const
    {
        if (tokens.empty()) {
            throw validation_error("synth_encoder: empty token list");
        }
        for (term_id t : tokens) {
            if (t >= m_config.vocab_size) {
                throw validation_error("synth_encoder: term-id " + std::to_string(t) + " >= vocab_size "
                                       + std::to_string(m_config.vocab_size));
            }
        }
        const std::size_t n = tokens.size();
        const std::size_t d = m_config.dim;
        const auto window = static_cast<std::ptrdiff_t>(m_config.context_window);
        token_embedding_record out{id, {tokens.begin(), tokens.end()}, Matrix(n, d)};
        std::vector<double> context(d);
        for (std::size_t i = 0; i < n; ++i) {
            auto row = out.embeddings.row(i);
            auto base = m_projection.row(tokens[i]);
            std::copy(base.begin(), base.end(), row.begin());
            std::fill(context.begin(), context.end(), 0.0);
            std::size_t neighbors = 0;
            for (std::ptrdiff_t off = -window; off <= window; ++off) {
                const auto j = static_cast<std::ptrdiff_t>(i) + off;
                if (off == 0 || j < 0 || j >= static_cast<std::ptrdiff_t>(n)) {
                    continue;
                }
                const term_id neighbor = tokens[static_cast<std::size_t>(j)];
                const double c = 0.5 + mix_coefficient(tokens[i], neighbor, off);
                auto nb = m_projection.row(neighbor);
                for (std::size_t k = 0; k < d; ++k) {
                    context[k] += c * nb[k];
                }
                ++neighbors;
            }
            if (neighbors > 0 && m_config.context_weight > 0.0) {
                const double scale = m_config.context_weight / static_cast<double>(neighbors);
                for (std::size_t k = 0; k < d; ++k) {
                    row[k] += scale * context[k];
                }
            }
            normalize_in_place(row);
            for (double& x : row) {
                x = static_cast<double>(static_cast<float>(x));
            }
        }
        return out;
    }

private:
    [[nodiscard]] double mix_coefficient(term_id center, term_id neighbor, std::ptrdiff_t offset) const
    {
        std::uint64_t key = mix64(m_config.seed ^ 0xC0FFEE);
        key = mix64(key ^ center);
        key = mix64(key ^ (static_cast<std::uint64_t>(neighbor) << 8) ^ static_cast<std::uint64_t>(offset + 128));
        return static_cast<double>(key >> 11) * 0x1.0p-53;
    }

    vocabulary_config m_config;
    Matrix m_projection;
};

/// Write-once-then-read-many container of token embedding records.
///
/// Records are kept ordered by id, which is also the on-disk order:
///   "SPL8" | vocab_size u32 | dim u32 | count u64 |
///   count x (id u64 | num_tokens u32 | term-ids u32[num_tokens] | f32[num_tokens*dim])
/// All integers and floats little-endian.
class embedding_store {
public:
    embedding_store(std::uint32_t vocab_size, std::uint32_t dim) : m_vocab_size(vocab_size), m_dim(dim) {}

    void put(token_embedding_record record)
    {
        if (m_frozen) {
            throw usage_error("embedding_store: put after freeze");
        }
        record.validate(m_vocab_size, m_dim);
        for (double x : record.embeddings.data()) {
            if (static_cast<double>(static_cast<float>(x)) != x) {
                throw validation_error("record " + std::to_string(record.id)
                                       + ": embeddings must be exactly representable in f32");
            }
        }
        const auto id = record.id;
        auto [it, inserted] = m_records.try_emplace(id, std::move(record));
        if (!inserted) {
            throw validation_error("embedding_store: duplicate id " + std::to_string(id));
        }
    }

    [[nodiscard]] const token_embedding_record& get(record_id id) const
    {
        auto it = m_records.find(id);
        if (it == m_records.end()) {
            throw not_found_error("embedding_store: unknown id " + std::to_string(id));
        }
        return it->second;
    }

    [[nodiscard]] bool contains(record_id id) const { return m_records.contains(id); }

    void freeze() noexcept { m_frozen = true; }
    [[nodiscard]] bool frozen() const noexcept { return m_frozen; }

    [[nodiscard]] std::uint32_t vocab_size() const noexcept { return m_vocab_size; }
    [[nodiscard]] std::uint32_t dim() const noexcept { return m_dim; }
    [[nodiscard]] std::size_t size() const noexcept { return m_records.size(); }

    /// Ids in ascending order.
    [[nodiscard]] std::vector<record_id> ids() const
    {
        std::vector<record_id> out;
        out.reserve(m_records.size());
        for (const auto& [id, _] : m_records) {
            out.push_back(id);
        }
        return out;
    }

    [[nodiscard]] auto begin() const { return m_records.begin(); }
    [[nodiscard]] auto end() const { return m_records.end(); }

    [[nodiscard]] std::vector<std::uint8_t> serialize() const
    {
        io::byte_writer w;
        w.magic("SPL8");
        w.put<std::uint32_t>(m_vocab_size);
        w.put<std::uint32_t>(m_dim);
        w.put<std::uint64_t>(m_records.size());
        for (const auto& [id, rec] : m_records) {
            w.put<std::uint64_t>(id);
            w.put<std::uint32_t>(static_cast<std::uint32_t>(rec.tokens.size()));
            w.put_all<term_id>(rec.tokens);
            for (double x : rec.embeddings.data()) {
                w.put<float>(static_cast<float>(x));
            }
        }
        return w.take();
    }

    /// Loaded stores come back frozen.
    [[nodiscard]] static embedding_store deserialize(std::span<const std::uint8_t> bytes,
                                                     const std::string& what = "embedding store")
    {
        io::byte_reader r(bytes, what);
        r.expect_magic("SPL8");
        const auto vocab_size = r.get<std::uint32_t>();
        const auto dim = r.get<std::uint32_t>();
        const auto count = r.get<std::uint64_t>();
        embedding_store store(vocab_size, dim);
        for (std::uint64_t n = 0; n < count; ++n) {
            token_embedding_record rec;
            rec.id = r.get<std::uint64_t>();
            const auto num_tokens = r.get<std::uint32_t>();
            rec.tokens.resize(num_tokens);
            for (auto& t : rec.tokens) {
                t = r.get<term_id>();
            }
            rec.embeddings = Matrix(num_tokens, dim);
            for (double& x : rec.embeddings.data()) {
                x = static_cast<double>(r.get<float>());
            }
            store.put(std::move(rec));
        }
        r.expect_end();
        store.freeze();
        return store;
    }

    void save(const std::filesystem::path& path) const { io::write_file(path, serialize()); }

    [[nodiscard]] static embedding_store load(const std::filesystem::path& path)
    {
        return deserialize(io::read_file(path), path.string());
    }

private:
    std::uint32_t m_vocab_size;
    std::uint32_t m_dim;
    bool m_frozen = false;
    std::map<record_id, token_embedding_record> m_records;
};

}  // namespace splate
