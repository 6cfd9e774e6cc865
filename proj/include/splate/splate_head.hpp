#pragma once

// The sparse adapter head: a residual bottleneck MLP on top of frozen token
// embeddings, followed by the tied vocabulary projection, log-saturated ReLU
// max pooling over tokens, and top-k pruning.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "splate/binary_io.hpp"
#include "splate/embedding_store.hpp"
#include "splate/error.hpp"
#include "splate/numerics.hpp"
#include "splate/rng.hpp"

namespace splate {

enum class activation : std::uint32_t { relu = 0, identity = 1 };

inline std::string to_string(activation a) { return a == activation::relu ? "relu" : "identity"; }

struct sparse_entry {
    term_id term = 0;
    double weight = 0.0;
    friend bool operator==(const sparse_entry&, const sparse_entry&) = default;
};

/// Nonzero vocabulary weights sorted by strictly increasing term-id.
struct sparse_vector {
    std::vector<sparse_entry> entries;

    [[nodiscard]] std::size_t size() const noexcept { return entries.size(); }
    [[nodiscard]] bool empty() const noexcept { return entries.empty(); }

    void validate() const
    {
        for (std::size_t i = 0; i < entries.size(); ++i) {
            if (!(entries[i].weight > 0.0) || !std::isfinite(entries[i].weight)) {
                throw validation_error("sparse_vector: non-positive weight for term " + std::to_string(entries[i].term));
            }
            if (i > 0 && entries[i - 1].term >= entries[i].term) {
                throw validation_error("sparse_vector: term-ids not strictly increasing");
            }
        }
    }

    friend bool operator==(const sparse_vector&, const sparse_vector&) = default;
};

/// Entries ordered for display: descending weight, then ascending term-id.
inline std::vector<sparse_entry> by_weight(const sparse_vector& v)
{
    auto out = v.entries;
    std::sort(out.begin(), out.end(), [](const sparse_entry& a, const sparse_entry& b) {
        return a.weight != b.weight ? a.weight > b.weight : a.term < b.term;
    });
    return out;
}

struct pooling_config {
    std::uint32_t k_q = 10;
    std::uint32_t k_d = 100;

    void validate() const
    {
        if (k_q < 1 || k_d < 1) {
            throw validation_error("pooling sizes must be >= 1");
        }
    }
};

enum class parameter_block { w_down, b_down, w_up, b_up, bias, projection };

inline constexpr parameter_block trainable_blocks[] = {parameter_block::w_down, parameter_block::b_down,
                                                       parameter_block::w_up, parameter_block::b_up,
                                                       parameter_block::bias};

inline std::string to_string(parameter_block b)
{
    switch (b) {
    case parameter_block::w_down: return "W_down";
    case parameter_block::b_down: return "b_down";
    case parameter_block::w_up: return "W_up";
    case parameter_block::b_up: return "b_up";
    case parameter_block::bias: return "b";
    case parameter_block::projection: return "E";
    }
    return "?";
}

/// The tied vocabulary projection E (|V| x d). Immutable once built; copies
/// share storage. Keeps E^T alongside E so vocabulary logits can be
/// accumulated across terms with the same per-term summation order as a
/// plain row dot product.
class frozen_projection {
public:
    frozen_projection() = default;
    explicit frozen_projection(Matrix e)
    {
        Matrix t(e.cols(), e.rows());
        for (std::size_t v = 0; v < e.rows(); ++v) {
            for (std::size_t k = 0; k < e.cols(); ++k) {
                t(k, v) = e(v, k);
            }
        }
        m_matrix = std::make_shared<const Matrix>(std::move(e));
        m_transposed = std::make_shared<const Matrix>(std::move(t));
    }

    [[nodiscard]] const Matrix& matrix() const noexcept { return m_matrix ? *m_matrix : empty(); }
    [[nodiscard]] const Matrix& transposed() const noexcept { return m_transposed ? *m_transposed : empty(); }
    [[nodiscard]] std::size_t rows() const noexcept { return matrix().rows(); }
    [[nodiscard]] std::size_t cols() const noexcept { return matrix().cols(); }
    [[nodiscard]] std::span<const double> row(std::size_t v) const noexcept { return matrix().row(v); }

    friend bool operator==(const frozen_projection& a, const frozen_projection& b) { return a.matrix() == b.matrix(); }

private:
    static const Matrix& empty() noexcept
    {
        static const Matrix none;
        return none;
    }

    std::shared_ptr<const Matrix> m_matrix;
    std::shared_ptr<const Matrix> m_transposed;
};

/// out[v] = E_v . z + b_v for every term v. Accumulates over the embedding
/// dimension in index order, exactly like dot(E_v, z).
inline void vocab_logits(const frozen_projection& projection, std::span<const double> z, std::span<const double> bias,
                         std::span<double> out)
{
    const Matrix& et = projection.transposed();
    if (z.size() != et.rows() || bias.size() != et.cols() || out.size() != et.cols()) {
        throw dimension_error("vocab_logits: shape mismatch");
    }
    std::fill(out.begin(), out.end(), 0.0);
    for (std::size_t k = 0; k < z.size(); ++k) {
        const double zk = z[k];
        const double* col = et.row(k).data();
        double* o = out.data();
        for (std::size_t v = 0; v < out.size(); ++v) {
            o[v] += col[v] * zk;
        }
    }
    for (std::size_t v = 0; v < out.size(); ++v) {
        out[v] += bias[v];
    }
}

/// Trainable residual MLP (theta) and vocabulary bias b, plus the frozen
/// tied projection E.
///
/// MLP(h) = W_up * act(W_down * h + b_down) + b_up with W_down of shape
/// (d/2 x d) and W_up of shape (d x d/2). Checkpoint layout:
///   "SPLH" | d u32 | |V| u32 | activation u32 |
///   f64 W_down | b_down | W_up | b_up | b | E    (row-major, little-endian)
struct adapter_head {
    Matrix w_down;
    Vector b_down;
    Matrix w_up;
    Vector b_up;
    frozen_projection projection;
    Vector bias;
    activation act = activation::relu;

    /// W_down ~ N(0, 0.02^2); W_up, b_up, b_down and b start at zero so the MLP
    /// output is exactly zero and the head is the identity on h.
    [[nodiscard]] static adapter_head initialize(Matrix projection, std::uint64_t seed,
                                                 activation act = activation::relu)
    {
        const std::size_t d = projection.cols();
        const std::size_t vocab = projection.rows();
        if (d < 2 || vocab < 2) {
            throw validation_error("adapter_head: projection must be at least 2x2");
        }
        const std::size_t hidden = d / 2;
        adapter_head head;
        head.w_down = Matrix(hidden, d);
        rng gen(derive_seed(seed, 0xAD));
        for (double& x : head.w_down.data()) {
            x = 0.02 * gen.normal();
        }
        head.b_down = Vector(hidden, 0.0);
        head.w_up = Matrix(d, hidden);
        head.b_up = Vector(d, 0.0);
        head.bias = Vector(vocab, 0.0);
        head.projection = frozen_projection(std::move(projection));
        head.act = act;
        return head;
    }

    [[nodiscard]] std::size_t dim() const noexcept { return projection.cols(); }
    [[nodiscard]] std::size_t vocab_size() const noexcept { return projection.rows(); }
    [[nodiscard]] std::size_t hidden_dim() const noexcept { return w_down.rows(); }

    [[nodiscard]] std::span<double> block(parameter_block b)
    {
        switch (b) {
        case parameter_block::w_down: return w_down.data();
        case parameter_block::b_down: return b_down;
        case parameter_block::w_up: return w_up.data();
        case parameter_block::b_up: return b_up;
        case parameter_block::bias: return bias;
        case parameter_block::projection: throw usage_error("adapter_head: E is frozen");
        }
        return {};
    }

    [[nodiscard]] std::span<const double> block(parameter_block b) const
    {
        if (b == parameter_block::projection) {
            return projection.matrix().data();
        }
        return const_cast<adapter_head&>(*this).block(b);
    }

    [[nodiscard]] std::size_t num_trainable_parameters() const noexcept
    {
        return w_down.size() + b_down.size() + w_up.size() + b_up.size() + bias.size();
    }

    void validate() const
    {
        const std::size_t d = dim();
        const std::size_t h = d / 2;
        if (w_down.rows() != h || w_down.cols() != d || b_down.size() != h || w_up.rows() != d || w_up.cols() != h
            || b_up.size() != d || bias.size() != vocab_size()) {
            throw dimension_error("adapter_head: inconsistent parameter shapes");
        }
        for (auto b : {parameter_block::w_down, parameter_block::b_down, parameter_block::w_up, parameter_block::b_up,
                       parameter_block::bias, parameter_block::projection}) {
            if (!all_finite(block(b))) {
                throw numeric_error("adapter_head: non-finite value in " + to_string(b));
            }
        }
    }

    [[nodiscard]] std::vector<std::uint8_t> serialize() const
    {
        io::byte_writer w;
        w.magic("SPLH");
        w.put<std::uint32_t>(static_cast<std::uint32_t>(dim()));
        w.put<std::uint32_t>(static_cast<std::uint32_t>(vocab_size()));
        w.put<std::uint32_t>(static_cast<std::uint32_t>(act));
        for (auto b : {parameter_block::w_down, parameter_block::b_down, parameter_block::w_up, parameter_block::b_up,
                       parameter_block::bias, parameter_block::projection}) {
            w.put_all<double>(block(b));
        }
        return w.take();
    }

    [[nodiscard]] static adapter_head deserialize(std::span<const std::uint8_t> bytes,
                                                  const std::string& what = "adapter checkpoint")
    {
        io::byte_reader r(bytes, what);
        r.expect_magic("SPLH");
        const auto d = r.get<std::uint32_t>();
        const auto vocab = r.get<std::uint32_t>();
        const auto tag = r.get<std::uint32_t>();
        if (tag > static_cast<std::uint32_t>(activation::identity)) {
            r.fail("unknown activation tag " + std::to_string(tag));
        }
        if (d < 2 || vocab < 2) {
            r.fail("bad dimensions");
        }
        adapter_head head;
        head.act = static_cast<activation>(tag);
        head.w_down = Matrix(d / 2, d);
        head.b_down = Vector(d / 2);
        head.w_up = Matrix(d, d / 2);
        head.b_up = Vector(d);
        head.bias = Vector(vocab);
        for (auto b : trainable_blocks) {
            for (double& x : head.block(b)) {
                x = r.get<double>();
            }
        }
        Matrix e(vocab, d);
        for (double& x : e.data()) {
            x = r.get<double>();
        }
        head.projection = frozen_projection(std::move(e));
        r.expect_end();
        head.validate();
        return head;
    }

    void save(const std::filesystem::path& path) const { io::write_file(path, serialize()); }

    [[nodiscard]] static adapter_head load(const std::filesystem::path& path)
    {
        return deserialize(io::read_file(path), path.string());
    }

    friend bool operator==(const adapter_head&, const adapter_head&) = default;
};

namespace detail {

struct mlp_forward {
    Vector pre;     // W_down h + b_down
    Vector hidden;  // act(pre)
    Vector z;       // h + W_up hidden + b_up
};

inline mlp_forward residual_mlp(const adapter_head& head, std::span<const double> h)
{
    if (h.size() != head.dim()) {
        throw dimension_error("adapter_head: token embedding has dimension " + std::to_string(h.size())
                              + ", head expects " + std::to_string(head.dim()));
    }
    mlp_forward f;
    f.pre = affine(head.w_down, h, head.b_down);
    f.hidden = head.act == activation::relu ? relu(f.pre) : f.pre;
    Vector up = affine(head.w_up, f.hidden, head.b_up);
    f.z.resize(h.size());
    for (std::size_t i = 0; i < h.size(); ++i) {
        f.z[i] = h[i] + up[i];
    }
    return f;
}

}  // namespace detail

/// Vocabulary logits for one token: (h + MLP(h)) . E_v + b_v for every v.
inline Vector mlm_logits(const adapter_head& head, std::span<const double> h)
{
    auto f = detail::residual_mlp(head, h);
    Vector logits(head.vocab_size());
    vocab_logits(head.projection, f.z, head.bias, logits);
    return logits;
}

/// w_v = max_i log(1 + relu(w_iv)).
inline Vector splade_pool(std::span<const Vector> token_logits)
{
    if (token_logits.empty()) {
        throw validation_error("splade_pool: no tokens");
    }
    const std::size_t vocab = token_logits.front().size();
    Vector pooled(vocab, 0.0);
    for (const auto& logits : token_logits) {
        if (logits.size() != vocab) {
            throw dimension_error("splade_pool: ragged token logits");
        }
        for (std::size_t v = 0; v < vocab; ++v) {
            pooled[v] = std::max(pooled[v], log1p_relu(logits[v]));
        }
    }
    return pooled;
}

/// Keeps the k largest strictly positive weights; ties at the boundary go to
/// the lower term-id.
inline sparse_vector topk_prune(std::span<const double> weights, std::size_t k)
{
    if (k < 1) {
        throw validation_error("topk_prune: k must be >= 1");
    }
    std::vector<term_id> positive;
    for (std::size_t v = 0; v < weights.size(); ++v) {
        if (weights[v] > 0.0) {
            positive.push_back(static_cast<term_id>(v));
        }
    }
    auto heavier = [&](term_id a, term_id b) { return weights[a] != weights[b] ? weights[a] > weights[b] : a < b; };
    if (positive.size() > k) {
        std::nth_element(positive.begin(), positive.begin() + static_cast<std::ptrdiff_t>(k), positive.end(), heavier);
        positive.resize(k);
    }
    std::sort(positive.begin(), positive.end());
    sparse_vector out;
    out.entries.reserve(positive.size());
    for (term_id t : positive) {
        out.entries.push_back({t, weights[t]});
    }
    return out;
}

inline double sparse_dot(const sparse_vector& a, const sparse_vector& b)
{
    double acc = 0.0;
    auto ia = a.entries.begin();
    auto ib = b.entries.begin();
    while (ia != a.entries.end() && ib != b.entries.end()) {
        if (ia->term < ib->term) {
            ++ia;
        } else if (ib->term < ia->term) {
            ++ib;
        } else {
            acc += ia->weight * ib->weight;
            ++ia;
            ++ib;
        }
    }
    return acc;
}

/// Everything the backward pass needs from one encode call.
struct encode_trace {
    Matrix inputs;                   // n x d, the frozen h_i
    Matrix pre;                      // n x d/2
    Matrix hidden;                   // n x d/2
    std::vector<term_id> support;    // selected terms, ascending
    std::vector<std::uint32_t> argmax_token;
    std::vector<double> max_logit;
};

using student_tape = gradient_tape<encode_trace>;

namespace detail {

struct pooled_logits {
    Vector max_logit;                       // per term, max over tokens
    std::vector<std::uint32_t> argmax;      // first token attaining it
    std::vector<mlp_forward> tokens;
};

inline pooled_logits pool_logits(const adapter_head& head, const token_embedding_record& record)
{
    if (record.tokens.empty()) {
        throw validation_error("encode: record " + std::to_string(record.id) + " has no tokens");
    }
    if (record.dim() != head.dim()) {
        throw dimension_error("encode: record dimension " + std::to_string(record.dim()) + " != head dimension "
                              + std::to_string(head.dim()));
    }
    const std::size_t vocab = head.vocab_size();
    pooled_logits out;
    out.max_logit.assign(vocab, 0.0);
    out.argmax.assign(vocab, 0);
    const std::size_t n = record.num_tokens();
    const std::size_t d = head.dim();
    out.tokens.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        out.tokens.push_back(residual_mlp(head, record.embeddings.row(i)));
    }
    // Tiled over the vocabulary so a slice of E^T stays in cache while every
    // token accumulates into it. Per (token, term) the sum over the embedding
    // dimension runs in index order, as in vocab_logits.
    constexpr std::size_t tile = 64;
    const Matrix& et = head.projection.transposed();
    std::vector<double> acc(n * tile);
    for (std::size_t lo = 0; lo < vocab; lo += tile) {
        const std::size_t width = std::min(tile, vocab - lo);
        std::fill(acc.begin(), acc.end(), 0.0);
        for (std::size_t k = 0; k < d; ++k) {
            const double* col = et.row(k).data() + lo;
            for (std::size_t i = 0; i < n; ++i) {
                const double zk = out.tokens[i].z[k];
                double* a = acc.data() + i * tile;
                for (std::size_t v = 0; v < width; ++v) {
                    a[v] += col[v] * zk;
                }
            }
        }
        for (std::size_t i = 0; i < n; ++i) {
            const double* a = acc.data() + i * tile;
            for (std::size_t v = 0; v < width; ++v) {
                const double logit = a[v] + head.bias[lo + v];
                if (i == 0 || logit > out.max_logit[lo + v]) {
                    out.max_logit[lo + v] = logit;
                    out.argmax[lo + v] = static_cast<std::uint32_t>(i);
                }
            }
        }
    }
    return out;
}

}  // namespace detail

/// topk_prune(splade_pool(mlm_logits(h_i) for each token), k).
inline sparse_vector encode(const adapter_head& head, const token_embedding_record& record, std::size_t k)
{
    auto pooled = detail::pool_logits(head, record);
    Vector weights(pooled.max_logit.size());
    for (std::size_t v = 0; v < weights.size(); ++v) {
        weights[v] = log1p_relu(pooled.max_logit[v]);
    }
    return topk_prune(weights, k);
}

/// Same as encode, additionally recording a trace on the tape.
inline std::pair<sparse_vector, student_tape::handle> encode_recorded(const adapter_head& head,
                                                                     const token_embedding_record& record,
                                                                     std::size_t k, student_tape& tape)
{
    auto pooled = detail::pool_logits(head, record);
    Vector weights(pooled.max_logit.size());
    for (std::size_t v = 0; v < weights.size(); ++v) {
        weights[v] = log1p_relu(pooled.max_logit[v]);
    }
    sparse_vector out = topk_prune(weights, k);

    encode_trace trace;
    trace.inputs = record.embeddings;
    const std::size_t n = record.num_tokens();
    trace.pre = Matrix(n, head.hidden_dim());
    trace.hidden = Matrix(n, head.hidden_dim());
    for (std::size_t i = 0; i < n; ++i) {
        std::copy(pooled.tokens[i].pre.begin(), pooled.tokens[i].pre.end(), trace.pre.row(i).begin());
        std::copy(pooled.tokens[i].hidden.begin(), pooled.tokens[i].hidden.end(), trace.hidden.row(i).begin());
    }
    for (const auto& e : out.entries) {
        trace.support.push_back(e.term);
        trace.argmax_token.push_back(pooled.argmax[e.term]);
        trace.max_logit.push_back(pooled.max_logit[e.term]);
    }
    auto handle = tape.record(std::move(trace));
    return {std::move(out), handle};
}

/// Pooled weights restricted to a given support (no pruning). With the
/// support taken from a previous encode this reproduces that encode's
/// weights; finite-difference checks perturb parameters through this path
/// while holding the top-k selection fixed.
inline Vector pooled_weights_on_support(const adapter_head& head, const token_embedding_record& record,
                                        std::span<const term_id> support)
{
    if (record.dim() != head.dim()) {
        throw dimension_error("pooled_weights_on_support: dimension mismatch");
    }
    Vector out(support.size(), 0.0);
    for (std::size_t i = 0; i < record.num_tokens(); ++i) {
        auto f = detail::residual_mlp(head, record.embeddings.row(i));
        for (std::size_t s = 0; s < support.size(); ++s) {
            const double logit = dot(head.projection.row(support[s]), f.z) + head.bias[support[s]];
            out[s] = std::max(out[s], log1p_relu(logit));
        }
    }
    return out;
}

/// Gradients for the trainable blocks. E is frozen and has no slot here.
struct head_gradients {
    Matrix w_down;
    Vector b_down;
    Matrix w_up;
    Vector b_up;
    Vector bias;

    head_gradients() = default;
    explicit head_gradients(const adapter_head& head)
        : w_down(head.w_down.rows(), head.w_down.cols()),
          b_down(head.b_down.size(), 0.0),
          w_up(head.w_up.rows(), head.w_up.cols()),
          b_up(head.b_up.size(), 0.0),
          bias(head.bias.size(), 0.0)
    {}

    /// Empty for the frozen projection.
    [[nodiscard]] std::span<double> block(parameter_block b)
    {
        switch (b) {
        case parameter_block::w_down: return w_down.data();
        case parameter_block::b_down: return b_down;
        case parameter_block::w_up: return w_up.data();
        case parameter_block::b_up: return b_up;
        case parameter_block::bias: return bias;
        case parameter_block::projection: return {};
        }
        return {};
    }

    [[nodiscard]] std::span<const double> block(parameter_block b) const
    {
        return const_cast<head_gradients&>(*this).block(b);
    }

    head_gradients& operator+=(const head_gradients& other)
    {
        for (auto b : trainable_blocks) {
            auto dst = block(b);
            auto src = other.block(b);
            for (std::size_t i = 0; i < dst.size(); ++i) {
                dst[i] += src[i];
            }
        }
        return *this;
    }

    void scale(double factor)
    {
        for (auto b : trainable_blocks) {
            for (double& x : block(b)) {
                x *= factor;
            }
        }
    }
};

/// Back-propagates dL/dw (one value per support entry of the traced encode)
/// into the head gradients. The top-k support is treated as constant and the
/// max over tokens routes to the first maximizing token.
inline void backward_encode(const adapter_head& head, const encode_trace& trace, std::span<const double> grad_weights,
                            head_gradients& grads)
{
    if (grad_weights.size() != trace.support.size()) {
        throw dimension_error("backward_encode: gradient length does not match support");
    }
    const std::size_t n = trace.inputs.rows();
    const std::size_t d = head.dim();
    Matrix grad_z(n, d);
    std::vector<bool> touched(n, false);
    for (std::size_t s = 0; s < trace.support.size(); ++s) {
        const double g = grad_weights[s] * log1p_relu_derivative(trace.max_logit[s]);
        if (g == 0.0) {
            continue;
        }
        const term_id v = trace.support[s];
        grads.bias[v] += g;
        const auto tok = trace.argmax_token[s];
        auto gz = grad_z.row(tok);
        auto ev = head.projection.row(v);
        for (std::size_t c = 0; c < d; ++c) {
            gz[c] += g * ev[c];
        }
        touched[tok] = true;
    }
    for (std::size_t i = 0; i < n; ++i) {
        if (!touched[i]) {
            continue;
        }
        // z = h + W_up a + b_up with a = act(W_down h + b_down); h is frozen.
        Vector grad_hidden = affine_backward(head.w_up, trace.hidden.row(i), grad_z.row(i), grads.w_up, grads.b_up);
        Vector grad_pre = head.act == activation::relu ? relu_backward(trace.pre.row(i), grad_hidden) : grad_hidden;
        (void)affine_backward(head.w_down, trace.inputs.row(i), grad_pre, grads.w_down, grads.b_down);
    }
}

/// A scalar loss together with its partial derivatives with respect to the
/// sparse weights of each encode recorded on a tape.
struct taped_loss {
    double value = 0.0;
    std::uint64_t tape_id = 0;
    std::vector<std::pair<student_tape::handle, Vector>> seeds;
};

/// Gradients of a taped loss with respect to every trainable block.
inline head_gradients backward(const student_tape& tape, const taped_loss& loss, const adapter_head& head)
{
    if (loss.tape_id != tape.id()) {
        throw usage_error("backward: loss was not produced on this tape");
    }
    head_gradients grads(head);
    for (const auto& [handle, grad_weights] : loss.seeds) {
        backward_encode(head, tape.trace(handle), grad_weights, grads);
    }
    return grads;
}

}  // namespace splate
