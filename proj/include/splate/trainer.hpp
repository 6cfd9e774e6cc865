#pragma once

// Distillation of exact MaxSim scores into the sparse adapter head: hard
// negative mining, marginMSE + KL divergence losses, and Adam updates on
// (theta, b) only.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "splate/embedding_store.hpp"
#include "splate/error.hpp"
#include "splate/late_interaction.hpp"
#include "splate/numerics.hpp"
#include "splate/parallel.hpp"
#include "splate/rng.hpp"
#include "splate/splate_head.hpp"
#include "splate/text_format.hpp"

namespace splate {

struct training_example {
    record_id query = 0;
    record_id positive = 0;
    std::vector<record_id> negatives;
    /// Teacher MaxSim scores: positive first, then each negative in order.
    std::vector<double> teacher_scores;

    void validate() const
    {
        if (negatives.empty()) {
            throw validation_error("training example for query " + std::to_string(query) + " has no negatives");
        }
        if (teacher_scores.size() != negatives.size() + 1) {
            throw validation_error("training example for query " + std::to_string(query)
                                   + ": expected one teacher score per document");
        }
        if (!all_finite(teacher_scores)) {
            throw validation_error("training example for query " + std::to_string(query)
                                   + ": non-finite teacher score");
        }
    }

    friend bool operator==(const training_example&, const training_example&) = default;
};

struct train_config {
    std::size_t batch_size = 24;
    std::size_t n_neg = 20;
    std::size_t pool_size = 100;
    std::size_t epochs = 3;
    double lr = 1e-3;
    double loss_weight_margin = 0.05;
    double loss_weight_kl = 1.0;
    std::uint32_t k_q = 10;
    std::uint32_t k_d = 100;
    std::uint64_t seed = 7;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_eps = 1e-8;

    void validate() const
    {
        if (batch_size < 1) {
            throw validation_error("batch_size must be >= 1");
        }
        if (n_neg < 1) {
            throw validation_error("n_neg must be >= 1");
        }
        if (pool_size < n_neg) {
            throw validation_error("pool_size must be >= n_neg");
        }
        if (loss_weight_margin < 0.0 || loss_weight_kl < 0.0 || !(loss_weight_margin + loss_weight_kl > 0.0)) {
            throw validation_error("loss weights must be >= 0 with a positive sum");
        }
        if (!(lr >= 0.0) || !std::isfinite(lr)) {
            throw validation_error("lr must be finite and >= 0");
        }
        if (k_q < 1 || k_d < 1) {
            throw validation_error("pooling sizes must be >= 1");
        }
    }
};

// ---------------------------------------------------------------------------
// Losses. Scores are aligned: index 0 is the positive, the rest negatives.

struct loss_value {
    double value = 0.0;
    Vector grad;  // dL/d(student score)
};

inline void check_aligned(std::span<const double> student, std::span<const double> teacher, const char* what)
{
    if (student.size() != teacher.size()) {
        throw validation_error(std::string(what) + ": " + std::to_string(student.size()) + " student scores vs "
                               + std::to_string(teacher.size()) + " teacher scores");
    }
    if (student.size() < 2) {
        throw validation_error(std::string(what) + ": need a positive and at least one negative");
    }
}

/// mean_j [(s_pos - s_j) - (t_pos - t_j)]^2 with its gradient.
inline loss_value margin_mse(std::span<const double> student, std::span<const double> teacher)
{
    check_aligned(student, teacher, "margin_mse");
    const std::size_t n = student.size() - 1;
    loss_value out;
    out.grad.assign(student.size(), 0.0);
    for (std::size_t j = 1; j <= n; ++j) {
        const double e = (student[0] - student[j]) - (teacher[0] - teacher[j]);
        out.value += e * e;
        out.grad[0] += 2.0 * e;
        out.grad[j] -= 2.0 * e;
    }
    const double inv = 1.0 / static_cast<double>(n);
    out.value *= inv;
    for (double& g : out.grad) {
        g *= inv;
    }
    return out;
}

inline double margin_mse_loss(std::span<const double> student, std::span<const double> teacher)
{
    return margin_mse(student, teacher).value;
}

/// KL(softmax(teacher) || softmax(student)) with its gradient
/// softmax(student) - softmax(teacher).
inline loss_value kldiv(std::span<const double> student, std::span<const double> teacher)
{
    check_aligned(student, teacher, "kldiv");
    const Vector log_p = log_softmax(teacher);
    const Vector log_q = log_softmax(student);
    loss_value out;
    out.grad.resize(student.size());
    for (std::size_t i = 0; i < student.size(); ++i) {
        const double p = std::exp(log_p[i]);
        if (p > 0.0) {
            out.value += p * (log_p[i] - log_q[i]);
        }
        out.grad[i] = std::exp(log_q[i]) - p;
    }
    return out;
}

inline double kldiv_loss(std::span<const double> student, std::span<const double> teacher)
{
    return kldiv(student, teacher).value;
}

inline loss_value combined_loss(std::span<const double> student, std::span<const double> teacher,
                                double weight_margin, double weight_kl)
{
    auto m = margin_mse(student, teacher);
    auto k = kldiv(student, teacher);
    loss_value out;
    out.value = weight_margin * m.value + weight_kl * k.value;
    out.grad.resize(student.size());
    for (std::size_t i = 0; i < student.size(); ++i) {
        out.grad[i] = weight_margin * m.grad[i] + weight_kl * k.grad[i];
    }
    return out;
}

// ---------------------------------------------------------------------------
// Hard negatives.

/// Samples n_neg negatives uniformly (seeded) from the teacher's top
/// pool_size documents other than the positive; negatives keep teacher rank
/// order. Teacher scores are attached.
inline training_example mine_hard_negatives(const dense_doc_store& docs, const token_embedding_record& query,
                                            record_id positive, std::size_t pool_size, std::size_t n_neg,
                                            std::uint64_t seed)
{
    if (docs.ids().size() < n_neg + 1) {
        throw validation_error("mine_hard_negatives: corpus has " + std::to_string(docs.ids().size())
                               + " documents, need at least n_neg + 1 = " + std::to_string(n_neg + 1));
    }
    if (pool_size < n_neg) {
        throw validation_error("mine_hard_negatives: pool_size < n_neg");
    }
    if (!docs.store().contains(positive)) {
        throw not_found_error("mine_hard_negatives: unknown positive " + std::to_string(positive));
    }
    const auto ranking = teacher_rank(query, docs, pool_size + 1);
    std::vector<ranked_entry> pool;
    for (const auto& e : ranking.entries) {
        if (e.doc != positive && pool.size() < pool_size) {
            pool.push_back(e);
        }
    }
    // Selection sampling (Knuth's algorithm S): uniform subset, original order.
    rng gen(derive_seed(seed, query.id));
    std::vector<ranked_entry> chosen;
    std::size_t needed = n_neg;
    for (std::size_t i = 0; i < pool.size() && needed > 0; ++i) {
        const std::size_t remaining = pool.size() - i;
        if (gen.below(remaining) < needed) {
            chosen.push_back(pool[i]);
            --needed;
        }
    }
    training_example ex;
    ex.query = query.id;
    ex.positive = positive;
    ex.teacher_scores.push_back(maxsim_score(query, docs.store().get(positive)));
    for (const auto& e : chosen) {
        ex.negatives.push_back(e.doc);
        ex.teacher_scores.push_back(e.score);
    }
    return ex;
}

/// One mined example per (query, positive) pair, in ascending query order.
inline std::vector<training_example> build_training_set(const embedding_store& queries,
                                                        const std::map<record_id, record_id>& positives,
                                                        const dense_doc_store& docs, const train_config& config)
{
    std::vector<std::pair<record_id, record_id>> pairs(positives.begin(), positives.end());
    std::vector<training_example> out(pairs.size());
    parallel_for(pairs.size(), [&](std::size_t i) {
        out[i] = mine_hard_negatives(docs, queries.get(pairs[i].first), pairs[i].second, config.pool_size,
                                     config.n_neg, config.seed);
    });
    return out;
}

/// Line-delimited manifest: query \t positive \t space-separated negatives \t
/// space-separated teacher scores (positive first).
inline std::string format_manifest(std::span<const training_example> examples)
{
    std::ostringstream out;
    for (const auto& ex : examples) {
        out << ex.query << '\t' << ex.positive << '\t';
        for (std::size_t i = 0; i < ex.negatives.size(); ++i) {
            out << (i ? " " : "") << ex.negatives[i];
        }
        out << '\t';
        for (std::size_t i = 0; i < ex.teacher_scores.size(); ++i) {
            out << (i ? " " : "") << text::format_double(ex.teacher_scores[i]);
        }
        out << '\n';
    }
    return out.str();
}

inline std::vector<training_example> parse_manifest(std::string_view contents, const std::string& what = "manifest")
{
    std::vector<training_example> out;
    std::size_t line_no = 0;
    for (auto line : text::lines(contents)) {
        ++line_no;
        const auto where = what + ":" + std::to_string(line_no);
        auto fields = text::split(line, '\t');
        if (fields.size() != 4) {
            throw format_error(where + ": expected 4 tab-separated fields");
        }
        training_example ex;
        ex.query = text::parse_number<record_id>(fields[0], where);
        ex.positive = text::parse_number<record_id>(fields[1], where);
        for (auto tok : text::split_ws(fields[2])) {
            ex.negatives.push_back(text::parse_number<record_id>(tok, where));
        }
        for (auto tok : text::split_ws(fields[3])) {
            ex.teacher_scores.push_back(text::parse_number<double>(tok, where));
        }
        try {
            ex.validate();
        } catch (const validation_error& e) {
            throw format_error(where + ": " + e.what());
        }
        out.push_back(std::move(ex));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Optimization.

/// Adam moment estimates for the trainable blocks.
class adam_state {
public:
    explicit adam_state(const adapter_head& head) : m_first(head), m_second(head) {}

    void step(adapter_head& head, const head_gradients& grads, const train_config& config)
    {
        ++m_t;
        const double c1 = 1.0 - std::pow(config.adam_beta1, static_cast<double>(m_t));
        const double c2 = 1.0 - std::pow(config.adam_beta2, static_cast<double>(m_t));
        for (auto b : trainable_blocks) {
            auto params = head.block(b);
            auto g = grads.block(b);
            auto m = m_first.block(b);
            auto v = m_second.block(b);
            for (std::size_t i = 0; i < params.size(); ++i) {
                m[i] = config.adam_beta1 * m[i] + (1.0 - config.adam_beta1) * g[i];
                v[i] = config.adam_beta2 * v[i] + (1.0 - config.adam_beta2) * g[i] * g[i];
                params[i] -= config.lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + config.adam_eps);
            }
        }
    }

    [[nodiscard]] std::uint64_t steps() const noexcept { return m_t; }

private:
    head_gradients m_first;
    head_gradients m_second;
    std::uint64_t m_t = 0;
};

/// Stores the student reads from during training.
struct training_data {
    const embedding_store* queries;
    const embedding_store* docs;
};

/// Student scores for one example, recorded on `tape`, with the loss and the
/// seeds that carry dL/dw back to each encode.
inline taped_loss example_loss(const adapter_head& head, const training_example& ex, const training_data& data,
                               const train_config& config, student_tape& tape)
{
    auto [qvec, qhandle] = encode_recorded(head, data.queries->get(ex.query), config.k_q, tape);
    std::vector<sparse_vector> dvecs;
    std::vector<student_tape::handle> dhandles;
    std::vector<record_id> ids{ex.positive};
    ids.insert(ids.end(), ex.negatives.begin(), ex.negatives.end());
    Vector scores;
    for (auto id : ids) {
        auto [dvec, dhandle] = encode_recorded(head, data.docs->get(id), config.k_d, tape);
        scores.push_back(sparse_dot(qvec, dvec));
        dvecs.push_back(std::move(dvec));
        dhandles.push_back(dhandle);
    }
    auto loss = combined_loss(scores, ex.teacher_scores, config.loss_weight_margin, config.loss_weight_kl);

    taped_loss out;
    out.value = loss.value;
    out.tape_id = tape.id();
    // ds_j/dq_v = d_j,v and ds_j/dd_j,v = q_v over the shared support.
    Vector qgrad(qvec.size(), 0.0);
    for (std::size_t j = 0; j < dvecs.size(); ++j) {
        Vector dgrad(dvecs[j].size(), 0.0);
        std::size_t a = 0;
        std::size_t b = 0;
        while (a < qvec.size() && b < dvecs[j].size()) {
            const auto& qe = qvec.entries[a];
            const auto& de = dvecs[j].entries[b];
            if (qe.term < de.term) {
                ++a;
            } else if (de.term < qe.term) {
                ++b;
            } else {
                qgrad[a] += loss.grad[j] * de.weight;
                dgrad[b] += loss.grad[j] * qe.weight;
                ++a;
                ++b;
            }
        }
        out.seeds.emplace_back(dhandles[j], std::move(dgrad));
    }
    out.seeds.emplace_back(qhandle, std::move(qgrad));
    return out;
}

struct step_result {
    double loss = 0.0;
    head_gradients grads;
};

/// Batch-mean loss and gradients without updating the head. Examples may be
/// processed in parallel; gradients are reduced in batch order.
inline step_result batch_gradients(const adapter_head& head, std::span<const training_example> batch,
                                   const training_data& data, const train_config& config)
{
    if (batch.empty()) {
        throw validation_error("train_step: empty batch");
    }
    std::vector<double> losses(batch.size());
    std::vector<head_gradients> partial(batch.size());
    parallel_for(batch.size(), [&](std::size_t i) {
        student_tape tape;
        auto loss = example_loss(head, batch[i], data, config, tape);
        losses[i] = loss.value;
        partial[i] = backward(tape, loss, head);
    });
    step_result out{0.0, head_gradients(head)};
    for (std::size_t i = 0; i < batch.size(); ++i) {
        out.loss += losses[i];
        out.grads += partial[i];
    }
    const double inv = 1.0 / static_cast<double>(batch.size());
    out.loss *= inv;
    out.grads.scale(inv);
    return out;
}

/// One optimizer step on (theta, b); returns the batch-mean loss measured
/// before the update.
inline double train_step(adapter_head& head, adam_state& optimizer, std::span<const training_example> batch,
                         const training_data& data, const train_config& config)
{
    auto result = batch_gradients(head, batch, data, config);
    if (!std::isfinite(result.loss)) {
        std::ostringstream msg;
        msg << "train_step: non-finite loss " << result.loss << " at optimizer step " << optimizer.steps()
            << " (batch starts with query " << batch.front().query << ")";
        throw numeric_error(msg.str());
    }
    for (auto b : trainable_blocks) {
        if (!all_finite(result.grads.block(b))) {
            throw numeric_error("train_step: non-finite gradient in " + to_string(b));
        }
    }
    optimizer.step(head, result.grads, config);
    return result.loss;
}

struct train_report {
    std::vector<double> epoch_loss;
};

/// Runs config.epochs passes over the examples in seeded shuffled order.
/// on_epoch(epoch, head) is called after each epoch (e.g. to write a
/// checkpoint).
inline train_report train(adapter_head& head, std::vector<training_example> examples, const training_data& data,
                          const train_config& config,
                          const std::function<void(std::size_t, const adapter_head&)>& on_epoch = {})
{
    config.validate();
    if (!data.docs->frozen() || !data.queries->frozen()) {
        throw usage_error("train: embedding stores must be frozen");
    }
    for (const auto& ex : examples) {
        ex.validate();
    }
    train_report report;
    if (config.epochs == 0 || examples.empty()) {
        return report;
    }
    adam_state optimizer(head);
    rng gen(derive_seed(config.seed, 0x7A1));
    for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
        for (std::size_t i = examples.size() - 1; i > 0; --i) {
            std::swap(examples[i], examples[gen.below(i + 1)]);
        }
        double total = 0.0;
        std::size_t batches = 0;
        for (std::size_t lo = 0; lo < examples.size(); lo += config.batch_size) {
            const std::size_t hi = std::min(examples.size(), lo + config.batch_size);
            total += train_step(head, optimizer, std::span(examples).subspan(lo, hi - lo), data, config);
            ++batches;
        }
        report.epoch_loss.push_back(total / static_cast<double>(batches));
        if (on_epoch) {
            on_epoch(epoch, head);
        }
    }
    return report;
}

}  // namespace splate
