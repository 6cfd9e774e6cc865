#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "splate/synthetic.hpp"
#include "splate/trainer.hpp"
#include "test_support.hpp"

using namespace splate;
using splate::testing::central_difference;
using splate::testing::random_vector;
using splate::testing::relative_error;

namespace {

double naive_margin(const Vector& s, const Vector& t)
{
    double acc = 0.0;
    for (std::size_t j = 1; j < s.size(); ++j) {
        const double e = (s[0] - s[j]) - (t[0] - t[j]);
        acc += e * e;
    }
    return acc / static_cast<double>(s.size() - 1);
}

double naive_kl(const Vector& s, const Vector& t)
{
    double zs = 0.0;
    double zt = 0.0;
    for (std::size_t i = 0; i < s.size(); ++i) {
        zs += std::exp(s[i]);
        zt += std::exp(t[i]);
    }
    double acc = 0.0;
    for (std::size_t i = 0; i < s.size(); ++i) {
        const double p = std::exp(t[i]) / zt;
        const double q = std::exp(s[i]) / zs;
        acc += p * std::log(p / q);
    }
    return acc;
}

// A small synthetic world: 40 docs, 12 training queries, |V| = 50, d = 8.
struct small_world {
    synthetic_corpus corpus;
    synth_encoder encoder;
    embedding_store docs;
    embedding_store queries;

    explicit small_world(std::uint64_t seed = 5)
        : corpus(make(seed)),
          encoder(corpus.config.vocabulary()),
          docs(encode_sequences(encoder, corpus.docs)),
          queries(encode_sequences(encoder, corpus.train_queries))
    {}

    static synthetic_corpus make(std::uint64_t seed)
    {
        synth_config cfg;
        cfg.num_docs = 40;
        cfg.num_queries = 4;
        cfg.num_train_queries = 12;
        cfg.vocab_size = 50;
        cfg.dim = 8;
        cfg.seed = seed;
        cfg.doc_len_min = 4;
        cfg.doc_len_max = 10;
        return generate_corpus(cfg);
    }

    [[nodiscard]] training_data data() const { return {&queries, &docs}; }
};

train_config small_config()
{
    train_config cfg;
    cfg.batch_size = 4;
    cfg.n_neg = 3;
    cfg.pool_size = 8;
    cfg.epochs = 2;
    cfg.k_q = 5;
    cfg.k_d = 12;
    cfg.lr = 1e-2;
    return cfg;
}

adapter_head perturbed_head(const synth_encoder& enc, std::uint64_t seed)
{
    auto head = adapter_head::initialize(enc.projection(), seed);
    rng gen(seed);
    for (auto b : trainable_blocks) {
        for (double& x : head.block(b)) {
            x = 0.2 * gen.normal();
        }
    }
    return head;
}

}  // namespace

TEST(MarginMse, Examples)
{
    EXPECT_EQ(margin_mse_loss(Vector{2.0, 0.0}, Vector{3.0, 0.0}), 1.0);
    EXPECT_EQ(margin_mse_loss(Vector{5.0, 1.0, 2.0}, Vector{4.0, 0.0, 1.0}), 0.0);
    EXPECT_THROW(margin_mse_loss(Vector{1.0, 2.0}, Vector{1.0}), validation_error);
    EXPECT_THROW(margin_mse_loss(Vector{1.0}, Vector{1.0}), validation_error);
}

TEST(MarginMse, MatchesLoopOracle)
{
    rng gen(1);
    for (int trial = 0; trial < 50; ++trial) {
        auto s = random_vector(gen, 21);
        auto t = random_vector(gen, 21);
        EXPECT_NEAR(margin_mse_loss(s, t), naive_margin(s, t), 1e-12);
    }
}

TEST(KlDiv, ShiftInvariance)
{
    rng gen(2);
    auto t = random_vector(gen, 8);
    Vector s = t;
    for (double& x : s) {
        x += 3.5;
    }
    EXPECT_NEAR(kldiv_loss(s, t), 0.0, 1e-14);
}

TEST(KlDiv, DominantTeacherUniformStudent)
{
    Vector t(21, 0.0);
    t[0] = 1000.0;
    EXPECT_NEAR(kldiv_loss(Vector(21, 0.0), t), std::log(21.0), 1e-12);
}

TEST(KlDiv, MatchesDirectSummation)
{
    rng gen(3);
    for (int trial = 0; trial < 50; ++trial) {
        auto s = random_vector(gen, 21, 2.0);
        auto t = random_vector(gen, 21, 2.0);
        EXPECT_NEAR(kldiv_loss(s, t), naive_kl(s, t), 1e-10);
        EXPECT_GE(kldiv_loss(s, t), 0.0);
    }
}

TEST(CombinedLoss, GradientMatchesFiniteDifferences)
{
    rng gen(4);
    auto s = random_vector(gen, 6);
    auto t = random_vector(gen, 6);
    auto loss = combined_loss(s, t, 0.05, 1.0);
    EXPECT_NEAR(loss.value, 0.05 * naive_margin(s, t) + naive_kl(s, t), 1e-12);
    for (std::size_t i = 0; i < s.size(); ++i) {
        const double fd = central_difference(s, i, [&] { return 0.05 * naive_margin(s, t) + naive_kl(s, t); });
        EXPECT_LT(relative_error(loss.grad[i], fd), 1e-6);
    }
}

TEST(HardNegatives, PoolEqualToCountTakesTeacherTop)
{
    small_world w;
    dense_doc_store docs(w.docs);
    for (const auto& [q, pos] : w.corpus.train_qrels) {
        const auto& query = w.queries.get(q);
        auto ex = mine_hard_negatives(docs, query, pos, 5, 5, 1);

        // Brute-force teacher ranking.
        std::vector<std::pair<double, record_id>> all;
        for (auto id : w.docs.ids()) {
            const auto& d = w.docs.get(id);
            double score = 0.0;
            for (std::size_t i = 0; i < query.num_tokens(); ++i) {
                double best = -2.0;
                for (std::size_t j = 0; j < d.num_tokens(); ++j) {
                    best = std::max(best, dot(query.embeddings.row(i), d.embeddings.row(j)));
                }
                score += best;
            }
            all.emplace_back(score, id);
        }
        std::sort(all.begin(), all.end(),
                  [](const auto& a, const auto& b) { return a.first != b.first ? a.first > b.first : a.second < b.second; });
        std::vector<record_id> want;
        for (const auto& [score, id] : all) {
            if (id != pos && want.size() < 5) {
                want.push_back(id);
            }
        }
        EXPECT_EQ(ex.negatives, want);
        EXPECT_EQ(ex.teacher_scores.size(), 6u);
        EXPECT_NEAR(ex.teacher_scores[0], maxsim_score(query, w.docs.get(pos)), 0.0);
    }
}

TEST(HardNegatives, SampledFromTeacherPool)
{
    small_world w;
    dense_doc_store docs(w.docs);
    for (const auto& [q, pos] : w.corpus.train_qrels) {
        const auto& query = w.queries.get(q);
        auto ex = mine_hard_negatives(docs, query, pos, 15, 4, 9);
        auto top = teacher_rank(query, docs, 16);
        std::vector<record_id> pool;
        for (const auto& e : top.entries) {
            if (e.doc != pos && pool.size() < 15) {
                pool.push_back(e.doc);
            }
        }
        ASSERT_EQ(ex.negatives.size(), 4u);
        std::size_t last = 0;
        for (std::size_t i = 0; i < ex.negatives.size(); ++i) {
            auto it = std::find(pool.begin(), pool.end(), ex.negatives[i]);
            ASSERT_NE(it, pool.end());
            const auto rank = static_cast<std::size_t>(it - pool.begin());
            if (i > 0) {
                EXPECT_GT(rank, last);
            }
            last = rank;
        }
        EXPECT_EQ(ex, mine_hard_negatives(docs, query, pos, 15, 4, 9));
    }
}

TEST(HardNegatives, Errors)
{
    small_world w;
    dense_doc_store docs(w.docs);
    const auto& query = w.queries.get(0);
    EXPECT_THROW(mine_hard_negatives(docs, query, 0, 100, 40, 1), validation_error);
    EXPECT_THROW(mine_hard_negatives(docs, query, 0, 2, 3, 1), validation_error);
    EXPECT_THROW(mine_hard_negatives(docs, query, 999, 5, 3, 1), not_found_error);
}

TEST(Manifest, RoundTrip)
{
    small_world w;
    auto examples = build_training_set(w.queries, w.corpus.train_qrels, dense_doc_store(w.docs), small_config());
    const auto text = format_manifest(examples);
    EXPECT_EQ(parse_manifest(text), examples);
    EXPECT_THROW(parse_manifest("1\t2\t\t0.5\n"), format_error);
    EXPECT_THROW(parse_manifest("1\t2\t3\n"), format_error);
}

// Loss of one example with every encode's support held fixed, computed from
// pooled weights and independent loss formulas.
TEST(TrainStep, GradientMatchesFiniteDifferences)
{
    small_world w;
    auto cfg = small_config();
    auto examples = build_training_set(w.queries, w.corpus.train_qrels, dense_doc_store(w.docs), cfg);
    for (int which = 0; which < 3; ++which) {
        const auto& ex = examples[static_cast<std::size_t>(which) * 4];
        auto head = perturbed_head(w.encoder, 100 + which);
        std::vector<record_id> ids{ex.positive};
        ids.insert(ids.end(), ex.negatives.begin(), ex.negatives.end());

        auto support_of = [&](const token_embedding_record& r, std::size_t k) {
            std::vector<term_id> out;
            for (const auto& e : encode(head, r, k).entries) {
                out.push_back(e.term);
            }
            return out;
        };
        const auto& query = w.queries.get(ex.query);
        const auto q_support = support_of(query, cfg.k_q);
        std::vector<std::vector<term_id>> d_support;
        for (auto id : ids) {
            d_support.push_back(support_of(w.docs.get(id), cfg.k_d));
        }
        auto fixed_loss = [&] {
            auto qw = pooled_weights_on_support(head, query, q_support);
            Vector scores;
            for (std::size_t j = 0; j < ids.size(); ++j) {
                auto dw = pooled_weights_on_support(head, w.docs.get(ids[j]), d_support[j]);
                double s = 0.0;
                for (std::size_t a = 0; a < q_support.size(); ++a) {
                    for (std::size_t b = 0; b < d_support[j].size(); ++b) {
                        if (q_support[a] == d_support[j][b]) {
                            s += qw[a] * dw[b];
                        }
                    }
                }
                scores.push_back(s);
            }
            return cfg.loss_weight_margin * naive_margin(scores, ex.teacher_scores)
                   + cfg.loss_weight_kl * naive_kl(scores, ex.teacher_scores);
        };

        auto result = batch_gradients(head, std::span(&ex, 1), w.data(), cfg);
        EXPECT_NEAR(result.loss, fixed_loss(), 1e-12);
        for (auto b : trainable_blocks) {
            auto params = head.block(b);
            auto analytic = result.grads.block(b);
            double worst = 0.0;
            for (std::size_t i = 0; i < params.size(); ++i) {
                worst = std::max(worst, relative_error(analytic[i], central_difference(params, i, fixed_loss)));
            }
            EXPECT_LT(worst, 1e-4) << to_string(b);
        }
        EXPECT_TRUE(result.grads.block(parameter_block::projection).empty());
    }
}

TEST(TrainStep, ZeroLearningRateLeavesHeadUnchanged)
{
    small_world w;
    auto cfg = small_config();
    cfg.lr = 0.0;
    auto examples = build_training_set(w.queries, w.corpus.train_qrels, dense_doc_store(w.docs), cfg);
    auto head = perturbed_head(w.encoder, 3);
    const auto before = head;
    adam_state adam(head);
    const double loss = train_step(head, adam, std::span(examples).subspan(0, 4), w.data(), cfg);
    EXPECT_GT(loss, 0.0);
    EXPECT_EQ(head, before);
}

TEST(TrainStep, ProjectionIsBitwiseUnchanged)
{
    small_world w;
    auto cfg = small_config();
    auto examples = build_training_set(w.queries, w.corpus.train_qrels, dense_doc_store(w.docs), cfg);
    auto head = adapter_head::initialize(w.encoder.projection(), 1);
    const Matrix e_before = head.projection.matrix();
    const auto bias_before = head.bias;
    auto report = train(head, examples, w.data(), cfg);
    EXPECT_EQ(report.epoch_loss.size(), 2u);
    EXPECT_EQ(head.projection.matrix(), e_before);
    EXPECT_NE(head.bias, bias_before);
}

TEST(TrainStep, NonFiniteLossAborts)
{
    small_world w;
    auto cfg = small_config();
    auto examples = build_training_set(w.queries, w.corpus.train_qrels, dense_doc_store(w.docs), cfg);
    examples[0].teacher_scores[0] = std::numeric_limits<double>::infinity();
    auto head = adapter_head::initialize(w.encoder.projection(), 1);
    adam_state adam(head);
    EXPECT_THROW(train_step(head, adam, std::span(examples).subspan(0, 1), w.data(), cfg), numeric_error);
}

TEST(Train, ZeroEpochsKeepsInit)
{
    small_world w;
    auto cfg = small_config();
    cfg.epochs = 0;
    auto examples = build_training_set(w.queries, w.corpus.train_qrels, dense_doc_store(w.docs), cfg);
    auto head = adapter_head::initialize(w.encoder.projection(), 1);
    auto report = train(head, examples, w.data(), cfg);
    EXPECT_TRUE(report.epoch_loss.empty());
    EXPECT_EQ(head, adapter_head::initialize(w.encoder.projection(), 1));
}

TEST(Train, SameSeedSameCheckpoint)
{
    small_world w;
    auto cfg = small_config();
    auto examples = build_training_set(w.queries, w.corpus.train_qrels, dense_doc_store(w.docs), cfg);
    auto a = adapter_head::initialize(w.encoder.projection(), 1);
    auto b = adapter_head::initialize(w.encoder.projection(), 1);
    std::size_t calls = 0;
    auto ra = train(a, examples, w.data(), cfg, [&](std::size_t, const adapter_head&) { ++calls; });
    auto rb = train(b, examples, w.data(), cfg);
    EXPECT_EQ(calls, 2u);
    EXPECT_EQ(ra.epoch_loss, rb.epoch_loss);
    EXPECT_EQ(a.serialize(), b.serialize());
}

TEST(Train, RejectsUnfrozenStores)
{
    small_world w;
    embedding_store open(50, 8);
    auto head = adapter_head::initialize(w.encoder.projection(), 1);
    EXPECT_THROW(train(head, {}, training_data{&open, &w.docs}, small_config()), usage_error);
}

TEST(TrainConfig, Validation)
{
    auto cfg = small_config();
    cfg.loss_weight_kl = 0.0;
    cfg.loss_weight_margin = 0.0;
    EXPECT_THROW(cfg.validate(), validation_error);
    cfg = small_config();
    cfg.batch_size = 0;
    EXPECT_THROW(cfg.validate(), validation_error);
}
