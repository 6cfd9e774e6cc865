#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <vector>

#include "splate/embedding_store.hpp"
#include "splate/synthetic.hpp"
#include "test_support.hpp"

using namespace splate;

namespace {

vocabulary_config small_config(std::uint64_t seed = 11) { return {50, 8, seed}; }

std::filesystem::path temp_path(const std::string& name) { return splate::testing::temp_file(name); }

}  // namespace

TEST(SynthEncoder, DeterministicForSameSeedAndTokens)
{
    synth_encoder a(small_config());
    synth_encoder b(small_config());
    std::vector<term_id> tokens{3, 7, 7, 1, 49};
    EXPECT_EQ(a.encode(tokens, 5), b.encode(tokens, 5));
}

TEST(SynthEncoder, SingleTokenIsItsProjectionRow)
{
    synth_encoder enc(small_config());
    std::vector<term_id> tokens{17};
    auto rec = enc.encode(tokens);
    auto row = enc.projection().row(17);
    for (std::size_t k = 0; k < row.size(); ++k) {
        EXPECT_NEAR(rec.embeddings(0, k), row[k], 1e-7);
    }
}

TEST(SynthEncoder, ZeroContextWeightGivesBaseRows)
{
    auto cfg = small_config();
    cfg.context_weight = 0.0;
    synth_encoder enc(cfg);
    std::vector<term_id> tokens{4, 9, 4};
    auto rec = enc.encode(tokens);
    for (std::size_t i = 0; i < tokens.size(); ++i) {
        auto row = enc.projection().row(tokens[i]);
        for (std::size_t k = 0; k < row.size(); ++k) {
            EXPECT_NEAR(rec.embeddings(i, k), row[k], 1e-7);
        }
    }
}

TEST(SynthEncoder, DifferentSeedsDiffer)
{
    synth_encoder a(small_config(1));
    synth_encoder b(small_config(2));
    std::vector<term_id> tokens{1, 2, 3};
    EXPECT_NE(a.encode(tokens).embeddings, b.encode(tokens).embeddings);
}

TEST(SynthEncoder, ContextMakesRepeatedTermsDiffer)
{
    synth_encoder enc(small_config());
    std::vector<term_id> tokens{5, 1, 2, 3, 4, 5, 30, 31, 32};
    auto rec = enc.encode(tokens);
    EXPECT_NE(std::vector<double>(rec.embeddings.row(0).begin(), rec.embeddings.row(0).end()),
              std::vector<double>(rec.embeddings.row(5).begin(), rec.embeddings.row(5).end()));
}

TEST(SynthEncoder, RowsAreUnitNorm)
{
    synth_encoder enc({200, 16, 3});
    rng gen(9);
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<term_id> tokens(1 + gen.below(30));
        for (auto& t : tokens) {
            t = static_cast<term_id>(gen.below(200));
        }
        auto rec = enc.encode(tokens);
        for (std::size_t i = 0; i < rec.num_tokens(); ++i) {
            EXPECT_NEAR(std::sqrt(dot(rec.embeddings.row(i), rec.embeddings.row(i))), 1.0, 1e-6);
        }
    }
}

TEST(SynthEncoder, RejectsBadInput)
{
    synth_encoder enc(small_config());
    std::vector<term_id> bad{1, 50};
    EXPECT_THROW(enc.encode(bad), validation_error);
    EXPECT_THROW(enc.encode(std::vector<term_id>{}), validation_error);
    EXPECT_THROW(synth_encoder({1, 8, 0}), validation_error);
    EXPECT_THROW(synth_encoder({10, 1, 0}), validation_error);
}

TEST(EmbeddingStore, PutGetRoundTrip)
{
    synth_encoder enc(small_config());
    embedding_store store(50, 8);
    auto rec = enc.encode(std::vector<term_id>{1, 2, 3}, 42);
    store.put(rec);
    EXPECT_EQ(store.get(42), rec);
    EXPECT_THROW((void)store.get(7), not_found_error);
}

TEST(EmbeddingStore, RejectsInvalidRecords)
{
    embedding_store store(50, 8);
    token_embedding_record rec{1, {3}, Matrix(1, 8, 0.0)};
    EXPECT_THROW(store.put(rec), validation_error);  // not unit norm
    rec.embeddings(0, 0) = 1.0;
    rec.tokens = {50};
    EXPECT_THROW(store.put(rec), validation_error);  // term out of range
    rec.tokens = {3};
    store.put(rec);
    EXPECT_THROW(store.put(rec), validation_error);  // duplicate id
    rec.id = 2;
    rec.embeddings(0, 0) = 0.1;
    rec.embeddings(0, 1) = std::sqrt(1.0 - 0.01);
    EXPECT_THROW(store.put(rec), validation_error);  // not f32-representable
}

TEST(EmbeddingStore, FrozenRejectsWrites)
{
    synth_encoder enc(small_config());
    embedding_store store(50, 8);
    store.freeze();
    EXPECT_THROW(store.put(enc.encode(std::vector<term_id>{1}, 1)), usage_error);
}

TEST(EmbeddingStore, DiskRoundTripIsByteIdentical)
{
    synth_encoder enc(small_config());
    token_sequences seqs{{3, {1, 2, 3}}, {1, {4}}, {9, {5, 6, 7, 8, 9, 10}}};
    auto store = encode_sequences(enc, seqs);
    const auto path = temp_path("store.spl8");
    store.save(path);
    auto loaded = embedding_store::load(path);
    EXPECT_TRUE(loaded.frozen());
    EXPECT_EQ(loaded.serialize(), store.serialize());
    EXPECT_EQ(io::read_file(path), store.serialize());
    for (auto id : store.ids()) {
        EXPECT_EQ(loaded.get(id), store.get(id));
    }
    std::filesystem::remove(path);
}

TEST(EmbeddingStore, LoadRejectsCorruptFiles)
{
    synth_encoder enc(small_config());
    auto store = encode_sequences(enc, token_sequences{{0, {1, 2}}});
    auto bytes = store.serialize();
    auto bad_magic = bytes;
    bad_magic[3] = '9';
    EXPECT_THROW(embedding_store::deserialize(bad_magic), format_error);
    auto truncated = bytes;
    truncated.pop_back();
    EXPECT_THROW(embedding_store::deserialize(truncated), format_error);
    auto trailing = bytes;
    trailing.push_back(0);
    EXPECT_THROW(embedding_store::deserialize(trailing), format_error);
}

TEST(Synthetic, ZipfRankFrequencySlopeNearMinusOne)
{
    synth_config cfg;
    cfg.num_queries = 10;
    cfg.num_train_queries = 10;
    auto corpus = generate_corpus(cfg);
    std::vector<double> counts(cfg.vocab_size, 0.0);
    for (const auto& [id, tokens] : corpus.docs) {
        for (auto t : tokens) {
            counts[t] += 1.0;
        }
    }
    std::sort(counts.begin(), counts.end(), std::greater<>());
    // Least-squares fit of log(count) on log(rank) over the well-sampled head.
    const std::size_t n = 500;
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (std::size_t r = 0; r < n; ++r) {
        const double x = std::log(static_cast<double>(r + 1));
        const double y = std::log(counts[r]);
        sx += x;
        sy += y;
        sxx += x * x;
        sxy += x * y;
    }
    const double slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
    EXPECT_NEAR(slope, -1.0, 0.2);
}

TEST(Synthetic, QueriesComeFromTheirSourceDocument)
{
    synth_config cfg;
    cfg.num_docs = 50;
    cfg.num_queries = 30;
    cfg.num_train_queries = 5;
    cfg.vocab_size = 300;
    auto corpus = generate_corpus(cfg);
    ASSERT_EQ(corpus.queries.size(), 30u);
    for (const auto& [q, tokens] : corpus.queries) {
        const auto& doc = corpus.docs.at(corpus.qrels.at(q));
        std::size_t shared = 0;
        for (auto t : tokens) {
            shared += std::count(doc.begin(), doc.end(), t) > 0 ? 1 : 0;
        }
        EXPECT_GE(shared, std::min<std::size_t>(cfg.query_len_min, doc.size()));
    }
}

TEST(Synthetic, PseudoWordsAreUnique)
{
    std::set<std::string> seen;
    for (term_id t = 0; t < 20000; ++t) {
        EXPECT_TRUE(seen.insert(pseudo_word(t)).second) << t;
    }
}
