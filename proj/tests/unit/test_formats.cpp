#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>

#include "splate/formats.hpp"
#include "splate/sparse_index.hpp"
#include "splate/splate_head.hpp"
#include "splate/synthetic.hpp"
#include "test_support.hpp"

using namespace splate;

namespace {

const std::filesystem::path golden_dir{SPLATE_GOLDEN_DIR};

// Set SPLATE_UPDATE_GOLDEN=1 to rewrite the files instead of comparing.
bool updating() { return std::getenv("SPLATE_UPDATE_GOLDEN") != nullptr; }

// Artifacts below are built from literal values only, so the bytes do not
// depend on the platform's math library.

embedding_store golden_store()
{
    embedding_store store(20, 4);
    const float a = 0.6F;
    const float b = 0.8F;
    store.put({7, {3, 19}, Matrix(2, 4, std::vector<double>{a, b, 0, 0, 0.5, 0.5, 0.5, 0.5})});
    store.put({2, {0}, Matrix(1, 4, std::vector<double>{0, 0, -1, 0})});
    store.freeze();
    return store;
}

adapter_head golden_head()
{
    Matrix e(6, 4);
    for (std::size_t i = 0; i < e.data().size(); ++i) {
        e.data()[i] = static_cast<double>(static_cast<int>(i % 5) - 2) * 0.25;
    }
    auto head = adapter_head::initialize(e, 1);
    std::size_t n = 0;
    for (auto blk : trainable_blocks) {
        for (double& x : head.block(blk)) {
            x = static_cast<double>(static_cast<int>(n++ % 7) - 3) * 0.125;
        }
    }
    return head;
}

inverted_index golden_index()
{
    std::map<record_id, sparse_vector> docs;
    docs[10] = sparse_vector{{{0, 1.5}, {3, 0.25}}};
    docs[4] = sparse_vector{{{3, 2.0}, {5, 0.75}}};
    docs[300] = sparse_vector{{{3, 1.0}}};
    docs[12] = sparse_vector{{{0, 0.5}, {1, 0.125}, {5, 1.25}}};
    return build_index(docs, 8, 8, 2);
}

run golden_run()
{
    run r;
    r[1] = ranked_list{{{4, 2.5}, {10, 0.1}, {3, 0.1}}};
    r[0] = ranked_list{{{300, 1.0 / 3.0}}};
    return r;
}

void check_golden(const std::string& name, const std::vector<std::uint8_t>& bytes)
{
    const auto path = golden_dir / name;
    if (updating()) {
        std::filesystem::create_directories(golden_dir);
        io::write_file(path, bytes);
        return;
    }
    ASSERT_TRUE(std::filesystem::exists(path)) << path << " missing; rerun with SPLATE_UPDATE_GOLDEN=1";
    EXPECT_EQ(io::read_file(path), bytes) << name << " layout changed";
}

std::vector<std::uint8_t> bytes_of(const std::string& s) { return {s.begin(), s.end()}; }

}  // namespace

TEST(Golden, EmbeddingStore)
{
    const auto bytes = golden_store().serialize();
    check_golden("store.spl8", bytes);
    if (!updating()) {
        auto loaded = embedding_store::load(golden_dir / "store.spl8");
        EXPECT_EQ(loaded.serialize(), bytes);
        EXPECT_EQ(loaded.get(7), golden_store().get(7));
    }
}

TEST(Golden, AdapterCheckpoint)
{
    const auto bytes = golden_head().serialize();
    check_golden("head.splh", bytes);
    if (!updating()) {
        auto loaded = adapter_head::load(golden_dir / "head.splh");
        EXPECT_EQ(loaded, golden_head());
        EXPECT_EQ(loaded.serialize(), bytes);
    }
}

TEST(Golden, InvertedIndex)
{
    const auto bytes = golden_index().serialize();
    check_golden("index.spix", bytes);
    if (!updating()) {
        auto loaded = inverted_index::load(golden_dir / "index.spix");
        EXPECT_EQ(loaded.serialize(), bytes);
        sparse_vector q{{{0, 1.0}, {3, 0.5}, {5, 2.0}}};
        EXPECT_EQ(retrieve_bmw(loaded, q, 3), retrieve_exhaustive(golden_index(), q, 3));
    }
}

TEST(Golden, RunFile)
{
    const auto text = format_run(golden_run());
    check_golden("run.tsv", bytes_of(text));
    if (!updating()) {
        const auto stored = io::read_text(golden_dir / "run.tsv");
        EXPECT_EQ(parse_run(stored), golden_run());
        EXPECT_EQ(format_run(parse_run(stored)), stored);
    }
}

TEST(RunFile, RoundTripsShortestDoubles)
{
    rng gen(1);
    run r;
    for (record_id q = 0; q < 20; ++q) {
        std::vector<ranked_entry> entries;
        for (std::uint64_t d = 0; d < 15; ++d) {
            entries.push_back({d * 7 + q, gen.normal() * std::pow(10.0, static_cast<double>(gen.below(20)) - 10.0)});
        }
        r[q] = top_k(entries, 10);
    }
    EXPECT_EQ(parse_run(format_run(r)), r);
}

TEST(RunFile, RejectsGapsAndBadFields)
{
    EXPECT_THROW(parse_run("1\t2\t2\t0.5\n"), format_error);
    EXPECT_THROW(parse_run("1\t2\t1\n"), format_error);
    EXPECT_THROW(parse_run("1\tx\t1\t0.5\n"), format_error);
    EXPECT_TRUE(parse_run("").empty());
}

TEST(Corpus, IntegerModeRoundTrip)
{
    std::map<record_id, std::vector<term_id>> corpus{{3, {1, 2, 2}}, {0, {9}}};
    auto text = format_corpus(corpus);
    EXPECT_EQ(text, "0\t9\n3\t1 2 2\n");
    EXPECT_EQ(parse_corpus(text, 10), corpus);
}

TEST(Corpus, ErrorsCarryLineNumbers)
{
    try {
        (void)parse_corpus("0\t1 2\n1\t3 99\n", 10);
        FAIL() << "expected format_error";
    } catch (const format_error& e) {
        EXPECT_NE(std::string(e.what()).find("corpus:2"), std::string::npos) << e.what();
    }
    EXPECT_THROW(parse_corpus("0 1 2\n", 10), format_error);
    EXPECT_THROW(parse_corpus("0\t1\n0\t2\n", 10), format_error);
    EXPECT_THROW(parse_corpus("0\t\n", 10), format_error);
}

TEST(Corpus, TextModeUsesVocabulary)
{
    auto vocab = vocabulary::parse("art\t0\nmedium\t1\n");
    EXPECT_EQ(vocab.size(), 2u);
    auto corpus = parse_corpus("5\tMedium ART canvas\n", 2, &vocab);
    EXPECT_EQ(corpus.at(5), (std::vector<term_id>{1, 0}));
    std::vector<std::string> unknown;
    EXPECT_EQ(tokenize_text("canvas art", vocab, &unknown), (std::vector<term_id>{0}));
    EXPECT_EQ(unknown, (std::vector<std::string>{"canvas"}));
    EXPECT_THROW(parse_corpus("5\tcanvas\n", 2, &vocab), format_error);
}

TEST(Vocabulary, RoundTripAndDuplicates)
{
    vocabulary v;
    for (term_id t = 0; t < 100; ++t) {
        v.add(pseudo_word(t), t);
    }
    auto again = vocabulary::parse(v.format());
    EXPECT_EQ(again.format(), v.format());
    EXPECT_EQ(again.term(42), pseudo_word(42));
    EXPECT_EQ(again.term(500), "500");
    EXPECT_THROW(vocabulary::parse("a\t0\na\t1\n"), format_error);
    EXPECT_THROW(vocabulary::parse("a\t0\nb\t0\n"), format_error);
}

TEST(Qrels, RoundTrip)
{
    std::map<record_id, record_id> q{{0, 5}, {7, 1}};
    EXPECT_EQ(parse_qrels(format_qrels(q)), q);
    EXPECT_THROW(parse_qrels("1\t2\n1\t3\n"), format_error);
}
