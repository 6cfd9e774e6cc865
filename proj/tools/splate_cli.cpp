// splate: command-line front end for corpus generation, training, indexing,
// retrieval, re-ranking, evaluation and query explanation.

#include <CLI11.hpp>

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "splate/embedding_store.hpp"
#include "splate/formats.hpp"
#include "splate/late_interaction.hpp"
#include "splate/pipeline_eval.hpp"
#include "splate/sparse_index.hpp"
#include "splate/splate_head.hpp"
#include "splate/synthetic.hpp"
#include "splate/trainer.hpp"

namespace fs = std::filesystem;
using namespace splate;

namespace {

// Keys of the key=value description written next to a synthetic corpus. The
// encoder settings are needed to embed new query text later.
constexpr const char* synth_config_file = "synth.txt";

std::string describe(const synth_config& cfg, const vocabulary_config& vc)
{
    std::ostringstream out;
    out << "docs=" << cfg.num_docs << '\n'
        << "queries=" << cfg.num_queries << '\n'
        << "train_queries=" << cfg.num_train_queries << '\n'
        << "vocab_size=" << vc.vocab_size << '\n'
        << "dim=" << vc.dim << '\n'
        << "seed=" << vc.seed << '\n'
        << "context_weight=" << text::format_double(vc.context_weight) << '\n'
        << "context_window=" << vc.context_window << '\n'
        << "doc_len_min=" << cfg.doc_len_min << '\n'
        << "doc_len_max=" << cfg.doc_len_max << '\n'
        << "query_len_min=" << cfg.query_len_min << '\n'
        << "query_len_max=" << cfg.query_len_max << '\n'
        << "query_noise_max=" << cfg.query_noise_max << '\n'
        << "zipf_exponent=" << text::format_double(cfg.zipf_exponent) << '\n'
        << "files=docs.tsv queries.tsv train_queries.tsv qrels.tsv train_qrels.tsv vocab.tsv docs.spl8 queries.spl8 "
           "train_queries.spl8\n";
    return out.str();
}

vocabulary_config read_encoder_config(const fs::path& path)
{
    const auto kv = parse_key_values(io::read_text(path));
    auto get = [&](const std::string& key) -> const std::string& {
        auto it = kv.find(key);
        if (it == kv.end()) {
            throw format_error(path.string() + ": missing key " + key);
        }
        return it->second;
    };
    vocabulary_config vc;
    const auto where = path.string();
    vc.vocab_size = text::parse_number<std::uint32_t>(get("vocab_size"), where);
    vc.dim = text::parse_number<std::uint32_t>(get("dim"), where);
    vc.seed = text::parse_number<std::uint64_t>(get("seed"), where);
    vc.context_weight = text::parse_number<double>(get("context_weight"), where);
    vc.context_window = text::parse_number<std::uint32_t>(get("context_window"), where);
    vc.validate();
    return vc;
}

void require_empty_dir(const fs::path& dir, bool force)
{
    if (fs::exists(dir) && !fs::is_directory(dir)) {
        throw usage_error(dir.string() + " exists and is not a directory");
    }
    if (fs::exists(dir) && !fs::is_empty(dir) && !force) {
        throw usage_error(dir.string() + " is not empty (use --force to overwrite)");
    }
    fs::create_directories(dir);
}

void check_parent(const fs::path& out)
{
    const auto parent = out.parent_path();
    if (!parent.empty() && !fs::is_directory(parent)) {
        throw not_found_error("output directory does not exist: " + parent.string());
    }
}

std::map<record_id, record_id> load_qrels(const fs::path& path)
{
    return parse_qrels(io::read_text(path), path.string());
}

run load_run(const fs::path& path) { return parse_run(io::read_text(path), path.string()); }

void save_run(const fs::path& path, const run& r)
{
    check_parent(path);
    io::write_text(path, format_run(r));
}

pipeline_config make_pipeline_config(std::uint32_t k_q, std::uint32_t k_d, std::size_t k_candidates,
                                     std::size_t k_final, const std::string& algo)
{
    pipeline_config cfg{k_q, k_d, k_candidates, k_final, parse_algorithm(algo)};
    cfg.validate();
    return cfg;
}

std::string format_weight_list(const sparse_vector& v, const vocabulary* vocab)
{
    std::ostringstream out;
    bool first = true;
    for (const auto& e : by_weight(v)) {
        out << (first ? "" : ", ") << "(\"" << (vocab != nullptr ? vocab->term(e.term) : std::to_string(e.term))
            << "\", " << text::format_fixed(e.weight, 2) << ")";
        first = false;
    }
    return out.str();
}

// ---------------------------------------------------------------------------

struct synth_args {
    synth_config cfg;
    double context_weight = 0.3;
    fs::path out;
    bool force = false;
};

void cmd_synth(const synth_args& a)
{
    auto cfg = a.cfg;
    cfg.validate();
    require_empty_dir(a.out, a.force);
    auto vc = cfg.vocabulary();
    vc.context_weight = a.context_weight;
    vc.validate();

    const auto corpus = generate_corpus(cfg);
    const synth_encoder encoder(vc);
    io::write_text(a.out / "docs.tsv", format_corpus(corpus.docs));
    io::write_text(a.out / "queries.tsv", format_corpus(corpus.queries));
    io::write_text(a.out / "train_queries.tsv", format_corpus(corpus.train_queries));
    io::write_text(a.out / "qrels.tsv", format_qrels(corpus.qrels));
    io::write_text(a.out / "train_qrels.tsv", format_qrels(corpus.train_qrels));
    vocabulary vocab;
    for (term_id t = 0; t < cfg.vocab_size; ++t) {
        vocab.add(pseudo_word(t), t);
    }
    io::write_text(a.out / "vocab.tsv", vocab.format());
    encode_sequences(encoder, corpus.docs).save(a.out / "docs.spl8");
    encode_sequences(encoder, corpus.queries).save(a.out / "queries.spl8");
    encode_sequences(encoder, corpus.train_queries).save(a.out / "train_queries.spl8");
    io::write_text(a.out / synth_config_file, describe(cfg, vc));
    std::cout << "wrote " << cfg.num_docs << " docs, " << cfg.num_queries << " queries, " << cfg.num_train_queries
              << " training queries to " << a.out.string() << '\n';
}

struct embed_args {
    fs::path corpus;
    fs::path config;
    fs::path vocab;
    fs::path out;
};

void cmd_embed(const embed_args& a)
{
    const auto vc = read_encoder_config(a.config);
    vocabulary vocab;
    const bool text_mode = !a.vocab.empty();
    if (text_mode) {
        vocab = vocabulary::parse(io::read_text(a.vocab), a.vocab.string());
    }
    const auto seqs = parse_corpus(io::read_text(a.corpus), vc.vocab_size, text_mode ? &vocab : nullptr,
                                   a.corpus.string());
    check_parent(a.out);
    encode_sequences(synth_encoder(vc), seqs).save(a.out);
    std::cout << "embedded " << seqs.size() << " records into " << a.out.string() << '\n';
}

struct train_args {
    fs::path docs;
    fs::path queries;
    fs::path qrels;
    fs::path config;
    fs::path init;
    fs::path out;
    fs::path checkpoint_dir;
    fs::path manifest_out;
    fs::path manifest_in;
    train_config cfg;
    std::string activation = "relu";
};

activation parse_activation(const std::string& name)
{
    if (name == "relu") {
        return activation::relu;
    }
    if (name == "identity") {
        return activation::identity;
    }
    throw usage_error("--activation must be relu or identity, got " + name);
}

void cmd_train(const train_args& a)
{
    a.cfg.validate();
    if (a.config.empty() == a.init.empty()) {
        throw usage_error("train: give exactly one of --config (fresh head) or --init (checkpoint)");
    }
    if (!a.manifest_in.empty() && !a.qrels.empty()) {
        throw usage_error("train: --qrels and --manifest are mutually exclusive");
    }
    // With zero epochs and no manifest requested the initialized head is
    // written as is, so setups too small to mine negatives still work.
    const bool need_examples = a.cfg.epochs > 0 || !a.manifest_out.empty();
    if (need_examples && a.manifest_in.empty() && a.qrels.empty()) {
        throw usage_error("train: give --qrels (mine negatives) or --manifest (reuse them)");
    }
    check_parent(a.out);
    const auto docs = embedding_store::load(a.docs);
    const auto queries = embedding_store::load(a.queries);
    const dense_doc_store dense(docs);

    adapter_head head = a.init.empty()
                            ? adapter_head::initialize(make_projection(read_encoder_config(a.config)), a.cfg.seed,
                                                       parse_activation(a.activation))
                            : adapter_head::load(a.init);
    if (head.vocab_size() != docs.vocab_size() || head.dim() != docs.dim()) {
        throw usage_error("train: head shape does not match the embedding store");
    }

    if (!need_examples) {
        head.save(a.out);
        return;
    }
    const auto examples = a.manifest_in.empty()
                              ? build_training_set(queries, load_qrels(a.qrels), dense, a.cfg)
                              : parse_manifest(io::read_text(a.manifest_in), a.manifest_in.string());
    if (!a.manifest_out.empty()) {
        check_parent(a.manifest_out);
        io::write_text(a.manifest_out, format_manifest(examples));
    }
    if (!a.checkpoint_dir.empty()) {
        fs::create_directories(a.checkpoint_dir);
    }
    const training_data data{&queries, &docs};
    auto report = train(head, examples, data, a.cfg, [&](std::size_t epoch, const adapter_head& h) {
        if (!a.checkpoint_dir.empty()) {
            h.save(a.checkpoint_dir / ("epoch" + std::to_string(epoch + 1) + ".splh"));
        }
    });
    for (std::size_t e = 0; e < report.epoch_loss.size(); ++e) {
        std::cout << "epoch " << (e + 1) << " loss " << text::format_double(report.epoch_loss[e]) << '\n';
    }
    head.save(a.out);
}

struct index_args {
    fs::path head;
    fs::path docs;
    fs::path out;
    std::uint32_t k_d = 100;
    std::uint32_t bits = 8;
    std::uint32_t block_length = 64;
};

void cmd_index(const index_args& a)
{
    check_parent(a.out);
    const auto head = adapter_head::load(a.head);
    const auto docs = embedding_store::load(a.docs);
    auto index = build_index(encode_corpus(head, docs, a.k_d), head.vocab_size(), a.bits, a.block_length);
    index.save(a.out);
    std::cout << "indexed " << index.meta().num_docs << " docs, " << index.total_postings() << " postings\n";
}

struct retrieve_args {
    fs::path head;
    fs::path index;
    fs::path queries;
    fs::path out;
    std::uint32_t k_q = 10;
    std::size_t k = 50;
    std::string algo = "bmw";
};

void cmd_retrieve(const retrieve_args& a)
{
    const auto algo = parse_algorithm(a.algo);
    if (a.k < 1) {
        throw usage_error("--k must be >= 1");
    }
    const auto head = adapter_head::load(a.head);
    const auto index = inverted_index::load(a.index);
    const auto queries = embedding_store::load(a.queries);
    const auto ids = queries.ids();
    std::vector<ranked_list> lists(ids.size());
    parallel_for(ids.size(), [&](std::size_t i) {
        lists[i] = retrieve(algo, index, encode(head, queries.get(ids[i]), a.k_q), a.k);
    });
    run r;
    for (std::size_t i = 0; i < ids.size(); ++i) {
        r[ids[i]] = std::move(lists[i]);
    }
    save_run(a.out, r);
}

struct rerank_args {
    fs::path run_in;
    fs::path docs;
    fs::path queries;
    fs::path out;
    std::size_t k = 10;
};

// Without --run every document is a candidate, which gives the exact
// MaxSim ranking.
void cmd_rerank(const rerank_args& a)
{
    if (a.k < 1) {
        throw usage_error("--k must be >= 1");
    }
    const auto docs = embedding_store::load(a.docs);
    const auto queries = embedding_store::load(a.queries);
    const dense_doc_store dense(docs);
    const bool full = a.run_in.empty();
    const run candidates = full ? run{} : load_run(a.run_in);
    std::vector<record_id> ids;
    if (full) {
        ids = queries.ids();
    } else {
        for (const auto& [q, list] : candidates) {
            ids.push_back(q);
        }
    }
    std::vector<ranked_list> lists(ids.size());
    parallel_for(ids.size(), [&](std::size_t i) {
        const auto& q = queries.get(ids[i]);
        lists[i] = full ? teacher_rank(q, dense, a.k) : rerank(q, candidates.at(ids[i]).ids(), dense, a.k);
    });
    run r;
    for (std::size_t i = 0; i < ids.size(); ++i) {
        r[ids[i]] = std::move(lists[i]);
    }
    save_run(a.out, r);
}

struct eval_args {
    // pipeline mode
    fs::path head;
    fs::path index;
    fs::path docs;
    fs::path queries;
    std::uint32_t k_q = 10;
    std::uint32_t k_d = 100;
    std::size_t k_candidates = 50;
    std::size_t k_final = 10;
    std::string algo = "bmw";
    std::size_t repetitions = 3;
    bool no_latency = false;
    bool e2e_latency = false;
    std::uint64_t seed = 0;
    // run-file mode
    fs::path run_in;
    fs::path exact;
    // shared
    fs::path qrels;
    fs::path out;
    std::size_t k = 10;
};

std::string eval_runs(const eval_args& a)
{
    const auto approx = load_run(a.run_in);
    const auto exact = load_run(a.exact);
    const auto qrels = a.qrels.empty() ? std::map<record_id, record_id>{} : load_qrels(a.qrels);
    constexpr std::size_t multiples = 5;
    std::vector<std::vector<double>> overlap(multiples);
    std::vector<double> mrr;
    std::size_t truncated = 0;
    for (const auto& [q, ex] : exact) {
        const auto it = approx.find(q);
        const ranked_list empty;
        const auto& ap = it == approx.end() ? empty : it->second;
        for (std::size_t m = 0; m < multiples; ++m) {
            auto r = recall_overlap_checked(ap, ex, a.k, (m + 1) * a.k);
            truncated += r.truncated ? 1 : 0;
            overlap[m].push_back(r.value);
        }
        if (!qrels.empty()) {
            auto rel = qrels.find(q);
            if (rel == qrels.end()) {
                throw not_found_error("eval: no relevance judgment for query " + std::to_string(q));
            }
            mrr.push_back(mrr_at_k(ap, {rel->second}, a.k));
        }
    }
    if (exact.empty()) {
        throw validation_error("eval: exact run is empty");
    }
    std::ostringstream out;
    out << "num_queries=" << exact.size() << '\n';
    if (!mrr.empty()) {
        out << "mrr_at_" << a.k << "=" << text::format_double(mean_of(mrr)) << '\n';
    }
    for (std::size_t m = 0; m < multiples; ++m) {
        const auto kp = (m + 1) * a.k;
        out << "r_overlap_k" << a.k << "_kprime" << kp << "=" << text::format_double(mean_of(overlap[m])) << '\n'
            << "r_overlap_k" << a.k << "_kprime" << kp << "_std=" << text::format_double(std_of(overlap[m])) << '\n';
    }
    out << "truncated_lists=" << truncated << '\n';
    return out.str();
}

void cmd_eval(const eval_args& a)
{
    const bool run_mode = !a.run_in.empty() || !a.exact.empty();
    std::string report;
    if (run_mode) {
        if (a.run_in.empty() || a.exact.empty()) {
            throw usage_error("eval: run-file mode needs both --run and --exact");
        }
        if (!a.head.empty() || !a.index.empty()) {
            throw usage_error("eval: --run/--exact cannot be combined with --head/--index");
        }
        if (a.k < 1) {
            throw usage_error("--k must be >= 1");
        }
        report = eval_runs(a);
    } else {
        if (a.head.empty() || a.index.empty() || a.docs.empty() || a.queries.empty() || a.qrels.empty()) {
            throw usage_error("eval: pipeline mode needs --head --index --docs --queries --qrels");
        }
        const auto cfg = make_pipeline_config(a.k_q, a.k_d, a.k_candidates, a.k_final, a.algo);
        const auto head = adapter_head::load(a.head);
        const auto index = inverted_index::load(a.index);
        const auto docs = embedding_store::load(a.docs);
        const auto queries = embedding_store::load(a.queries);
        const dense_doc_store dense(docs);
        const pipeline p(head, index, dense, cfg);
        eval_options opts;
        opts.metric_k = a.k;
        opts.overlap_k = a.k;
        opts.mrt_repetitions = a.repetitions;
        opts.measure_latency = !a.no_latency;
        opts.measure_e2e_latency = a.e2e_latency;
        opts.seed = a.seed;
        report = evaluate(p, queries, load_qrels(a.qrels), opts).format();
    }
    if (!a.out.empty()) {
        check_parent(a.out);
        io::write_text(a.out, report);
    }
    std::cout << report;
}

struct sweep_args {
    fs::path head;
    fs::path docs;
    fs::path queries;
    fs::path qrels;
    fs::path out;
    std::vector<std::string> grid{"5,30", "5,50", "10,100"};
    std::size_t k_candidates = 50;
    std::string algo = "bmw";
    std::size_t repetitions = 5;
};

std::pair<std::uint32_t, std::uint32_t> parse_pair(const std::string& s)
{
    const auto fields = text::split(s, ',');
    if (fields.size() != 2) {
        throw usage_error("--grid entries look like k_q,k_d; got \"" + s + "\"");
    }
    return {text::parse_number<std::uint32_t>(fields[0], "--grid"),
            text::parse_number<std::uint32_t>(fields[1], "--grid")};
}

void cmd_sweep(const sweep_args& a)
{
    const auto head = adapter_head::load(a.head);
    const auto docs = embedding_store::load(a.docs);
    const auto queries = embedding_store::load(a.queries);
    const auto qrels = load_qrels(a.qrels);
    const dense_doc_store dense(docs);
    std::ostringstream table;
    table << "k_q\tk_d\tmrt_ms\tmrr_at_10_retrieval\tmrr_at_10_e2e\tr_overlap_k10_kprime50\n";
    for (const auto& cell : a.grid) {
        const auto [k_q, k_d] = parse_pair(cell);
        const auto cfg = make_pipeline_config(k_q, k_d, a.k_candidates, 10, a.algo);
        const auto index = build_index(encode_corpus(head, docs, k_d), head.vocab_size());
        const pipeline p(head, index, dense, cfg);
        eval_options opts;
        opts.mrt_repetitions = a.repetitions;
        const auto r = evaluate(p, queries, qrels, opts);
        table << k_q << '\t' << k_d << '\t' << text::format_fixed(r.mean_response_time_ms, 4) << '\t'
              << text::format_fixed(r.mrr_retrieval, 4) << '\t' << text::format_fixed(r.mrr_e2e, 4) << '\t'
              << text::format_fixed(r.overlap_mean.back(), 4) << '\n';
    }
    if (!a.out.empty()) {
        check_parent(a.out);
        io::write_text(a.out, table.str());
    }
    std::cout << table.str();
}

struct explain_args {
    fs::path head;
    fs::path config;
    fs::path vocab;
    std::string query;
    std::string ids;
    std::uint32_t k_q = 10;
};

void cmd_explain(const explain_args& a)
{
    if (a.query.empty() == a.ids.empty()) {
        throw usage_error("explain: give exactly one of --query (text) or --ids (term-ids)");
    }
    const auto head = adapter_head::load(a.head);
    const auto vc = read_encoder_config(a.config);
    if (vc.vocab_size != head.vocab_size() || vc.dim != head.dim()) {
        throw usage_error("explain: encoder config does not match the head");
    }
    vocabulary vocab;
    const bool have_vocab = !a.vocab.empty();
    if (have_vocab) {
        vocab = vocabulary::parse(io::read_text(a.vocab), a.vocab.string());
    }
    std::vector<term_id> tokens;
    if (!a.query.empty()) {
        if (!have_vocab) {
            throw usage_error("explain: --query needs --vocab");
        }
        std::vector<std::string> unknown;
        tokens = tokenize_text(a.query, vocab, &unknown);
        for (const auto& w : unknown) {
            std::cerr << "warning: skipping unknown token \"" << w << "\"\n";
        }
        if (tokens.empty()) {
            throw validation_error("explain: no known tokens in query");
        }
    } else {
        tokens = parse_term_ids(a.ids, vc.vocab_size, "--ids");
        if (tokens.empty()) {
            throw validation_error("explain: --ids is empty");
        }
    }
    const auto record = synth_encoder(vc).encode(tokens);
    std::cout << format_weight_list(encode(head, record, a.k_q), have_vocab ? &vocab : nullptr) << '\n';
}

}  // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Sparse late-interaction retrieval toolkit"};
    app.require_subcommand(1);
    app.set_help_all_flag("--help-all", "Show help for every subcommand");

    synth_args sa;
    auto* synth = app.add_subcommand("synth", "Generate a deterministic synthetic corpus and its embeddings");
    synth->add_option("--docs", sa.cfg.num_docs, "Number of documents")->check(CLI::PositiveNumber);
    synth->add_option("--queries", sa.cfg.num_queries, "Number of evaluation queries")->check(CLI::PositiveNumber);
    synth->add_option("--train-queries", sa.cfg.num_train_queries, "Number of training queries");
    synth->add_option("--vocab", sa.cfg.vocab_size, "Vocabulary size")->check(CLI::Range(2u, 1u << 24));
    synth->add_option("--dim", sa.cfg.dim, "Embedding dimension")->check(CLI::Range(2u, 4096u));
    synth->add_option("--seed", sa.cfg.seed, "Random seed");
    synth->add_option("--doc-len-min", sa.cfg.doc_len_min, "Minimum document length");
    synth->add_option("--doc-len-max", sa.cfg.doc_len_max, "Maximum document length");
    synth->add_option("--context-weight", sa.context_weight, "Weight of neighbouring tokens in an embedding");
    synth->add_option("--out", sa.out, "Output directory")->required();
    synth->add_flag("--force", sa.force, "Overwrite a non-empty output directory");

    embed_args ea;
    auto* embed = app.add_subcommand("embed", "Embed a corpus file with the encoder of a synthetic setup");
    embed->add_option("--corpus", ea.corpus, "Corpus file (id<TAB>term-ids, or text with --vocab)")->required();
    embed->add_option("--config", ea.config, "synth.txt of the setup")->required();
    embed->add_option("--vocab", ea.vocab, "Vocabulary file; switches to text mode");
    embed->add_option("--out", ea.out, "Output embedding store (.spl8)")->required();

    train_args ta;
    auto* tr = app.add_subcommand("train", "Distill exact MaxSim into the sparse head");
    tr->add_option("--docs", ta.docs, "Document embedding store")->required();
    tr->add_option("--queries", ta.queries, "Training query embedding store")->required();
    tr->add_option("--qrels", ta.qrels, "Training query -> positive document");
    tr->add_option("--manifest", ta.manifest_in, "Reuse a training manifest instead of mining negatives");
    tr->add_option("--config", ta.config, "synth.txt; starts from a freshly initialized head");
    tr->add_option("--init", ta.init, "Start from this checkpoint");
    tr->add_option("--out", ta.out, "Final checkpoint (.splh)")->required();
    tr->add_option("--checkpoint-dir", ta.checkpoint_dir, "Write a checkpoint after every epoch");
    tr->add_option("--manifest-out", ta.manifest_out, "Write the mined training manifest");
    tr->add_option("--epochs", ta.cfg.epochs, "Epochs");
    tr->add_option("--batch-size", ta.cfg.batch_size, "Examples per step");
    tr->add_option("--n-neg", ta.cfg.n_neg, "Hard negatives per query");
    tr->add_option("--pool-size", ta.cfg.pool_size, "Teacher depth negatives are sampled from");
    tr->add_option("--lr", ta.cfg.lr, "Learning rate");
    tr->add_option("--lambda-margin", ta.cfg.loss_weight_margin, "Weight of the margin MSE loss");
    tr->add_option("--lambda-kl", ta.cfg.loss_weight_kl, "Weight of the KL divergence loss");
    tr->add_option("--k-q", ta.cfg.k_q, "Query pooling size");
    tr->add_option("--k-d", ta.cfg.k_d, "Document pooling size");
    tr->add_option("--seed", ta.cfg.seed, "Random seed");
    tr->add_option("--activation", ta.activation, "MLP activation: relu or identity");

    index_args ia;
    auto* ix = app.add_subcommand("index", "Encode documents and build the inverted index");
    ix->add_option("--head", ia.head, "Checkpoint")->required();
    ix->add_option("--docs", ia.docs, "Document embedding store")->required();
    ix->add_option("--out", ia.out, "Index file (.spix)")->required();
    ix->add_option("--k-d", ia.k_d, "Document pooling size")->check(CLI::PositiveNumber);
    ix->add_option("--bits", ia.bits, "Quantization bits")->check(CLI::Range(1u, 16u));
    ix->add_option("--block-length", ia.block_length, "Postings per block")->check(CLI::PositiveNumber);

    retrieve_args ra;
    auto* rt = app.add_subcommand("retrieve", "Sparse retrieval for every query");
    rt->add_option("--head", ra.head, "Checkpoint")->required();
    rt->add_option("--index", ra.index, "Index file")->required();
    rt->add_option("--queries", ra.queries, "Query embedding store")->required();
    rt->add_option("--out", ra.out, "Run file")->required();
    rt->add_option("--k-q", ra.k_q, "Query pooling size")->check(CLI::PositiveNumber);
    rt->add_option("--k", ra.k, "Documents per query");
    rt->add_option("--algo", ra.algo, "exhaustive, bmw or maxscore");

    rerank_args rr;
    auto* rk = app.add_subcommand("rerank", "Re-rank a run exactly with MaxSim (whole corpus without --run)");
    rk->add_option("--run", rr.run_in, "Candidate run file");
    rk->add_option("--docs", rr.docs, "Document embedding store")->required();
    rk->add_option("--queries", rr.queries, "Query embedding store")->required();
    rk->add_option("--out", rr.out, "Run file")->required();
    rk->add_option("--k", rr.k, "Documents kept per query");

    eval_args va;
    auto* ev = app.add_subcommand("eval", "Evaluate the pipeline, or compare two run files");
    ev->add_option("--head", va.head, "Checkpoint (pipeline mode)");
    ev->add_option("--index", va.index, "Index file (pipeline mode)");
    ev->add_option("--docs", va.docs, "Document embedding store (pipeline mode)");
    ev->add_option("--queries", va.queries, "Query embedding store (pipeline mode)");
    ev->add_option("--k-q", va.k_q, "Query pooling size");
    ev->add_option("--k-d", va.k_d, "Document pooling size the index was built with");
    ev->add_option("--k-candidates", va.k_candidates, "Sparse candidates re-ranked");
    ev->add_option("--k-final", va.k_final, "Documents kept after re-ranking");
    ev->add_option("--algo", va.algo, "exhaustive, bmw or maxscore");
    ev->add_option("--repetitions", va.repetitions, "Timed runs per query for MRT")->check(CLI::PositiveNumber);
    ev->add_flag("--no-latency", va.no_latency, "Skip latency measurement");
    ev->add_flag("--e2e-latency", va.e2e_latency,
                 "Also time encode + retrieval + re-ranking (not comparable to the sparse-stage MRT)");
    ev->add_option("--seed", va.seed, "Seed echoed into the report");
    ev->add_option("--run", va.run_in, "Approximate run (run-file mode)");
    ev->add_option("--exact", va.exact, "Exact run (run-file mode)");
    ev->add_option("--qrels", va.qrels, "Relevance judgments");
    ev->add_option("--k", va.k, "Cutoff for MRR and R(k)");
    ev->add_option("--out", va.out, "Also write the report here");

    sweep_args wa;
    auto* sw = app.add_subcommand("sweep", "MRT and quality over a (k_q,k_d) grid");
    sw->add_option("--head", wa.head, "Checkpoint")->required();
    sw->add_option("--docs", wa.docs, "Document embedding store")->required();
    sw->add_option("--queries", wa.queries, "Query embedding store")->required();
    sw->add_option("--qrels", wa.qrels, "Relevance judgments")->required();
    sw->add_option("--grid", wa.grid, "k_q,k_d pairs")->delimiter(' ');
    sw->add_option("--k-candidates", wa.k_candidates, "Sparse candidates per query");
    sw->add_option("--algo", wa.algo, "exhaustive, bmw or maxscore");
    sw->add_option("--repetitions", wa.repetitions, "Timed runs per query")->check(CLI::PositiveNumber);
    sw->add_option("--out", wa.out, "Also write the table here");

    explain_args xa;
    auto* ex = app.add_subcommand("explain", "Print a query's weighted terms");
    ex->add_option("--head", xa.head, "Checkpoint")->required();
    ex->add_option("--config", xa.config, "synth.txt of the setup")->required();
    ex->add_option("--vocab", xa.vocab, "Vocabulary file");
    ex->add_option("--query", xa.query, "Query text");
    ex->add_option("--ids", xa.ids, "Query as space-separated term-ids");
    ex->add_option("--k-q", xa.k_q, "Query pooling size")->check(CLI::PositiveNumber);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    }

    try {
        if (synth->parsed()) {
            cmd_synth(sa);
        } else if (embed->parsed()) {
            cmd_embed(ea);
        } else if (tr->parsed()) {
            cmd_train(ta);
        } else if (ix->parsed()) {
            cmd_index(ia);
        } else if (rt->parsed()) {
            cmd_retrieve(ra);
        } else if (rk->parsed()) {
            cmd_rerank(rr);
        } else if (ev->parsed()) {
            cmd_eval(va);
        } else if (sw->parsed()) {
            cmd_sweep(wa);
        } else if (ex->parsed()) {
            cmd_explain(xa);
        }
    } catch (const usage_error& e) {
        std::cerr << "usage error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
