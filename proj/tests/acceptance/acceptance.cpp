// Acceptance suite. Prints one PASS/FAIL line per criterion and exits
// non-zero if any criterion fails.

#include "lexforge/checkpoint.hpp"
#include "lexforge/datakit.hpp"
#include "lexforge/evaluation.hpp"
#include "lexforge/generation.hpp"
#include "lexforge/pipeline.hpp"
#include "lexforge/training.hpp"

#include "test_util.hpp"

#include <boost/math/distributions/chi_squared.hpp>

#include <chrono>
#include <cstdio>
#include <functional>
#include <iostream>
#include <sstream>

using namespace lexforge;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct Outcome {
    bool pass = true;
    std::ostringstream detail;

    void require(bool ok, const std::string& what) {
        if (!ok) {
            if (pass) detail << "failed: ";
            else detail << "; ";
            detail << what;
            pass = false;
        }
    }
};

// ---------------------------------------------------------------- 1
Outcome gradient_check() {
    Outcome o;
    const auto t0 = Clock::now();
    const TransformerConfig cfg{64, 16, 2, 2, 32, 64};
    ModelParameters p = init_parameters(cfg, 3);
    LoraConfig lc{4, 8.0, 0.0,
                  {LoraTarget::Query, LoraTarget::Key, LoraTarget::Value, LoraTarget::Output, LoraTarget::MlpUp,
                   LoraTarget::MlpDown}};
    LoraAdapters ad = init_adapters(cfg, lc, Stage::LPT, 5);
    std::mt19937_64 rng(9);
    std::uniform_real_distribution<double> uni(-0.5, 0.5);
    for (auto& [name, f] : ad.factors) {
        for (double& v : f.b.values()) v = uni(rng);
    }
    const TokenSequence toks = testutil::random_tokens(rng, 16, 64);

    std::vector<std::pair<std::string, Tensor*>> groups;
    for (auto& [name, t] : p.tensors) groups.emplace_back(name, &t);
    for (auto& [name, t] : ad.trainable()) groups.emplace_back("lora:" + name, t);
    for (auto& [name, t] : groups) {
        t->set_requires_grad(true);
        t->zero_grad();
    }
    {
        Graph g;
        Var l = lpt_loss(forward(g, p, &ad, toks), toks);
        g.backward(l);
    }
    auto loss = [&] {
        Graph g;
        return lpt_loss(forward(g, std::as_const(p), &std::as_const(ad), toks), toks).item();
    };

    // Relative error |n - a| / max(|n|, |a|, floor). The floor keeps entries
    // whose true gradient is ~0 from dividing round-off by round-off.
    const double h = 1e-5;
    const double floor = 1e-5;
    double worst = 0.0;
    std::string worst_group;
    std::size_t checked = 0;
    for (auto& [name, t] : groups) {
        for (std::size_t i = 0; i < t->size(); ++i) {
            const double orig = (*t)[i];
            (*t)[i] = orig + h;
            const double up = loss();
            (*t)[i] = orig - h;
            const double down = loss();
            (*t)[i] = orig;
            const double numeric = (up - down) / (2 * h);
            const double analytic = std::as_const(*t).grad()[i];
            const double rel = std::fabs(numeric - analytic) / std::max({std::fabs(numeric), std::fabs(analytic), floor});
            if (rel > worst) {
                worst = rel;
                worst_group = name;
            }
            ++checked;
        }
    }
    const double elapsed = seconds_since(t0);
    o.require(worst <= 1e-4, "relative error " + std::to_string(worst) + " in " + worst_group);
    o.require(elapsed < 120.0, "took " + std::to_string(elapsed) + " s");
    o.detail << (o.pass ? "" : "; ") << groups.size() << " groups, " << checked << " entries, worst rel err " << worst
             << " (" << worst_group << "), " << elapsed << " s";
    return o;
}

// ---------------------------------------------------------------- 2
Outcome loss_identities() {
    Outcome o;
    for (std::size_t v : {2u, 64u, 1000u, 2048u}) {
        Graph g;
        const TokenSequence ids{0, 1, 1, 0};
        const double l = lpt_loss(g.constant(Tensor({4, v}, 0.0)), ids).item();
        o.require(std::fabs(l - std::log(double(v))) < 1e-6, "uniform loss at V=" + std::to_string(v));
    }
    const auto cfg = testutil::tiny_config();
    {
        const ModelParameters zero = zero_parameters(cfg);
        std::mt19937_64 rng(1);
        const TokenSequence ids = testutil::random_tokens(rng, 16, cfg.vocab_size);
        Graph g;
        const double l = lpt_loss(forward(g, zero, static_cast<const LoraAdapters*>(nullptr), ids), ids).item();
        o.require(std::fabs(l - std::log(64.0)) < 1e-6, "zero model loss");
    }
    const ModelParameters p = init_parameters(cfg, 2);
    std::mt19937_64 rng(2);
    std::size_t exact = 0;
    for (int e = 0; e < 100; ++e) {
        const TokenSequence ids = testutil::random_tokens(rng, 2 + rng() % 15, cfg.vocab_size);
        TrainExample full{ids, {}};
        for (std::size_t i = 1; i < ids.size(); ++i) full.output_index_set.push_back(i);
        Graph g;
        Var lg = forward(g, p, static_cast<const LoraAdapters*>(nullptr), ids);
        exact += lft_loss(lg, full).item() == lpt_loss(lg, ids).item();
    }
    o.require(exact == 100, std::to_string(100 - exact) + " full-mask losses differ");
    o.detail << (o.pass ? "" : "; ") << "ln V within 1e-6 at V in {2,64,1000,2048}; full mask == LPT on " << exact
             << "/100";
    return o;
}

// ---------------------------------------------------------------- 3
Outcome lora_invariants() {
    Outcome o;
    const std::vector<LoraTarget> all{LoraTarget::Query, LoraTarget::Key,   LoraTarget::Value,
                                      LoraTarget::Output, LoraTarget::MlpUp, LoraTarget::MlpDown};
    std::mt19937_64 rng(11);
    double worst = 0.0;
    bool noop = true;
    for (int m = 0; m < 20; ++m) {
        const std::size_t heads = 1 + rng() % 4;
        const TransformerConfig cfg{16 + rng() % 80, 8 + rng() % 16, 1 + rng() % 3, heads, heads * (4 + rng() % 8),
                                    8 + rng() % 40};
        const ModelParameters p = init_parameters(cfg, rng());
        LoraConfig lc;
        lc.rank = 1 + rng() % std::min<std::size_t>(4, std::min(cfg.embed_dim, cfg.mlp_hidden_dim));
        lc.alpha = 2.0 * static_cast<double>(lc.rank);
        lc.dropout = 0.05;
        lc.targets = m % 2 == 0 ? all : std::vector<LoraTarget>{LoraTarget::Query, LoraTarget::Value};
        LoraAdapters ad = init_adapters(cfg, lc, Stage::LFT, rng());
        const TokenSequence ids = testutil::random_tokens(rng, cfg.context_length, cfg.vocab_size);
        noop = noop && logits(p, &ad, ids).same_values(logits(p, nullptr, ids));

        std::normal_distribution<double> n(0.0, 0.2);
        for (auto& [name, t] : ad.trainable()) {
            for (double& v : t->values()) v = n(rng);
        }
        const Tensor adapted = logits(p, &ad, ids);
        const Tensor merged = logits(merge_lora(p, ad), nullptr, ids);
        for (std::size_t i = 0; i < adapted.size(); ++i) worst = std::max(worst, std::fabs(adapted[i] - merged[i]));
    }
    o.require(noop, "zero-init adapters changed the logits");
    o.require(worst <= 1e-9, "merge differs by " + std::to_string(worst));

    const TrainConfig lpt = TrainConfig::defaults(Stage::LPT);
    const TrainConfig lft = TrainConfig::defaults(Stage::LFT);
    o.require(lpt.lora.rank == 16 && lpt.lora.alpha == 32.0 && lpt.lora.dropout == 0.05, "LPT defaults");
    o.require(lft.lora.rank == 8 && lft.lora.alpha == 16.0 && lft.lora.dropout == 0.05, "LFT defaults");
    o.require(lpt.lora.scale() == 2.0 && lft.lora.scale() == 2.0, "adapter scale");
    o.detail << (o.pass ? "" : "; ") << "no-op exact on 20 models, merge max abs diff " << worst
             << ", stage defaults 16/32 and 8/16 with dropout 0.05";
    return o;
}

// ---------------------------------------------------------------- 4
Outcome template_fidelity() {
    Outcome o;
    const std::string q = "请问我向借钱人要钱多次未果，向法院起诉，法院多久才立案";
    const std::string a = "起诉的当日 ，法院就会立案的。";
    const fs::path golden = testutil::source_dir() / "tests/golden";
    o.require(render_train(q, a).text == read_text_file(golden / "alpaca_train_example2.txt"), "train template");
    o.require(render_test(q) == read_text_file(golden / "alpaca_test_example2.txt"), "test template");
    o.require(render_augmentation_prompt({q, a, Subset::A}) == read_text_file(golden / "augment_example2.txt"),
              "augmentation template");
    o.require(render_test(q).ends_with("### Response: \n"), "response header spacing");
    o.detail << (o.pass ? "" : "; ") << "3 golden files byte-identical";
    return o;
}

// ---------------------------------------------------------------- 5
Outcome mask_construction() {
    Outcome o;
    std::mt19937_64 rng(5);
    auto nonblank = [&](std::size_t n) {
        for (;;) {
            std::string s = testutil::random_utf8(rng, n);
            if (!trim(s).empty()) return s;
        }
    };
    std::vector<InstructionRecord> records;
    std::vector<std::string> corpus;
    for (int i = 0; i < 1000; ++i) {
        records.push_back({nonblank(1 + rng() % 30), nonblank(1 + rng() % 30), Subset::A});
        if (i < 200) corpus.push_back(render_train(records.back().instruction, records.back().output).text);
    }
    const Vocabulary v = train_bpe(corpus, 800);
    std::size_t ok = 0;
    for (const InstructionRecord& r : records) {
        const TrainExample ex = tokenize_example(r, v, 4096);
        const std::size_t first = ex.output_index_set.front();
        TokenSequence out;
        bool contiguous = ex.output_index_set.back() == ex.tokens.size() - 1;
        for (std::size_t i : ex.output_index_set) out.push_back(ex.tokens[i]);
        for (std::size_t k = 1; k < ex.output_index_set.size(); ++k) {
            contiguous = contiguous && ex.output_index_set[k] == ex.output_index_set[k - 1] + 1;
        }
        const bool eos_last = !out.empty() && out.back() == v.eos();
        if (eos_last) out.pop_back();
        const TokenSequence prompt(ex.tokens.begin() + 1, ex.tokens.begin() + static_cast<std::ptrdiff_t>(first));
        const bool prompt_ok = ex.tokens.front() == v.bos() && decode(v, prompt) == render_test(r.instruction);
        if (eos_last && contiguous && prompt_ok && decode(v, out) == r.output) ++ok;
    }
    o.require(ok == records.size(), std::to_string(records.size() - ok) + " records mis-masked");
    o.detail << (o.pass ? "" : "; ") << ok << "/1000 outputs decode exactly, prompt untouched";
    return o;
}

// ---------------------------------------------------------------- 6, 7
struct ToyRun {
    std::size_t records = 0;
    std::size_t lft_steps = 0;
    double final_loss = 0.0;
    std::size_t reproduced = 0;
    std::vector<std::string> mismatches;
    double seconds = 0.0;
    // Serialized artifacts for the determinism comparison.
    std::string vocab;
    std::string lpt_ckpt;
    std::string lft_ckpt;
    std::string lpt_report;
    std::string lft_report;
    std::string eval_report;
};

ToyRun toy_pipeline() {
    ToyRun run;
    const auto t0 = Clock::now();
    const PipelineConfig cfg = load_pipeline_config(testutil::source_dir() / "configs/toy.json");

    std::vector<std::vector<InstructionRecord>> sources;
    for (const auto& f : cfg.paths.subsets) sources.push_back(read_dataset_file(f));
    sources.push_back(ingest_responses(read_text_file(cfg.paths.augmented)).records);
    const Dataset ds = build_dataset(sources);
    run.records = ds.records.size();

    const auto corpus = read_corpus(cfg.paths.corpus);
    const Vocabulary vocab = train_pipeline_tokenizer(corpus, ds.records, cfg.vocab_size);
    run.vocab = vocab.serialize();

    StageReport lpt_rep;
    const Checkpoint lpt = run_lpt(cfg, vocab, corpus, {}, &lpt_rep);
    run.lpt_ckpt = serialize_checkpoint(lpt);
    run.lpt_report = stage_report_json(lpt_rep, lpt_rep.epoch_mean_loss.back());

    StageReport lft_rep;
    const Checkpoint lft = run_lft(cfg, vocab, lpt, ds.records, {}, &lft_rep);
    run.lft_ckpt = serialize_checkpoint(lft);
    run.lft_steps = lft_rep.steps;

    const auto examples = tokenize_records(ds.records, vocab, lft.params.config.context_length);
    run.final_loss = evaluate_loss(lft.params, lft.adapter_ptr(), examples);
    run.lft_report = stage_report_json(lft_rep, run.final_loss);

    for (const InstructionRecord& r : ds.records) {
        const std::string got = answer(model_ref(lft), vocab, r.instruction, cfg.generation);
        if (got == r.output) {
            ++run.reproduced;
        } else {
            run.mismatches.push_back(r.instruction + " -> " + got);
        }
    }

    const auto tasks = load_task_dir(cfg.paths.tasks);
    run.eval_report = report_to_json_line(run_eval(model_ref(lft), vocab, tasks, cfg.generation, "toy-lft"));
    run.seconds = seconds_since(t0);
    return run;
}

Outcome overfit(const ToyRun& run) {
    Outcome o;
    o.require(run.records == 32, "dataset has " + std::to_string(run.records) + " records");
    o.require(run.lft_steps <= 200, std::to_string(run.lft_steps) + " LFT steps");
    o.require(run.final_loss < 0.1, "final masked loss " + std::to_string(run.final_loss));
    o.require(run.reproduced == run.records,
              std::to_string(run.records - run.reproduced) + " outputs not reproduced" +
                  (run.mismatches.empty() ? "" : " (first: " + run.mismatches.front() + ")"));
    o.require(run.seconds < 600.0, "took " + std::to_string(run.seconds) + " s");
    o.detail << (o.pass ? "" : "; ") << run.records << " records, " << run.lft_steps
             << " LFT steps, masked loss " << run.final_loss << ", " << run.reproduced << "/" << run.records
             << " reproduced greedily, " << run.seconds << " s";
    return o;
}

Outcome determinism(const ToyRun& a, const ToyRun& b) {
    Outcome o;
    o.require(a.vocab == b.vocab, "vocabulary differs");
    o.require(a.lpt_ckpt == b.lpt_ckpt, "LPT checkpoint differs");
    o.require(a.lft_ckpt == b.lft_ckpt, "LFT checkpoint differs");
    o.require(a.lpt_report == b.lpt_report && a.lft_report == b.lft_report, "stage reports differ");
    o.require(a.eval_report == b.eval_report, "evaluation report differs");
    o.detail << (o.pass ? "" : "; ") << "checkpoints (" << a.lft_ckpt.size() << " bytes LFT), vocabulary and reports bit-identical";
    return o;
}

// ---------------------------------------------------------------- 8
Outcome table_plumbing() {
    Outcome o;
    struct Row {
        std::string name;
        std::vector<double> scores;
        double printed;
    };
    const std::vector<Row> rows{
        {"GPT-3.5 Turbo", {29.5, 31.3, 35.5, 78.7, 76.8, 27.4, 61.2, 17.4}, 44.7},
        {"GPT-4", {52.5, 27.5, 42.0, 82.6, 81.9, 48.6, 77.6, 19.6}, 54.0},
        {"LLaMA", {1.0, 7.5, 7.0, 41.3, 54.2, 0.2, 14.4, 7.8}, 16.7},
        {"LaWGPT", {0.2, 11.0, 15.7, 42.4, 40.8, 6.2, 15.4, 7.6}, 17.4},
    };
    std::vector<EvalReport> reports;
    for (const Row& r : rows) {
        std::vector<TaskScore> s;
        for (std::size_t i = 0; i < r.scores.size(); ++i) s.push_back({static_cast<int>(i + 1), r.scores[i]});
        reports.push_back(aggregate_report(r.name, s));
        o.require(std::fabs(reports.back().average - r.printed) <= 0.05,
                  r.name + " average " + std::to_string(reports.back().average));
    }
    const ComparisonTable t = compare_reports(reports, {"LLaMA", "LaWGPT"});
    // Columns 1..8 are tasks, 9 is the average.
    const std::vector<std::vector<std::size_t>> expected_bold{{}, {}, {1, 5, 8}, {2, 3, 4, 6, 7, 9}};
    for (std::size_t r = 0; r < t.rows.size(); ++r) {
        std::vector<std::size_t> bold;
        for (std::size_t c = 1; c < t.rows[r].size(); ++c) {
            if (t.rows[r][c].bold) bold.push_back(c);
        }
        o.require(bold == expected_bold[r], t.rows[r][0].text + " bolding");
    }
    o.detail << (o.pass ? "" : "; ") << "averages 44.7/54.0/16.7/17.4 reproduced, open-source bolding matches";
    return o;
}

// ---------------------------------------------------------------- 9
Outcome tokenizer_round_trip() {
    Outcome o;
    const auto t0 = Clock::now();
    std::vector<std::string> docs = read_corpus(testutil::source_dir() / "data/toy/corpus.txt");
    std::size_t bytes = 0;
    for (const auto& d : docs) bytes += d.size();
    std::mt19937_64 rng(99);
    while (bytes < (1u << 20)) {
        std::string d = testutil::random_utf8(rng, 50 + rng() % 400);
        if (rng() % 2 == 0) d += docs[rng() % 100];
        bytes += d.size();
        docs.push_back(std::move(d));
    }
    const Vocabulary a = train_bpe(docs, 1024);
    const Vocabulary b = train_bpe(docs, 1024);
    o.require(a.merges() == b.merges(), "retraining changed the merge list");
    std::size_t ok = 0;
    std::size_t tokens = 0;
    for (const auto& d : docs) {
        const TokenSequence ids = encode(a, d);
        tokens += ids.size();
        ok += decode(a, ids) == d;
    }
    o.require(ok == docs.size(), std::to_string(docs.size() - ok) + " documents failed to round-trip");
    const Vocabulary reread = Vocabulary::parse(a.serialize());
    o.require(reread.merges() == a.merges(), "vocabulary file changed the merges");
    o.detail << (o.pass ? "" : "; ") << bytes << " bytes in " << docs.size() << " documents -> " << tokens
             << " tokens, " << a.merges().size() << " merges identical on retrain, " << seconds_since(t0) << " s";
    return o;
}

// ---------------------------------------------------------------- 10
Outcome sampling() {
    Outcome o;
    const std::vector<double> logits{1.2, -0.3, 0.0, 2.1, 0.7, -1.5, 0.4, 1.6, -0.8, 0.9};
    const std::size_t k = logits.size();
    double z = 0.0;
    for (double l : logits) z += std::exp(l);
    const std::size_t draws = 10000;
    const boost::math::chi_squared dist(static_cast<double>(k - 1));
    const double critical = boost::math::quantile(boost::math::complement(dist, 0.001));

    GenerationParams top_p;
    top_p.strategy = Strategy::TopP;
    top_p.top_p = 1.0;
    top_p.temperature = 1.0;
    GenerationParams temp;
    temp.strategy = Strategy::Temperature;
    temp.temperature = 1.0;
    for (const auto& [label, params] : {std::pair{"top_p", top_p}, std::pair{"temperature", temp}}) {
        std::mt19937_64 rng(2024);
        std::vector<std::size_t> counts(k, 0);
        for (std::size_t i = 0; i < draws; ++i) ++counts[sample_token(logits, params, rng)];
        double stat = 0.0;
        for (std::size_t i = 0; i < k; ++i) {
            const double expected = draws * std::exp(logits[i]) / z;
            stat += std::pow(static_cast<double>(counts[i]) - expected, 2) / expected;
        }
        const double pvalue = boost::math::cdf(boost::math::complement(dist, stat));
        o.require(stat < critical, std::string(label) + " chi2 " + std::to_string(stat));
        o.detail << (o.pass ? "" : "; ") << label << " chi2 " << stat << " (p=" << pvalue << ") ";
    }
    o.detail << "< critical " << critical << " at alpha 0.001, df " << k - 1;
    return o;
}

}  // namespace

int main() {
    int failures = 0;
    auto report = [&](int id, const std::string& title, const std::function<Outcome()>& fn) {
        Outcome o;
        try {
            o = fn();
        } catch (const std::exception& e) {
            o.pass = false;
            o.detail << "threw: " << e.what();
        }
        failures += !o.pass;
        std::cout << "criterion " << id << " " << (o.pass ? "PASS" : "FAIL") << "  " << title << ": "
                  << o.detail.str() << std::endl;
    };

    report(1, "gradient check", gradient_check);
    report(2, "loss identities", loss_identities);
    report(3, "LoRA invariants", lora_invariants);
    report(4, "template byte fidelity", template_fidelity);
    report(5, "mask construction", mask_construction);

    std::optional<ToyRun> first;
    report(6, "end-to-end overfit", [&] {
        first = toy_pipeline();
        return overfit(*first);
    });
    report(7, "determinism", [&] {
        if (!first) throw std::runtime_error("criterion 6 did not complete");
        return determinism(*first, toy_pipeline());
    });

    report(8, "comparison table plumbing", table_plumbing);
    report(9, "tokenizer round trip", tokenizer_round_trip);
    report(10, "sampling distribution", sampling);

    std::cout << (failures == 0 ? "all 10 criteria passed" : std::to_string(failures) + " criteria failed")
              << std::endl;
    return failures == 0 ? 0 : 1;
}
