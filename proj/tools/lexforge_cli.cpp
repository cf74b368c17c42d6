#include "lexforge/checkpoint.hpp"
#include "lexforge/datakit.hpp"
#include "lexforge/errors.hpp"
#include "lexforge/evaluation.hpp"
#include "lexforge/generation.hpp"
#include "lexforge/pipeline.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using namespace lexforge;

namespace {

// Exit codes.
constexpr int kExitOk = 0;
constexpr int kExitFailure = 1;
constexpr int kExitMissingInput = 2;
constexpr int kExitStageOrder = 3;
constexpr int kExitDataInvalid = 4;

int exit_code_for(ErrorCode code) {
    switch (code) {
        case ErrorCode::MissingInput:
        case ErrorCode::IoError:
            return kExitMissingInput;
        case ErrorCode::StagePrecondition:
            return kExitStageOrder;
        case ErrorCode::CorpusEmpty:
        case ErrorCode::EmptyField:
        case ErrorCode::ParseError:
        case ErrorCode::SchemaError:
        case ErrorCode::NoData:
        case ErrorCode::TooLong:
        case ErrorCode::ChecksumError:
        case ErrorCode::VersionError:
        case ErrorCode::UnknownMetric:
        case ErrorCode::BadReference:
            return kExitDataInvalid;
        default:
            return kExitFailure;
    }
}

struct Globals {
    std::string config_path;
    std::string out_dir;
    std::optional<std::uint64_t> seed;
};

struct GenFlags {
    std::optional<std::size_t> max_new_tokens;
    std::optional<std::string> strategy;
    std::optional<double> temperature;
    std::optional<std::size_t> top_k;
    std::optional<double> top_p;
};

void add_gen_flags(CLI::App* cmd, GenFlags& g) {
    cmd->add_option("--max-new-tokens", g.max_new_tokens, "Token budget per reply");
    cmd->add_option("--strategy", g.strategy, "greedy | temperature | top_k | top_p");
    cmd->add_option("--temperature", g.temperature, "Softmax temperature");
    cmd->add_option("--top-k", g.top_k, "Candidates kept by top_k");
    cmd->add_option("--top-p", g.top_p, "Probability mass kept by top_p");
}

GenerationParams apply_gen_flags(GenerationParams p, const GenFlags& g) {
    if (g.max_new_tokens) p.max_new_tokens = *g.max_new_tokens;
    if (g.strategy) p.strategy = parse_strategy(*g.strategy);
    if (g.temperature) p.temperature = *g.temperature;
    if (g.top_k) p.top_k = *g.top_k;
    if (g.top_p) p.top_p = *g.top_p;
    p.validate();
    return p;
}

PipelineConfig load_config(const Globals& g) {
    std::string path = g.config_path;
    if (path.empty()) {
        if (const char* env = std::getenv(std::string(kConfigEnvVar).c_str())) path = env;
    }
    PipelineConfig c;
    if (!path.empty()) {
        if (!fs::exists(path)) throw Error(ErrorCode::MissingInput, "--config: no such file " + path);
        c = load_pipeline_config(path);
    }
    if (!g.out_dir.empty()) c.paths.out_dir = g.out_dir;
    if (g.seed) {
        c.seed = *g.seed;
        c.propagate_seed();
    }
    return c;
}

// Flag value if given, else the configured fallback; must name an existing path.
fs::path input_path(const std::string& flag_value, const fs::path& fallback, std::string_view flag) {
    const fs::path p = flag_value.empty() ? fallback : fs::path(flag_value);
    if (p.empty()) throw Error(ErrorCode::MissingInput, std::string(flag) + " is required");
    if (!fs::exists(p)) throw Error(ErrorCode::MissingInput, std::string(flag) + ": no such file " + p.string());
    return p;
}

fs::path prepare_out(const PipelineConfig& c, std::string_view name) {
    fs::create_directories(c.paths.out_dir);
    return c.artifact(name);
}

void progress_line(std::string_view stage, std::size_t epoch, std::size_t step, double loss) {
    std::cerr << stage << " epoch " << epoch + 1 << " step " << step << " loss " << loss << "\n";
}

std::vector<InstructionRecord> read_records(const std::vector<fs::path>& files) {
    std::vector<InstructionRecord> out;
    for (const auto& f : files) {
        auto part = read_dataset_file(f);
        out.insert(out.end(), part.begin(), part.end());
    }
    return out;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Legal-domain LLM pipeline: tokenizer, LPT/LFT training with LoRA, generation, evaluation"};
    app.require_subcommand(1);
    Globals globals;
    app.add_option("--config", globals.config_path,
                   "Pipeline config (JSON); defaults to $" + std::string(kConfigEnvVar));
    app.add_option("--out", globals.out_dir, "Output directory (overrides the config)");
    app.add_option("--seed", globals.seed, "Seed for every stage (overrides the config)");

    // tokenizer train
    auto* tok = app.add_subcommand("tokenizer", "Tokenizer commands");
    tok->require_subcommand(1);
    auto* tok_train = tok->add_subcommand("train", "Train the byte-level BPE vocabulary");
    std::string tok_corpus;
    std::vector<std::string> tok_datasets;
    std::optional<std::size_t> tok_size;
    tok_train->add_option("--corpus", tok_corpus, "Legal corpus, one document per line");
    tok_train->add_option("--dataset", tok_datasets, "Instruction files whose training renderings join the corpus");
    tok_train->add_option("--vocab-size", tok_size, "Target vocabulary size");

    // data build | augment-prompts | ingest-augmented
    auto* data = app.add_subcommand("data", "Instruction dataset commands");
    data->require_subcommand(1);
    auto* data_build = data->add_subcommand("build", "Merge, validate and deduplicate instruction records");
    std::vector<std::string> build_subsets;
    std::vector<std::string> build_extra;
    data_build->add_option("--subset", build_subsets, "Instruction files for subsets (a)/(b)");
    data_build->add_option("--augmented-records", build_extra, "Ingested subset (c) files");
    auto* data_prompts = data->add_subcommand("augment-prompts", "Render refinement prompts for an external model");
    std::vector<std::string> prompt_inputs;
    data_prompts->add_option("--dataset", prompt_inputs, "Instruction files to refine");
    auto* data_ingest = data->add_subcommand("ingest-augmented", "Parse refinement replies into subset (c)");
    std::string ingest_input;
    data_ingest->add_option("--responses", ingest_input, "Replies, one per line");

    // train lpt | lft
    auto* train = app.add_subcommand("train", "Training stages");
    train->require_subcommand(1);
    auto* train_lpt = train->add_subcommand("lpt", "Legal pre-training on the corpus");
    std::string lpt_corpus;
    std::string lpt_vocab;
    train_lpt->add_option("--corpus", lpt_corpus, "Legal corpus, one document per line");
    train_lpt->add_option("--vocab", lpt_vocab, "Vocabulary file");
    auto* train_lft = train->add_subcommand("lft", "Supervised fine-tuning on instruction data");
    std::string lft_from;
    std::string lft_dataset;
    std::string lft_vocab;
    train_lft->add_option("--from-lpt", lft_from, "LPT checkpoint to start from");
    train_lft->add_option("--dataset", lft_dataset, "Instruction dataset");
    train_lft->add_option("--vocab", lft_vocab, "Vocabulary file");

    // merge
    auto* merge = app.add_subcommand("merge", "Fold adapters into the base weights");
    std::string merge_ckpt;
    merge->add_option("--checkpoint", merge_ckpt, "Checkpoint with adapters");

    // generate | chat
    GenFlags gen_flags;
    auto* generate_cmd = app.add_subcommand("generate", "Answer one instruction");
    std::string gen_ckpt;
    std::string gen_vocab;
    std::string gen_instruction;
    generate_cmd->add_option("--checkpoint", gen_ckpt, "Model checkpoint");
    generate_cmd->add_option("--vocab", gen_vocab, "Vocabulary file");
    generate_cmd->add_option("--instruction", gen_instruction, "Instruction text");
    add_gen_flags(generate_cmd, gen_flags);
    auto* chat = app.add_subcommand("chat", "Answer instructions read from stdin, one per line");
    bool chat_json = false;
    chat->add_option("--checkpoint", gen_ckpt, "Model checkpoint");
    chat->add_option("--vocab", gen_vocab, "Vocabulary file");
    chat->add_flag("--json", chat_json, "One JSON object per reply");
    add_gen_flags(chat, gen_flags);

    // eval | report
    auto* eval = app.add_subcommand("eval", "Zero-shot evaluation on task fixtures");
    std::string eval_ckpt;
    std::string eval_vocab;
    std::string eval_tasks;
    std::string eval_name = "model";
    eval->add_option("--checkpoint", eval_ckpt, "Model checkpoint");
    eval->add_option("--vocab", eval_vocab, "Vocabulary file");
    eval->add_option("--tasks", eval_tasks, "Directory of task fixtures");
    eval->add_option("--name", eval_name, "Model name in the report");
    add_gen_flags(eval, gen_flags);
    auto* report = app.add_subcommand("report", "Compare evaluation reports");
    std::vector<std::string> report_inputs;
    std::vector<std::string> open_source;
    report->add_option("--input", report_inputs, "Report files (one JSON object per line)");
    report->add_option("--open-source", open_source, "Models eligible for bolding (default: all)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitMissingInput;
    }

    try {
        const PipelineConfig cfg = load_config(globals);
        auto vocab_path = [&](const std::string& flag) {
            return input_path(flag, cfg.artifact(artifacts::kVocab), "--vocab");
        };

        if (*tok_train) {
            const auto corpus = read_corpus(input_path(tok_corpus, cfg.paths.corpus, "--corpus"));
            std::vector<fs::path> files;
            for (const auto& d : tok_datasets) files.push_back(input_path(d, {}, "--dataset"));
            const auto records = read_records(files);
            const Vocabulary vocab = train_pipeline_tokenizer(corpus, records, tok_size.value_or(cfg.vocab_size));
            const fs::path out = prepare_out(cfg, artifacts::kVocab);
            vocab.save(out);
            std::cerr << "vocabulary of " << vocab.size() << " ids written to " << out.string() << "\n";
        } else if (*data_build) {
            std::vector<fs::path> subset_files;
            if (build_subsets.empty()) {
                subset_files = cfg.paths.subsets;
            } else {
                for (const auto& s : build_subsets) subset_files.push_back(s);
            }
            if (subset_files.empty()) throw Error(ErrorCode::MissingInput, "--subset is required");
            std::vector<std::vector<InstructionRecord>> sources;
            for (const auto& f : subset_files) sources.push_back(read_dataset_file(input_path(f.string(), {}, "--subset")));
            for (const auto& f : build_extra) sources.push_back(read_dataset_file(input_path(f, {}, "--augmented-records")));
            const Dataset ds = build_dataset(sources);
            write_dataset_file(prepare_out(cfg, artifacts::kDataset), ds.records);
            nlohmann::ordered_json rep;
            rep["total"] = ds.report.total;
            rep["rejected"] = ds.report.rejected;
            rep["duplicates"] = ds.report.duplicates;
            for (std::size_t i = 0; i < 3; ++i) {
                const std::string key(subset_name(static_cast<Subset>(i)));
                rep["counts"][key] = ds.report.counts[i];
                rep["proportions"][key] = ds.report.proportions[i];
            }
            write_text_file(prepare_out(cfg, artifacts::kDatasetReport), rep.dump() + "\n");
            std::cerr << ds.report.total << " records (" << ds.report.rejected << " rejected, " << ds.report.duplicates
                      << " duplicates)\n";
        } else if (*data_prompts) {
            std::vector<fs::path> files;
            if (prompt_inputs.empty()) {
                files = cfg.paths.subsets;
            } else {
                for (const auto& p : prompt_inputs) files.push_back(p);
            }
            if (files.empty()) throw Error(ErrorCode::MissingInput, "--dataset is required");
            for (auto& f : files) f = input_path(f.string(), {}, "--dataset");
            std::vector<std::string> prompts;
            for (const auto& r : read_records(files)) {
                try {
                    prompts.push_back(render_augmentation_prompt(r));
                } catch (const Error& e) {
                    if (e.code() != ErrorCode::EmptyField) throw;
                    std::cerr << "skipped record: " << e.what() << "\n";
                }
            }
            if (prompts.empty()) throw Error(ErrorCode::NoData, "no record can be rendered");
            write_text_file(prepare_out(cfg, artifacts::kAugmentPrompts), encode_prompt_blocks(prompts));
            std::cerr << prompts.size() << " prompts written\n";
        } else if (*data_ingest) {
            const auto text = read_text_file(input_path(ingest_input, cfg.paths.augmented, "--responses"));
            const IngestResult res = ingest_responses(text);
            for (const auto& e : res.errors) std::cerr << "skipped " << e << "\n";
            if (res.records.empty()) throw Error(ErrorCode::NoData, "no usable reply");
            write_dataset_file(prepare_out(cfg, artifacts::kAugmented), res.records);
            std::cerr << res.records.size() << " records ingested, " << res.errors.size() << " replies skipped\n";
        } else if (*train_lpt) {
            const auto corpus = read_corpus(input_path(lpt_corpus, cfg.paths.corpus, "--corpus"));
            const Vocabulary vocab = Vocabulary::load(vocab_path(lpt_vocab));
            StageReport rep;
            const Checkpoint ckpt = run_lpt(cfg, vocab, corpus,
                                            [](std::size_t e, std::size_t s, double l) { progress_line("lpt", e, s, l); },
                                            &rep);
            save_checkpoint(ckpt, prepare_out(cfg, artifacts::kLptCheckpoint));
            write_text_file(prepare_out(cfg, artifacts::kLptReport), stage_report_json(rep, rep.epoch_mean_loss.empty() ? 0.0 : rep.epoch_mean_loss.back()) + "\n");
        } else if (*train_lft) {
            if (lft_from.empty()) {
                throw Error(ErrorCode::StagePrecondition, "--from-lpt: fine-tuning needs an LPT checkpoint");
            }
            const Checkpoint lpt = load_checkpoint(input_path(lft_from, {}, "--from-lpt"));
            const auto records =
                read_dataset_file(input_path(lft_dataset, cfg.artifact(artifacts::kDataset), "--dataset"));
            const Vocabulary vocab = Vocabulary::load(vocab_path(lft_vocab));
            StageReport rep;
            const Checkpoint ckpt = run_lft(cfg, vocab, lpt, records,
                                            [](std::size_t e, std::size_t s, double l) { progress_line("lft", e, s, l); },
                                            &rep);
            if (rep.dropped_examples > 0) {
                std::cerr << "warning: " << rep.dropped_examples << " records exceed the context and were dropped\n";
            }
            const auto examples = tokenize_records(records, vocab, ckpt.params.config.context_length);
            const double final_loss = evaluate_loss(ckpt.params, ckpt.adapter_ptr(), examples);
            std::cerr << "final masked loss " << final_loss << "\n";
            save_checkpoint(ckpt, prepare_out(cfg, artifacts::kLftCheckpoint));
            write_text_file(prepare_out(cfg, artifacts::kLftReport), stage_report_json(rep, final_loss) + "\n");
        } else if (*merge) {
            const Checkpoint in = load_checkpoint(input_path(merge_ckpt, cfg.artifact(artifacts::kLftCheckpoint), "--checkpoint"));
            Checkpoint out = in;
            out.params = effective_parameters(in);
            out.adapters.reset();
            save_checkpoint(out, prepare_out(cfg, artifacts::kMergedCheckpoint));
        } else if (*generate_cmd || *chat) {
            const Checkpoint ckpt =
                load_checkpoint(input_path(gen_ckpt, cfg.artifact(artifacts::kLftCheckpoint), "--checkpoint"));
            const Vocabulary vocab = Vocabulary::load(vocab_path(gen_vocab));
            const GenerationParams gp = apply_gen_flags(cfg.generation, gen_flags);
            if (*generate_cmd) {
                if (gen_instruction.empty()) throw Error(ErrorCode::MissingInput, "--instruction is required");
                std::cout << answer(model_ref(ckpt), vocab, gen_instruction, gp) << "\n";
            } else {
                run_repl(model_ref(ckpt), vocab, gp, std::cin, std::cout, ReplOptions{chat_json});
            }
        } else if (*eval) {
            const Checkpoint ckpt =
                load_checkpoint(input_path(eval_ckpt, cfg.artifact(artifacts::kLftCheckpoint), "--checkpoint"));
            const Vocabulary vocab = Vocabulary::load(vocab_path(eval_vocab));
            const auto tasks = load_task_dir(input_path(eval_tasks, cfg.paths.tasks, "--tasks"));
            const GenerationParams gp = apply_gen_flags(cfg.generation, gen_flags);
            std::vector<EvalLogEntry> log;
            const EvalReport rep = run_eval(model_ref(ckpt), vocab, tasks, gp, eval_name, &log);
            std::string log_text;
            for (const auto& e : log) {
                nlohmann::ordered_json j;
                j["task"] = e.task_id;
                j["item"] = e.item;
                j["prediction"] = e.prediction;
                j["score"] = e.score;
                if (!e.error.empty()) {
                    j["error"] = e.error;
                    std::cerr << "task #" << e.task_id << " item " << e.item << ": " << e.error << "\n";
                }
                log_text += j.dump() + "\n";
            }
            write_text_file(prepare_out(cfg, artifacts::kEvalLog), log_text);
            write_text_file(prepare_out(cfg, artifacts::kEvalReport), report_to_json_line(rep) + "\n");
            std::cerr << compare_reports({rep}).render();
        } else if (*report) {
            if (report_inputs.empty()) throw Error(ErrorCode::MissingInput, "--input is required");
            std::vector<EvalReport> reports;
            for (const auto& f : report_inputs) {
                auto part = read_reports(input_path(f, {}, "--input"));
                reports.insert(reports.end(), part.begin(), part.end());
            }
            if (reports.empty()) throw Error(ErrorCode::NoData, "no reports in the inputs");
            const std::set<std::string> eligible(open_source.begin(), open_source.end());
            const std::string table = compare_reports(reports, eligible).render();
            write_text_file(prepare_out(cfg, artifacts::kComparison), table);
            std::cout << table;
        }
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return exit_code_for(e.code());
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitFailure;
    }
    return kExitOk;
}
