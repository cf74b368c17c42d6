#include "lexforge/pipeline.hpp"

#include "lexforge/errors.hpp"
#include "lexforge/json_io.hpp"

#include <json.hpp>

#include <sstream>

namespace lexforge {

namespace {

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
    const std::filesystem::path path(p);
    return path.is_absolute() || base.empty() ? path : base / path;
}

void read_generation(const nlohmann::json& j, GenerationParams& g) {
    g.max_new_tokens = j.value("max_new_tokens", g.max_new_tokens);
    if (j.contains("strategy")) g.strategy = parse_strategy(j.at("strategy").get<std::string>());
    g.temperature = j.value("temperature", g.temperature);
    g.top_k = j.value("top_k", g.top_k);
    g.top_p = j.value("top_p", g.top_p);
    g.seed = j.value("seed", g.seed);
}

nlohmann::ordered_json write_generation(const GenerationParams& g) {
    nlohmann::ordered_json j;
    j["max_new_tokens"] = g.max_new_tokens;
    j["strategy"] = std::string(strategy_name(g.strategy));
    j["temperature"] = g.temperature;
    j["top_k"] = g.top_k;
    j["top_p"] = g.top_p;
    j["seed"] = g.seed;
    return j;
}

template <typename Fn>
auto schema_guard(Fn&& fn) {
    try {
        return fn();
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::SchemaError, e.what());
    }
}

}  // namespace

void PipelineConfig::propagate_seed() {
    lpt.seed = seed;
    lft.seed = seed;
    generation.seed = seed;
}

PipelineConfig pipeline_config_from_json(std::string_view text, const std::filesystem::path& base_dir) {
    const auto j = nlohmann::json::parse(text, nullptr, false);
    if (j.is_discarded() || !j.is_object()) throw Error(ErrorCode::ParseError, "pipeline config is not a JSON object");
    return schema_guard([&] {
        PipelineConfig c;
        if (j.contains("paths")) {
            const auto& p = j.at("paths");
            if (p.contains("corpus")) c.paths.corpus = resolve(base_dir, p.at("corpus").get<std::string>());
            if (p.contains("subsets")) {
                for (const auto& s : p.at("subsets")) c.paths.subsets.push_back(resolve(base_dir, s.get<std::string>()));
            }
            if (p.contains("augmented")) c.paths.augmented = resolve(base_dir, p.at("augmented").get<std::string>());
            if (p.contains("tasks")) c.paths.tasks = resolve(base_dir, p.at("tasks").get<std::string>());
            if (p.contains("out_dir")) c.paths.out_dir = resolve(base_dir, p.at("out_dir").get<std::string>());
        }
        c.vocab_size = j.value("vocab_size", c.vocab_size);
        if (j.contains("model")) from_json(j.at("model"), c.model);
        if (j.contains("lpt")) from_json(j.at("lpt"), c.lpt);
        if (j.contains("lft")) from_json(j.at("lft"), c.lft);
        if (c.lpt.stage != Stage::LPT || c.lft.stage != Stage::LFT) {
            throw Error(ErrorCode::SchemaError, "lpt/lft sections name the wrong stage");
        }
        if (j.contains("generation")) read_generation(j.at("generation"), c.generation);
        c.seed = j.value("seed", c.seed);
        c.propagate_seed();
        return c;
    });
}

PipelineConfig load_pipeline_config(const std::filesystem::path& path) {
    return pipeline_config_from_json(read_text_file(path), path.parent_path());
}

std::string pipeline_config_to_json(const PipelineConfig& c) {
    nlohmann::ordered_json j;
    nlohmann::ordered_json paths;
    paths["corpus"] = c.paths.corpus.string();
    paths["subsets"] = nlohmann::ordered_json::array();
    for (const auto& s : c.paths.subsets) paths["subsets"].push_back(s.string());
    paths["augmented"] = c.paths.augmented.string();
    paths["tasks"] = c.paths.tasks.string();
    paths["out_dir"] = c.paths.out_dir.string();
    j["paths"] = paths;
    j["vocab_size"] = c.vocab_size;
    nlohmann::json model = c.model;
    j["model"] = model;
    nlohmann::json lpt = c.lpt;
    nlohmann::json lft = c.lft;
    j["lpt"] = lpt;
    j["lft"] = lft;
    j["generation"] = write_generation(c.generation);
    j["seed"] = c.seed;
    return j.dump(2);
}

GenerationParams generation_params_from_json(std::string_view text) {
    const auto j = nlohmann::json::parse(text, nullptr, false);
    if (j.is_discarded() || !j.is_object()) throw Error(ErrorCode::ParseError, "generation params not an object");
    return schema_guard([&] {
        GenerationParams g;
        read_generation(j, g);
        return g;
    });
}

std::string generation_params_to_json(const GenerationParams& params) { return write_generation(params).dump(); }

std::vector<std::string> read_corpus(const std::filesystem::path& path) {
    const std::string text = read_text_file(path);
    std::vector<std::string> docs;
    std::istringstream lines(text);
    std::string line;
    while (std::getline(lines, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (!trim(line).empty()) docs.push_back(line);
    }
    if (docs.empty()) throw Error(ErrorCode::CorpusEmpty, path.string() + " has no documents");
    return docs;
}

Vocabulary train_pipeline_tokenizer(std::span<const std::string> documents,
                                    std::span<const InstructionRecord> records, std::size_t vocab_size) {
    std::vector<std::string> texts(documents.begin(), documents.end());
    for (const InstructionRecord& r : records) texts.push_back(render_train(r.instruction, r.output).text);
    return train_bpe(texts, vocab_size);
}

TransformerConfig model_config(const PipelineConfig& config, const Vocabulary& vocab) {
    TransformerConfig m = config.model;
    m.vocab_size = vocab.size();
    m.validate();
    return m;
}

Checkpoint run_lpt(const PipelineConfig& config, const Vocabulary& vocab, std::span<const std::string> documents,
                   const ProgressFn& progress, StageReport* report) {
    const TransformerConfig m = model_config(config, vocab);
    std::vector<TokenSequence> encoded;
    encoded.reserve(documents.size());
    for (const std::string& d : documents) encoded.push_back(encode(vocab, d));
    const std::vector<TrainExample> windows = lpt_windows(encoded, m.context_length, vocab.bos(), vocab.eos());
    const ModelParameters base = init_parameters(m, config.seed);
    StageResult result = run_stage(config.lpt, windows, base, vocab.pad(), progress);
    if (report != nullptr) *report = result.report;
    return make_checkpoint(config.lpt, std::move(result));
}

std::vector<TrainExample> tokenize_records(std::span<const InstructionRecord> records, const Vocabulary& vocab,
                                           std::size_t context_length, std::size_t* dropped) {
    std::vector<TrainExample> out;
    std::size_t skipped = 0;
    for (const InstructionRecord& r : records) {
        try {
            out.push_back(tokenize_example(r, vocab, context_length));
        } catch (const Error& e) {
            if (e.code() != ErrorCode::TooLong) throw;
            ++skipped;
        }
    }
    if (dropped != nullptr) *dropped = skipped;
    return out;
}

Checkpoint run_lft(const PipelineConfig& config, const Vocabulary& vocab, const Checkpoint& lpt,
                   std::span<const InstructionRecord> records, const ProgressFn& progress, StageReport* report) {
    if (lpt.stage() != Stage::LPT) {
        throw Error(ErrorCode::StagePrecondition,
                    "fine-tuning needs an LPT checkpoint, got " + std::string(stage_name(lpt.stage())));
    }
    if (lpt.params.config.vocab_size != vocab.size()) {
        throw Error(ErrorCode::ShapeError, "checkpoint vocabulary " + std::to_string(lpt.params.config.vocab_size) +
                                               " does not match tokenizer " + std::to_string(vocab.size()));
    }
    const ModelParameters init = effective_parameters(lpt);
    std::size_t too_long = 0;
    const std::vector<TrainExample> examples =
        tokenize_records(records, vocab, init.config.context_length, &too_long);
    if (examples.empty()) throw Error(ErrorCode::NoData, "no instruction record fits the context");
    StageResult result = run_stage(config.lft, examples, init, vocab.pad(), progress);
    result.report.dropped_examples += too_long;
    if (report != nullptr) *report = result.report;
    return make_checkpoint(config.lft, std::move(result));
}

std::string stage_report_json(const StageReport& report, double final_loss) {
    nlohmann::ordered_json j;
    j["steps"] = report.steps;
    j["dropped_examples"] = report.dropped_examples;
    j["epoch_mean_loss"] = report.epoch_mean_loss;
    j["final_eval_loss"] = final_loss;
    return j.dump();
}

}  // namespace lexforge
