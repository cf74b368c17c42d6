#pragma once

#include "lexforge/checkpoint.hpp"
#include "lexforge/datakit.hpp"
#include "lexforge/generation.hpp"
#include "lexforge/training.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace lexforge {

inline constexpr std::string_view kConfigEnvVar = "LEXFORGE_CONFIG";

struct PipelinePaths {
    std::filesystem::path corpus;
    std::vector<std::filesystem::path> subsets;  // instruction files for subsets (a) and (b)
    std::filesystem::path augmented;             // teacher replies for subset (c)
    std::filesystem::path tasks;                 // directory of task fixtures
    std::filesystem::path out_dir = "out";
};

// Artifact names inside the output directory.
namespace artifacts {
inline constexpr std::string_view kVocab = "vocab.bpe";
inline constexpr std::string_view kDataset = "dataset.jsonl";
inline constexpr std::string_view kDatasetReport = "dataset_report.json";
inline constexpr std::string_view kAugmentPrompts = "augment_prompts.txt";
inline constexpr std::string_view kAugmented = "augmented.jsonl";
inline constexpr std::string_view kLptCheckpoint = "lpt.ckpt";
inline constexpr std::string_view kLftCheckpoint = "lft.ckpt";
inline constexpr std::string_view kMergedCheckpoint = "merged.ckpt";
inline constexpr std::string_view kLptReport = "lpt_report.json";
inline constexpr std::string_view kLftReport = "lft_report.json";
inline constexpr std::string_view kEvalReport = "report.jsonl";
inline constexpr std::string_view kEvalLog = "eval_log.jsonl";
inline constexpr std::string_view kComparison = "comparison.txt";
}  // namespace artifacts

struct PipelineConfig {
    PipelinePaths paths;
    std::size_t vocab_size = 2048;
    // vocab_size is taken from the trained tokenizer.
    TransformerConfig model{0, 128, 2, 4, 64, 256};
    TrainConfig lpt = TrainConfig::defaults(Stage::LPT);
    TrainConfig lft = TrainConfig::defaults(Stage::LFT);
    GenerationParams generation;
    std::uint64_t seed = 0;

    // Copies `seed` into both stage configs and the sampler.
    void propagate_seed();
    std::filesystem::path artifact(std::string_view name) const { return paths.out_dir / name; }
};

// Relative paths in the file resolve against the file's directory. Missing
// keys keep the defaults above.
PipelineConfig load_pipeline_config(const std::filesystem::path& path);
PipelineConfig pipeline_config_from_json(std::string_view text, const std::filesystem::path& base_dir = {});
std::string pipeline_config_to_json(const PipelineConfig& config);

GenerationParams generation_params_from_json(std::string_view text);
std::string generation_params_to_json(const GenerationParams& params);

// One document per non-blank line.
std::vector<std::string> read_corpus(const std::filesystem::path& path);

// Byte-level BPE over the corpus plus the training renderings of `records`,
// so the prompt template is represented compactly.
Vocabulary train_pipeline_tokenizer(std::span<const std::string> documents,
                                    std::span<const InstructionRecord> records, std::size_t vocab_size);

TransformerConfig model_config(const PipelineConfig& config, const Vocabulary& vocab);

// Stand-in base model from the pipeline seed, then stage-1 adapters over it.
Checkpoint run_lpt(const PipelineConfig& config, const Vocabulary& vocab, std::span<const std::string> documents,
                   const ProgressFn& progress = {}, StageReport* report = nullptr);

// Merges the stage-1 adapters and trains fresh stage-2 adapters. Records that
// do not fit the context are dropped and counted in the report.
Checkpoint run_lft(const PipelineConfig& config, const Vocabulary& vocab, const Checkpoint& lpt,
                   std::span<const InstructionRecord> records, const ProgressFn& progress = {},
                   StageReport* report = nullptr);

std::vector<TrainExample> tokenize_records(std::span<const InstructionRecord> records, const Vocabulary& vocab,
                                           std::size_t context_length, std::size_t* dropped = nullptr);

std::string stage_report_json(const StageReport& report, double final_loss);

}  // namespace lexforge
