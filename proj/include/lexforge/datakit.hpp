#pragma once

#include "lexforge/tokenizer.hpp"
#include "lexforge/training.hpp"

#include <array>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace lexforge {

// Instruction-data sources: (a) crime consultation records, (b) legal exam QA,
// (c) refinements of (a)/(b) produced by an external chat model.
enum class Subset { A, B, C };

std::string_view subset_name(Subset s);
Subset parse_subset(std::string_view name);

struct InstructionRecord {
    std::string instruction;
    std::string output;
    Subset subset = Subset::A;
    friend bool operator==(const InstructionRecord&, const InstructionRecord&) = default;
};

// Throws EmptyField when either field is blank after trimming.
void validate_record(const InstructionRecord& record);
std::string trim(std::string_view text);

// ---- prompt templates ----

inline constexpr std::string_view kAlpacaPreamble =
    "Below is an instruction that describes a task. Write a response that appropriately completes the request.\n\n"
    "### Instruction:\n";
inline constexpr std::string_view kAlpacaResponseHeader = "\n\n### Response: \n";

struct RenderedText {
    std::string text;
    // Byte offset where the response begins; text[0, boundary) == render_test(instruction).
    std::size_t boundary = 0;
};

RenderedText render_train(std::string_view instruction, std::string_view output);
std::string render_test(std::string_view instruction);
std::string render_augmentation_prompt(const InstructionRecord& record);

// Pulls the first JSON object out of a chat reply (prose and code fences are
// skipped). Accepts {question, answer} or {instruction, output}; never aborts,
// only throws ParseError / SchemaError / EmptyField.
InstructionRecord parse_augmentation_response(std::string_view text);

// ---- dataset assembly ----

struct DatasetReport {
    std::array<std::size_t, 3> counts{};
    std::array<double, 3> proportions{};
    std::size_t total = 0;
    std::size_t rejected = 0;
    std::size_t duplicates = 0;
};

struct Dataset {
    std::vector<InstructionRecord> records;
    DatasetReport report;
};

// Validates, drops exact (instruction, output) repeats keeping the first, and
// preserves input order across and within the source lists.
Dataset build_dataset(const std::vector<std::vector<InstructionRecord>>& sources);

// [BOS] + encode(render_test(instruction)) + encode(output) + [EOS]; the output
// index set covers the output tokens and EOS. Throws TooLong past `context_length`.
TrainExample tokenize_example(const InstructionRecord& record, const Vocabulary& vocab, std::size_t context_length);

// ---- files ----

// One JSON object per line: {"instruction", "output", "subset"}.
std::vector<InstructionRecord> read_dataset_file(const std::filesystem::path& path);
void write_dataset_file(const std::filesystem::path& path, const std::vector<InstructionRecord>& records);
std::string dataset_line(const InstructionRecord& record);

// Length-prefixed blocks: "<byte count>\n<prompt bytes>\n" per prompt.
std::string encode_prompt_blocks(const std::vector<std::string>& prompts);
std::vector<std::string> decode_prompt_blocks(std::string_view bytes);

struct IngestResult {
    std::vector<InstructionRecord> records;
    std::vector<std::string> errors;  // one entry per rejected line
};

// One reply per line; every accepted record is tagged subset (c).
IngestResult ingest_responses(std::string_view text);

std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, std::string_view text);

}  // namespace lexforge
