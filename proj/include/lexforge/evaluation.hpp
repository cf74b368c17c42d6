#pragma once

#include "lexforge/generation.hpp"

#include <filesystem>
#include <functional>
#include <iosfwd>
#include <map>
#include <set>
#include <string>
#include <string_view>
#include <vector>

namespace lexforge {

inline constexpr std::size_t kTaskCount = 8;

// Display names of tasks #1..#8.
std::string_view task_name(int task_id);
// Scorer used for a task when its fixture does not name one.
std::string_view default_metric(int task_id);

// ---- scoring ----

using Scorer = std::function<double(std::string_view prediction, std::string_view reference)>;

// Built-in metric ids: "exact_match", "choice", "numeric".
class ScorerRegistry {
public:
    ScorerRegistry();
    void add(std::string id, Scorer scorer);
    bool contains(std::string_view id) const;
    double score(std::string_view prediction, std::string_view reference, std::string_view metric) const;

private:
    std::map<std::string, Scorer, std::less<>> scorers_;
};

const ScorerRegistry& default_scorers();
double score_item(std::string_view prediction, std::string_view reference, std::string_view metric);

// Trim, collapse whitespace runs to one space, fold full-width ASCII forms
// (U+FF01..U+FF5E, U+3000) to their half-width counterparts.
std::string normalize_answer(std::string_view text);
// Option letters A-F found in standalone letter runs, e.g. "(A) ...(B) ..." -> {A, B}.
std::set<char> extract_choices(std::string_view text);
// First decimal number in the text, thousands separators removed.
std::optional<double> extract_number(std::string_view text);

// ---- tasks and reports ----

struct EvalItem {
    std::string instruction;
    std::string reference;
};

struct EvalTask {
    int id = 0;
    std::string name;
    std::string metric;
    std::vector<EvalItem> items;
};

// One JSON object per line with "task", "instruction", "reference" and
// optionally "metric", "output", "subset". All lines must share task and metric.
EvalTask load_task_file(const std::filesystem::path& path);
std::vector<EvalTask> load_task_dir(const std::filesystem::path& dir);

struct TaskScore {
    int task_id = 0;
    double score = 0.0;  // percentage, one decimal
};

struct EvalReport {
    std::string model;
    std::vector<TaskScore> scores;  // ascending task id
    double average = 0.0;

    const TaskScore* find(int task_id) const;
};

// Half away from zero; representation noise below 1e-6 of a tenth is ignored.
double round_one_decimal(double value);

// Rounds each score and the mean of the rounded scores.
EvalReport aggregate_report(std::string model, std::vector<TaskScore> scores);

struct EvalLogEntry {
    int task_id = 0;
    std::size_t item = 0;
    std::string prediction;
    double score = 0.0;
    std::string error;
};

// Zero-shot: each item's instruction alone goes through `answer`. A failing
// item scores 0 and is recorded in `log` instead of aborting the run.
EvalReport run_eval(ModelRef model, const Vocabulary& vocab, const std::vector<EvalTask>& tasks,
                    const GenerationParams& gen, std::string model_name, std::vector<EvalLogEntry>* log = nullptr,
                    const ScorerRegistry& scorers = default_scorers());

std::string report_to_json_line(const EvalReport& report);
EvalReport report_from_json_line(std::string_view line);
std::vector<EvalReport> read_reports(const std::filesystem::path& path);

struct ComparisonCell {
    std::string text;
    bool bold = false;
};

struct ComparisonTable {
    std::vector<std::string> header;  // "Models", "#1".."#8", "Avg."
    std::vector<std::vector<ComparisonCell>> rows;

    // Column-aligned text; bold cells are wrapped in ** **.
    std::string render() const;
};

// Bolds, per column, the best value among reports named in `open_source`
// (every report when the set is empty). Ties are all bolded.
ComparisonTable compare_reports(const std::vector<EvalReport>& reports, const std::set<std::string>& open_source = {});

}  // namespace lexforge
