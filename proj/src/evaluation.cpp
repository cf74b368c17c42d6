#include "lexforge/evaluation.hpp"

#include "lexforge/datakit.hpp"
#include "lexforge/errors.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

namespace lexforge {

namespace {

constexpr std::string_view kTaskNames[kTaskCount] = {
    "fact-based article prediction",
    "scene-based article prediction",
    "charge prediction",
    "prison term prediction without article",
    "prison term prediction with article",
    "case analysis",
    "criminal damages calculation",
    "consultation",
};

constexpr std::string_view kTaskMetrics[kTaskCount] = {
    "exact_match", "exact_match", "exact_match", "numeric", "numeric", "choice", "numeric", "exact_match",
};

void check_task_id(int id) {
    if (id < 1 || id > static_cast<int>(kTaskCount)) {
        throw Error(ErrorCode::InvalidArgument, "task id " + std::to_string(id) + " outside 1..8");
    }
}

// Decodes one UTF-8 scalar at `i`; ill-formed bytes come back as themselves
// with length 1.
std::pair<char32_t, std::size_t> next_code_point(std::string_view s, std::size_t i) {
    const auto b0 = static_cast<unsigned char>(s[i]);
    auto cont = [&](std::size_t k) {
        return i + k < s.size() && (static_cast<unsigned char>(s[i + k]) & 0xC0) == 0x80;
    };
    auto bits = [&](std::size_t k) { return static_cast<char32_t>(static_cast<unsigned char>(s[i + k]) & 0x3F); };
    if (b0 < 0x80) return {b0, 1};
    if ((b0 & 0xE0) == 0xC0 && cont(1)) return {(static_cast<char32_t>(b0 & 0x1F) << 6) | bits(1), 2};
    if ((b0 & 0xF0) == 0xE0 && cont(1) && cont(2)) {
        return {(static_cast<char32_t>(b0 & 0x0F) << 12) | (bits(1) << 6) | bits(2), 3};
    }
    if ((b0 & 0xF8) == 0xF0 && cont(1) && cont(2) && cont(3)) {
        return {(static_cast<char32_t>(b0 & 0x07) << 18) | (bits(1) << 12) | (bits(2) << 6) | bits(3), 4};
    }
    return {b0, 1};
}

bool is_option_letter(char c) { return c >= 'A' && c <= 'F'; }
bool is_ascii_letter(char c) { return (c >= 'A' && c <= 'Z') || (c >= 'a' && c <= 'z'); }

double exact_match(std::string_view pred, std::string_view ref) {
    return normalize_answer(pred) == normalize_answer(ref) ? 1.0 : 0.0;
}

double choice_match(std::string_view pred, std::string_view ref) {
    const auto want = extract_choices(ref);
    if (want.empty()) {
        throw Error(ErrorCode::BadReference, "choice reference lists no options: '" + std::string(ref) + "'");
    }
    return extract_choices(pred) == want ? 1.0 : 0.0;
}

double numeric_match(std::string_view pred, std::string_view ref) {
    const auto want = extract_number(ref);
    if (!want) {
        throw Error(ErrorCode::BadReference, "numeric reference is not a number: '" + std::string(ref) + "'");
    }
    const auto got = extract_number(pred);
    if (!got) return 0.0;
    return std::fabs(*got - *want) <= 1e-6 * std::fabs(*want) || *got == *want ? 1.0 : 0.0;
}

}  // namespace

std::string_view task_name(int task_id) {
    check_task_id(task_id);
    return kTaskNames[task_id - 1];
}

std::string_view default_metric(int task_id) {
    check_task_id(task_id);
    return kTaskMetrics[task_id - 1];
}

std::string normalize_answer(std::string_view text) {
    std::string folded;
    folded.reserve(text.size());
    for (std::size_t i = 0; i < text.size();) {
        const auto [cp, len] = next_code_point(text, i);
        if (cp >= 0xFF01 && cp <= 0xFF5E) {
            folded += static_cast<char>(cp - 0xFEE0);
        } else if (cp == 0x3000) {
            folded += ' ';
        } else {
            folded.append(text.substr(i, len));
        }
        i += len;
    }
    std::string out;
    bool pending_space = false;
    for (char c : folded) {
        if (c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v') {
            pending_space = !out.empty();
            continue;
        }
        if (pending_space) {
            out += ' ';
            pending_space = false;
        }
        out += c;
    }
    return out;
}

std::set<char> extract_choices(std::string_view text) {
    const std::string s = normalize_answer(text);
    std::set<char> out;
    std::size_t i = 0;
    while (i < s.size()) {
        if (!is_ascii_letter(s[i])) {
            ++i;
            continue;
        }
        std::size_t j = i;
        while (j < s.size() && is_ascii_letter(s[j])) ++j;
        const std::string_view run(s.data() + i, j - i);
        if (std::all_of(run.begin(), run.end(), is_option_letter)) {
            out.insert(run.begin(), run.end());
        }
        i = j;
    }
    return out;
}

std::optional<double> extract_number(std::string_view text) {
    const std::string s = normalize_answer(text);
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (s[i] < '0' || s[i] > '9') continue;
        std::size_t start = i;
        if (start > 0 && s[start - 1] == '-') --start;
        std::string digits;
        if (s[start] == '-') digits += '-';
        std::size_t j = i;
        while (j < s.size() && ((s[j] >= '0' && s[j] <= '9') ||
                                (s[j] == ',' && j + 1 < s.size() && s[j + 1] >= '0' && s[j + 1] <= '9'))) {
            if (s[j] != ',') digits += s[j];
            ++j;
        }
        if (j + 1 < s.size() && s[j] == '.' && s[j + 1] >= '0' && s[j + 1] <= '9') {
            digits += '.';
            ++j;
            while (j < s.size() && s[j] >= '0' && s[j] <= '9') digits += s[j++];
        }
        return std::strtod(digits.c_str(), nullptr);
    }
    return std::nullopt;
}

ScorerRegistry::ScorerRegistry() {
    add("exact_match", exact_match);
    add("choice", choice_match);
    add("numeric", numeric_match);
}

void ScorerRegistry::add(std::string id, Scorer scorer) { scorers_[std::move(id)] = std::move(scorer); }

bool ScorerRegistry::contains(std::string_view id) const { return scorers_.find(id) != scorers_.end(); }

double ScorerRegistry::score(std::string_view prediction, std::string_view reference, std::string_view metric) const {
    const auto it = scorers_.find(metric);
    if (it == scorers_.end()) {
        throw Error(ErrorCode::UnknownMetric, "no scorer named '" + std::string(metric) + "'");
    }
    return std::clamp(it->second(prediction, reference), 0.0, 1.0);
}

const ScorerRegistry& default_scorers() {
    static const ScorerRegistry registry;
    return registry;
}

double score_item(std::string_view prediction, std::string_view reference, std::string_view metric) {
    return default_scorers().score(prediction, reference, metric);
}

EvalTask load_task_file(const std::filesystem::path& path) {
    const std::string text = read_text_file(path);
    EvalTask task;
    std::istringstream lines(text);
    std::string line;
    std::size_t lineno = 0;
    auto where = [&] { return path.string() + ":" + std::to_string(lineno) + ": "; };
    while (std::getline(lines, line)) {
        ++lineno;
        if (trim(line).empty()) continue;
        const auto j = nlohmann::json::parse(line, nullptr, false);
        if (j.is_discarded() || !j.is_object()) throw Error(ErrorCode::ParseError, where() + "not a JSON object");
        if (!j.contains("task") || !j["task"].is_number_integer() || !j.contains("instruction") ||
            !j["instruction"].is_string() || !j.contains("reference") || !j["reference"].is_string()) {
            throw Error(ErrorCode::SchemaError, where() + "needs integer task, string instruction and reference");
        }
        const int id = j["task"].get<int>();
        check_task_id(id);
        const std::string metric =
            j.contains("metric") ? j["metric"].get<std::string>() : std::string(default_metric(id));
        if (task.items.empty()) {
            task.id = id;
            task.name = std::string(task_name(id));
            task.metric = metric;
        } else if (id != task.id || metric != task.metric) {
            throw Error(ErrorCode::SchemaError, where() + "mixes tasks or metrics within one file");
        }
        task.items.push_back({j["instruction"].get<std::string>(), j["reference"].get<std::string>()});
    }
    if (task.items.empty()) throw Error(ErrorCode::NoData, path.string() + " has no items");
    return task;
}

std::vector<EvalTask> load_task_dir(const std::filesystem::path& dir) {
    std::vector<std::filesystem::path> files;
    for (const auto& entry : std::filesystem::directory_iterator(dir)) {
        if (entry.is_regular_file() && entry.path().extension() == ".jsonl") files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end());
    std::vector<EvalTask> tasks;
    for (const auto& f : files) tasks.push_back(load_task_file(f));
    std::sort(tasks.begin(), tasks.end(), [](const EvalTask& a, const EvalTask& b) { return a.id < b.id; });
    for (std::size_t i = 1; i < tasks.size(); ++i) {
        if (tasks[i].id == tasks[i - 1].id) {
            throw Error(ErrorCode::SchemaError, "task #" + std::to_string(tasks[i].id) + " defined twice in " +
                                                    dir.string());
        }
    }
    if (tasks.empty()) throw Error(ErrorCode::NoData, "no task fixtures in " + dir.string());
    return tasks;
}

const TaskScore* EvalReport::find(int task_id) const {
    for (const TaskScore& s : scores) {
        if (s.task_id == task_id) return &s;
    }
    return nullptr;
}

double round_one_decimal(double value) {
    const double tenths = std::round(value * 10.0 * 1e6) / 1e6;
    return std::round(tenths) / 10.0;
}

EvalReport aggregate_report(std::string model, std::vector<TaskScore> scores) {
    if (scores.empty()) throw Error(ErrorCode::NoData, "report without task scores");
    std::sort(scores.begin(), scores.end(), [](const TaskScore& a, const TaskScore& b) { return a.task_id < b.task_id; });
    double total = 0.0;
    for (TaskScore& s : scores) {
        s.score = round_one_decimal(s.score);
        total += s.score;
    }
    const double average = round_one_decimal(total / static_cast<double>(scores.size()));
    return EvalReport{std::move(model), std::move(scores), average};
}

EvalReport run_eval(ModelRef model, const Vocabulary& vocab, const std::vector<EvalTask>& tasks,
                    const GenerationParams& gen, std::string model_name, std::vector<EvalLogEntry>* log,
                    const ScorerRegistry& scorers) {
    if (tasks.empty()) throw Error(ErrorCode::NoData, "no evaluation tasks");
    std::vector<TaskScore> scores;
    for (const EvalTask& task : tasks) {
        if (!scorers.contains(task.metric)) {
            throw Error(ErrorCode::UnknownMetric, "task #" + std::to_string(task.id) + " uses unknown metric '" +
                                                      task.metric + "'");
        }
        if (task.items.empty()) throw Error(ErrorCode::NoData, "task #" + std::to_string(task.id) + " has no items");
        double sum = 0.0;
        for (std::size_t i = 0; i < task.items.size(); ++i) {
            EvalLogEntry entry{task.id, i, {}, 0.0, {}};
            try {
                entry.prediction = answer(model, vocab, task.items[i].instruction, gen);
                entry.score = scorers.score(entry.prediction, task.items[i].reference, task.metric);
            } catch (const Error& e) {
                entry.score = 0.0;
                entry.error = e.what();
            }
            sum += entry.score;
            if (log != nullptr) log->push_back(std::move(entry));
        }
        scores.push_back({task.id, 100.0 * sum / static_cast<double>(task.items.size())});
    }
    return aggregate_report(std::move(model_name), std::move(scores));
}

std::string report_to_json_line(const EvalReport& report) {
    nlohmann::ordered_json j;
    j["model"] = report.model;
    nlohmann::ordered_json scores = nlohmann::ordered_json::object();
    for (const TaskScore& s : report.scores) scores["#" + std::to_string(s.task_id)] = s.score;
    j["scores"] = scores;
    j["average"] = report.average;
    return j.dump();
}

EvalReport report_from_json_line(std::string_view line) {
    const auto j = nlohmann::json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.is_object() || !j.contains("model") || !j.contains("scores")) {
        throw Error(ErrorCode::ParseError, "not a report line");
    }
    EvalReport r;
    try {
        r.model = j["model"].get<std::string>();
        for (const auto& [key, value] : j["scores"].items()) {
            if (key.size() < 2 || key[0] != '#' || key.find_first_not_of("0123456789", 1) != std::string::npos) {
                throw Error(ErrorCode::SchemaError, "bad task key '" + key + "'");
            }
            r.scores.push_back({std::stoi(key.substr(1)), value.get<double>()});
        }
        r.average = j.value("average", 0.0);
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::SchemaError, std::string("malformed report: ") + e.what());
    }
    std::sort(r.scores.begin(), r.scores.end(), [](const TaskScore& a, const TaskScore& b) { return a.task_id < b.task_id; });
    return r;
}

std::vector<EvalReport> read_reports(const std::filesystem::path& path) {
    const std::string text = read_text_file(path);
    std::vector<EvalReport> out;
    std::istringstream lines(text);
    std::string line;
    while (std::getline(lines, line)) {
        if (!trim(line).empty()) out.push_back(report_from_json_line(line));
    }
    return out;
}

namespace {

std::string format_score(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.1f", v);
    return buf;
}

}  // namespace

std::string ComparisonTable::render() const {
    std::vector<std::size_t> width(header.size(), 0);
    auto cell_text = [](const ComparisonCell& c) { return c.bold ? "**" + c.text + "**" : c.text; };
    for (std::size_t c = 0; c < header.size(); ++c) width[c] = header[c].size();
    for (const auto& row : rows) {
        for (std::size_t c = 0; c < row.size(); ++c) width[c] = std::max(width[c], cell_text(row[c]).size());
    }
    auto line = [&](const std::vector<std::string>& cells) {
        std::string out;
        for (std::size_t c = 0; c < cells.size(); ++c) {
            if (c > 0) out += " | ";
            const std::string& t = cells[c];
            const std::string pad(width[c] - t.size(), ' ');
            out += c == 0 ? t + pad : pad + t;  // names left, numbers right
        }
        while (!out.empty() && out.back() == ' ') out.pop_back();
        return out + "\n";
    };
    std::string out = line(header);
    std::string rule;
    for (std::size_t c = 0; c < header.size(); ++c) {
        if (c > 0) rule += "-+-";
        rule += std::string(width[c], '-');
    }
    out += rule + "\n";
    for (const auto& row : rows) {
        std::vector<std::string> cells;
        for (const auto& cell : row) cells.push_back(cell_text(cell));
        out += line(cells);
    }
    return out;
}

ComparisonTable compare_reports(const std::vector<EvalReport>& reports, const std::set<std::string>& open_source) {
    ComparisonTable table;
    table.header.push_back("Models");
    for (std::size_t t = 1; t <= kTaskCount; ++t) table.header.push_back("#" + std::to_string(t));
    table.header.push_back("Avg.");

    auto eligible = [&](const EvalReport& r) { return open_source.empty() || open_source.contains(r.model); };
    auto value_at = [](const EvalReport& r, std::size_t col) -> std::optional<double> {
        if (col == kTaskCount + 1) return round_one_decimal(r.average);
        const TaskScore* s = r.find(static_cast<int>(col));
        if (s == nullptr) return std::nullopt;
        return round_one_decimal(s->score);
    };

    std::vector<std::optional<double>> best(kTaskCount + 2);
    for (const EvalReport& r : reports) {
        if (!eligible(r)) continue;
        for (std::size_t col = 1; col <= kTaskCount + 1; ++col) {
            const auto v = value_at(r, col);
            if (v && (!best[col] || *v > *best[col])) best[col] = v;
        }
    }
    for (const EvalReport& r : reports) {
        std::vector<ComparisonCell> row;
        row.push_back({r.model, false});
        for (std::size_t col = 1; col <= kTaskCount + 1; ++col) {
            const auto v = value_at(r, col);
            if (!v) {
                row.push_back({"-", false});
                continue;
            }
            row.push_back({format_score(*v), eligible(r) && best[col] && *v == *best[col]});
        }
        table.rows.push_back(std::move(row));
    }
    return table;
}

}  // namespace lexforge
