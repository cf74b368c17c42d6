#include "lexforge/datakit.hpp"

#include "lexforge/errors.hpp"

#include <json.hpp>

#include <fstream>
#include <numeric>
#include <set>
#include <sstream>
#include <unordered_set>

namespace lexforge {

namespace {

constexpr std::string_view kAugmentHead =
    "我希望你担任语言专家的角色。我会给你一段与法律问答文本，请你使用正式的文风润色它。要求：\n"
    "1. 修正语法错误、标点符号错误，去掉特殊符号，必须使语句更通顺。\n"
    "2. 使逻辑更清晰、格式更规范，比如向<answer>中换行符。\n"
    "3. 使更礼貌，比如向<question>中加入“请问”等礼貌用语。\n"
    "4. 不要写任何解释性语句。\n"
    "5. <question>应该是问题，<answer>应该是答案。\n"
    "这段对话是：\n<question>:";
constexpr std::string_view kAugmentMid = " \n<answer>:";
constexpr std::string_view kAugmentTail = " \n\n以JSON格式返回结果：";

bool is_ascii_space(char c) {
    return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
}

constexpr std::string_view kIdeographicSpace = "\xE3\x80\x80";

void require_field(std::string_view value, const char* what) {
    if (trim(value).empty()) {
        throw Error(ErrorCode::EmptyField, std::string(what) + " is empty");
    }
}

}  // namespace

std::string_view subset_name(Subset s) {
    switch (s) {
        case Subset::A: return "a";
        case Subset::B: return "b";
        case Subset::C: return "c";
    }
    return "a";
}

Subset parse_subset(std::string_view name) {
    if (name == "a" || name == "A") return Subset::A;
    if (name == "b" || name == "B") return Subset::B;
    if (name == "c" || name == "C") return Subset::C;
    throw Error(ErrorCode::SchemaError, "unknown subset '" + std::string(name) + "'");
}

std::string trim(std::string_view text) {
    for (;;) {
        if (!text.empty() && is_ascii_space(text.front())) {
            text.remove_prefix(1);
        } else if (text.starts_with(kIdeographicSpace)) {
            text.remove_prefix(kIdeographicSpace.size());
        } else {
            break;
        }
    }
    for (;;) {
        if (!text.empty() && is_ascii_space(text.back())) {
            text.remove_suffix(1);
        } else if (text.ends_with(kIdeographicSpace)) {
            text.remove_suffix(kIdeographicSpace.size());
        } else {
            break;
        }
    }
    return std::string(text);
}

void validate_record(const InstructionRecord& record) {
    require_field(record.instruction, "instruction");
    require_field(record.output, "output");
}

std::string render_test(std::string_view instruction) {
    require_field(instruction, "instruction");
    std::string out;
    out.reserve(kAlpacaPreamble.size() + instruction.size() + kAlpacaResponseHeader.size());
    out += kAlpacaPreamble;
    out += instruction;
    out += kAlpacaResponseHeader;
    return out;
}

RenderedText render_train(std::string_view instruction, std::string_view output) {
    require_field(output, "output");
    RenderedText r;
    r.text = render_test(instruction);
    r.boundary = r.text.size();
    r.text += output;
    return r;
}

std::string render_augmentation_prompt(const InstructionRecord& record) {
    validate_record(record);
    std::string out;
    out += kAugmentHead;
    out += record.instruction;
    out += kAugmentMid;
    out += record.output;
    out += kAugmentTail;
    return out;
}

namespace {

// End (exclusive) of the balanced {...} starting at `open`, honouring JSON
// string quoting; npos if it never closes.
std::size_t balanced_object_end(std::string_view text, std::size_t open) {
    int depth = 0;
    bool in_string = false;
    bool escaped = false;
    for (std::size_t i = open; i < text.size(); ++i) {
        const char c = text[i];
        if (in_string) {
            if (escaped) {
                escaped = false;
            } else if (c == '\\') {
                escaped = true;
            } else if (c == '"') {
                in_string = false;
            }
            continue;
        }
        if (c == '"') {
            in_string = true;
        } else if (c == '{') {
            ++depth;
        } else if (c == '}') {
            if (--depth == 0) return i + 1;
        }
    }
    return std::string_view::npos;
}

std::string string_field(const nlohmann::json& obj, const char* key) {
    const auto& v = obj.at(key);
    if (!v.is_string()) {
        throw Error(ErrorCode::SchemaError, std::string("field '") + key + "' is not a string");
    }
    return v.get<std::string>();
}

}  // namespace

InstructionRecord parse_augmentation_response(std::string_view text) {
    std::optional<nlohmann::json> found;
    for (std::size_t open = text.find('{'); open != std::string_view::npos; open = text.find('{', open + 1)) {
        const std::size_t end = balanced_object_end(text, open);
        if (end == std::string_view::npos) continue;
        nlohmann::json j = nlohmann::json::parse(text.substr(open, end - open), nullptr, false);
        if (!j.is_discarded() && j.is_object()) {
            found = std::move(j);
            break;
        }
    }
    if (!found) {
        throw Error(ErrorCode::ParseError, "no JSON object in response");
    }
    const nlohmann::json& obj = *found;
    const char* qkey = nullptr;
    const char* akey = nullptr;
    if (obj.contains("question") || obj.contains("answer")) {
        qkey = "question";
        akey = "answer";
    } else {
        qkey = "instruction";
        akey = "output";
    }
    if (!obj.contains(qkey) || !obj.contains(akey)) {
        throw Error(ErrorCode::SchemaError, std::string("response needs both '") + qkey + "' and '" + akey + "'");
    }
    InstructionRecord r{trim(string_field(obj, qkey)), trim(string_field(obj, akey)), Subset::C};
    validate_record(r);
    return r;
}

Dataset build_dataset(const std::vector<std::vector<InstructionRecord>>& sources) {
    Dataset ds;
    std::unordered_set<std::string> seen;
    std::size_t offered = 0;
    for (const auto& list : sources) {
        for (const InstructionRecord& r : list) {
            ++offered;
            try {
                validate_record(r);
            } catch (const Error&) {
                ++ds.report.rejected;
                continue;
            }
            // Length-prefix the key so no (instruction, output) split is ambiguous.
            std::string key = std::to_string(r.instruction.size()) + ':' + r.instruction + r.output;
            if (!seen.insert(std::move(key)).second) {
                ++ds.report.duplicates;
                continue;
            }
            ++ds.report.counts[static_cast<std::size_t>(r.subset)];
            ds.records.push_back(r);
        }
    }
    if (ds.records.empty()) {
        throw Error(ErrorCode::NoData, std::to_string(offered) + " records offered, none valid");
    }
    ds.report.total = ds.records.size();
    for (std::size_t i = 0; i < 3; ++i) {
        ds.report.proportions[i] = static_cast<double>(ds.report.counts[i]) / static_cast<double>(ds.report.total);
    }
    return ds;
}

TrainExample tokenize_example(const InstructionRecord& record, const Vocabulary& vocab, std::size_t context_length) {
    validate_record(record);
    const TokenSequence prompt = encode(vocab, render_test(record.instruction));
    const TokenSequence answer = encode(vocab, record.output);
    TrainExample ex;
    ex.tokens.reserve(prompt.size() + answer.size() + 2);
    ex.tokens.push_back(vocab.bos());
    ex.tokens.insert(ex.tokens.end(), prompt.begin(), prompt.end());
    ex.tokens.insert(ex.tokens.end(), answer.begin(), answer.end());
    ex.tokens.push_back(vocab.eos());
    if (ex.tokens.size() > context_length) {
        throw Error(ErrorCode::TooLong, std::to_string(ex.tokens.size()) + " tokens exceed context length " +
                                            std::to_string(context_length));
    }
    const std::size_t first = 1 + prompt.size();
    ex.output_index_set.resize(ex.tokens.size() - first);
    std::iota(ex.output_index_set.begin(), ex.output_index_set.end(), first);
    return ex;
}

std::string read_text_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::IoError, "cannot read " + path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

void write_text_file(const std::filesystem::path& path, std::string_view text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
}

std::string dataset_line(const InstructionRecord& r) {
    nlohmann::ordered_json j;
    j["instruction"] = r.instruction;
    j["output"] = r.output;
    j["subset"] = std::string(subset_name(r.subset));
    return j.dump();
}

std::vector<InstructionRecord> read_dataset_file(const std::filesystem::path& path) {
    const std::string text = read_text_file(path);
    std::vector<InstructionRecord> out;
    std::istringstream lines(text);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(lines, line)) {
        ++lineno;
        if (trim(line).empty()) continue;
        const auto j = nlohmann::json::parse(line, nullptr, false);
        if (j.is_discarded() || !j.is_object()) {
            throw Error(ErrorCode::ParseError, path.string() + ":" + std::to_string(lineno) + ": not a JSON object");
        }
        if (!j.contains("instruction") || !j.contains("output") || !j["instruction"].is_string() ||
            !j["output"].is_string()) {
            throw Error(ErrorCode::SchemaError,
                        path.string() + ":" + std::to_string(lineno) + ": needs string instruction and output");
        }
        InstructionRecord r;
        r.instruction = j["instruction"].get<std::string>();
        r.output = j["output"].get<std::string>();
        r.subset = j.contains("subset") ? parse_subset(j["subset"].get<std::string>()) : Subset::A;
        out.push_back(std::move(r));
    }
    return out;
}

void write_dataset_file(const std::filesystem::path& path, const std::vector<InstructionRecord>& records) {
    std::string text;
    for (const auto& r : records) {
        text += dataset_line(r);
        text += '\n';
    }
    write_text_file(path, text);
}

std::string encode_prompt_blocks(const std::vector<std::string>& prompts) {
    std::string out;
    for (const std::string& p : prompts) {
        out += std::to_string(p.size());
        out += '\n';
        out += p;
        out += '\n';
    }
    return out;
}

std::vector<std::string> decode_prompt_blocks(std::string_view bytes) {
    std::vector<std::string> out;
    std::size_t pos = 0;
    while (pos < bytes.size()) {
        const std::size_t nl = bytes.find('\n', pos);
        if (nl == std::string_view::npos) throw Error(ErrorCode::ParseError, "block header without newline");
        std::size_t len = 0;
        const std::string_view header = bytes.substr(pos, nl - pos);
        if (header.empty() || header.find_first_not_of("0123456789") != std::string_view::npos) {
            throw Error(ErrorCode::ParseError, "bad block length '" + std::string(header) + "'");
        }
        len = std::stoull(std::string(header));
        const std::size_t start = nl + 1;
        if (start + len + 1 > bytes.size() || bytes[start + len] != '\n') {
            throw Error(ErrorCode::ParseError, "block truncated");
        }
        out.emplace_back(bytes.substr(start, len));
        pos = start + len + 1;
    }
    return out;
}

IngestResult ingest_responses(std::string_view text) {
    IngestResult result;
    std::size_t pos = 0;
    std::size_t lineno = 0;
    while (pos < text.size()) {
        std::size_t nl = text.find('\n', pos);
        if (nl == std::string_view::npos) nl = text.size();
        const std::string_view line = text.substr(pos, nl - pos);
        pos = nl + 1;
        ++lineno;
        if (trim(line).empty()) continue;
        try {
            result.records.push_back(parse_augmentation_response(line));
        } catch (const Error& e) {
            result.errors.push_back("line " + std::to_string(lineno) + ": " + e.what());
        }
    }
    return result;
}

}  // namespace lexforge
