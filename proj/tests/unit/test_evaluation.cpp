#include "lexforge/evaluation.hpp"

#include "lexforge/datakit.hpp"

#include "test_util.hpp"

#include <doctest.h>

using namespace lexforge;
using testutil::error_code_of;

namespace {

EvalReport row(std::string name, std::vector<double> values) {
    std::vector<TaskScore> scores;
    for (std::size_t i = 0; i < values.size(); ++i) scores.push_back({static_cast<int>(i + 1), values[i]});
    return aggregate_report(std::move(name), std::move(scores));
}

std::vector<EvalReport> published_rows() {
    return {
        row("GPT-3.5 Turbo", {29.5, 31.3, 35.5, 78.7, 76.8, 27.4, 61.2, 17.4}),
        row("GPT-4", {52.5, 27.5, 42.0, 82.6, 81.9, 48.6, 77.6, 19.6}),
        row("LLaMA", {1.0, 7.5, 7.0, 41.3, 54.2, 0.2, 14.4, 7.8}),
        row("LaWGPT", {0.2, 11.0, 15.7, 42.4, 40.8, 6.2, 15.4, 7.6}),
    };
}

// Model that answers every prompt with EOS immediately, i.e. the empty string.
struct SilentModel {
    Vocabulary vocab = Vocabulary(259, {});
    ModelParameters params;
    SilentModel() {
        params = zero_parameters(TransformerConfig{259, 512, 1, 1, 8, 8});
        params.at("lm_head").at(vocab.eos(), 0) = 1.0;
        params.at("ln_f.beta")[0] = 1.0;
    }
    ModelRef ref() const { return {&params, nullptr}; }
};

}  // namespace

TEST_CASE("task metadata") {
    CHECK(task_name(3) == "charge prediction");
    CHECK(default_metric(6) == "choice");
    CHECK(default_metric(7) == "numeric");
    CHECK(error_code_of([] { task_name(9); }) == ErrorCode::InvalidArgument);
}

TEST_CASE("normalization folds full-width forms") {
    CHECK(normalize_answer("  ＡＢ　ｃ１ \n x ") == "AB c1 x");
    CHECK(normalize_answer("第２６４条") == "第264条");
}

TEST_CASE("choice scorer") {
    CHECK(score_item("(A) 船舶抵押权的设定(B) 同国籍船舶在公海发生碰撞的损害赔偿", "A,B", "choice") == 1.0);
    CHECK(score_item("（Ａ）和（Ｂ）", "A B", "choice") == 1.0);
    CHECK(score_item("A", "A,B", "choice") == 0.0);
    CHECK(score_item("Answer: B, D", "A,B,D", "choice") == 0.0);  // the A of "Answer" is not an option
    CHECK(score_item("ABD", "A,B,D", "choice") == 1.0);
    CHECK(extract_choices("Because C") == std::set<char>{'C'});
    CHECK(error_code_of([] { score_item("A", "无", "choice"); }) == ErrorCode::BadReference);
}

TEST_CASE("numeric scorer") {
    CHECK(score_item("15600元", "15600", "numeric") == 1.0);
    CHECK(score_item("损失为15,600元。", "15600", "numeric") == 1.0);
    CHECK(score_item("１５６００", "15600", "numeric") == 1.0);
    CHECK(score_item("15601", "15600", "numeric") == 0.0);
    CHECK(score_item("无法计算", "15600", "numeric") == 0.0);
    CHECK(extract_number("减少-3.5个月") == -3.5);
    CHECK(extract_number("12.") == 12.0);
    CHECK_FALSE(extract_number("none").has_value());
    CHECK(error_code_of([] { score_item("1", "多", "numeric"); }) == ErrorCode::BadReference);
}

TEST_CASE("exact match and the registry") {
    CHECK(score_item("盗窃罪", " 盗窃罪 ", "exact_match") == 1.0);
    CHECK(score_item("盗窃罪", "诈骗罪", "exact_match") == 0.0);
    CHECK(error_code_of([] { score_item("a", "a", "bleu"); }) == ErrorCode::UnknownMetric);
    ScorerRegistry reg;
    reg.add("half", [](std::string_view, std::string_view) { return 7.0; });
    CHECK(reg.contains("half"));
    CHECK(reg.score("x", "y", "half") == 1.0);
}

TEST_CASE("rounding and aggregation") {
    CHECK(round_one_decimal(17.4125) == 17.4);
    CHECK(round_one_decimal(16.675) == 16.7);
    CHECK(round_one_decimal(44.725) == 44.7);
    CHECK(round_one_decimal(100.0 * 2 / 3) == 66.7);
    const auto rows = published_rows();
    CHECK(rows[0].average == 44.7);
    CHECK(rows[1].average == 54.0);
    CHECK(rows[2].average == 16.7);
    CHECK(rows[3].average == 17.4);
    CHECK(error_code_of([] { aggregate_report("x", {}); }) == ErrorCode::NoData);
}

TEST_CASE("run_eval scores, logs failures and never aborts") {
    SilentModel m;
    GenerationParams gen;
    gen.max_new_tokens = 4;
    const std::vector<EvalTask> tasks{
        {1, "a", "exact_match", {{"问题一", ""}, {"问题二", "x"}}},
        {7, "b", "numeric", {{"问题三", "100"}}},
        {6, "c", "choice", {{"问题四", "没有选项"}}},
    };
    std::vector<EvalLogEntry> log;
    const EvalReport r = run_eval(m.ref(), m.vocab, tasks, gen, "silent", &log);
    CHECK(r.find(1)->score == 50.0);
    CHECK(r.find(7)->score == 0.0);
    CHECK(r.find(6)->score == 0.0);
    CHECK(r.average == doctest::Approx(16.7));
    REQUIRE(log.size() == 4);
    CHECK(log[0].prediction.empty());
    CHECK(log[3].error.find("no options") != std::string::npos);

    const std::vector<EvalTask> bad{{1, "a", "bleu", {{"q", "r"}}}};
    CHECK(error_code_of([&] { run_eval(m.ref(), m.vocab, bad, gen, "x"); }) == ErrorCode::UnknownMetric);
    CHECK(error_code_of([&] { run_eval(m.ref(), m.vocab, {}, gen, "x"); }) == ErrorCode::NoData);
}

TEST_CASE("all-correct predictions give 100 everywhere") {
    SilentModel m;
    std::vector<EvalTask> tasks;
    for (int id = 1; id <= 8; ++id) tasks.push_back({id, "t", "exact_match", {{"问", ""}, {"答", " "}}});
    const EvalReport r = run_eval(m.ref(), m.vocab, tasks, GenerationParams{}, "perfect");
    for (const TaskScore& s : r.scores) CHECK(s.score == 100.0);
    CHECK(r.average == 100.0);
}

TEST_CASE("task files") {
    const auto dir = testutil::scratch_dir("tasks");
    write_text_file(dir / "t1.jsonl", "{\"task\":7,\"instruction\":\"q\",\"reference\":\"1\"}\n\n"
                                      "{\"task\":7,\"instruction\":\"q2\",\"reference\":\"2\",\"metric\":\"numeric\"}\n");
    write_text_file(dir / "t0.jsonl", "{\"task\":2,\"instruction\":\"q\",\"reference\":\"r\"}\n");
    write_text_file(dir / "notes.txt", "ignored");
    const auto tasks = load_task_dir(dir);
    REQUIRE(tasks.size() == 2);
    CHECK(tasks[0].id == 2);
    CHECK(tasks[1].metric == "numeric");
    CHECK(tasks[1].items.size() == 2);

    write_text_file(dir / "t2.jsonl", "{\"task\":2,\"instruction\":\"q\",\"reference\":\"r\"}\n");
    CHECK(error_code_of([&] { load_task_dir(dir); }) == ErrorCode::SchemaError);

    write_text_file(dir / "mixed.jsonl", "{\"task\":1,\"instruction\":\"q\",\"reference\":\"r\"}\n"
                                         "{\"task\":1,\"instruction\":\"q\",\"reference\":\"r\",\"metric\":\"choice\"}\n");
    CHECK(error_code_of([&] { load_task_file(dir / "mixed.jsonl"); }) == ErrorCode::SchemaError);
    write_text_file(dir / "bad.jsonl", "{\"task\":\"1\",\"instruction\":\"q\",\"reference\":\"r\"}\n");
    CHECK(error_code_of([&] { load_task_file(dir / "bad.jsonl"); }) == ErrorCode::SchemaError);
    write_text_file(dir / "empty.jsonl", "\n");
    CHECK(error_code_of([&] { load_task_file(dir / "empty.jsonl"); }) == ErrorCode::NoData);
}

TEST_CASE("report lines round trip") {
    const EvalReport r = published_rows()[3];
    const std::string line = report_to_json_line(r);
    CHECK(line ==
          R"({"model":"LaWGPT","scores":{"#1":0.2,"#2":11.0,"#3":15.7,"#4":42.4,"#5":40.8,"#6":6.2,"#7":15.4,"#8":7.6},"average":17.4})");
    const EvalReport back = report_from_json_line(line);
    CHECK(back.model == "LaWGPT");
    CHECK(back.average == 17.4);
    CHECK(back.find(3)->score == 15.7);
    CHECK(error_code_of([] { report_from_json_line("[]"); }) == ErrorCode::ParseError);
    CHECK(error_code_of([] { report_from_json_line(R"({"model":"m","scores":{"x":1}})"); }) == ErrorCode::SchemaError);
    CHECK(error_code_of([] { report_from_json_line(R"({"model":"m","scores":{"#1":"hi"}})"); }) ==
          ErrorCode::SchemaError);
}

TEST_CASE("published comparison bolds the best open-source value") {
    const ComparisonTable t = compare_reports(published_rows(), {"LLaMA", "LaWGPT"});
    REQUIRE(t.rows.size() == 4);
    CHECK(t.header.front() == "Models");
    CHECK(t.header.back() == "Avg.");
    auto bold_cols = [&](std::size_t r) {
        std::vector<std::size_t> cols;
        for (std::size_t c = 1; c < t.rows[r].size(); ++c) {
            if (t.rows[r][c].bold) cols.push_back(c);
        }
        return cols;
    };
    CHECK(bold_cols(0).empty());
    CHECK(bold_cols(1).empty());
    CHECK(bold_cols(2) == std::vector<std::size_t>{1, 5, 8});
    CHECK(bold_cols(3) == std::vector<std::size_t>{2, 3, 4, 6, 7, 9});
    CHECK(t.rows[3][9].text == "17.4");
    CHECK(t.rows[1][3].text == "42.0");

    const std::string text = t.render();
    CHECK(text.find("\nLaWGPT" + std::string(8, ' ') + "|     0.2 | **11.0** |") != std::string::npos);
    CHECK(text.find("-+-") != std::string::npos);
}

TEST_CASE("comparison edge cases") {
    const EvalReport only = row("solo", {10, 20, 30, 40, 50, 60, 70, 80});
    const ComparisonTable single = compare_reports({only});
    for (std::size_t c = 1; c < single.rows[0].size(); ++c) CHECK(single.rows[0][c].bold);

    const EvalReport twin = row("twin", {10, 0, 0, 0, 0, 0, 0, 0});
    const ComparisonTable tie = compare_reports({only, twin});
    CHECK(tie.rows[0][1].bold);
    CHECK(tie.rows[1][1].bold);
    CHECK_FALSE(tie.rows[1][2].bold);

    const EvalReport partial = aggregate_report("partial", {{2, 5.0}});
    const ComparisonTable gaps = compare_reports({partial});
    CHECK(gaps.rows[0][1].text == "-");
    CHECK(gaps.rows[0][2].bold);
}
