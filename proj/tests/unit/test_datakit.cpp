#include "lexforge/datakit.hpp"

#include "test_util.hpp"

#include <doctest.h>

using namespace lexforge;
using testutil::error_code_of;

namespace {

const std::string kQ = "请问我向借钱人要钱多次未果，向法院起诉，法院多久才立案";
const std::string kA = "起诉的当日 ，法院就会立案的。";

std::string golden(const std::string& name) { return read_text_file(testutil::source_dir() / "tests/golden" / name); }

}  // namespace

TEST_CASE("templates match the golden files") {
    CHECK(render_test(kQ) == golden("alpaca_test_example2.txt"));
    const RenderedText r = render_train(kQ, kA);
    CHECK(r.text == golden("alpaca_train_example2.txt"));
    CHECK(r.text.substr(0, r.boundary) == render_test(kQ));
    CHECK(r.text.substr(r.boundary) == kA);
    CHECK(render_augmentation_prompt({kQ, kA, Subset::A}) == golden("augment_example2.txt"));
}

TEST_CASE("templates reject blank fields") {
    CHECK(error_code_of([] { render_test(" \t"); }) == ErrorCode::EmptyField);
    CHECK(error_code_of([] { render_train("q", "\xE3\x80\x80"); }) == ErrorCode::EmptyField);
    CHECK(error_code_of([] { render_augmentation_prompt({"", "a", Subset::A}); }) == ErrorCode::EmptyField);
    CHECK(trim("\xE3\x80\x80 x y \n") == "x y");
}

TEST_CASE("teacher responses in several shapes") {
    const auto bare = parse_augmentation_response(R"({"question": " 请问A？ ", "answer": "B。"})");
    CHECK(bare.instruction == "请问A？");
    CHECK(bare.output == "B。");
    CHECK(bare.subset == Subset::C);

    const auto fenced = parse_augmentation_response("好的：\n```json\n{\"question\":\"q\",\"answer\":\"a {x}\"}\n```");
    CHECK(fenced.output == "a {x}");

    const auto alt = parse_augmentation_response(R"(结果 {"instruction": "i", "output": "o"} 完)");
    CHECK(alt.instruction == "i");

    const auto skip = parse_augmentation_response(R"({broken {"question":"q","answer":"a"})");
    CHECK(skip.instruction == "q");

    CHECK(error_code_of([] { parse_augmentation_response("抱歉"); }) == ErrorCode::ParseError);
    CHECK(error_code_of([] { parse_augmentation_response(R"({"question":"q"})"); }) == ErrorCode::SchemaError);
    CHECK(error_code_of([] { parse_augmentation_response(R"({"question":"q","answer":3})"); }) ==
          ErrorCode::SchemaError);
    CHECK(error_code_of([] { parse_augmentation_response(R"({"question":"q","answer":"  "})"); }) ==
          ErrorCode::EmptyField);
}

TEST_CASE("ingest keeps good lines and reports bad ones") {
    const IngestResult r = ingest_responses("{\"question\":\"q1\",\"answer\":\"a1\"}\n\nnope\n前缀{\"question\":\"q2\",\"answer\":\"a2\"}");
    REQUIRE(r.records.size() == 2);
    CHECK(r.records[1].instruction == "q2");
    REQUIRE(r.errors.size() == 1);
    CHECK(r.errors[0].starts_with("line 3:"));
}

TEST_CASE("dataset assembly") {
    const std::vector<InstructionRecord> a{{"q1", "a1", Subset::A}, {"q2", "a2", Subset::A}, {"q1", "a1", Subset::A}};
    const std::vector<InstructionRecord> b{{"q3", " ", Subset::B}, {"q1", "a1", Subset::B}, {"q4", "a4", Subset::B}};
    const std::vector<InstructionRecord> c{{"q5", "a5", Subset::C}, {"q", "1a5", Subset::C}};
    const Dataset ds = build_dataset({a, b, c});
    CHECK(ds.report.total == 5);
    CHECK(ds.report.rejected == 1);
    CHECK(ds.report.duplicates == 2);
    CHECK(ds.report.counts == std::array<std::size_t, 3>{2, 1, 2});
    CHECK(ds.report.proportions[0] == doctest::Approx(0.4));
    CHECK(ds.records[2].instruction == "q4");
    CHECK(error_code_of([] { build_dataset({{{"", "x", Subset::A}}}); }) == ErrorCode::NoData);
}

TEST_CASE("tokenized examples split prompt and answer exactly") {
    const Vocabulary v = train_bpe(std::vector<std::string>{render_train(kQ, kA).text}, 400);
    const TrainExample ex = tokenize_example({kQ, kA, Subset::A}, v, 512);
    CHECK(ex.tokens.front() == v.bos());
    CHECK(ex.tokens.back() == v.eos());
    const std::size_t first = ex.output_index_set.front();
    CHECK(ex.output_index_set.back() == ex.tokens.size() - 1);
    for (std::size_t i = 1; i < ex.output_index_set.size(); ++i) {
        CHECK(ex.output_index_set[i] == ex.output_index_set[i - 1] + 1);
    }
    const TokenSequence prompt(ex.tokens.begin() + 1, ex.tokens.begin() + first);
    const TokenSequence answer(ex.tokens.begin() + first, ex.tokens.end());
    CHECK(decode(v, prompt) == render_test(kQ));
    CHECK(decode(v, answer) == kA);
    CHECK(error_code_of([&] { tokenize_example({kQ, kA, Subset::A}, v, ex.tokens.size() - 1); }) ==
          ErrorCode::TooLong);
}

TEST_CASE("dataset files") {
    const auto dir = testutil::scratch_dir("datakit");
    const std::vector<InstructionRecord> rs{{"问\"题\"", "答\n案", Subset::B}, {"x", "y", Subset::C}};
    write_dataset_file(dir / "d.jsonl", rs);
    CHECK(read_dataset_file(dir / "d.jsonl") == rs);
    CHECK(dataset_line(rs[1]) == R"({"instruction":"x","output":"y","subset":"c"})");

    write_text_file(dir / "bad.jsonl", "{\"instruction\": \"x\"}\n");
    CHECK(error_code_of([&] { read_dataset_file(dir / "bad.jsonl"); }) == ErrorCode::SchemaError);
    write_text_file(dir / "bad2.jsonl", "[1,2]\n");
    CHECK(error_code_of([&] { read_dataset_file(dir / "bad2.jsonl"); }) == ErrorCode::ParseError);
    write_text_file(dir / "bad3.jsonl", R"({"instruction":"x","output":"y","subset":"z"})");
    CHECK(error_code_of([&] { read_dataset_file(dir / "bad3.jsonl"); }) == ErrorCode::SchemaError);
    CHECK(error_code_of([&] { read_text_file(dir / "nope"); }) == ErrorCode::IoError);
}

TEST_CASE("prompt blocks survive embedded newlines") {
    const std::vector<std::string> prompts{"a\nb", "", render_augmentation_prompt({kQ, kA, Subset::A})};
    const std::string bytes = encode_prompt_blocks(prompts);
    CHECK(bytes.starts_with("3\na\nb\n0\n\n"));
    CHECK(decode_prompt_blocks(bytes) == prompts);
    CHECK(error_code_of([&] { decode_prompt_blocks(bytes.substr(0, bytes.size() - 1)); }) == ErrorCode::ParseError);
    CHECK(error_code_of([] { decode_prompt_blocks("x\nabc\n"); }) == ErrorCode::ParseError);
}
