#pragma once

#include "lexforge/errors.hpp"
#include "lexforge/model.hpp"
#include "lexforge/tokenizer.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace testutil {

inline std::filesystem::path source_dir() { return LEXFORGE_SOURCE_DIR; }

// Scratch directory under the system temp dir, emptied on creation.
inline std::filesystem::path scratch_dir(const std::string& name) {
    auto p = std::filesystem::temp_directory_path() / ("lexforge_test_" + name);
    std::filesystem::remove_all(p);
    std::filesystem::create_directories(p);
    return p;
}

inline lexforge::TransformerConfig tiny_config(std::size_t vocab = 64, std::size_t context = 16) {
    return {vocab, context, 2, 2, 32, 64};
}

inline lexforge::TokenSequence random_tokens(std::mt19937_64& rng, std::size_t n, std::size_t vocab) {
    std::uniform_int_distribution<lexforge::TokenId> pick(0, static_cast<lexforge::TokenId>(vocab - 1));
    lexforge::TokenSequence out(n);
    for (auto& t : out) t = pick(rng);
    return out;
}

// Random UTF-8 text mixing ASCII, CJK and a few two/four-byte scalars.
inline std::string random_utf8(std::mt19937_64& rng, std::size_t scalars) {
    static const std::vector<std::string> pool = {
        "a", "b", "e", " ", "1", "9", "\n", ".", "Z", "中", "华", "人", "民", "法", "院", "罪",
        "，", "。", "é", "ß", "😀", "\xF0\x9F\x93\x9C", "（", "）", "第", "条"};
    std::uniform_int_distribution<std::size_t> pick(0, pool.size() - 1);
    std::string s;
    for (std::size_t i = 0; i < scalars; ++i) s += pool[pick(rng)];
    return s;
}

// Independent log-softmax of one row.
inline double log_softmax_at(std::span<const double> row, std::size_t index) {
    double mx = *std::max_element(row.begin(), row.end());
    double z = 0.0;
    for (double v : row) z += std::exp(v - mx);
    return row[index] - mx - std::log(z);
}

template <typename Fn>
lexforge::ErrorCode error_code_of(Fn&& fn) {
    try {
        fn();
    } catch (const lexforge::Error& e) {
        return e.code();
    }
    throw std::runtime_error("expected a lexforge::Error");
}

}  // namespace testutil
