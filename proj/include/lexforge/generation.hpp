#pragma once

#include "lexforge/checkpoint.hpp"
#include "lexforge/model.hpp"
#include "lexforge/tokenizer.hpp"

#include <cstdint>
#include <iosfwd>
#include <random>
#include <span>
#include <string>
#include <string_view>

namespace lexforge {

enum class Strategy { Greedy, Temperature, TopK, TopP };

std::string_view strategy_name(Strategy s);
Strategy parse_strategy(std::string_view name);

struct GenerationParams {
    std::size_t max_new_tokens = 64;
    Strategy strategy = Strategy::Greedy;
    // Applied before any top-k / top-p truncation; ignored by greedy.
    double temperature = 1.0;
    std::size_t top_k = 1;
    double top_p = 1.0;
    std::uint64_t seed = 0;

    void validate() const;
};

// Model view used for decoding: frozen weights plus optional adapters.
struct ModelRef {
    const ModelParameters* params = nullptr;
    const LoraAdapters* adapters = nullptr;
};

inline ModelRef model_ref(const Checkpoint& ckpt) { return {&ckpt.params, ckpt.adapter_ptr()}; }

// Draws one id from a logits row. Ids in `banned` are never returned.
TokenId sample_token(std::span<const double> logits, const GenerationParams& params, std::mt19937_64& rng,
                     std::span<const TokenId> banned = {});

// Appends tokens until EOS or the token budget; returns only the new tokens
// (EOS excluded). Decoding also stops when the context window is full.
TokenSequence generate(ModelRef model, const Vocabulary& vocab, std::span<const TokenId> prompt,
                       const GenerationParams& params);

// Wraps `instruction` in the inference template, prefixes BOS, decodes the reply.
std::string answer(ModelRef model, const Vocabulary& vocab, std::string_view instruction,
                   const GenerationParams& params);

struct ReplOptions {
    bool json = false;
};

// One instruction per input line. Plain mode prints the response and a blank
// line; JSON mode prints {"instruction", "response", "token_count"} per line.
void run_repl(ModelRef model, const Vocabulary& vocab, const GenerationParams& params, std::istream& in,
              std::ostream& out, const ReplOptions& options = {});

}  // namespace lexforge
