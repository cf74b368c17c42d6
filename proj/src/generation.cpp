#include "lexforge/generation.hpp"

#include "lexforge/datakit.hpp"
#include "lexforge/errors.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <istream>
#include <limits>
#include <numeric>
#include <ostream>

namespace lexforge {

std::string_view strategy_name(Strategy s) {
    switch (s) {
        case Strategy::Greedy: return "greedy";
        case Strategy::Temperature: return "temperature";
        case Strategy::TopK: return "top_k";
        case Strategy::TopP: return "top_p";
    }
    return "greedy";
}

Strategy parse_strategy(std::string_view name) {
    if (name == "greedy") return Strategy::Greedy;
    if (name == "temperature") return Strategy::Temperature;
    if (name == "top_k" || name == "top-k") return Strategy::TopK;
    if (name == "top_p" || name == "top-p") return Strategy::TopP;
    throw Error(ErrorCode::ParseError, "unknown decoding strategy '" + std::string(name) + "'");
}

void GenerationParams::validate() const {
    if (max_new_tokens == 0) throw Error(ErrorCode::InvalidArgument, "max_new_tokens must be positive");
    if (!(temperature > 0.0)) throw Error(ErrorCode::InvalidArgument, "temperature must be positive");
    if (strategy == Strategy::TopK && top_k == 0) throw Error(ErrorCode::InvalidArgument, "top_k must be >= 1");
    if (strategy == Strategy::TopP && !(top_p > 0.0 && top_p <= 1.0)) {
        throw Error(ErrorCode::InvalidArgument, "top_p must be in (0, 1]");
    }
}

TokenId sample_token(std::span<const double> logits, const GenerationParams& params, std::mt19937_64& rng,
                     std::span<const TokenId> banned) {
    auto allowed = [&](std::size_t id) {
        return std::find(banned.begin(), banned.end(), static_cast<TokenId>(id)) == banned.end();
    };
    std::vector<TokenId> cand;
    cand.reserve(logits.size());
    for (std::size_t i = 0; i < logits.size(); ++i) {
        if (allowed(i)) cand.push_back(static_cast<TokenId>(i));
    }
    if (cand.empty()) {
        throw Error(ErrorCode::InvalidArgument, "every token is banned");
    }
    // Descending by logit, ascending id among ties.
    auto by_score = [&](TokenId a, TokenId b) { return logits[a] > logits[b] || (logits[a] == logits[b] && a < b); };

    if (params.strategy == Strategy::Greedy) {
        return *std::min_element(cand.begin(), cand.end(), by_score);
    }

    const double inv_t = 1.0 / params.temperature;
    std::stable_sort(cand.begin(), cand.end(), by_score);
    std::vector<double> probs(cand.size());
    const double top = logits[cand.front()] * inv_t;
    double total = 0.0;
    for (std::size_t i = 0; i < cand.size(); ++i) {
        probs[i] = std::exp(logits[cand[i]] * inv_t - top);
        total += probs[i];
    }
    std::size_t keep = cand.size();
    if (params.strategy == Strategy::TopK) {
        keep = std::min(keep, params.top_k);
    } else if (params.strategy == Strategy::TopP && params.top_p < 1.0) {
        double cum = 0.0;
        for (std::size_t i = 0; i < cand.size(); ++i) {
            cum += probs[i] / total;
            if (cum >= params.top_p) {
                keep = i + 1;
                break;
            }
        }
    }
    const double kept_mass = std::accumulate(probs.begin(), probs.begin() + static_cast<std::ptrdiff_t>(keep), 0.0);
    std::uniform_real_distribution<double> uni(0.0, 1.0);
    const double u = uni(rng) * kept_mass;
    double cum = 0.0;
    for (std::size_t i = 0; i < keep; ++i) {
        cum += probs[i];
        if (u < cum) return cand[i];
    }
    return cand[keep - 1];
}

TokenSequence generate(ModelRef model, const Vocabulary& vocab, std::span<const TokenId> prompt,
                       const GenerationParams& params) {
    params.validate();
    if (prompt.empty()) {
        throw Error(ErrorCode::InvalidArgument, "prompt is empty");
    }
    const std::size_t context = model.params->config.context_length;
    if (prompt.size() > context) {
        throw Error(ErrorCode::ContextOverflow, "prompt of " + std::to_string(prompt.size()) +
                                                    " tokens exceeds context length " + std::to_string(context));
    }
    std::mt19937_64 rng(params.seed);
    const TokenId banned[] = {vocab.bos(), vocab.pad()};
    TokenSequence seq(prompt.begin(), prompt.end());
    TokenSequence produced;
    const std::size_t vocab_size = model.params->config.vocab_size;
    while (produced.size() < params.max_new_tokens && seq.size() < context) {
        const Tensor out = logits(*model.params, model.adapters, seq);
        const std::span<const double> last = out.values().subspan((seq.size() - 1) * vocab_size, vocab_size);
        const TokenId next = sample_token(last, params, rng, banned);
        if (next == vocab.eos()) break;
        seq.push_back(next);
        produced.push_back(next);
    }
    return produced;
}

std::string answer(ModelRef model, const Vocabulary& vocab, std::string_view instruction,
                   const GenerationParams& params) {
    const std::string wrapped = render_test(instruction);
    TokenSequence prompt{vocab.bos()};
    const TokenSequence body = encode(vocab, wrapped);
    prompt.insert(prompt.end(), body.begin(), body.end());
    return decode(vocab, generate(model, vocab, prompt, params));
}

void run_repl(ModelRef model, const Vocabulary& vocab, const GenerationParams& params, std::istream& in,
              std::ostream& out, const ReplOptions& options) {
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (trim(line).empty()) continue;
        std::string response;
        std::size_t token_count = 0;
        std::string error;
        try {
            TokenSequence prompt{vocab.bos()};
            const TokenSequence body = encode(vocab, render_test(line));
            prompt.insert(prompt.end(), body.begin(), body.end());
            const TokenSequence produced = generate(model, vocab, prompt, params);
            token_count = produced.size();
            response = decode(vocab, produced);
        } catch (const Error& e) {
            error = e.what();
        }
        if (options.json) {
            nlohmann::ordered_json j;
            j["instruction"] = sanitize_utf8(line);
            j["response"] = response;
            j["token_count"] = token_count;
            if (!error.empty()) j["error"] = error;
            out << j.dump() << '\n';
        } else {
            out << (error.empty() ? response : "error: " + error) << "\n\n";
        }
        out.flush();
    }
}

}  // namespace lexforge
