#pragma once

#include "lexforge/autograd.hpp"
#include "lexforge/tensor.hpp"
#include "lexforge/tokenizer.hpp"

#include <cstdint>
#include <map>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace lexforge {

enum class Stage { Base, LPT, LFT };

std::string_view stage_name(Stage stage);
Stage parse_stage(std::string_view name);

struct TransformerConfig {
    std::size_t vocab_size = 0;
    std::size_t context_length = 0;
    std::size_t layers = 0;
    std::size_t heads = 0;
    std::size_t embed_dim = 0;
    std::size_t mlp_hidden_dim = 0;

    void validate() const;
    friend bool operator==(const TransformerConfig&, const TransformerConfig&) = default;
};

// Pre-norm decoder. Tensor names:
//   tok_emb [V, d], pos_emb [C, d]
//   blocks.{l}.ln1.{gamma,beta} [d]
//   blocks.{l}.attn.{wq,wk,wv,wo} [d, d]
//   blocks.{l}.ln2.{gamma,beta} [d]
//   blocks.{l}.mlp.w1 [h, d], blocks.{l}.mlp.b1 [h], blocks.{l}.mlp.w2 [d, h], blocks.{l}.mlp.b2 [d]
//   ln_f.{gamma,beta} [d], lm_head [V, d]
std::vector<std::pair<std::string, Shape>> parameter_layout(const TransformerConfig& config);

struct ModelParameters {
    TransformerConfig config;
    Stage stage = Stage::Base;
    std::map<std::string, Tensor> tensors;

    Tensor& at(const std::string& name);
    const Tensor& at(const std::string& name) const;
};

// All tensors zero except layer-norm gains, which are 1.
ModelParameters zero_parameters(const TransformerConfig& config);
// Seeded random initialisation of a stand-in base model.
ModelParameters init_parameters(const TransformerConfig& config, std::uint64_t seed);

enum class LoraTarget { Query, Key, Value, Output, MlpUp, MlpDown };

std::string_view lora_target_name(LoraTarget target);
// Per-block weight the target adapts, e.g. "attn.wq" or "mlp.w1".
std::string_view lora_target_weight(LoraTarget target);
LoraTarget parse_lora_target(std::string_view name);

struct LoraConfig {
    std::size_t rank = 8;
    double alpha = 16.0;
    double dropout = 0.05;
    std::vector<LoraTarget> targets{LoraTarget::Query, LoraTarget::Value};

    double scale() const { return alpha / static_cast<double>(rank); }
    void validate() const;
    friend bool operator==(const LoraConfig&, const LoraConfig&) = default;
};

struct LoraFactors {
    Tensor a;  // [rank, in]
    Tensor b;  // [out, rank]
};

struct LoraAdapters {
    LoraConfig config;
    Stage stage = Stage::LPT;
    double scale = 0.0;
    // Keyed by the adapted weight's name, e.g. "blocks.0.attn.wq".
    std::map<std::string, LoraFactors> factors;

    // Every A and B factor, in key order: A then B per target.
    std::vector<std::pair<std::string, Tensor*>> trainable();
    std::vector<std::pair<std::string, const Tensor*>> trainable() const;
};

// A ~ U(-1/rank, 1/rank) from `seed`, B = 0.
LoraAdapters init_adapters(const TransformerConfig& model, const LoraConfig& config, Stage stage,
                           std::uint64_t seed);

// W + scale * B * A for every adapted weight; result carries the adapters' stage.
ModelParameters merge_lora(const ModelParameters& params, const LoraAdapters& adapters);

enum class Mode { Train, Eval };

struct ForwardOptions {
    Mode mode = Mode::Eval;
    // Source of adapter-dropout masks; required in Train mode when dropout > 0.
    std::mt19937_64* rng = nullptr;
    // Keys holding this id are hidden from attention.
    std::optional<TokenId> pad_id;
};

// Logits [T, vocab] recorded on `graph`. Non-const parameters bind as
// trainable leaves (per Tensor::requires_grad); const ones as constants.
Var forward(Graph& graph, ModelParameters& params, LoraAdapters* adapters, std::span<const TokenId> tokens,
            const ForwardOptions& options = {});
Var forward(Graph& graph, const ModelParameters& params, LoraAdapters* adapters, std::span<const TokenId> tokens,
            const ForwardOptions& options = {});
Var forward(Graph& graph, const ModelParameters& params, const LoraAdapters* adapters,
            std::span<const TokenId> tokens, const ForwardOptions& options = {});

// Eval-mode convenience: plain logits tensor.
Tensor logits(const ModelParameters& params, const LoraAdapters* adapters, std::span<const TokenId> tokens);

}  // namespace lexforge
