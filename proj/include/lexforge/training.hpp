#pragma once

#include "lexforge/autograd.hpp"
#include "lexforge/model.hpp"
#include "lexforge/tokenizer.hpp"

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace lexforge {

struct TrainConfig {
    Stage stage = Stage::LPT;
    LoraConfig lora;
    double learning_rate = 3e-4;
    std::size_t batch_size = 128;
    std::size_t epochs = 1;
    std::uint64_t seed = 0;
    std::optional<double> grad_clip;

    // Stage defaults: LPT rank 16 / alpha 32 / batch 128 / 1 epoch,
    // LFT rank 8 / alpha 16 / batch 64 / 20 epochs; both dropout 0.05, lr 3e-4.
    static TrainConfig defaults(Stage stage);
    void validate() const;
    friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

// A token sequence plus the positions whose prediction is scored. For LPT
// windows this is every position from 1; for instruction data it is the
// response tokens and the closing EOS.
struct TrainExample {
    TokenSequence tokens;
    std::vector<std::size_t> output_index_set;
};

// Mean over i in [1, n) of -log softmax(logits[i-1])[tokens[i]].
Var lpt_loss(Var logits, std::span<const TokenId> tokens);
// Same, restricted to i in example.output_index_set.
Var lft_loss(Var logits, const TrainExample& example);

// Splits each document's [BOS] + doc + [EOS] stream into non-overlapping
// windows of at most `context_length` tokens; windows shorter than 2 are dropped.
std::vector<TrainExample> lpt_windows(std::span<const TokenSequence> documents, std::size_t context_length,
                                      TokenId bos, TokenId eos);

struct AdamConfig {
    double learning_rate = 3e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    double weight_decay = 0.0;
};

struct AdamMoments {
    std::vector<double> m;
    std::vector<double> v;
};

struct AdamState {
    std::uint64_t step = 0;
    std::map<std::string, AdamMoments> moments;
};

struct NamedTensor {
    std::string name;
    Tensor* tensor = nullptr;
};

// One bias-corrected AdamW update of every tensor from its gradient accumulator.
void adam_step(std::span<const NamedTensor> params, AdamState& state, const AdamConfig& config);

// Rescales all gradients so their joint L2 norm is at most `max_norm`; returns the pre-clip norm.
double clip_grad_norm(std::span<const NamedTensor> params, double max_norm);

// Rows right-padded with PAD to the longest member.
struct Batch {
    std::vector<TokenSequence> rows;
    std::vector<std::size_t> lengths;
    std::vector<std::vector<std::size_t>> output_index_sets;
};

Batch assemble_batch(std::span<const TrainExample* const> examples, TokenId pad);

struct StageReport {
    std::size_t steps = 0;
    std::size_t dropped_examples = 0;
    std::vector<double> epoch_mean_loss;
};

struct StageResult {
    ModelParameters params;  // bit-identical to the init parameters
    LoraAdapters adapters;
    AdamState optimizer;
    StageReport report;
};

// splitmix64 finaliser; independent stream seeds from one user seed. run_stage
// uses streams 0 (adapter init), 1 (shuffle) and 2 (dropout).
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);

using ProgressFn = std::function<void(std::size_t epoch, std::size_t step, double batch_loss)>;

// Trains fresh adapters for `config.stage` over frozen `init` parameters.
// LPT expects a base model, LFT a model whose stage is LPT.
StageResult run_stage(const TrainConfig& config, std::span<const TrainExample> data, const ModelParameters& init,
                      TokenId pad, const ProgressFn& progress = {});

// Eval-mode mean of the masked loss over `data`.
double evaluate_loss(const ModelParameters& params, const LoraAdapters* adapters,
                     std::span<const TrainExample> data);

}  // namespace lexforge
