#include "lexforge/training.hpp"

#include "lexforge/errors.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <utility>

namespace lexforge {

TrainConfig TrainConfig::defaults(Stage stage) {
    TrainConfig c;
    c.stage = stage;
    c.learning_rate = 3e-4;
    c.lora.dropout = 0.05;
    if (stage == Stage::LFT) {
        c.lora.rank = 8;
        c.lora.alpha = 16.0;
        c.batch_size = 64;
        c.epochs = 20;
    } else {
        c.lora.rank = 16;
        c.lora.alpha = 32.0;
        c.batch_size = 128;
        c.epochs = 1;
    }
    return c;
}

void TrainConfig::validate() const {
    if (stage == Stage::Base) {
        throw Error(ErrorCode::InvalidArgument, "training stage must be LPT or LFT");
    }
    lora.validate();
    if (!(learning_rate > 0.0)) throw Error(ErrorCode::InvalidArgument, "learning rate must be positive");
    if (batch_size == 0) throw Error(ErrorCode::InvalidArgument, "batch size must be positive");
    if (grad_clip && !(*grad_clip > 0.0)) throw Error(ErrorCode::InvalidArgument, "grad_clip must be positive");
}

namespace {

void check_logits(Var logits, std::size_t n) {
    if (logits.shape().size() != 2 || logits.shape()[0] != n) {
        throw Error(ErrorCode::ShapeError, "logits " + shape_string(logits.shape()) + " for " + std::to_string(n) +
                                               " tokens");
    }
}

}  // namespace

Var lpt_loss(Var logits, std::span<const TokenId> tokens) {
    if (tokens.size() < 2) {
        throw Error(ErrorCode::NoTargets, "a sequence needs at least 2 tokens to have a prediction target");
    }
    check_logits(logits, tokens.size());
    std::vector<ops::Target> targets;
    targets.reserve(tokens.size() - 1);
    for (std::size_t i = 1; i < tokens.size(); ++i) {
        targets.push_back({i - 1, tokens[i]});
    }
    return ops::mean_nll(logits, targets);
}

Var lft_loss(Var logits, const TrainExample& example) {
    if (example.output_index_set.empty()) {
        throw Error(ErrorCode::EmptyOutputMask, "example has no output positions");
    }
    const std::size_t n = example.tokens.size();
    check_logits(logits, n);
    std::vector<ops::Target> targets;
    targets.reserve(example.output_index_set.size());
    for (std::size_t i : example.output_index_set) {
        if (i == 0 || i >= n) {
            throw Error(ErrorCode::InvalidArgument, "output index " + std::to_string(i) + " outside [1, " +
                                                        std::to_string(n) + ")");
        }
        targets.push_back({i - 1, example.tokens[i]});
    }
    return ops::mean_nll(logits, targets);
}

std::vector<TrainExample> lpt_windows(std::span<const TokenSequence> documents, std::size_t context_length,
                                      TokenId bos, TokenId eos) {
    if (context_length < 2) {
        throw Error(ErrorCode::InvalidArgument, "context length must be at least 2");
    }
    std::vector<TrainExample> out;
    for (const TokenSequence& doc : documents) {
        TokenSequence stream;
        stream.reserve(doc.size() + 2);
        stream.push_back(bos);
        stream.insert(stream.end(), doc.begin(), doc.end());
        stream.push_back(eos);
        for (std::size_t start = 0; start < stream.size(); start += context_length) {
            const std::size_t len = std::min(context_length, stream.size() - start);
            if (len < 2) break;
            TrainExample ex;
            ex.tokens.assign(stream.begin() + static_cast<std::ptrdiff_t>(start),
                             stream.begin() + static_cast<std::ptrdiff_t>(start + len));
            ex.output_index_set.resize(len - 1);
            std::iota(ex.output_index_set.begin(), ex.output_index_set.end(), std::size_t{1});
            out.push_back(std::move(ex));
        }
    }
    return out;
}

void adam_step(std::span<const NamedTensor> params, AdamState& state, const AdamConfig& config) {
    for (const NamedTensor& p : params) {
        if (!p.tensor->has_grad() || p.tensor->grad().size() != p.tensor->size()) {
            throw Error(ErrorCode::ShapeError, "parameter " + p.name + " has no gradient of matching size");
        }
        auto it = state.moments.find(p.name);
        if (it != state.moments.end() &&
            (it->second.m.size() != p.tensor->size() || it->second.v.size() != p.tensor->size())) {
            throw Error(ErrorCode::ShapeError, "optimizer state for " + p.name + " does not match its gradient");
        }
    }
    state.step += 1;
    const double t = static_cast<double>(state.step);
    const double bc1 = 1.0 - std::pow(config.beta1, t);
    const double bc2 = 1.0 - std::pow(config.beta2, t);
    for (const NamedTensor& p : params) {
        AdamMoments& mom = state.moments[p.name];
        if (mom.m.empty()) {
            mom.m.assign(p.tensor->size(), 0.0);
            mom.v.assign(p.tensor->size(), 0.0);
        }
        auto values = p.tensor->values();
        const auto grad = std::as_const(*p.tensor).grad();
        for (std::size_t i = 0; i < values.size(); ++i) {
            const double gi = grad[i];
            mom.m[i] = config.beta1 * mom.m[i] + (1.0 - config.beta1) * gi;
            mom.v[i] = config.beta2 * mom.v[i] + (1.0 - config.beta2) * gi * gi;
            const double mhat = mom.m[i] / bc1;
            const double vhat = mom.v[i] / bc2;
            values[i] -= config.learning_rate * (mhat / (std::sqrt(vhat) + config.epsilon) +
                                                 config.weight_decay * values[i]);
        }
    }
}

double clip_grad_norm(std::span<const NamedTensor> params, double max_norm) {
    double sq = 0.0;
    for (const NamedTensor& p : params) {
        for (double g : std::as_const(*p.tensor).grad()) sq += g * g;
    }
    const double norm = std::sqrt(sq);
    if (norm > max_norm && norm > 0.0) {
        const double factor = max_norm / norm;
        for (const NamedTensor& p : params) {
            for (double& g : p.tensor->grad()) g *= factor;
        }
    }
    return norm;
}

Batch assemble_batch(std::span<const TrainExample* const> examples, TokenId pad) {
    Batch b;
    std::size_t longest = 0;
    for (const TrainExample* ex : examples) longest = std::max(longest, ex->tokens.size());
    for (const TrainExample* ex : examples) {
        TokenSequence row = ex->tokens;
        row.resize(longest, pad);
        b.rows.push_back(std::move(row));
        b.lengths.push_back(ex->tokens.size());
        b.output_index_sets.push_back(ex->output_index_set);
    }
    return b;
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
    std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (stream + 1);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

StageResult run_stage(const TrainConfig& config, std::span<const TrainExample> data, const ModelParameters& init,
                      TokenId pad, const ProgressFn& progress) {
    config.validate();
    if (data.empty()) {
        throw Error(ErrorCode::NoData, "no training examples");
    }
    const Stage required = config.stage == Stage::LPT ? Stage::Base : Stage::LPT;
    if (init.stage != required) {
        throw Error(ErrorCode::StagePrecondition, std::string(stage_name(config.stage)) + " must start from a " +
                                                      std::string(stage_name(required)) + " model, got " +
                                                      std::string(stage_name(init.stage)));
    }

    StageResult result{init, init_adapters(init.config, config.lora, config.stage, derive_seed(config.seed, 0)),
                       AdamState{}, StageReport{}};

    std::vector<const TrainExample*> usable;
    for (const TrainExample& ex : data) {
        if (ex.tokens.size() > init.config.context_length || ex.tokens.size() < 2 || ex.output_index_set.empty()) {
            ++result.report.dropped_examples;
            continue;
        }
        usable.push_back(&ex);
    }
    if (usable.empty()) {
        throw Error(ErrorCode::NoData, "every training example was dropped");
    }

    std::vector<NamedTensor> trainable;
    for (auto& [name, tensor] : result.adapters.trainable()) {
        tensor->set_requires_grad(true);
        tensor->zero_grad();
        trainable.push_back({name, tensor});
    }

    std::mt19937_64 shuffle_rng(derive_seed(config.seed, 1));
    std::mt19937_64 dropout_rng(derive_seed(config.seed, 2));
    const AdamConfig adam{config.learning_rate};
    const ModelParameters& frozen = result.params;
    ForwardOptions fopt{Mode::Train, &dropout_rng, pad};

    std::vector<std::size_t> order(usable.size());
    for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
        std::iota(order.begin(), order.end(), std::size_t{0});
        std::shuffle(order.begin(), order.end(), shuffle_rng);
        double epoch_loss = 0.0;
        std::size_t epoch_batches = 0;
        for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
            const std::size_t end = std::min(order.size(), start + config.batch_size);
            std::vector<const TrainExample*> members;
            for (std::size_t i = start; i < end; ++i) members.push_back(usable[order[i]]);
            const Batch batch = assemble_batch(members, pad);
            const double weight = 1.0 / static_cast<double>(members.size());

            // Per-row graphs; scaling each row's loss by 1/B accumulates the
            // gradient of the batch mean without holding every row's activations.
            double batch_loss = 0.0;
            for (std::size_t r = 0; r < batch.rows.size(); ++r) {
                Graph g;
                Var out = forward(g, frozen, &result.adapters, batch.rows[r], fopt);
                TrainExample view{batch.rows[r], batch.output_index_sets[r]};
                Var loss = lft_loss(out, view);
                batch_loss += loss.item();
                g.backward(ops::scale(loss, weight));
            }
            batch_loss *= weight;

            if (config.grad_clip) {
                clip_grad_norm(trainable, *config.grad_clip);
            }
            adam_step(trainable, result.optimizer, adam);
            for (NamedTensor& t : trainable) t.tensor->zero_grad();

            ++result.report.steps;
            epoch_loss += batch_loss;
            ++epoch_batches;
            if (progress) progress(epoch, result.report.steps, batch_loss);
        }
        result.report.epoch_mean_loss.push_back(epoch_loss / static_cast<double>(epoch_batches));
    }
    for (NamedTensor& t : trainable) {
        t.tensor->clear_grad();
        t.tensor->set_requires_grad(false);
    }
    return result;
}

double evaluate_loss(const ModelParameters& params, const LoraAdapters* adapters,
                     std::span<const TrainExample> data) {
    if (data.empty()) {
        throw Error(ErrorCode::NoData, "no examples to evaluate");
    }
    double total = 0.0;
    for (const TrainExample& ex : data) {
        Graph g;
        Var out = forward(g, params, adapters, ex.tokens);
        total += lft_loss(out, ex).item();
    }
    return total / static_cast<double>(data.size());
}

}  // namespace lexforge
