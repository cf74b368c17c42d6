#include "lexforge/model.hpp"

#include "lexforge/errors.hpp"

#include <algorithm>
#include <cmath>
#include <memory>

namespace lexforge {

std::string_view stage_name(Stage stage) {
    switch (stage) {
        case Stage::Base: return "base";
        case Stage::LPT: return "LPT";
        case Stage::LFT: return "LFT";
    }
    return "base";
}

Stage parse_stage(std::string_view name) {
    if (name == "base") return Stage::Base;
    if (name == "LPT" || name == "lpt") return Stage::LPT;
    if (name == "LFT" || name == "lft") return Stage::LFT;
    throw Error(ErrorCode::ParseError, "unknown stage '" + std::string(name) + "'");
}

void TransformerConfig::validate() const {
    if (vocab_size == 0 || layers == 0 || heads == 0 || embed_dim == 0 || mlp_hidden_dim == 0) {
        throw Error(ErrorCode::InvalidArgument, "transformer dimensions must be positive");
    }
    if (context_length < 2) {
        throw Error(ErrorCode::InvalidArgument, "context_length must be at least 2");
    }
    if (embed_dim % heads != 0) {
        throw Error(ErrorCode::InvalidArgument, "embed_dim must be divisible by heads");
    }
}

std::vector<std::pair<std::string, Shape>> parameter_layout(const TransformerConfig& c) {
    c.validate();
    const std::size_t d = c.embed_dim;
    std::vector<std::pair<std::string, Shape>> out;
    out.emplace_back("tok_emb", Shape{c.vocab_size, d});
    out.emplace_back("pos_emb", Shape{c.context_length, d});
    for (std::size_t l = 0; l < c.layers; ++l) {
        const std::string p = "blocks." + std::to_string(l) + ".";
        out.emplace_back(p + "ln1.gamma", Shape{d});
        out.emplace_back(p + "ln1.beta", Shape{d});
        out.emplace_back(p + "attn.wq", Shape{d, d});
        out.emplace_back(p + "attn.wk", Shape{d, d});
        out.emplace_back(p + "attn.wv", Shape{d, d});
        out.emplace_back(p + "attn.wo", Shape{d, d});
        out.emplace_back(p + "ln2.gamma", Shape{d});
        out.emplace_back(p + "ln2.beta", Shape{d});
        out.emplace_back(p + "mlp.w1", Shape{c.mlp_hidden_dim, d});
        out.emplace_back(p + "mlp.b1", Shape{c.mlp_hidden_dim});
        out.emplace_back(p + "mlp.w2", Shape{d, c.mlp_hidden_dim});
        out.emplace_back(p + "mlp.b2", Shape{d});
    }
    out.emplace_back("ln_f.gamma", Shape{d});
    out.emplace_back("ln_f.beta", Shape{d});
    out.emplace_back("lm_head", Shape{c.vocab_size, d});
    return out;
}

Tensor& ModelParameters::at(const std::string& name) {
    auto it = tensors.find(name);
    if (it == tensors.end()) {
        throw Error(ErrorCode::ShapeError, "missing parameter " + name);
    }
    return it->second;
}

const Tensor& ModelParameters::at(const std::string& name) const {
    auto it = tensors.find(name);
    if (it == tensors.end()) {
        throw Error(ErrorCode::ShapeError, "missing parameter " + name);
    }
    return it->second;
}

namespace {

bool is_gain(const std::string& name) {
    return name.size() >= 6 && name.compare(name.size() - 6, 6, ".gamma") == 0;
}

bool is_bias(const std::string& name) {
    return is_gain(name) || (name.size() >= 5 && name.compare(name.size() - 5, 5, ".beta") == 0) ||
           name.ends_with(".b1") || name.ends_with(".b2");
}

}  // namespace

ModelParameters zero_parameters(const TransformerConfig& config) {
    ModelParameters p;
    p.config = config;
    for (auto& [name, shape] : parameter_layout(config)) {
        p.tensors.emplace(name, Tensor(shape, is_gain(name) ? 1.0 : 0.0));
    }
    return p;
}

ModelParameters init_parameters(const TransformerConfig& config, std::uint64_t seed) {
    ModelParameters p = zero_parameters(config);
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    const double d = static_cast<double>(config.embed_dim);
    const double h = static_cast<double>(config.mlp_hidden_dim);
    // Layout order (not map order) so the stream of draws is stable.
    for (auto& [name, shape] : parameter_layout(config)) {
        if (is_bias(name)) continue;
        double stddev = 1.0 / std::sqrt(d);
        if (name == "tok_emb" || name == "pos_emb") {
            stddev = 1.0;
        } else if (name.ends_with("mlp.w2")) {
            stddev = 1.0 / std::sqrt(h);
        } else if (name == "lm_head") {
            // The unembedding stays frozen through both adapter stages, so it
            // must already be able to express confident predictions.
            stddev = 4.0 / std::sqrt(d);
        }
        for (double& v : p.at(name).values()) {
            v = normal(rng) * stddev;
        }
    }
    return p;
}

std::string_view lora_target_name(LoraTarget target) {
    switch (target) {
        case LoraTarget::Query: return "query";
        case LoraTarget::Key: return "key";
        case LoraTarget::Value: return "value";
        case LoraTarget::Output: return "output";
        case LoraTarget::MlpUp: return "mlp_up";
        case LoraTarget::MlpDown: return "mlp_down";
    }
    return "query";
}

std::string_view lora_target_weight(LoraTarget target) {
    switch (target) {
        case LoraTarget::Query: return "attn.wq";
        case LoraTarget::Key: return "attn.wk";
        case LoraTarget::Value: return "attn.wv";
        case LoraTarget::Output: return "attn.wo";
        case LoraTarget::MlpUp: return "mlp.w1";
        case LoraTarget::MlpDown: return "mlp.w2";
    }
    return "attn.wq";
}

LoraTarget parse_lora_target(std::string_view name) {
    if (name == "query" || name == "q" || name == "wq") return LoraTarget::Query;
    if (name == "key" || name == "k" || name == "wk") return LoraTarget::Key;
    if (name == "value" || name == "v" || name == "wv") return LoraTarget::Value;
    if (name == "output" || name == "o" || name == "wo") return LoraTarget::Output;
    if (name == "mlp_up" || name == "w1") return LoraTarget::MlpUp;
    if (name == "mlp_down" || name == "w2") return LoraTarget::MlpDown;
    throw Error(ErrorCode::ParseError, "unknown LoRA target '" + std::string(name) + "'");
}

void LoraConfig::validate() const {
    if (rank == 0) throw Error(ErrorCode::InvalidArgument, "LoRA rank must be positive");
    if (!(alpha > 0.0)) throw Error(ErrorCode::InvalidArgument, "LoRA alpha must be positive");
    if (!(dropout >= 0.0 && dropout < 1.0)) throw Error(ErrorCode::InvalidArgument, "LoRA dropout must be in [0,1)");
    if (targets.empty()) throw Error(ErrorCode::InvalidArgument, "LoRA needs at least one target");
}

std::vector<std::pair<std::string, Tensor*>> LoraAdapters::trainable() {
    std::vector<std::pair<std::string, Tensor*>> out;
    for (auto& [name, f] : factors) {
        out.emplace_back(name + ".A", &f.a);
        out.emplace_back(name + ".B", &f.b);
    }
    return out;
}

std::vector<std::pair<std::string, const Tensor*>> LoraAdapters::trainable() const {
    std::vector<std::pair<std::string, const Tensor*>> out;
    for (const auto& [name, f] : factors) {
        out.emplace_back(name + ".A", &f.a);
        out.emplace_back(name + ".B", &f.b);
    }
    return out;
}

LoraAdapters init_adapters(const TransformerConfig& model, const LoraConfig& config, Stage stage,
                           std::uint64_t seed) {
    model.validate();
    config.validate();
    const std::size_t d = model.embed_dim;
    if (config.rank > std::min(d, model.mlp_hidden_dim)) {
        throw Error(ErrorCode::InvalidArgument, "LoRA rank " + std::to_string(config.rank) +
                                                    " exceeds a target dimension");
    }
    LoraAdapters a;
    a.config = config;
    a.stage = stage;
    a.scale = config.scale();
    std::mt19937_64 rng(seed);
    const double bound = 1.0 / static_cast<double>(config.rank);
    std::uniform_real_distribution<double> uni(-bound, bound);
    for (std::size_t l = 0; l < model.layers; ++l) {
        for (LoraTarget t : config.targets) {
            const std::string name = "blocks." + std::to_string(l) + "." + std::string(lora_target_weight(t));
            if (a.factors.contains(name)) continue;
            const std::size_t in = t == LoraTarget::MlpDown ? model.mlp_hidden_dim : d;
            const std::size_t out = t == LoraTarget::MlpUp ? model.mlp_hidden_dim : d;
            LoraFactors f{Tensor({config.rank, in}), Tensor({out, config.rank}, 0.0)};
            for (double& v : f.a.values()) v = uni(rng);
            a.factors.emplace(name, std::move(f));
        }
    }
    return a;
}

ModelParameters merge_lora(const ModelParameters& params, const LoraAdapters& adapters) {
    ModelParameters out = params;
    out.stage = adapters.stage;
    for (const auto& [name, f] : adapters.factors) {
        Tensor& w = out.at(name);
        if (w.rank() != 2 || f.a.rank() != 2 || f.b.rank() != 2 || f.b.shape()[1] != f.a.shape()[0] ||
            f.b.shape()[0] != w.shape()[0] || f.a.shape()[1] != w.shape()[1]) {
            throw Error(ErrorCode::ShapeError, "adapter for " + name + " (A " + shape_string(f.a.shape()) +
                                                   ", B " + shape_string(f.b.shape()) + ") does not fit " +
                                                   shape_string(w.shape()));
        }
        const std::size_t rows = w.shape()[0];
        const std::size_t cols = w.shape()[1];
        const std::size_t rank = f.a.shape()[0];
        for (std::size_t o = 0; o < rows; ++o) {
            for (std::size_t i = 0; i < cols; ++i) {
                double acc = 0.0;
                for (std::size_t r = 0; r < rank; ++r) {
                    acc += f.b.at(o, r) * f.a.at(r, i);
                }
                w.at(o, i) += adapters.scale * acc;
            }
        }
    }
    return out;
}

namespace {

template <class Params, class Adapters>
Var forward_impl(Graph& g, Params& params, Adapters* adapters, std::span<const TokenId> tokens,
                 const ForwardOptions& opt) {
    const TransformerConfig& c = params.config;
    if (tokens.empty()) {
        throw Error(ErrorCode::InvalidArgument, "forward on an empty sequence");
    }
    if (tokens.size() > c.context_length) {
        throw Error(ErrorCode::ContextOverflow, std::to_string(tokens.size()) + " tokens exceed context length " +
                                                    std::to_string(c.context_length));
    }
    for (TokenId id : tokens) {
        if (id >= c.vocab_size) {
            throw Error(ErrorCode::UnknownToken, "token id " + std::to_string(id) + " >= vocab size " +
                                                     std::to_string(c.vocab_size));
        }
    }
    const bool train = opt.mode == Mode::Train;
    const double lora_dropout = adapters != nullptr ? adapters->config.dropout : 0.0;
    if (train && lora_dropout > 0.0 && opt.rng == nullptr) {
        throw Error(ErrorCode::InvalidArgument, "train-mode forward needs an RNG for adapter dropout");
    }

    std::span<const bool> key_valid;
    std::unique_ptr<bool[]> key_valid_buf;
    if (opt.pad_id) {
        key_valid_buf = std::make_unique<bool[]>(tokens.size());
        for (std::size_t i = 0; i < tokens.size(); ++i) {
            key_valid_buf[i] = tokens[i] != *opt.pad_id;
        }
        key_valid = std::span<const bool>(key_valid_buf.get(), tokens.size());
    }

    std::vector<TokenId> positions(tokens.size());
    for (std::size_t i = 0; i < positions.size(); ++i) positions[i] = static_cast<TokenId>(i);

    auto P = [&](const std::string& name) { return g.param(params.at(name)); };

    // Frozen projection plus, when adapted, scale * (dropout(x) A^T) B^T.
    auto project = [&](Var x, const std::string& name) {
        Var y = ops::matmul_nt(x, P(name));
        if (adapters == nullptr) return y;
        auto it = adapters->factors.find(name);
        if (it == adapters->factors.end()) return y;
        Var a = g.param(it->second.a);
        Var b = g.param(it->second.b);
        Var xin = (train && lora_dropout > 0.0) ? ops::dropout(x, lora_dropout, *opt.rng) : x;
        Var low = ops::matmul_nt(ops::matmul_nt(xin, a), b);
        return ops::add(y, ops::scale(low, adapters->scale));
    };

    Var x = ops::add(ops::embedding(P("tok_emb"), tokens), ops::embedding(P("pos_emb"), positions));
    for (std::size_t l = 0; l < c.layers; ++l) {
        const std::string p = "blocks." + std::to_string(l) + ".";
        Var h = ops::layer_norm(x, P(p + "ln1.gamma"), P(p + "ln1.beta"));
        Var q = project(h, p + "attn.wq");
        Var k = project(h, p + "attn.wk");
        Var v = project(h, p + "attn.wv");
        Var att = ops::causal_attention(q, k, v, c.heads, key_valid);
        x = ops::add(x, project(att, p + "attn.wo"));
        Var h2 = ops::layer_norm(x, P(p + "ln2.gamma"), P(p + "ln2.beta"));
        Var m = ops::gelu(ops::add_bias(project(h2, p + "mlp.w1"), P(p + "mlp.b1")));
        x = ops::add(x, ops::add_bias(project(m, p + "mlp.w2"), P(p + "mlp.b2")));
    }
    Var hf = ops::layer_norm(x, P("ln_f.gamma"), P("ln_f.beta"));
    return ops::matmul_nt(hf, P("lm_head"));
}

}  // namespace

Var forward(Graph& graph, ModelParameters& params, LoraAdapters* adapters, std::span<const TokenId> tokens,
            const ForwardOptions& options) {
    return forward_impl(graph, params, adapters, tokens, options);
}

Var forward(Graph& graph, const ModelParameters& params, LoraAdapters* adapters, std::span<const TokenId> tokens,
            const ForwardOptions& options) {
    return forward_impl(graph, params, adapters, tokens, options);
}

Var forward(Graph& graph, const ModelParameters& params, const LoraAdapters* adapters,
            std::span<const TokenId> tokens, const ForwardOptions& options) {
    return forward_impl(graph, params, adapters, tokens, options);
}

Tensor logits(const ModelParameters& params, const LoraAdapters* adapters, std::span<const TokenId> tokens) {
    Graph g;
    return forward(g, params, adapters, tokens, ForwardOptions{}).to_tensor();
}

}  // namespace lexforge
