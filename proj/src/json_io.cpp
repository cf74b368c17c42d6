#include "lexforge/json_io.hpp"

#include "lexforge/errors.hpp"

namespace lexforge {

void to_json(nlohmann::json& j, const TransformerConfig& c) {
    j = {{"vocab_size", c.vocab_size}, {"context_length", c.context_length}, {"layers", c.layers},
         {"heads", c.heads},           {"embed_dim", c.embed_dim},           {"mlp_hidden_dim", c.mlp_hidden_dim}};
}

void from_json(const nlohmann::json& j, TransformerConfig& c) {
    c.vocab_size = j.value("vocab_size", c.vocab_size);
    c.context_length = j.value("context_length", c.context_length);
    c.layers = j.value("layers", c.layers);
    c.heads = j.value("heads", c.heads);
    c.embed_dim = j.value("embed_dim", c.embed_dim);
    c.mlp_hidden_dim = j.value("mlp_hidden_dim", c.mlp_hidden_dim);
}

void to_json(nlohmann::json& j, const LoraConfig& c) {
    nlohmann::json targets = nlohmann::json::array();
    for (LoraTarget t : c.targets) targets.push_back(std::string(lora_target_name(t)));
    j = {{"rank", c.rank}, {"alpha", c.alpha}, {"dropout", c.dropout}, {"targets", targets}};
}

void from_json(const nlohmann::json& j, LoraConfig& c) {
    c.rank = j.value("rank", c.rank);
    c.alpha = j.value("alpha", c.alpha);
    c.dropout = j.value("dropout", c.dropout);
    if (j.contains("targets")) {
        c.targets.clear();
        for (const auto& t : j.at("targets")) c.targets.push_back(parse_lora_target(t.get<std::string>()));
    }
}

void to_json(nlohmann::json& j, const TrainConfig& c) {
    j = {{"stage", std::string(stage_name(c.stage))},
         {"lora", c.lora},
         {"learning_rate", c.learning_rate},
         {"batch_size", c.batch_size},
         {"epochs", c.epochs},
         {"seed", c.seed},
         {"grad_clip", c.grad_clip ? nlohmann::json(*c.grad_clip) : nlohmann::json(nullptr)}};
}

void from_json(const nlohmann::json& j, TrainConfig& c) {
    if (j.contains("stage")) {
        const Stage stage = parse_stage(j.at("stage").get<std::string>());
        if (stage != c.stage) c = TrainConfig::defaults(stage);
    }
    if (j.contains("lora")) {
        LoraConfig lora = c.lora;
        from_json(j.at("lora"), lora);
        c.lora = lora;
    }
    c.learning_rate = j.value("learning_rate", c.learning_rate);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.epochs = j.value("epochs", c.epochs);
    c.seed = j.value("seed", c.seed);
    if (j.contains("grad_clip")) {
        const auto& gc = j.at("grad_clip");
        c.grad_clip = gc.is_null() ? std::nullopt : std::optional<double>(gc.get<double>());
    }
}

}  // namespace lexforge
