#include "lexforge/checkpoint.hpp"

#include "lexforge/errors.hpp"
#include "lexforge/json_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

namespace lexforge {

std::uint64_t fnv1a64(std::string_view bytes) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (char c : bytes) {
        h ^= static_cast<unsigned char>(c);
        h *= 0x100000001b3ULL;
    }
    return h;
}

Checkpoint make_checkpoint(const TrainConfig& config, StageResult result) {
    Checkpoint ckpt;
    ckpt.step_count = result.report.steps;
    ckpt.seed = config.seed;
    ckpt.train_config = config;
    ckpt.params = std::move(result.params);
    ckpt.adapters = std::move(result.adapters);
    return ckpt;
}

ModelParameters effective_parameters(const Checkpoint& ckpt) {
    return ckpt.adapters ? merge_lora(ckpt.params, *ckpt.adapters) : ckpt.params;
}

namespace {

void put_u64(std::string& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) {
        out += static_cast<char>((v >> (8 * i)) & 0xFF);
    }
}

std::uint64_t get_u64(std::string_view in) {
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) {
        v |= static_cast<std::uint64_t>(static_cast<unsigned char>(in[i])) << (8 * i);
    }
    return v;
}

struct Entry {
    std::string name;
    const Tensor* tensor;
};

[[noreturn]] void corrupt(const std::string& why) { throw Error(ErrorCode::ChecksumError, why); }

}  // namespace

std::string serialize_checkpoint(const Checkpoint& ckpt) {
    std::vector<Entry> entries;
    for (const auto& [name, t] : ckpt.params.tensors) entries.push_back({"param/" + name, &t});
    if (ckpt.adapters) {
        for (const auto& [name, t] : ckpt.adapters->trainable()) entries.push_back({"lora/" + name, t});
    }

    nlohmann::json tensors = nlohmann::json::array();
    std::string payload;
    for (const Entry& e : entries) {
        tensors.push_back({{"name", e.name}, {"dtype", "f64"}, {"shape", e.tensor->shape()}, {"offset", payload.size()}});
        for (double v : e.tensor->values()) put_u64(payload, std::bit_cast<std::uint64_t>(v));
    }

    nlohmann::json manifest = {
        {"stage", std::string(stage_name(ckpt.stage()))},
        {"params_stage", std::string(stage_name(ckpt.params.stage))},
        {"step_count", ckpt.step_count},
        {"seed", ckpt.seed},
        {"model", ckpt.params.config},
        {"train_config", ckpt.train_config ? nlohmann::json(*ckpt.train_config) : nlohmann::json(nullptr)},
        {"tensors", tensors},
        {"payload_bytes", payload.size()},
    };
    if (ckpt.adapters) {
        manifest["lora"] = {{"config", ckpt.adapters->config},
                            {"stage", std::string(stage_name(ckpt.adapters->stage))},
                            {"scale", ckpt.adapters->scale}};
    } else {
        manifest["lora"] = nullptr;
    }

    std::string out(kCheckpointMagic);
    out += '\n';
    out += manifest.dump();
    out += '\n';
    out += payload;
    put_u64(out, fnv1a64(payload));
    return out;
}

Checkpoint parse_checkpoint(std::string_view bytes) {
    const std::size_t nl = bytes.find('\n');
    if (nl == std::string_view::npos) corrupt("no header line");
    const std::string_view magic = bytes.substr(0, nl);
    if (magic != kCheckpointMagic) {
        if (magic.starts_with("lexforge-ckpt-")) {
            throw Error(ErrorCode::VersionError, "unsupported checkpoint format '" + std::string(magic) + "'");
        }
        corrupt("not a lexforge checkpoint");
    }
    const std::size_t nl2 = bytes.find('\n', nl + 1);
    if (nl2 == std::string_view::npos) corrupt("manifest truncated");
    nlohmann::json manifest;
    try {
        manifest = nlohmann::json::parse(bytes.substr(nl + 1, nl2 - nl - 1));
    } catch (const nlohmann::json::exception& e) {
        corrupt(std::string("manifest unreadable: ") + e.what());
    }

    try {
        const std::size_t payload_bytes = manifest.at("payload_bytes").get<std::size_t>();
        const std::size_t begin = nl2 + 1;
        if (bytes.size() != begin + payload_bytes + 8) {
            corrupt("file holds " + std::to_string(bytes.size()) + " bytes, manifest implies " +
                    std::to_string(begin + payload_bytes + 8));
        }
        const std::string_view payload = bytes.substr(begin, payload_bytes);
        if (fnv1a64(payload) != get_u64(bytes.substr(begin + payload_bytes, 8))) {
            corrupt("payload hash mismatch");
        }

        Checkpoint ckpt;
        ckpt.step_count = manifest.at("step_count").get<std::uint64_t>();
        ckpt.seed = manifest.at("seed").get<std::uint64_t>();
        if (!manifest.at("train_config").is_null()) {
            TrainConfig tc = TrainConfig::defaults(parse_stage(manifest.at("train_config").at("stage").get<std::string>()));
            from_json(manifest.at("train_config"), tc);
            ckpt.train_config = tc;
        }
        ckpt.params.config = manifest.at("model").get<TransformerConfig>();
        ckpt.params.stage = parse_stage(manifest.at("params_stage").get<std::string>());
        const auto& lora = manifest.at("lora");
        if (!lora.is_null()) {
            LoraAdapters a;
            a.config = lora.at("config").get<LoraConfig>();
            a.stage = parse_stage(lora.at("stage").get<std::string>());
            a.scale = lora.at("scale").get<double>();
            ckpt.adapters = std::move(a);
        }

        for (const auto& entry : manifest.at("tensors")) {
            const std::string name = entry.at("name").get<std::string>();
            const Shape shape = entry.at("shape").get<Shape>();
            const std::size_t offset = entry.at("offset").get<std::size_t>();
            const std::size_t count = shape_size(shape);
            if (entry.at("dtype").get<std::string>() != "f64" || offset + count * 8 > payload.size()) {
                corrupt("tensor " + name + " does not fit the payload");
            }
            std::vector<double> values(count);
            for (std::size_t i = 0; i < count; ++i) {
                values[i] = std::bit_cast<double>(get_u64(payload.substr(offset + i * 8, 8)));
            }
            Tensor t(shape, std::move(values));
            if (name.starts_with("param/")) {
                ckpt.params.tensors.emplace(name.substr(6), std::move(t));
            } else if (name.starts_with("lora/") && ckpt.adapters && name.size() > 7) {
                const std::string key = name.substr(5, name.size() - 7);
                const char which = name.back();
                auto& f = ckpt.adapters->factors[key];
                (which == 'A' ? f.a : f.b) = std::move(t);
            } else {
                corrupt("unexpected tensor " + name);
            }
        }
        for (const auto& [name, shape] : parameter_layout(ckpt.params.config)) {
            const auto it = ckpt.params.tensors.find(name);
            if (it == ckpt.params.tensors.end() || it->second.shape() != shape) {
                corrupt("parameter " + name + " missing or misshapen");
            }
        }
        return ckpt;
    } catch (const nlohmann::json::exception& e) {
        corrupt(std::string("manifest incomplete: ") + e.what());
    }
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
    const std::string bytes = serialize_checkpoint(ckpt);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error(ErrorCode::IoError, "short write to " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::IoError, "cannot read " + path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_checkpoint(buf.str());
}

}  // namespace lexforge
