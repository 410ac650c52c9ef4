#include "diptych/checkpoint.hpp"

#include <filesystem>
#include <fstream>
#include <map>

#include <json.hpp>

#include "diptych/image.hpp"
#include "diptych/tokenizer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace diptych {

namespace {

constexpr const char* kFormat = "diptych-checkpoint-v1";

void write_param_file(const std::string& path, const Mat& m) {
    std::vector<float> buf(static_cast<size_t>(m.size()));
    size_t i = 0;
    for (int r = 0; r < m.rows(); ++r)
        for (int c = 0; c < m.cols(); ++c) buf[i++] = static_cast<float>(m(r, c));
    write_file_bytes(path, buf.data(), buf.size() * sizeof(float));
}

void read_param_file(const std::string& path, Mat& m, uint32_t expected_crc) {
    if (crc32_of_file(path) != expected_crc) throw DataError("checkpoint: checksum mismatch: " + path);
    auto bytes = read_file_bytes(path);
    if (bytes.size() != static_cast<size_t>(m.size()) * sizeof(float))
        throw DataError("checkpoint: size mismatch: " + path);
    const float* p = reinterpret_cast<const float*>(bytes.data());
    size_t i = 0;
    for (int r = 0; r < m.rows(); ++r)
        for (int c = 0; c < m.cols(); ++c) m(r, c) = p[i++];
}

template <typename Params>
json save_params(const std::string& dir, const Params& params) {
    json table = json::array();
    for_each_param(params, [&](const std::string& name, const Mat& m) {
        std::string file = name + ".bin";
        write_param_file(dir + "/" + file, m);
        table.push_back({{"name", name},
                         {"rows", m.rows()},
                         {"cols", m.cols()},
                         {"file", file},
                         {"crc32", crc32_of_file(dir + "/" + file)}});
    });
    return table;
}

template <typename Params>
void load_params(const std::string& dir, const json& table, Params& params) {
    std::map<std::string, const json*> index;
    for (const auto& entry : table) index[entry.at("name").get<std::string>()] = &entry;
    for_each_param(params, [&](const std::string& name, Mat& m) {
        auto it = index.find(name);
        if (it == index.end()) throw DataError("checkpoint: missing parameter " + name);
        const json& e = *it->second;
        if (e.at("rows").get<int64_t>() != m.rows() || e.at("cols").get<int64_t>() != m.cols())
            throw DataError("checkpoint: shape mismatch for " + name);
        read_param_file(dir + "/" + e.at("file").get<std::string>(), m,
                        e.at("crc32").get<uint32_t>());
    });
}

void write_header(const std::string& dir, json header) {
    std::string text = header.dump(2) + "\n";
    write_file_bytes(dir + "/header.json", text.data(), text.size());
}

json read_header(const std::string& dir) {
    auto bytes = read_file_bytes(dir + "/header.json");
    json h;
    try {
        h = json::parse(bytes.begin(), bytes.end());
    } catch (const json::exception& e) {
        throw DataError(std::string("checkpoint header parse error: ") + e.what());
    }
    if (h.value("format", "") != kFormat) throw DataError("checkpoint: unknown format");
    return h;
}

}  // namespace

// ---- config blocks ----

std::string model_config_to_json(const ModelConfig& cfg) {
    json j{{"patch_size", cfg.patch_size}, {"dim", cfg.dim},
           {"depth", cfg.depth},           {"heads", cfg.heads},
           {"mlp_ratio", cfg.mlp_ratio},   {"text_vocab", cfg.text_vocab},
           {"max_text_len", cfg.max_text_len},
           {"panel_h", cfg.panel_h},       {"panel_w", cfg.panel_w}};
    return j.dump();
}

ModelConfig model_config_from_json(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("model config parse error: ") + e.what());
    }
    ModelConfig cfg;
    cfg.patch_size = j.value("patch_size", cfg.patch_size);
    cfg.dim = j.value("dim", cfg.dim);
    cfg.depth = j.value("depth", cfg.depth);
    cfg.heads = j.value("heads", cfg.heads);
    cfg.mlp_ratio = j.value("mlp_ratio", cfg.mlp_ratio);
    cfg.text_vocab = j.value("text_vocab", Tokenizer().vocab_size());
    cfg.max_text_len = j.value("max_text_len", cfg.max_text_len);
    cfg.panel_h = j.value("panel_h", cfg.panel_h);
    cfg.panel_w = j.value("panel_w", cfg.panel_w);
    cfg.validate();
    return cfg;
}

std::string adapter_config_to_json(const AdapterConfig& cfg) {
    const char* targets = cfg.targets.plain_qkv_mlp
                              ? (cfg.targets.out_proj == OutProjAdapterKind::moe ? "full" : "lora-only")
                              : "moe-only";
    json j{{"rank", cfg.rank},
           {"alpha", cfg.alpha},
           {"num_experts", cfg.num_experts},
           {"top_k", cfg.top_k},
           {"targets", targets}};
    return j.dump();
}

AdapterConfig adapter_config_from_json(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("adapter config parse error: ") + e.what());
    }
    AdapterConfig cfg;
    cfg.rank = j.value("rank", cfg.rank);
    cfg.alpha = j.value("alpha", cfg.alpha);
    cfg.num_experts = j.value("num_experts", cfg.num_experts);
    cfg.top_k = j.value("top_k", cfg.top_k);
    std::string targets = j.value("targets", "full");
    if (targets == "full") {
        cfg.targets = {true, OutProjAdapterKind::moe};
    } else if (targets == "lora-only") {
        cfg.targets = {true, OutProjAdapterKind::plain};
    } else if (targets == "moe-only") {
        cfg.targets = {false, OutProjAdapterKind::moe};
    } else {
        throw ConfigError("adapter targets must be full | lora-only | moe-only, got " + targets);
    }
    cfg.validate();
    return cfg;
}

// ---- checkpoints ----

void save_model_checkpoint(const std::string& dir, const ModelConfig& cfg,
                           const ModelParameters& params, uint64_t seed, int64_t steps) {
    fs::create_directories(dir);
    json header{{"format", kFormat},
                {"kind", "base"},
                {"seed", seed},
                {"steps", steps},
                {"config", json::parse(model_config_to_json(cfg))}};
    header["params"] = save_params(dir, params);
    write_header(dir, std::move(header));
}

LoadedModel load_model_checkpoint(const std::string& dir) {
    json h = read_header(dir);
    if (h.value("kind", "") != "base") throw DataError("checkpoint: not a base model checkpoint");
    LoadedModel out;
    out.config = model_config_from_json(h.at("config").dump());
    out.seed = h.value("seed", 0ULL);
    out.steps = h.value("steps", int64_t{0});
    out.params = init_parameters(out.config, 0);
    load_params(dir, h.at("params"), out.params);
    return out;
}

void save_adapter_checkpoint(const std::string& dir, const AdapterConfig& cfg,
                             const AdapterStack& stack, uint64_t seed, int64_t steps) {
    fs::create_directories(dir);
    json header{{"format", kFormat},
                {"kind", "adapters"},
                {"seed", seed},
                {"steps", steps},
                {"config", json::parse(adapter_config_to_json(cfg))}};
    header["params"] = save_params(dir, stack);
    write_header(dir, std::move(header));
}

LoadedAdapters load_adapter_checkpoint(const std::string& dir, const ModelConfig& base_cfg) {
    json h = read_header(dir);
    if (h.value("kind", "") != "adapters") throw DataError("checkpoint: not an adapter checkpoint");
    LoadedAdapters out;
    out.config = adapter_config_from_json(h.at("config").dump());
    out.seed = h.value("seed", 0ULL);
    out.steps = h.value("steps", int64_t{0});
    out.stack = attach(base_cfg, out.config, 0);
    load_params(dir, h.at("params"), out.stack);
    return out;
}

}  // namespace diptych
