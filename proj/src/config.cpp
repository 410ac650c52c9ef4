#include "diptych/config.hpp"

#include <json.hpp>

#include "diptych/checkpoint.hpp"
#include "diptych/image.hpp"
#include "diptych/tokenizer.hpp"

using nlohmann::json;

namespace diptych {

void RunConfig::validate() const {
    model.validate();
    adapters.validate();
    if (sample.n_steps < 1) throw ConfigError("sample.n_steps must be >= 1");
    if (scaling.num_candidates < 1) throw ConfigError("scaling.num_candidates must be >= 1");
    if (scaling.preview_steps < 1) throw ConfigError("scaling.preview_steps must be >= 1");
    if (data.total < 1) throw ConfigError("data.total must be >= 1");
    if (data.preset != "paper-ratio" && data.preset != "explicit")
        throw ConfigError("data.preset must be paper-ratio | explicit");
    if (data.preset == "explicit" && data.counts.size() != kNumTaskTypes)
        throw ConfigError("data.counts must list five per-task counts");
    if (data.corruption_rate < 0.0 || data.corruption_rate > 1.0)
        throw ConfigError("data.corruption_rate must lie in [0, 1]");
    if (!(eval.sc_threshold > 0.0 && eval.sc_threshold <= 10.0))
        throw ConfigError("eval.sc_threshold must lie in (0, 10]");
}

RunConfig default_run_config() {
    RunConfig cfg;
    cfg.model.text_vocab = Tokenizer().vocab_size();
    cfg.pretrain = TrainConfig{3000, 16, 1e-3, 0.9, 0.999, 1e-8, 1234, 0.1, 200};
    cfg.finetune = TrainConfig{4000, 16, 2e-3, 0.9, 0.999, 1e-8, 4321, 0.1, 200};
    return cfg;
}

namespace {

json train_to_json(const TrainConfig& t) {
    return json{{"steps", t.steps},   {"batch_size", t.batch_size},
                {"lr", t.lr},         {"beta1", t.beta1},
                {"beta2", t.beta2},   {"eps", t.eps},
                {"seed", t.seed},     {"null_prompt_rate", t.null_prompt_rate},
                {"log_every", t.log_every}};
}

TrainConfig train_from_json(const json& j, TrainConfig base) {
    base.steps = j.value("steps", base.steps);
    base.batch_size = j.value("batch_size", base.batch_size);
    base.lr = j.value("lr", base.lr);
    base.beta1 = j.value("beta1", base.beta1);
    base.beta2 = j.value("beta2", base.beta2);
    base.eps = j.value("eps", base.eps);
    base.seed = j.value("seed", base.seed);
    base.null_prompt_rate = j.value("null_prompt_rate", base.null_prompt_rate);
    base.log_every = j.value("log_every", base.log_every);
    return base;
}

json run_config_json(const RunConfig& cfg) {
    json j;
    j["model"] = json::parse(model_config_to_json(cfg.model));
    j["adapters"] = json::parse(adapter_config_to_json(cfg.adapters));
    j["pretrain"] = train_to_json(cfg.pretrain);
    j["finetune"] = train_to_json(cfg.finetune);
    j["sample"] = {{"n_steps", cfg.sample.n_steps}, {"guidance", cfg.sample.guidance}};
    j["scaling"] = {{"num_candidates", cfg.scaling.num_candidates},
                    {"preview_steps", cfg.scaling.preview_steps}};
    j["data"] = {{"seed", cfg.data.seed},
                 {"total", cfg.data.total},
                 {"preset", cfg.data.preset},
                 {"counts", cfg.data.counts},
                 {"corruption_rate", cfg.data.corruption_rate}};
    j["eval"] = {{"seed", cfg.eval.seed}, {"sc_threshold", cfg.eval.sc_threshold}};
    return j;
}

RunConfig run_config_from_json(const json& j) {
    RunConfig cfg = default_run_config();
    if (j.contains("model")) cfg.model = model_config_from_json(j.at("model").dump());
    if (j.contains("adapters")) cfg.adapters = adapter_config_from_json(j.at("adapters").dump());
    if (j.contains("pretrain")) cfg.pretrain = train_from_json(j.at("pretrain"), cfg.pretrain);
    if (j.contains("finetune")) cfg.finetune = train_from_json(j.at("finetune"), cfg.finetune);
    if (j.contains("sample")) {
        cfg.sample.n_steps = j.at("sample").value("n_steps", cfg.sample.n_steps);
        cfg.sample.guidance = j.at("sample").value("guidance", cfg.sample.guidance);
    }
    if (j.contains("scaling")) {
        cfg.scaling.num_candidates = j.at("scaling").value("num_candidates", cfg.scaling.num_candidates);
        cfg.scaling.preview_steps = j.at("scaling").value("preview_steps", cfg.scaling.preview_steps);
    }
    if (j.contains("data")) {
        const auto& d = j.at("data");
        cfg.data.seed = d.value("seed", cfg.data.seed);
        cfg.data.total = d.value("total", cfg.data.total);
        cfg.data.preset = d.value("preset", cfg.data.preset);
        if (d.contains("counts")) cfg.data.counts = d.at("counts").get<std::vector<int>>();
        cfg.data.corruption_rate = d.value("corruption_rate", cfg.data.corruption_rate);
    }
    if (j.contains("eval")) {
        cfg.eval.seed = j.at("eval").value("seed", cfg.eval.seed);
        cfg.eval.sc_threshold = j.at("eval").value("sc_threshold", cfg.eval.sc_threshold);
    }
    cfg.validate();
    return cfg;
}

json parse_scalar(const std::string& value) {
    // Overrides accept numbers, booleans and bare strings.
    try {
        return json::parse(value);
    } catch (const json::exception&) {
        return json(value);
    }
}

void apply_override(json& j, const std::string& expr) {
    size_t eq = expr.find('=');
    if (eq == std::string::npos || eq == 0)
        throw ConfigError("override must look like section.key=value: " + expr);
    std::string path = expr.substr(0, eq);
    json value = parse_scalar(expr.substr(eq + 1));

    json* node = &j;
    size_t start = 0;
    while (true) {
        size_t dot = path.find('.', start);
        std::string key = path.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
        if (key.empty()) throw ConfigError("override has an empty path segment: " + expr);
        if (dot == std::string::npos) {
            (*node)[key] = value;
            break;
        }
        node = &(*node)[key];
        start = dot + 1;
    }
}

}  // namespace

RunConfig load_run_config(const std::string& path, const std::vector<std::string>& overrides) {
    json j = run_config_json(default_run_config());
    if (!path.empty()) {
        std::vector<uint8_t> bytes;
        try {
            bytes = read_file_bytes(path);
        } catch (const DataError& e) {
            throw ConfigError(std::string("cannot read config: ") + e.what());
        }
        json file;
        try {
            file = json::parse(bytes.begin(), bytes.end());
        } catch (const json::exception& e) {
            throw ConfigError(std::string("config parse error: ") + e.what());
        }
        j.merge_patch(file);
    }
    for (const auto& o : overrides) apply_override(j, o);
    return run_config_from_json(j);
}

std::string run_config_to_json(const RunConfig& cfg) { return run_config_json(cfg).dump(2) + "\n"; }

std::string config_fingerprint(const RunConfig& cfg) {
    return to_hex(fnv1a64(run_config_json(cfg).dump()));
}

}  // namespace diptych
