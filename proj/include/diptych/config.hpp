#pragma once

#include <string>
#include <vector>

#include "diptych/adapters.hpp"
#include "diptych/model.hpp"
#include "diptych/train.hpp"

namespace diptych {

// Full run configuration: one JSON file, layered overrides via --set flags.
// Every command embeds the resolved config and its fingerprint in outputs.
struct RunConfig {
    ModelConfig model;
    AdapterConfig adapters;
    TrainConfig pretrain;
    TrainConfig finetune;
    struct Sample {
        int n_steps = 20;
        double guidance = 3.0;
    } sample;
    struct Scaling {
        int num_candidates = 6;
        int preview_steps = 4;
    } scaling;
    struct Data {
        uint64_t seed = 77;
        int total = 5000;
        std::string preset = "paper-ratio";  // or "explicit" with counts
        std::vector<int> counts;             // five entries when explicit
        double corruption_rate = 0.0;
    } data;
    struct Eval {
        uint64_t seed = 9000;
        double sc_threshold = 5.0;
    } eval;

    void validate() const;
};

RunConfig default_run_config();

// Defaults overlaid with the JSON file (when non-empty) and then with
// dotted-path overrides like "model.dim=96" or "sample.guidance=2".
RunConfig load_run_config(const std::string& path, const std::vector<std::string>& overrides = {});

std::string run_config_to_json(const RunConfig& cfg);

// FNV-1a hash of the canonical JSON dump, hex-encoded.
std::string config_fingerprint(const RunConfig& cfg);

}  // namespace diptych
