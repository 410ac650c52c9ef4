#pragma once

#include <string>

#include "diptych/adapters.hpp"
#include "diptych/model.hpp"

namespace diptych {

// Checkpoint layout: a directory holding header.json (kind, config, seed,
// step count, parameter table with shapes and checksums) plus one raw
// little-endian float32 file per named parameter, row-major.

void save_model_checkpoint(const std::string& dir, const ModelConfig& cfg,
                           const ModelParameters& params, uint64_t seed, int64_t steps);

struct LoadedModel {
    ModelConfig config;
    ModelParameters params;
    uint64_t seed = 0;
    int64_t steps = 0;
};

LoadedModel load_model_checkpoint(const std::string& dir);

// Adapter checkpoints are saved separately from base checkpoints so one base
// supports many adapter sets. The base model config rebuilds the stack shape.
void save_adapter_checkpoint(const std::string& dir, const AdapterConfig& cfg,
                             const AdapterStack& stack, uint64_t seed, int64_t steps);

struct LoadedAdapters {
    AdapterConfig config;
    AdapterStack stack;
    uint64_t seed = 0;
    int64_t steps = 0;
};

LoadedAdapters load_adapter_checkpoint(const std::string& dir, const ModelConfig& base_cfg);

// Serialization of the config blocks shared with RunConfig.
std::string model_config_to_json(const ModelConfig& cfg);
ModelConfig model_config_from_json(const std::string& text);
std::string adapter_config_to_json(const AdapterConfig& cfg);
AdapterConfig adapter_config_from_json(const std::string& text);

}  // namespace diptych
