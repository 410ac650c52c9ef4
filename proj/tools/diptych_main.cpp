// diptych: instruction-based in-context image editing on a toy diffusion
// transformer. Subcommands cover data generation, pretraining, adapter
// fine-tuning, editing, inference-time scaling sweeps, evaluation and
// ablation presets.

#include <cstdio>
#include <filesystem>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "diptych/checkpoint.hpp"
#include "diptych/config.hpp"
#include "diptych/data.hpp"
#include "diptych/evalmod.hpp"
#include "diptych/incontext.hpp"
#include "diptych/scaling.hpp"
#include "diptych/train.hpp"
#include "diptych/verifiers.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace diptych;

namespace {

// Exit codes: 0 success, 2 config error, 3 data error, 4 training
// divergence, 5 endpoint failure, 1 anything else.
constexpr int kExitConfig = 2;
constexpr int kExitData = 3;
constexpr int kExitTraining = 4;
constexpr int kExitEndpoint = 5;

void write_text(const std::string& path, const std::string& text) {
    write_file_bytes(path, text.data(), text.size());
}

void write_run_stamp(const std::string& dir, const std::string& command, const RunConfig& cfg) {
    fs::create_directories(dir);
    json j{{"command", command},
           {"config_fingerprint", config_fingerprint(cfg)},
           {"config", json::parse(run_config_to_json(cfg))}};
    write_text(dir + "/run.json", j.dump(2) + "\n");
}

std::array<int, kNumTaskTypes> resolve_counts(const RunConfig& cfg) {
    if (cfg.data.preset == "explicit") {
        std::array<int, kNumTaskTypes> counts{};
        for (int i = 0; i < kNumTaskTypes; ++i) counts[static_cast<size_t>(i)] = cfg.data.counts[static_cast<size_t>(i)];
        return counts;
    }
    return paper_ratio_counts(cfg.data.total);
}

std::vector<EditPair> load_pairs(const std::string& manifest, int limit) {
    std::vector<EditPair> pairs = read_dataset(manifest);
    if (limit > 0 && static_cast<int>(pairs.size()) > limit) pairs.resize(static_cast<size_t>(limit));
    return pairs;
}

struct SharedFlags {
    std::string config_path;
    std::vector<std::string> overrides;
};

RunConfig resolve_config(const SharedFlags& shared) {
    return load_run_config(shared.config_path, shared.overrides);
}

int cmd_gen_data(const SharedFlags& shared, const std::string& out_dir) {
    RunConfig cfg = resolve_config(shared);
    DataGenConfig dc;
    dc.counts = resolve_counts(cfg);
    dc.seed = cfg.data.seed;
    dc.corruption_rate = cfg.data.corruption_rate;
    dc.geometry = SceneGeometry{cfg.model.panel_h};
    DatasetManifest manifest = gen_dataset(dc, out_dir);
    write_run_stamp(out_dir, "gen-data", cfg);

    json result{{"manifest", out_dir + "/manifest.json"},
                {"total", manifest.total()},
                {"counts",
                 {{"removal", manifest.counts[0]},
                  {"addition", manifest.counts[1]},
                  {"swap", manifest.counts[2]},
                  {"attribute_mod", manifest.counts[3]},
                  {"style", manifest.counts[4]}}},
                {"manifest_crc32", crc32_of_file(out_dir + "/manifest.json")}};
    write_text(out_dir + "/gen-data.result.json", result.dump(2) + "\n");
    std::printf("generated %d records in %s (removal %d, addition %d, swap %d, attribute %d, style %d)\n",
                manifest.total(), out_dir.c_str(), manifest.counts[0], manifest.counts[1],
                manifest.counts[2], manifest.counts[3], manifest.counts[4]);
    return 0;
}

int cmd_pretrain(const SharedFlags& shared, const std::string& out_dir) {
    RunConfig cfg = resolve_config(shared);
    ModelParameters params = init_parameters(cfg.model, cfg.pretrain.seed);
    TrainReport report = pretrain(cfg.model, cfg.pretrain, SceneGeometry{cfg.model.panel_h}, params);
    save_model_checkpoint(out_dir, cfg.model, params, cfg.pretrain.seed, report.steps);
    write_run_stamp(out_dir, "pretrain", cfg);

    json result{{"checkpoint", out_dir},
                {"steps", report.steps},
                {"heldout_loss_step0", report.loss_step0},
                {"heldout_loss_final", report.loss_final},
                {"train_loss_last", report.train_loss_last},
                {"param_count", param_count(params)}};
    write_text(out_dir + "/pretrain.result.json", result.dump(2) + "\n");
    std::printf("pretrained %d steps: held-out loss %.4f -> %.4f (%lld parameters)\n", report.steps,
                report.loss_step0, report.loss_final, static_cast<long long>(param_count(params)));
    return 0;
}

int cmd_finetune(const SharedFlags& shared, const std::string& base_dir, const std::string& data_path,
                 const std::string& out_dir) {
    RunConfig cfg = resolve_config(shared);
    LoadedModel base = load_model_checkpoint(base_dir);
    std::vector<EditPair> pairs = load_pairs(data_path, 0);

    AdapterStack stack = attach(base.config, cfg.adapters, cfg.finetune.seed);
    TrainReport report = finetune(base.config, cfg.finetune, base.params, pairs, stack);
    save_adapter_checkpoint(out_dir, cfg.adapters, stack, cfg.finetune.seed, report.steps);
    write_run_stamp(out_dir, "finetune", cfg);

    json result{{"checkpoint", out_dir},
                {"steps", report.steps},
                {"heldout_loss_step0", report.loss_step0},
                {"heldout_loss_final", report.loss_final},
                {"train_loss_last", report.train_loss_last},
                {"trainable_params", count_trainable(stack)},
                {"frozen_params", param_count(base.params)},
                {"training_pairs", pairs.size()}};
    write_text(out_dir + "/finetune.result.json", result.dump(2) + "\n");
    std::printf("finetuned %d steps on %zu pairs: held-out loss %.4f -> %.4f (%lld trainable / %lld frozen)\n",
                report.steps, pairs.size(), report.loss_step0, report.loss_final,
                static_cast<long long>(count_trainable(stack)),
                static_cast<long long>(param_count(base.params)));
    return 0;
}

struct EditFlags {
    std::string base_dir, adapters_dir, source_png, source_raw, instruction, out_prefix;
    uint64_t seed = 0;
    int steps = 0;        // 0 = config default
    double guidance = -1; // <0 = config default
    bool bare = false;
};

int cmd_edit(const SharedFlags& shared, const EditFlags& flags) {
    RunConfig cfg = resolve_config(shared);
    LoadedModel base = load_model_checkpoint(flags.base_dir);
    LoadedAdapters adapters;
    const AdapterStack* stack = nullptr;
    if (!flags.adapters_dir.empty()) {
        adapters = load_adapter_checkpoint(flags.adapters_dir, base.config);
        stack = &adapters.stack;
    }

    if (flags.source_png.empty() && flags.source_raw.empty())
        throw ConfigError("edit needs --source or --source-raw");

    EditRequest req;
    req.source = flags.source_raw.empty()
                     ? read_png(flags.source_png)
                     : read_raw_f32(flags.source_raw, base.config.panel_h, base.config.panel_w, 3);
    req.instruction = {flags.instruction};
    req.seed = flags.seed;
    req.n_steps = flags.steps > 0 ? flags.steps : cfg.sample.n_steps;
    req.guidance = flags.guidance >= 0 ? flags.guidance : cfg.sample.guidance;

    EditResult res = edit(base.config, base.params, stack, req,
                          flags.bare ? PromptMode::bare : PromptMode::ic);

    write_png(flags.out_prefix + ".png", res.edited);
    write_raw_f32(flags.out_prefix + ".f32", res.edited);
    write_png(flags.out_prefix + ".diptych.png", res.full_diptych);
    json provenance{{"instruction", flags.instruction},
                    {"prompt_mode", flags.bare ? "bare" : "ic"},
                    {"seed", res.seed},
                    {"steps", res.steps},
                    {"nfe", res.nfe_consumed},
                    {"guidance", req.guidance},
                    {"clamped", true},
                    {"config_fingerprint", config_fingerprint(cfg)},
                    {"content_crc32", crc32_of_file(flags.out_prefix + ".f32")}};
    write_text(flags.out_prefix + ".json", provenance.dump(2) + "\n");
    std::printf("edited image written to %s.png (seed %llu, %d steps, nfe %d)\n",
                flags.out_prefix.c_str(), static_cast<unsigned long long>(res.seed), res.steps,
                res.nfe_consumed);
    return 0;
}

BenchmarkSettings benchmark_settings(const RunConfig& cfg, bool scaling, bool bare) {
    BenchmarkSettings s;
    s.seed = cfg.eval.seed;
    s.n_steps = cfg.sample.n_steps;
    s.guidance = cfg.sample.guidance;
    s.prompt_mode = bare ? PromptMode::bare : PromptMode::ic;
    s.scaling_enabled = scaling;
    s.num_candidates = cfg.scaling.num_candidates;
    s.preview_steps = cfg.scaling.preview_steps;
    s.sc_threshold = cfg.eval.sc_threshold;
    s.config_fingerprint = config_fingerprint(cfg);
    return s;
}

int cmd_eval(const SharedFlags& shared, const std::string& base_dir, const std::string& adapters_dir,
             const std::string& data_path, bool scaling, bool bare, int limit,
             const std::string& out_prefix) {
    RunConfig cfg = resolve_config(shared);
    LoadedModel base = load_model_checkpoint(base_dir);
    LoadedAdapters adapters;
    const AdapterStack* stack = nullptr;
    if (!adapters_dir.empty()) {
        adapters = load_adapter_checkpoint(adapters_dir, base.config);
        stack = &adapters.stack;
    }
    std::vector<EditPair> pairs = load_pairs(data_path, limit);

    MetricReport report = run_benchmark(base.config, base.params, stack, pairs,
                                        benchmark_settings(cfg, scaling, bare));
    write_text(out_prefix + ".json", metric_report_json(report));
    write_text(out_prefix + ".txt", metric_report_table(report));
    std::printf("evaluated %zu pairs: success %.3f, mean L1 %.4f, mean VIE %.2f -> %s.json\n",
                pairs.size(), report.aggregates.success_rate, report.aggregates.mean_l1,
                report.aggregates.mean_vie, out_prefix.c_str());
    return 0;
}

int cmd_scale_sweep(const SharedFlags& shared, const std::string& base_dir,
                    const std::string& adapters_dir, const std::string& data_path,
                    const std::string& grid, int limit, const std::string& out_prefix) {
    RunConfig cfg = resolve_config(shared);
    LoadedModel base = load_model_checkpoint(base_dir);
    LoadedAdapters adapters;
    const AdapterStack* stack = nullptr;
    if (!adapters_dir.empty()) {
        adapters = load_adapter_checkpoint(adapters_dir, base.config);
        stack = &adapters.stack;
    }
    std::vector<EditPair> pairs = load_pairs(data_path, limit);

    // Grid rows: "-" disables scaling; "MxS" runs M candidates with S
    // preview steps.
    std::vector<std::pair<int, int>> rows;
    std::string token;
    for (char ch : grid + ",") {
        if (ch == ',') {
            if (token.empty()) continue;
            if (token == "-") {
                rows.emplace_back(0, 0);
            } else {
                size_t x = token.find('x');
                if (x == std::string::npos)
                    throw ConfigError("scale-sweep grid entries must be - or MxS: " + token);
                rows.emplace_back(std::stoi(token.substr(0, x)), std::stoi(token.substr(x + 1)));
            }
            token.clear();
        } else {
            token.push_back(ch);
        }
    }

    json out_rows = json::array();
    std::string table;
    char line[160];
    snprintf(line, sizeof(line), "%12s %8s %6s %8s %12s %10s\n", "candidates", "preview", "n",
             "nfe", "mean_oracle", "success");
    table += line;
    for (auto [m_candidates, m_steps] : rows) {
        BenchmarkSettings s = benchmark_settings(cfg, m_candidates > 0, false);
        if (m_candidates > 0) {
            s.num_candidates = m_candidates;
            s.preview_steps = m_steps;
        }
        MetricReport report = run_benchmark(base.config, base.params, stack, pairs, s);
        int row_nfe = m_candidates > 0
                          ? nfe({m_candidates, m_steps, cfg.sample.n_steps}, true)
                          : nfe({1, 1, cfg.sample.n_steps}, false);
        out_rows.push_back({{"num_candidates", m_candidates},
                            {"preview_steps", m_steps},
                            {"n_steps", cfg.sample.n_steps},
                            {"nfe", row_nfe},
                            {"mean_oracle", report.aggregates.mean_oracle},
                            {"success_rate", report.aggregates.success_rate},
                            {"mean_vie", report.aggregates.mean_vie}});
        snprintf(line, sizeof(line), "%12d %8d %6d %8d %12.5f %10.3f\n", m_candidates, m_steps,
                 cfg.sample.n_steps, row_nfe, report.aggregates.mean_oracle,
                 report.aggregates.success_rate);
        table += line;
        std::printf("%s", line);
    }
    json result{{"config_fingerprint", config_fingerprint(cfg)},
                {"pairs", pairs.size()},
                {"rows", out_rows},
                {"content_hash", to_hex(fnv1a64(out_rows.dump()))}};
    write_text(out_prefix + ".json", result.dump(2) + "\n");
    write_text(out_prefix + ".txt", table);
    return 0;
}

struct AblatePreset {
    const char* name;
    bool finetune;      // train adapters first
    const char* targets; // adapter targets when finetuning
    bool bare;          // evaluate with bare instructions
};

constexpr AblatePreset kPresets[] = {
    {"training-free-no-ic", false, "", true},
    {"training-free-ic", false, "", false},
    {"moe-only", true, "moe-only", false},
    {"lora-only", true, "lora-only", false},
    {"ours-no-ic", true, "full", true},
    {"ours", true, "full", false},
};

int cmd_ablate(const SharedFlags& shared, const std::string& preset_name,
               const std::string& base_dir, const std::string& train_data,
               const std::string& eval_data, int steps_override, int limit,
               const std::string& out_dir) {
    const AblatePreset* preset = nullptr;
    for (const auto& p : kPresets)
        if (preset_name == p.name) preset = &p;
    if (!preset) {
        std::string names;
        for (const auto& p : kPresets) names += std::string(p.name) + " ";
        throw ConfigError("unknown preset '" + preset_name + "'; available: " + names);
    }

    SharedFlags effective = shared;
    if (preset->finetune)
        effective.overrides.push_back(std::string("adapters.targets=") + preset->targets);
    RunConfig cfg = resolve_config(effective);
    LoadedModel base = load_model_checkpoint(base_dir);

    fs::create_directories(out_dir);
    AdapterStack stack;
    const AdapterStack* stack_ptr = nullptr;
    json train_info;
    if (preset->finetune) {
        if (train_data.empty()) throw ConfigError("preset " + preset_name + " requires --data");
        TrainConfig tc = cfg.finetune;
        if (steps_override >= 0) tc.steps = steps_override;
        std::vector<EditPair> pairs = load_pairs(train_data, 0);
        stack = attach(base.config, cfg.adapters, tc.seed);
        TrainReport report = finetune(base.config, tc, base.params, pairs, stack);
        save_adapter_checkpoint(out_dir + "/adapters", cfg.adapters, stack, tc.seed, report.steps);
        stack_ptr = &stack;
        train_info = {{"steps", report.steps},
                      {"heldout_loss_step0", report.loss_step0},
                      {"heldout_loss_final", report.loss_final},
                      {"trainable_params", count_trainable(stack)}};
    }

    std::vector<EditPair> eval_pairs = load_pairs(eval_data.empty() ? train_data : eval_data, limit);
    MetricReport report = run_benchmark(base.config, base.params, stack_ptr, eval_pairs,
                                        benchmark_settings(cfg, false, preset->bare));
    write_run_stamp(out_dir, std::string("ablate:") + preset_name, cfg);
    write_text(out_dir + "/report.json", metric_report_json(report));
    write_text(out_dir + "/report.txt", metric_report_table(report));
    json result{{"preset", preset_name},
                {"config_fingerprint", config_fingerprint(cfg)},
                {"train", train_info},
                {"success_rate", report.aggregates.success_rate},
                {"mean_vie", report.aggregates.mean_vie}};
    write_text(out_dir + "/ablate.result.json", result.dump(2) + "\n");
    std::printf("ablate %s: success %.3f over %zu pairs -> %s\n", preset_name.c_str(),
                report.aggregates.success_rate, eval_pairs.size(), out_dir.c_str());
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"diptych: in-context image editing with a toy diffusion transformer"};
    app.require_subcommand(1);

    SharedFlags shared;

    auto add_shared = [&](CLI::App* sub) {
        sub->add_option("--config", shared.config_path, "run config JSON (defaults when omitted)");
        sub->add_option("--set", shared.overrides, "override config keys, e.g. --set model.dim=96");
    };

    std::string out_dir, base_dir, adapters_dir, data_path, eval_data, grid =
        "-,6x10,6x4,12x10,6x50", preset;
    int limit = 0, steps_override = -1;
    bool scaling = false, bare = false;
    EditFlags edit_flags;

    auto* gen = app.add_subcommand("gen-data", "generate a procedural editing-pair dataset");
    add_shared(gen);
    gen->add_option("--out", out_dir, "output directory")->required();

    auto* pre = app.add_subcommand("pretrain", "train the base model");
    add_shared(pre);
    pre->add_option("--out", out_dir, "checkpoint directory")->required();

    auto* fin = app.add_subcommand("finetune", "fine-tune adapters on editing pairs");
    add_shared(fin);
    fin->add_option("--base", base_dir, "base model checkpoint")->required();
    fin->add_option("--data", data_path, "dataset manifest.json")->required();
    fin->add_option("--out", out_dir, "adapter checkpoint directory")->required();

    auto* ed = app.add_subcommand("edit", "edit one image from an instruction");
    add_shared(ed);
    ed->add_option("--base", edit_flags.base_dir, "base model checkpoint")->required();
    ed->add_option("--adapters", edit_flags.adapters_dir, "adapter checkpoint");
    ed->add_option("--source", edit_flags.source_png, "source image (PNG)");
    ed->add_option("--source-raw", edit_flags.source_raw, "source image (raw f32 mirror)");
    ed->add_option("--instruction", edit_flags.instruction, "edit instruction")->required();
    ed->add_option("--seed", edit_flags.seed, "noise seed");
    ed->add_option("--steps", edit_flags.steps, "sampler steps (0 = config default)");
    ed->add_option("--guidance", edit_flags.guidance, "guidance scale (<0 = config default)");
    ed->add_flag("--bare", edit_flags.bare, "use the bare instruction instead of the IC prompt");
    ed->add_option("--out", edit_flags.out_prefix, "output prefix")->required();

    auto* ev = app.add_subcommand("eval", "run the metric benchmark over a dataset");
    add_shared(ev);
    ev->add_option("--base", base_dir, "base model checkpoint")->required();
    ev->add_option("--adapters", adapters_dir, "adapter checkpoint");
    ev->add_option("--data", data_path, "dataset manifest.json")->required();
    ev->add_flag("--scaling", scaling, "enable early-filter inference-time scaling");
    ev->add_flag("--bare", bare, "evaluate with bare instructions");
    ev->add_option("--limit", limit, "evaluate only the first N pairs");
    ev->add_option("--out", out_dir, "output prefix")->required();

    auto* sw = app.add_subcommand("scale-sweep", "sweep (num_candidates, preview_steps) rows");
    add_shared(sw);
    sw->add_option("--base", base_dir, "base model checkpoint")->required();
    sw->add_option("--adapters", adapters_dir, "adapter checkpoint");
    sw->add_option("--data", data_path, "dataset manifest.json")->required();
    sw->add_option("--grid", grid, "rows like -,6x10,6x4 (- = scaling off)");
    sw->add_option("--limit", limit, "evaluate only the first N pairs");
    sw->add_option("--out", out_dir, "output prefix")->required();

    auto* ab = app.add_subcommand("ablate", "run a named model-structure preset");
    add_shared(ab);
    ab->add_option("--preset", preset, "training-free-no-ic | training-free-ic | moe-only | lora-only | ours-no-ic | ours")
        ->required();
    ab->add_option("--base", base_dir, "base model checkpoint")->required();
    ab->add_option("--data", data_path, "training dataset manifest");
    ab->add_option("--eval-data", eval_data, "evaluation dataset manifest (defaults to --data)");
    ab->add_option("--steps", steps_override, "override fine-tuning steps");
    ab->add_option("--limit", limit, "evaluate only the first N pairs");
    ab->add_option("--out", out_dir, "output directory")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (gen->parsed()) return cmd_gen_data(shared, out_dir);
        if (pre->parsed()) return cmd_pretrain(shared, out_dir);
        if (fin->parsed()) return cmd_finetune(shared, base_dir, data_path, out_dir);
        if (ed->parsed()) return cmd_edit(shared, edit_flags);
        if (ev->parsed()) return cmd_eval(shared, base_dir, adapters_dir, data_path, scaling, bare, limit, out_dir);
        if (sw->parsed()) return cmd_scale_sweep(shared, base_dir, adapters_dir, data_path, grid, limit, out_dir);
        if (ab->parsed())
            return cmd_ablate(shared, preset, base_dir, data_path, eval_data, steps_override, limit, out_dir);
    } catch (const ConfigError& e) {
        std::fprintf(stderr, "error: config: %s\n", e.what());
        return kExitConfig;
    } catch (const DataError& e) {
        std::fprintf(stderr, "error: data: %s\n", e.what());
        return kExitData;
    } catch (const TrainingDivergence& e) {
        std::fprintf(stderr, "error: training: %s\n", e.what());
        return kExitTraining;
    } catch (const EndpointError& e) {
        std::fprintf(stderr, "error: endpoint: %s\n", e.what());
        return kExitEndpoint;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: internal: %s\n", e.what());
        return 1;
    }
    return 0;
}
