#include "diptych/train.hpp"

#include <cstdio>

#include "diptych/incontext.hpp"
#include "diptych/tokenizer.hpp"

namespace diptych {

namespace {

std::vector<int> encode_prompt(const ModelConfig& cfg, const std::string& text) {
    static const Tokenizer tok;
    return tok.encode(text, cfg.max_text_len);
}

}  // namespace

FlowItem make_pretrain_item(const ModelConfig& cfg, const SceneGeometry& geo, Rng& rng,
                            double null_prompt_rate) {
    Scene scene = gen_scene(rng, geo);
    RasterImage panel = render_scene(scene, geo);
    std::string caption = rng.uniform() < null_prompt_rate ? "" : scene_caption(scene);

    FlowItem item;
    item.x1 = diptych_clean_latent(cfg, panel, panel);
    item.cond = diptych_condition(cfg, panel).cond;
    item.text_ids = encode_prompt(cfg, caption);
    item.t = rng.uniform();
    item.x0 = rng.normal_mat(cfg.num_image_tokens(), cfg.patch_dim());
    return item;
}

FlowItem make_finetune_item(const ModelConfig& cfg, const EditPair& pair, Rng& rng,
                            double null_prompt_rate) {
    std::string prompt =
        rng.uniform() < null_prompt_rate ? "" : make_ic_prompt({pair.instruction}).text;

    FlowItem item;
    item.x1 = diptych_clean_latent(cfg, pair.source, pair.target);
    item.cond = diptych_condition(cfg, pair.source).cond;
    item.text_ids = encode_prompt(cfg, prompt);
    item.t = rng.uniform();
    item.x0 = rng.normal_mat(cfg.num_image_tokens(), cfg.patch_dim());
    return item;
}

double heldout_loss(const ModelConfig& cfg, const ModelParameters& params,
                    const AdapterStack* adapters, const SceneGeometry& geo, uint64_t seed,
                    const std::vector<EditPair>* pairs, int count) {
    std::vector<FlowItem> batch;
    batch.reserve(static_cast<size_t>(count));
    for (int i = 0; i < count; ++i) {
        Rng rng(seed, 0xe7a1, static_cast<uint64_t>(i));
        FlowItem item = pairs ? make_finetune_item(cfg, (*pairs)[static_cast<size_t>(i) % pairs->size()],
                                                   rng, 0.0)
                              : make_pretrain_item(cfg, geo, rng, 0.0);
        item.t = (i + 0.5) / count;  // stratified over the flow time
        batch.push_back(std::move(item));
    }
    return fm_loss(cfg, params, adapters, batch);
}

namespace {

void log_step(const char* phase, int step, int total, double loss) {
    std::fprintf(stderr, "[%s] step %d/%d loss %.6f\n", phase, step, total, loss);
}

}  // namespace

TrainReport pretrain(const ModelConfig& cfg, const TrainConfig& tc, const SceneGeometry& geo,
                     ModelParameters& params) {
    if (tc.steps < 0 || tc.batch_size < 1) throw ConfigError("pretrain: bad step/batch settings");
    TrainReport report;
    report.loss_step0 = heldout_loss(cfg, params, nullptr, geo, tc.seed);

    AdamOptimizer opt(tc.lr, tc.beta1, tc.beta2, tc.eps);
    for (int step = 0; step < tc.steps; ++step) {
        std::vector<FlowItem> batch;
        batch.reserve(static_cast<size_t>(tc.batch_size));
        for (int b = 0; b < tc.batch_size; ++b) {
            Rng rng(tc.seed, static_cast<uint64_t>(step), static_cast<uint64_t>(b));
            batch.push_back(make_pretrain_item(cfg, geo, rng, tc.null_prompt_rate));
        }
        ModelParameters grads = zeros_like(params);
        double loss;
        try {
            loss = fm_loss(cfg, params, nullptr, batch, &grads, nullptr);
        } catch (const TrainingDivergence& e) {
            throw TrainingDivergence("pretrain diverged at step " + std::to_string(step) + ": " +
                                     e.what());
        }
        opt.step(params, grads);
        report.train_loss_last = loss;
        if (tc.log_every > 0 && (step % tc.log_every == 0 || step + 1 == tc.steps))
            log_step("pretrain", step, tc.steps, loss);
    }
    if (!params_finite(params)) throw TrainingDivergence("pretrain produced non-finite parameters");
    report.steps = tc.steps;
    report.loss_final = heldout_loss(cfg, params, nullptr, geo, tc.seed);
    return report;
}

TrainReport finetune(const ModelConfig& cfg, const TrainConfig& tc, const ModelParameters& params,
                     const std::vector<EditPair>& pairs, AdapterStack& adapters) {
    if (pairs.empty()) throw DataError("finetune: empty dataset");
    if (tc.steps < 0 || tc.batch_size < 1) throw ConfigError("finetune: bad step/batch settings");

    SceneGeometry geo{cfg.panel_h};
    TrainReport report;
    report.loss_step0 = heldout_loss(cfg, params, &adapters, geo, tc.seed, &pairs);

    AdamOptimizer opt(tc.lr, tc.beta1, tc.beta2, tc.eps);
    for (int step = 0; step < tc.steps; ++step) {
        std::vector<FlowItem> batch;
        batch.reserve(static_cast<size_t>(tc.batch_size));
        for (int b = 0; b < tc.batch_size; ++b) {
            Rng rng(tc.seed, static_cast<uint64_t>(step) | (1ULL << 62), static_cast<uint64_t>(b));
            size_t idx = rng.uniform_int(pairs.size());
            batch.push_back(make_finetune_item(cfg, pairs[idx], rng, tc.null_prompt_rate));
        }
        AdapterStack grads = zeros_like(adapters);
        double loss;
        try {
            loss = fm_loss(cfg, params, &adapters, batch, nullptr, &grads);
        } catch (const TrainingDivergence& e) {
            throw TrainingDivergence("finetune diverged at step " + std::to_string(step) + ": " +
                                     e.what());
        }
        opt.step(adapters, grads);
        report.train_loss_last = loss;
        if (tc.log_every > 0 && (step % tc.log_every == 0 || step + 1 == tc.steps))
            log_step("finetune", step, tc.steps, loss);
    }
    report.steps = tc.steps;
    report.loss_final = heldout_loss(cfg, params, &adapters, geo, tc.seed, &pairs);
    return report;
}

}  // namespace diptych
