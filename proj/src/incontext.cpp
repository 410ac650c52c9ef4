#include "diptych/incontext.hpp"

#include "diptych/tokenizer.hpp"

namespace diptych {

namespace {
constexpr const char* kTemplatePrefix =
    "A diptych with two side-by-side images of the same scene. "
    "On the right, the scene is exactly the same as on the left but ";
}

ICPrompt make_ic_prompt(const EditInstruction& instruction) {
    if (instruction.text.empty()) throw std::invalid_argument("make_ic_prompt: empty instruction");
    return {std::string(kTemplatePrefix) + instruction.text + "."};
}

Diptych make_diptych(const RasterImage& source) {
    if (source.channels != 3) throw std::invalid_argument("make_diptych: source must be 3-channel");
    Diptych d;
    d.image = RasterImage(source.height, 2 * source.width, 3, 0.0);
    d.keep_mask = RasterImage(source.height, 2 * source.width, 1, 0.0);
    for (int y = 0; y < source.height; ++y)
        for (int x = 0; x < source.width; ++x) {
            for (int c = 0; c < 3; ++c) d.image.at(y, x, c) = source.at(y, x, c);
            d.keep_mask.at(y, x + source.width, 0) = 1.0;
        }
    return d;
}

Mat recompose_keep(const Mat& x_t, const Mat& src_latent, const Mat& noise, double t,
                   const Mat& keep_mask) {
    Mat interp = t * src_latent + (1.0 - t) * noise;
    return keep_mask.array() * x_t.array() + (1.0 - keep_mask.array()) * interp.array();
}

RasterImage left_half(const RasterImage& canvas) {
    RasterImage out(canvas.height, canvas.width / 2, canvas.channels);
    for (int y = 0; y < out.height; ++y)
        for (int x = 0; x < out.width; ++x)
            for (int c = 0; c < out.channels; ++c) out.at(y, x, c) = canvas.at(y, x, c);
    return out;
}

RasterImage right_half(const RasterImage& canvas) {
    RasterImage out(canvas.height, canvas.width / 2, canvas.channels);
    for (int y = 0; y < out.height; ++y)
        for (int x = 0; x < out.width; ++x)
            for (int c = 0; c < out.channels; ++c) out.at(y, x, c) = canvas.at(y, x + out.width, c);
    return out;
}

DiptychLatents diptych_condition(const ModelConfig& cfg, const RasterImage& source_panel) {
    if (source_panel.height != cfg.panel_h || source_panel.width != cfg.panel_w)
        throw std::invalid_argument("diptych_condition: source size does not match model config");
    Diptych d = make_diptych(source_panel);

    DiptychLatents out;
    out.src_latent = pixels_to_latent(patchify(d.image, cfg.patch_size));

    RasterImage mask3(d.keep_mask.height, d.keep_mask.width, 3);
    for (int y = 0; y < mask3.height; ++y)
        for (int x = 0; x < mask3.width; ++x)
            for (int c = 0; c < 3; ++c) mask3.at(y, x, c) = d.keep_mask.at(y, x, 0);
    out.keep_mask = patchify(mask3, cfg.patch_size);

    Mat mask1 = patchify(d.keep_mask, cfg.patch_size);
    out.cond.resize(cfg.num_image_tokens(), cfg.cond_dim());
    out.cond << out.src_latent, mask1;
    return out;
}

Mat diptych_clean_latent(const ModelConfig& cfg, const RasterImage& source,
                         const RasterImage& target) {
    if (!source.same_shape(target)) throw std::invalid_argument("diptych latent: panel shape mismatch");
    RasterImage canvas(source.height, 2 * source.width, 3);
    for (int y = 0; y < source.height; ++y)
        for (int x = 0; x < source.width; ++x)
            for (int c = 0; c < 3; ++c) {
                canvas.at(y, x, c) = source.at(y, x, c);
                canvas.at(y, x + source.width, c) = target.at(y, x, c);
            }
    return pixels_to_latent(patchify(canvas, cfg.patch_size));
}

EditResult edit(const ModelConfig& cfg, const ModelParameters& params, const AdapterStack* adapters,
                const EditRequest& request, PromptMode mode) {
    if (request.source.height != cfg.panel_h || request.source.width != cfg.panel_w)
        throw std::invalid_argument("edit: source size does not match model config");
    if (request.n_steps < 1) throw std::invalid_argument("edit: n_steps must be >= 1");

    const Tokenizer tok;
    const std::string prompt = mode == PromptMode::ic ? make_ic_prompt(request.instruction).text
                                                      : request.instruction.text;

    SampleInputs in;
    DiptychLatents lat = diptych_condition(cfg, request.source);
    in.cond = std::move(lat.cond);
    in.src_latent = std::move(lat.src_latent);
    in.keep_mask = std::move(lat.keep_mask);
    in.text_ids = tok.encode(prompt, cfg.max_text_len);
    in.null_ids = tok.encode("", cfg.max_text_len);
    Rng noise_rng(request.seed, 0x9015e);
    in.noise = noise_rng.normal_mat(cfg.num_image_tokens(), cfg.patch_dim());

    Mat x1 = euler_sample_latent(cfg, params, adapters, in, request.n_steps, request.guidance);

    EditResult res;
    res.full_diptych = unpatchify(latent_to_pixels(x1), cfg.panel_h, cfg.canvas_w(), 3, cfg.patch_size);
    res.full_diptych.clamp();
    res.edited = right_half(res.full_diptych);
    res.seed = request.seed;
    res.steps = request.n_steps;
    res.nfe_consumed = request.n_steps;
    return res;
}

std::vector<EditResult> multi_turn(const ModelConfig& cfg, const ModelParameters& params,
                                   const AdapterStack* adapters, const RasterImage& source,
                                   const std::vector<EditInstruction>& instructions,
                                   uint64_t seed, int n_steps, double guidance, bool pin_seed,
                                   PromptMode mode) {
    if (instructions.empty()) throw std::invalid_argument("multi_turn: need at least one instruction");
    std::vector<EditResult> results;
    results.reserve(instructions.size());
    RasterImage current = source;
    for (size_t i = 0; i < instructions.size(); ++i) {
        EditRequest req;
        req.source = current;
        req.instruction = instructions[i];
        req.seed = pin_seed ? seed : seed + i;
        req.n_steps = n_steps;
        req.guidance = guidance;
        results.push_back(edit(cfg, params, adapters, req, mode));
        current = results.back().edited;
    }
    return results;
}

}  // namespace diptych
