#pragma once

#include <string>
#include <vector>

#include "diptych/image.hpp"
#include "diptych/model.hpp"

namespace diptych {

struct EditInstruction {
    std::string text;
};

struct ICPrompt {
    std::string text;
};

// Renders the fixed in-context edit prompt template with the instruction
// substituted verbatim (no escaping or normalization). Empty instructions
// are rejected.
ICPrompt make_ic_prompt(const EditInstruction& instruction);

// Side-by-side canvas: left panel is the source, right panel the region to
// generate. keep_mask is a 1-channel grid over the full canvas, 0 on the
// left half (preserve) and 1 on the right half (generate); it never varies
// per request.
struct Diptych {
    RasterImage image;      // h x 2w x 3, left = source, right = zeros
    RasterImage keep_mask;  // h x 2w x 1
};

Diptych make_diptych(const RasterImage& source);

// Re-anchors the keep region of a latent onto the exact flow interpolant
// t*source + (1-t)*noise; the edit region (keep_mask = 1) passes through.
Mat recompose_keep(const Mat& x_t, const Mat& src_latent, const Mat& noise, double t,
                   const Mat& keep_mask);

struct EditRequest {
    RasterImage source;
    EditInstruction instruction;
    uint64_t seed = 0;
    int n_steps = 20;
    double guidance = 3.0;
};

// The "w/o IC prompt" ablation swaps the prompt text only; everything else
// in the pipeline is identical.
enum class PromptMode { ic, bare };

struct EditResult {
    RasterImage edited;        // right panel, panel-sized
    RasterImage full_diptych;  // clamped to [0,1]
    uint64_t seed = 0;
    int steps = 0;
    int nfe_consumed = 0;
};

// Latent-space pieces of the inpainting condition, shared between the edit
// path and training batch assembly.
struct DiptychLatents {
    Mat cond;        // n_img x 4p^2: masked source latent channels + keep mask
    Mat src_latent;  // n_img x 3p^2 latent of [source | zeros]
    Mat keep_mask;   // n_img x 3p^2, mask replicated per channel
};

DiptychLatents diptych_condition(const ModelConfig& cfg, const RasterImage& source_panel);

// Latent tokens of the clean training diptych [source | target].
Mat diptych_clean_latent(const ModelConfig& cfg, const RasterImage& source,
                         const RasterImage& target);

RasterImage left_half(const RasterImage& canvas);
RasterImage right_half(const RasterImage& canvas);

// Eq.-1-style editing: builds the diptych and IC prompt, samples with
// keep-region re-anchoring, returns the right panel. Deterministic given
// the request seed.
EditResult edit(const ModelConfig& cfg, const ModelParameters& params, const AdapterStack* adapters,
                const EditRequest& request, PromptMode mode = PromptMode::ic);

// Sequential editing: turn i uses turn i-1's edited panel as its source.
// Per-turn seeds derive from request.seed unless pin_seed is set.
std::vector<EditResult> multi_turn(const ModelConfig& cfg, const ModelParameters& params,
                                   const AdapterStack* adapters, const RasterImage& source,
                                   const std::vector<EditInstruction>& instructions,
                                   uint64_t seed, int n_steps, double guidance,
                                   bool pin_seed = false, PromptMode mode = PromptMode::ic);

}  // namespace diptych
