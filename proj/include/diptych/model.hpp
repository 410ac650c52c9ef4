#pragma once

#include <functional>
#include <string>
#include <vector>

#include "diptych/adapters.hpp"
#include "diptych/common.hpp"
#include "diptych/image.hpp"

namespace diptych {

// 2D rotary position. Image tokens use (1 + grid_row, max_text_len + grid_col)
// so the column offset distinguishes the left and right diptych panels; text
// tokens use (0, index), a range disjoint from every image position.
struct Pos2 {
    int a = 0;
    int b = 0;
};

struct ModelConfig {
    int patch_size = 4;
    int dim = 64;
    int depth = 4;
    int heads = 4;
    int mlp_ratio = 3;
    int text_vocab = 0;    // filled from the tokenizer
    int max_text_len = 36;
    int panel_h = 16;      // source image height
    int panel_w = 16;      // source image width; the denoised canvas is the
                           // panel_h x (2*panel_w) diptych

    int canvas_w() const { return 2 * panel_w; }
    int grid_h() const { return panel_h / patch_size; }
    int grid_w() const { return canvas_w() / patch_size; }
    int num_image_tokens() const { return grid_h() * grid_w(); }
    int head_dim() const { return dim / heads; }
    int mlp_hidden() const { return dim * mlp_ratio; }
    int patch_dim() const { return 3 * patch_size * patch_size; }       // x_t channels per token
    int cond_dim() const { return 4 * patch_size * patch_size; }        // masked source + mask
    int total_tokens() const { return max_text_len + num_image_tokens(); }

    void validate() const;
};

struct AttnWeights {
    Mat wq, bq, wk, bk, wv, bv, wo, bo;
};

struct DiTBlockParams {
    Mat ln1_g, ln1_b;
    AttnWeights attn;
    Mat ln2_g, ln2_b;
    Mat w1, b1, w2, b2;
};

struct ModelParameters {
    Mat text_embed;          // vocab x dim
    Mat patch_w, patch_b;    // (7 p^2) x dim, 1 x dim
    Mat time_w, time_b;      // dim x dim, 1 x dim
    std::vector<DiTBlockParams> blocks;
    Mat fln_g, fln_b;        // final layer norm
    Mat head_w, head_b;      // dim x (3 p^2), 1 x (3 p^2)
};

ModelParameters init_parameters(const ModelConfig& cfg, uint64_t seed);
ModelParameters zeros_like(const ModelParameters& p);
int64_t param_count(const ModelParameters& p);
bool params_finite(const ModelParameters& p);

template <typename F>
void for_each_param(ModelParameters& p, F&& f) {
    f("text_embed", p.text_embed);
    f("patch_embed.w", p.patch_w);
    f("patch_embed.b", p.patch_b);
    f("time_embed.w", p.time_w);
    f("time_embed.b", p.time_b);
    for (size_t i = 0; i < p.blocks.size(); ++i) {
        std::string pre = "blocks." + std::to_string(i);
        auto& b = p.blocks[i];
        f(pre + ".ln1.g", b.ln1_g);
        f(pre + ".ln1.b", b.ln1_b);
        f(pre + ".attn.wq", b.attn.wq);
        f(pre + ".attn.bq", b.attn.bq);
        f(pre + ".attn.wk", b.attn.wk);
        f(pre + ".attn.bk", b.attn.bk);
        f(pre + ".attn.wv", b.attn.wv);
        f(pre + ".attn.bv", b.attn.bv);
        f(pre + ".attn.wo", b.attn.wo);
        f(pre + ".attn.bo", b.attn.bo);
        f(pre + ".ln2.g", b.ln2_g);
        f(pre + ".ln2.b", b.ln2_b);
        f(pre + ".mlp.w1", b.w1);
        f(pre + ".mlp.b1", b.b1);
        f(pre + ".mlp.w2", b.w2);
        f(pre + ".mlp.b2", b.b2);
    }
    f("final_ln.g", p.fln_g);
    f("final_ln.b", p.fln_b);
    f("head.w", p.head_w);
    f("head.b", p.head_b);
}

template <typename F>
void for_each_param(const ModelParameters& p, F&& f) {
    for_each_param(const_cast<ModelParameters&>(p),
                   [&](const std::string& n, Mat& m) { f(n, const_cast<const Mat&>(m)); });
}

// ---- tokenization of images ----

// Splits an image into non-overlapping patches. Token i = (gy * gw + gx)
// holds, channel-major, the p x p pixel block at grid cell (gy, gx); the
// resulting matrix is (gh*gw) x (C*p*p). Exact inverse: unpatchify.
Mat patchify(const RasterImage& image, int patch_size);
RasterImage unpatchify(const Mat& tokens, int height, int width, int channels, int patch_size);

// ---- rotary position embedding ----

// Rotates adjacent channel pairs; the first half of the pairs turns by
// pos.a * freq_j, the second half by pos.b * freq_j, with freq_j = 10000^(-j/G)
// inside each half. Position (0,0) is the identity; rotations preserve norms.
Mat rope_rotate(const Mat& tokens, const std::vector<Pos2>& positions);
void rope_rotate_inplace(Mat& tokens, const std::vector<Pos2>& positions, bool inverse = false);

// Token positions used by the model, text first: text i -> (0, i),
// image (r, c) -> (1 + r, max_text_len + c).
std::vector<Pos2> model_positions(const ModelConfig& cfg);

// ---- multi-modal attention ----

struct AttnCache {
    Mat x;                   // projection input
    Mat q, k, v;             // post-adapter, pre-rope
    Mat qr, kr;
    std::vector<Mat> probs;  // per head, n x n
    Mat o;                   // concatenated head outputs (router input)
    MoECache moe;
};

struct BlockAdapterGrads {
    BlockAdapters* blk = nullptr;  // gradient accumulators, same layout
};

// Softmax(Q K^T / sqrt(head_dim)) V over the concatenated token sequence,
// including the q/k/v/out projections, per-head RoPE and optional adapters
// (plain LoRA on q/k/v, plain-or-MoE LoRA on the output projection).
Mat attn_forward(const Mat& x, const AttnWeights& w, int heads, const std::vector<Pos2>& positions,
                 const BlockAdapters* ad = nullptr, AttnCache* cache = nullptr,
                 RoutingStats* stats = nullptr, int block_index = 0);

Mat attn_backward(const Mat& dout, const AttnWeights& w, int heads,
                  const std::vector<Pos2>& positions, const BlockAdapters* ad,
                  const AttnCache& cache, AttnWeights* gw, BlockAdapters* gad);

// Spec-facing wrapper: text and image sequences in, attention outputs split
// back out. positions covers text rows then image rows.
std::pair<Mat, Mat> mma(const Mat& text, const Mat& image, const AttnWeights& w, int heads,
                        const std::vector<Pos2>& positions);

// ---- the DiT ----

struct BlockCache {
    Mat x;            // block input
    Mat xn, xhat1;    // LN1 output and normalized input
    Vec rstd1;
    AttnCache attn;
    Mat h1;           // x + attention
    Mat yn, xhat2;    // LN2
    Vec rstd2;
    Mat u, g;         // MLP pre-activation and gelu output
};

struct ForwardCache {
    Mat embed_in;     // [x_tok | cond], for patch-embed gradients
    Mat time_feat;    // 1 x dim sinusoidal features of t
    std::vector<int> text_ids;
    Mat h0;
    std::vector<BlockCache> blocks;
    Mat hfinal, fn, xhatf;
    Vec rstdf;
};

// Predicted velocity for the latent image tokens. x_tok is the noisy latent
// (n_img x 3p^2), cond the conditioning channels (n_img x 4p^2), t in [0,1].
// Deterministic; pass a cache to enable dit_backward.
Mat dit_forward(const ModelConfig& cfg, const ModelParameters& p, const AdapterStack* adapters,
                const std::vector<int>& text_ids, const Mat& x_tok, const Mat& cond, double t,
                ForwardCache* cache = nullptr, RoutingStats* stats = nullptr);

// Accumulates parameter gradients for d(loss)/d(velocity) = dvel. Either
// gradient sink may be null to skip that group (e.g. frozen base during
// adapter fine-tuning).
void dit_backward(const ModelConfig& cfg, const ModelParameters& p, const AdapterStack* adapters,
                  const ForwardCache& cache, const Mat& dvel, ModelParameters* gp,
                  AdapterStack* ga);

// ---- rectified flow loss ----

// One training record with its interpolation time and noise draw fixed by
// the batch assembler (t uniform in [0,1], x0 standard normal).
struct FlowItem {
    Mat x1;                     // clean latent tokens
    Mat x0;                     // noise
    Mat cond;
    std::vector<int> text_ids;
    double t = 0.0;
};

// Mean squared error between the predicted velocity at x_t = t*x1 + (1-t)*x0
// and the target x1 - x0, averaged over every token element and the batch.
// Optionally accumulates gradients.
double fm_loss(const ModelConfig& cfg, const ModelParameters& p, const AdapterStack* adapters,
               const std::vector<FlowItem>& batch, ModelParameters* gp = nullptr,
               AdapterStack* ga = nullptr);

// ---- sampling ----

using VelocityFn = std::function<Mat(const Mat& x, double t)>;
using StepHook = std::function<void(Mat& x, double t_next)>;

// Integrates dx/dt = v(x, t) from t=0 to t=1 with n uniform Euler steps,
// invoking the hook (keep-region recomposition) after every step.
Mat euler_integrate(const VelocityFn& velocity, Mat x, int n_steps, const StepHook& hook = {});

// Everything euler_sample needs besides the model: conditioning channels,
// prompt token ids, the flow endpoints for keep-region re-anchoring, and the
// initial noise.
struct SampleInputs {
    Mat cond;                    // n_img x 4p^2
    std::vector<int> text_ids;   // conditional prompt
    std::vector<int> null_ids;   // null prompt for classifier-free guidance
    Mat src_latent;              // n_img x 3p^2, full diptych latent of the source
    Mat keep_mask;               // n_img x 3p^2: 0 = preserve, 1 = generate
    Mat noise;                   // initial x at t=0
};

// Classifier-free-guided Euler sampling with keep-region recomposition,
// returning the final latent tokens. guidance 1 short-circuits to the pure
// conditional velocity.
Mat euler_sample_latent(const ModelConfig& cfg, const ModelParameters& p,
                        const AdapterStack* adapters, const SampleInputs& in, int n_steps,
                        double guidance);

// Latent <-> pixel mapping: latent = 2*pixel - 1.
Mat pixels_to_latent(const Mat& tokens);
Mat latent_to_pixels(const Mat& tokens);

// Sinusoidal features of t used for timestep conditioning.
Mat time_features(double t, int dim);

}  // namespace diptych
