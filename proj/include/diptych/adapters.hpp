#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "diptych/common.hpp"

namespace diptych {

struct ModelConfig;

// Low-rank adapter for a frozen linear layer. Delta for a row-vector input x
// is (alpha / rank) * x * A^T * B^T, i.e. B(A x) in column notation with
// A in R^{r x k_in} and B in R^{d_out x r}. B starts at zero so the initial
// delta vanishes.
struct LoRAAdapter {
    Mat a;  // r x k_in
    Mat b;  // d_out x r
    int rank = 0;
    double alpha = 0.0;

    double scale() const { return alpha / static_cast<double>(rank); }
    int64_t param_count() const { return a.size() + b.size(); }
};

// N parallel LoRA experts plus a single-linear-layer router producing one
// logit per expert. Gates are softmax over the top_k retained logits.
struct MoELoRALayer {
    std::vector<LoRAAdapter> experts;
    Mat router_w;  // N x k_in
    Mat router_b;  // 1 x N
    int top_k = 1;

    int num_experts() const { return static_cast<int>(experts.size()); }
    int64_t param_count() const {
        int64_t n = router_w.size() + router_b.size();
        for (const auto& e : experts) n += e.param_count();
        return n;
    }
};

// Sparse gate vector: exactly top_k nonzero entries summing to 1.
struct GateVector {
    Vec values;                // length N
    std::vector<int> active;   // retained expert indices, ascending
};

enum class OutProjAdapterKind { none, plain, moe };

// Which layers receive adapters. The default mirrors the full design:
// plain LoRA on q/k/v and both MLP projections, MoE-LoRA on the attention
// output projection. The ablation presets toggle these.
struct AdapterTargets {
    bool plain_qkv_mlp = true;
    OutProjAdapterKind out_proj = OutProjAdapterKind::moe;
};

struct AdapterConfig {
    int rank = 8;
    double alpha = 8.0;
    int num_experts = 4;
    int top_k = 1;
    AdapterTargets targets;

    void validate() const;
};

struct BlockAdapters {
    std::optional<LoRAAdapter> q, k, v, w1, w2;
    std::optional<LoRAAdapter> out_plain;
    std::optional<MoELoRALayer> out_moe;
};

// Adapter parameters for a whole model; indexed per DiT block. Used both for
// live parameters and (via zeros_like) gradient accumulators.
struct AdapterStack {
    AdapterConfig config;
    std::vector<BlockAdapters> blocks;

    bool empty() const { return blocks.empty(); }
};

// Routing statistics: selection counts per (block, expert).
struct RoutingStats {
    Mat counts;  // depth x N

    void init(int depth, int num_experts) { counts = Mat::Zero(depth, num_experts); }
    // Selection frequencies per block; rows sum to 1.
    Mat frequencies() const;
};

// ---- core adapter math ----

// route() for a single input row. Ties broken by lowest expert index.
GateVector route(const Vec& x, const MoELoRALayer& layer);

// Adapter delta for a batch of rows.
Mat lora_delta(const Mat& x, const LoRAAdapter& ad);

// output = base_output + delta.
Mat lora_forward(const Mat& base_output, const Mat& x, const LoRAAdapter& ad);

// Per-row cache of routing decisions so backward reuses the forward selection.
struct MoECache {
    std::vector<GateVector> gates;  // one per row
};

Mat moe_delta(const Mat& x, const MoELoRALayer& layer, MoECache* cache = nullptr,
              RoutingStats* stats = nullptr, int block_index = 0);

Mat moe_lora_forward(const Mat& base_output, const Mat& x, const MoELoRALayer& layer);

// Backward through the delta. d_delta is the gradient wrt the delta output;
// dx accumulates the input gradient, grad (optional) accumulates parameter
// gradients. The top-k selection is treated as constant: gradients flow
// through the softmax over retained logits and through the experts only.
void lora_backward(const Mat& x, const LoRAAdapter& ad, const Mat& d_delta, Mat& dx,
                   LoRAAdapter* grad);
void moe_backward(const Mat& x, const MoELoRALayer& layer, const MoECache& cache,
                  const Mat& d_delta, Mat& dx, MoELoRALayer* grad);

// ---- lifecycle ----

// Builds a fresh adapter stack for the given model shape. A matrices get
// small random init from the seed, B matrices and router biases start at
// zero, router weights get random init.
AdapterStack attach(const ModelConfig& model, const AdapterConfig& config, uint64_t seed);

AdapterStack zeros_like(const AdapterStack& stack);

int64_t count_trainable(const AdapterStack& stack);

// Test utility only: plain-LoRA delta folded into a base weight matrix
// (w is d_in x d_out for row-vector inputs). Not applicable to MoE layers,
// whose delta depends on the input through the router.
Mat merged_weight(const Mat& w, const LoRAAdapter& ad);

// Visits every adapter parameter matrix as (name, Mat&) for the optimizer,
// checkpointing and counting.
template <typename F>
void for_each_param(AdapterStack& stack, F&& f) {
    auto visit_lora = [&](const std::string& prefix, std::optional<LoRAAdapter>& ad) {
        if (!ad) return;
        f(prefix + ".a", ad->a);
        f(prefix + ".b", ad->b);
    };
    for (size_t i = 0; i < stack.blocks.size(); ++i) {
        std::string p = "blocks." + std::to_string(i);
        auto& blk = stack.blocks[i];
        visit_lora(p + ".lora_q", blk.q);
        visit_lora(p + ".lora_k", blk.k);
        visit_lora(p + ".lora_v", blk.v);
        visit_lora(p + ".lora_w1", blk.w1);
        visit_lora(p + ".lora_w2", blk.w2);
        visit_lora(p + ".lora_out", blk.out_plain);
        if (blk.out_moe) {
            auto& moe = *blk.out_moe;
            for (size_t e = 0; e < moe.experts.size(); ++e) {
                f(p + ".moe_out.expert" + std::to_string(e) + ".a", moe.experts[e].a);
                f(p + ".moe_out.expert" + std::to_string(e) + ".b", moe.experts[e].b);
            }
            f(p + ".moe_out.router.w", moe.router_w);
            f(p + ".moe_out.router.b", moe.router_b);
        }
    }
}

template <typename F>
void for_each_param(const AdapterStack& stack, F&& f) {
    for_each_param(const_cast<AdapterStack&>(stack),
                   [&](const std::string& n, Mat& m) { f(n, const_cast<const Mat&>(m)); });
}

}  // namespace diptych
