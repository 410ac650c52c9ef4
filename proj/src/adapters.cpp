#include "diptych/adapters.hpp"

#include <algorithm>
#include <numeric>

#include "diptych/model.hpp"

namespace diptych {

void AdapterConfig::validate() const {
    if (rank < 1) throw ConfigError("adapter rank must be >= 1");
    if (alpha <= 0.0) throw ConfigError("adapter alpha must be positive");
    if (targets.out_proj == OutProjAdapterKind::moe) {
        if (num_experts < 1) throw ConfigError("num_experts must be >= 1");
        if (top_k < 1 || top_k > num_experts) throw ConfigError("top_k must be in [1, num_experts]");
    }
}

Mat RoutingStats::frequencies() const {
    Mat freq = counts;
    for (int i = 0; i < freq.rows(); ++i) {
        double total = freq.row(i).sum();
        if (total > 0) freq.row(i) /= total;
    }
    return freq;
}

GateVector route(const Vec& x, const MoELoRALayer& layer) {
    const int n = layer.num_experts();
    Vec logits = layer.router_w * x + layer.router_b.transpose();

    std::vector<int> order(static_cast<size_t>(n));
    std::iota(order.begin(), order.end(), 0);
    // Ties broken by lowest expert index.
    std::stable_sort(order.begin(), order.end(),
                     [&](int i, int j) { return logits[i] > logits[j]; });

    GateVector gv;
    gv.values = Vec::Zero(n);
    gv.active.assign(order.begin(), order.begin() + layer.top_k);
    std::sort(gv.active.begin(), gv.active.end());

    double mx = -std::numeric_limits<double>::infinity();
    for (int i : gv.active) mx = std::max(mx, logits[i]);
    double denom = 0.0;
    for (int i : gv.active) denom += std::exp(logits[i] - mx);
    for (int i : gv.active) gv.values[i] = std::exp(logits[i] - mx) / denom;
    return gv;
}

Mat lora_delta(const Mat& x, const LoRAAdapter& ad) {
    if (x.cols() != ad.a.cols()) throw std::invalid_argument("lora: input dim mismatch");
    return ad.scale() * ((x * ad.a.transpose()) * ad.b.transpose());
}

Mat lora_forward(const Mat& base_output, const Mat& x, const LoRAAdapter& ad) {
    Mat delta = lora_delta(x, ad);
    if (base_output.rows() != delta.rows() || base_output.cols() != delta.cols())
        throw std::invalid_argument("lora: base output shape mismatch");
    return base_output + delta;
}

Mat moe_delta(const Mat& x, const MoELoRALayer& layer, MoECache* cache, RoutingStats* stats,
              int block_index) {
    const int d_out = static_cast<int>(layer.experts.front().b.rows());
    Mat delta = Mat::Zero(x.rows(), d_out);
    if (cache) cache->gates.resize(static_cast<size_t>(x.rows()));
    for (int row = 0; row < x.rows(); ++row) {
        Vec xr = x.row(row).transpose();
        GateVector gv = route(xr, layer);
        for (int i : gv.active) {
            const auto& e = layer.experts[static_cast<size_t>(i)];
            Vec u = e.a * xr;
            delta.row(row) += (e.scale() * gv.values[i]) * (e.b * u).transpose();
            if (stats) stats->counts(block_index, i) += 1.0;
        }
        if (cache) cache->gates[static_cast<size_t>(row)] = std::move(gv);
    }
    return delta;
}

Mat moe_lora_forward(const Mat& base_output, const Mat& x, const MoELoRALayer& layer) {
    return base_output + moe_delta(x, layer);
}

void lora_backward(const Mat& x, const LoRAAdapter& ad, const Mat& d_delta, Mat& dx,
                   LoRAAdapter* grad) {
    const double s = ad.scale();
    Mat ds = s * (d_delta * ad.b);  // n x r
    dx.noalias() += ds * ad.a;
    if (grad) {
        grad->a.noalias() += ds.transpose() * x;
        grad->b.noalias() += s * (d_delta.transpose() * (x * ad.a.transpose()));
    }
}

void moe_backward(const Mat& x, const MoELoRALayer& layer, const MoECache& cache,
                  const Mat& d_delta, Mat& dx, MoELoRALayer* grad) {
    const int n_active = layer.top_k;
    for (int row = 0; row < x.rows(); ++row) {
        const GateVector& gv = cache.gates[static_cast<size_t>(row)];
        Vec xr = x.row(row).transpose();
        Vec dy = d_delta.row(row).transpose();

        // Expert paths plus gradient of the gate softmax; the discrete
        // selection itself is treated as constant.
        std::vector<double> dgate(static_cast<size_t>(n_active), 0.0);
        for (size_t ai = 0; ai < gv.active.size(); ++ai) {
            int i = gv.active[ai];
            const auto& e = layer.experts[static_cast<size_t>(i)];
            const double s = e.scale();
            const double g = gv.values[i];
            Vec u = e.a * xr;
            Vec w = e.b * u;
            dgate[ai] = s * dy.dot(w);

            Vec du = s * g * (e.b.transpose() * dy);
            dx.row(row).noalias() += (e.a.transpose() * du).transpose();
            if (grad) {
                auto& ge = grad->experts[static_cast<size_t>(i)];
                ge.b.noalias() += (s * g) * (dy * u.transpose());
                ge.a.noalias() += du * xr.transpose();
            }
        }

        double inner = 0.0;
        for (size_t ai = 0; ai < gv.active.size(); ++ai)
            inner += dgate[ai] * gv.values[gv.active[ai]];
        for (size_t ai = 0; ai < gv.active.size(); ++ai) {
            int i = gv.active[ai];
            double dlogit = gv.values[i] * (dgate[ai] - inner);
            if (dlogit == 0.0) continue;
            dx.row(row).noalias() += dlogit * layer.router_w.row(i);
            if (grad) {
                grad->router_w.row(i).noalias() += dlogit * xr.transpose();
                grad->router_b(0, i) += dlogit;
            }
        }
    }
}

namespace {

LoRAAdapter make_lora(int d_out, int k_in, const AdapterConfig& cfg, Rng& rng) {
    LoRAAdapter ad;
    ad.rank = cfg.rank;
    ad.alpha = cfg.alpha;
    ad.a = rng.normal_mat(cfg.rank, k_in) / std::sqrt(static_cast<double>(k_in));
    ad.b = Mat::Zero(d_out, cfg.rank);
    return ad;
}

MoELoRALayer make_moe(int d_out, int k_in, const AdapterConfig& cfg, Rng& rng) {
    MoELoRALayer layer;
    layer.top_k = cfg.top_k;
    layer.experts.reserve(static_cast<size_t>(cfg.num_experts));
    for (int i = 0; i < cfg.num_experts; ++i) layer.experts.push_back(make_lora(d_out, k_in, cfg, rng));
    layer.router_w = rng.normal_mat(cfg.num_experts, k_in) / std::sqrt(static_cast<double>(k_in));
    layer.router_b = Mat::Zero(1, cfg.num_experts);
    return layer;
}

}  // namespace

AdapterStack attach(const ModelConfig& model, const AdapterConfig& config, uint64_t seed) {
    config.validate();
    Rng rng(seed, 0xada7);
    const int d = model.dim;
    const int h = model.mlp_hidden();

    AdapterStack stack;
    stack.config = config;
    stack.blocks.resize(static_cast<size_t>(model.depth));
    for (auto& blk : stack.blocks) {
        if (config.targets.plain_qkv_mlp) {
            blk.q = make_lora(d, d, config, rng);
            blk.k = make_lora(d, d, config, rng);
            blk.v = make_lora(d, d, config, rng);
            blk.w1 = make_lora(h, d, config, rng);
            blk.w2 = make_lora(d, h, config, rng);
        }
        switch (config.targets.out_proj) {
            case OutProjAdapterKind::none: break;
            case OutProjAdapterKind::plain: blk.out_plain = make_lora(d, d, config, rng); break;
            case OutProjAdapterKind::moe: blk.out_moe = make_moe(d, d, config, rng); break;
        }
    }
    return stack;
}

AdapterStack zeros_like(const AdapterStack& stack) {
    AdapterStack z = stack;
    for_each_param(z, [](const std::string&, Mat& m) { m.setZero(); });
    return z;
}

int64_t count_trainable(const AdapterStack& stack) {
    int64_t n = 0;
    for_each_param(stack, [&](const std::string&, const Mat& m) { n += m.size(); });
    return n;
}

Mat merged_weight(const Mat& w, const LoRAAdapter& ad) {
    return w + ad.scale() * (ad.a.transpose() * ad.b.transpose());
}

}  // namespace diptych
