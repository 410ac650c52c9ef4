#pragma once

#include "diptych/adapters.hpp"
#include "diptych/common.hpp"
#include "diptych/model.hpp"
#include "diptych/tokenizer.hpp"

namespace diptych::testutil {

// Small configuration for gradient checks and oracle comparisons.
inline ModelConfig tiny_config(int dim = 8, int depth = 1, int heads = 2, int panel = 4,
                               int patch = 2, int text_len = 3) {
    ModelConfig cfg;
    cfg.patch_size = patch;
    cfg.dim = dim;
    cfg.depth = depth;
    cfg.heads = heads;
    cfg.mlp_ratio = 2;
    cfg.text_vocab = Tokenizer().vocab_size();
    cfg.max_text_len = text_len;
    cfg.panel_h = panel;
    cfg.panel_w = panel;
    cfg.validate();
    return cfg;
}

// Fills every parameter (including the zero-initialized output head) with
// random values so tests exercise nontrivial paths.
template <typename Params>
void randomize(Params& params, Rng& rng, double scale = 0.3) {
    for_each_param(params, [&](const std::string&, Mat& m) {
        for (int r = 0; r < m.rows(); ++r)
            for (int c = 0; c < m.cols(); ++c) m(r, c) = scale * rng.normal();
    });
}

inline std::vector<int> random_text(const ModelConfig& cfg, Rng& rng) {
    std::vector<int> ids(static_cast<size_t>(cfg.max_text_len));
    for (auto& id : ids) id = static_cast<int>(rng.uniform_int(static_cast<uint64_t>(cfg.text_vocab)));
    return ids;
}

inline double rel_err(double analytic, double numeric) {
    return std::abs(analytic - numeric) /
           std::max(1.0, std::max(std::abs(analytic), std::abs(numeric)));
}

}  // namespace diptych::testutil
