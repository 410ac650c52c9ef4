#include <doctest.h>

#include "diptych/adapters.hpp"
#include "diptych/model.hpp"
#include "test_util.hpp"

using namespace diptych;
using namespace diptych::testutil;

TEST_SUITE_BEGIN("adapters");

namespace {

LoRAAdapter random_lora(int d_out, int k_in, int rank, double alpha, Rng& rng, bool zero_b = false) {
    LoRAAdapter ad;
    ad.rank = rank;
    ad.alpha = alpha;
    ad.a = rng.normal_mat(rank, k_in);
    ad.b = zero_b ? Mat::Zero(d_out, rank) : rng.normal_mat(d_out, rank);
    return ad;
}

MoELoRALayer random_moe(int d_out, int k_in, int rank, double alpha, int n, int k, Rng& rng,
                        bool zero_b = false) {
    MoELoRALayer layer;
    layer.top_k = k;
    for (int i = 0; i < n; ++i) layer.experts.push_back(random_lora(d_out, k_in, rank, alpha, rng, zero_b));
    layer.router_w = rng.normal_mat(n, k_in);
    layer.router_b = 0.1 * rng.normal_mat(1, n);
    return layer;
}

}  // namespace

TEST_CASE("lora with zero B is a no-op") {
    Rng rng(1);
    LoRAAdapter ad = random_lora(4, 6, 2, 8.0, rng, /*zero_b=*/true);
    Mat x = rng.normal_mat(3, 6);
    Mat base = rng.normal_mat(3, 4);
    CHECK((lora_forward(base, x, ad) - base).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("lora hand arithmetic") {
    LoRAAdapter ad;
    ad.rank = 1;
    ad.alpha = 1.0;
    ad.a = Mat(1, 2);
    ad.a << 1, 0;
    ad.b = Mat(2, 1);
    ad.b << 1, 0;
    Mat x(1, 2);
    x << 2, 5;
    Mat base = Mat::Zero(1, 2);
    Mat out = lora_forward(base, x, ad);
    CHECK(out(0, 0) == doctest::Approx(2.0).epsilon(1e-15));
    CHECK(out(0, 1) == doctest::Approx(0.0).epsilon(1e-15));
}

TEST_CASE("doubling alpha doubles the delta") {
    Rng rng(2);
    LoRAAdapter ad = random_lora(5, 7, 3, 4.0, rng);
    Mat x = rng.normal_mat(4, 7);
    Mat d1 = lora_delta(x, ad);
    ad.alpha = 8.0;
    Mat d2 = lora_delta(x, ad);
    CHECK((d2 - 2.0 * d1).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("route selects softmax over the top-k logits") {
    MoELoRALayer layer;
    layer.top_k = 1;
    layer.experts.resize(4);
    for (auto& e : layer.experts) {
        e.rank = 1;
        e.alpha = 1;
        e.a = Mat::Zero(1, 4);
        e.b = Mat::Zero(4, 1);
    }
    // Router producing exactly the logits we want for x = e1.
    layer.router_w = Mat::Zero(4, 4);
    layer.router_b = Mat(1, 4);

    Vec x = Vec::Zero(4);

    SUBCASE("singleton softmax") {
        layer.router_b << 2.0, 1.0, 0.5, 0.0;
        GateVector gv = route(x, layer);
        CHECK(gv.values[0] == doctest::Approx(1.0));
        CHECK(gv.values[1] == 0.0);
        CHECK(gv.values[2] == 0.0);
        CHECK(gv.values[3] == 0.0);
        CHECK(gv.active == std::vector<int>{0});
    }

    SUBCASE("symmetric pair") {
        layer.top_k = 2;
        layer.router_b << 1.0, 1.0, 0.0, 0.0;
        GateVector gv = route(x, layer);
        CHECK(gv.values[0] == doctest::Approx(0.5));
        CHECK(gv.values[1] == doctest::Approx(0.5));
        CHECK(gv.values[2] == 0.0);
        CHECK(gv.values[3] == 0.0);
    }

    SUBCASE("uniform over all-equal logits") {
        layer.top_k = 4;
        layer.router_b << 0.7, 0.7, 0.7, 0.7;
        GateVector gv = route(x, layer);
        for (int i = 0; i < 4; ++i) CHECK(gv.values[i] == doctest::Approx(0.25));
    }

    SUBCASE("ties break towards the lowest index") {
        layer.router_b << 0.7, 0.7, 0.7, 0.7;
        GateVector gv = route(x, layer);
        CHECK(gv.active == std::vector<int>{0});
        CHECK(gv.values[0] == doctest::Approx(1.0));
    }
}

TEST_CASE("gate properties over random layers") {
    Rng rng(3);
    for (int trial = 0; trial < 1000; ++trial) {
        int n = 2 + static_cast<int>(rng.uniform_int(5));
        int k = 1 + static_cast<int>(rng.uniform_int(static_cast<uint64_t>(n)));
        MoELoRALayer layer = random_moe(3, 5, 2, 4.0, n, k, rng);
        Vec x = rng.normal_mat(5, 1).col(0);
        GateVector gv = route(x, layer);

        int nonzero = 0;
        double sum = 0;
        for (int i = 0; i < n; ++i) {
            CHECK(gv.values[i] >= 0.0);
            CHECK(gv.values[i] <= 1.0);
            if (gv.values[i] != 0.0) ++nonzero;
            sum += gv.values[i];
        }
        CHECK(nonzero == k);
        CHECK(std::abs(sum - 1.0) < 1e-6);

        // Shift invariance: adding a constant to every logit changes nothing.
        MoELoRALayer shifted = layer;
        shifted.router_b.array() += 3.7;
        GateVector gv2 = route(x, shifted);
        CHECK(gv2.active == gv.active);
        CHECK((gv2.values - gv.values).cwiseAbs().maxCoeff() < 1e-9);
    }
}

TEST_CASE("moe with one expert equals plain lora") {
    Rng rng(4);
    for (int trial = 0; trial < 100; ++trial) {
        LoRAAdapter ad = random_lora(4, 6, 2, 8.0, rng);
        MoELoRALayer layer;
        layer.top_k = 1;
        layer.experts = {ad};
        layer.router_w = rng.normal_mat(1, 6);
        layer.router_b = rng.normal_mat(1, 1);
        Mat x = rng.normal_mat(3, 6);
        Mat base = rng.normal_mat(3, 4);
        Mat a = lora_forward(base, x, ad);
        Mat b = moe_lora_forward(base, x, layer);
        CHECK((a - b).cwiseAbs().maxCoeff() < 1e-9);
    }
}

TEST_CASE("moe with zero experts' B is a no-op") {
    Rng rng(5);
    MoELoRALayer layer = random_moe(4, 6, 2, 8.0, 4, 2, rng, /*zero_b=*/true);
    Mat x = rng.normal_mat(3, 6);
    Mat base = rng.normal_mat(3, 4);
    CHECK((moe_lora_forward(base, x, layer) - base).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("moe with equal logits averages the active expert deltas") {
    Rng rng(6);
    MoELoRALayer layer = random_moe(4, 6, 2, 8.0, 2, 2, rng);
    layer.router_w.setZero();
    layer.router_b.setZero();
    Mat x = rng.normal_mat(3, 6);
    Mat base = rng.normal_mat(3, 4);
    Mat d1 = lora_delta(x, layer.experts[0]);
    Mat d2 = lora_delta(x, layer.experts[1]);
    Mat expect = base + 0.5 * (d1 + d2);
    CHECK((moe_lora_forward(base, x, layer) - expect).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("attach freezes the base and only adapters are trainable") {
    ModelConfig cfg = tiny_config(8, 2, 2);
    AdapterConfig acfg;
    acfg.rank = 2;
    acfg.num_experts = 4;
    acfg.top_k = 1;
    AdapterStack stack = attach(cfg, acfg, 7);

    ModelParameters params = init_parameters(cfg, 5);
    CHECK(count_trainable(stack) > 0);
    CHECK(param_count(params) > 0);

    // Detach = run without the stack; zero-init adapters leave outputs
    // unchanged, so attach-then-detach round-trips the forward pass.
    Rng rng(8);
    randomize(params, rng);
    Mat x = rng.normal_mat(cfg.num_image_tokens(), cfg.patch_dim());
    Mat cond = rng.normal_mat(cfg.num_image_tokens(), cfg.cond_dim());
    auto text = random_text(cfg, rng);
    Mat with = dit_forward(cfg, params, &stack, text, x, cond, 0.1);
    Mat without = dit_forward(cfg, params, nullptr, text, x, cond, 0.1);
    CHECK((with - without).cwiseAbs().maxCoeff() < 1e-6);
}

TEST_CASE("count_trainable matches the closed form") {
    SUBCASE("single plain adapter") {
        Rng rng(9);
        AdapterStack stack;
        stack.blocks.resize(1);
        stack.blocks[0].q = random_lora(4, 4, 2, 2.0, rng);
        CHECK(count_trainable(stack) == 16);  // 2*(2*4)
    }

    SUBCASE("full default toy config") {
        ModelConfig cfg = tiny_config(64, 4, 4, 16, 4, 8);
        AdapterConfig acfg;  // rank 8, 4 experts, top-1, full targets
        AdapterStack stack = attach(cfg, acfg, 1);

        // Independent count: per block, plain LoRA on q/k/v (d->d), w1
        // (d->hidden), w2 (hidden->d); MoE on the output projection with N
        // experts (d->d) plus a router (d -> N with bias).
        const int64_t d = cfg.dim, h = cfg.mlp_hidden(), r = acfg.rank, n = acfg.num_experts;
        int64_t per_block = 3 * r * (d + d) + r * (d + h) + r * (h + d) + n * r * (d + d) +
                            (n * d + n);
        CHECK(count_trainable(stack) == cfg.depth * per_block);
    }

    SUBCASE("no adapters") {
        AdapterStack stack;
        CHECK(count_trainable(stack) == 0);
    }
}

TEST_CASE("expert usage frequencies") {
    ModelConfig cfg = tiny_config(8, 2, 2);
    AdapterConfig acfg;
    acfg.rank = 2;
    acfg.num_experts = 4;
    acfg.top_k = 1;
    AdapterStack stack = attach(cfg, acfg, 3);

    ModelParameters params = init_parameters(cfg, 5);
    Rng rng(10);
    randomize(params, rng);

    SUBCASE("zero router routes everything to expert 0") {
        for (auto& blk : stack.blocks) {
            blk.out_moe->router_w.setZero();
            blk.out_moe->router_b.setZero();
        }
        RoutingStats stats;
        stats.init(cfg.depth, acfg.num_experts);
        Mat x = rng.normal_mat(cfg.num_image_tokens(), cfg.patch_dim());
        Mat cond = rng.normal_mat(cfg.num_image_tokens(), cfg.cond_dim());
        dit_forward(cfg, params, &stack, random_text(cfg, rng), x, cond, 0.2, nullptr, &stats);
        Mat freq = stats.frequencies();
        for (int b = 0; b < cfg.depth; ++b) {
            CHECK(freq(b, 0) == doctest::Approx(1.0));
            CHECK(std::abs(freq.row(b).sum() - 1.0) < 1e-6);
        }
    }

    SUBCASE("frequencies sum to one per block") {
        RoutingStats stats;
        stats.init(cfg.depth, acfg.num_experts);
        for (int i = 0; i < 4; ++i) {
            Mat x = rng.normal_mat(cfg.num_image_tokens(), cfg.patch_dim());
            Mat cond = rng.normal_mat(cfg.num_image_tokens(), cfg.cond_dim());
            dit_forward(cfg, params, &stack, random_text(cfg, rng), x, cond, 0.2, nullptr, &stats);
        }
        Mat freq = stats.frequencies();
        for (int b = 0; b < cfg.depth; ++b) CHECK(std::abs(freq.row(b).sum() - 1.0) < 1e-6);
    }
}

TEST_CASE("merged plain-lora weight reproduces the adapter delta") {
    Rng rng(11);
    LoRAAdapter ad = random_lora(5, 5, 2, 4.0, rng);
    Mat w = rng.normal_mat(5, 5);
    Mat x = rng.normal_mat(3, 5);
    Mat via_adapter = x * w + lora_delta(x, ad);
    Mat via_merge = x * merged_weight(w, ad);
    CHECK((via_adapter - via_merge).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("adapter config validation") {
    AdapterConfig bad;
    bad.rank = 0;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    bad = AdapterConfig{};
    bad.top_k = 5;
    bad.num_experts = 4;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_SUITE_END();
