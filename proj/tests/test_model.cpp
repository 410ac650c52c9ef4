#include <doctest.h>

#include "diptych/incontext.hpp"
#include "diptych/model.hpp"
#include "test_util.hpp"

using namespace diptych;
using namespace diptych::testutil;

TEST_SUITE_BEGIN("model");

TEST_CASE("patchify counts and layout") {
    RasterImage img(4, 4, 3);
    Rng rng(1);
    for (auto& v : img.values) v = rng.uniform();
    Mat tokens = patchify(img, 2);
    CHECK(tokens.rows() == 4);
    CHECK(tokens.cols() == 12);
    // Token 0 = top-left 2x2 block, channel-major.
    CHECK(tokens(0, 0) == img.at(0, 0, 0));
    CHECK(tokens(0, 3) == img.at(1, 1, 0));
    CHECK(tokens(0, 4) == img.at(0, 0, 1));
    CHECK(tokens(3, 11) == img.at(3, 3, 2));
}

TEST_CASE("patchify zero image gives zero tokens") {
    RasterImage img(4, 4, 3, 0.0);
    CHECK(patchify(img, 2).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("unpatchify is the exact inverse") {
    Rng rng(7);
    RasterImage img(8, 8, 3);
    for (auto& v : img.values) v = rng.uniform();
    RasterImage back = unpatchify(patchify(img, 4), 8, 8, 3, 4);
    double max_diff = 0;
    for (size_t i = 0; i < img.values.size(); ++i)
        max_diff = std::max(max_diff, std::abs(img.values[i] - back.values[i]));
    CHECK(max_diff == 0.0);
}

TEST_CASE("patchify rejects indivisible dims") {
    RasterImage img(5, 4, 3);
    CHECK_THROWS_AS(patchify(img, 2), std::invalid_argument);
}

TEST_CASE("rope at the origin is the identity") {
    Rng rng(3);
    Mat x = rng.normal_mat(4, 8);
    Mat y = rope_rotate(x, std::vector<Pos2>(4, Pos2{0, 0}));
    CHECK((x - y).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("rope preserves token norms") {
    Rng rng(4);
    Mat x = rng.normal_mat(5, 12);
    std::vector<Pos2> pos = {{0, 0}, {1, 2}, {7, 3}, {2, 9}, {40, 17}};
    Mat y = rope_rotate(x, pos);
    for (int i = 0; i < 5; ++i) CHECK(std::abs(x.row(i).norm() - y.row(i).norm()) < 1e-6);
}

TEST_CASE("rope dim-4 hand arithmetic") {
    // One pair per axis; the axis-a pair rotates by angle 1 at position (1,0).
    Mat x(1, 4);
    x << 1, 0, 1, 0;
    Mat y = rope_rotate(x, {{1, 0}});
    CHECK(y(0, 0) == doctest::Approx(0.5403023058681398).epsilon(1e-12));
    CHECK(y(0, 1) == doctest::Approx(0.8414709848078965).epsilon(1e-12));
    CHECK(y(0, 2) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(y(0, 3) == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("rope rejects odd dims") {
    Mat x(1, 3);
    x << 1, 2, 3;
    CHECK_THROWS_AS(rope_rotate(x, {{0, 0}}), std::invalid_argument);
}

namespace {

AttnWeights random_attn(int d, Rng& rng, bool identity_out) {
    AttnWeights w;
    w.wq = rng.normal_mat(d, d);
    w.bq = 0.1 * rng.normal_mat(1, d);
    w.wk = rng.normal_mat(d, d);
    w.bk = 0.1 * rng.normal_mat(1, d);
    w.wv = rng.normal_mat(d, d);
    w.bv = 0.1 * rng.normal_mat(1, d);
    w.wo = identity_out ? Mat::Identity(d, d) : rng.normal_mat(d, d);
    w.bo = Mat::Zero(1, d);
    return w;
}

// Brute-force single-head attention with explicit loops, including rope on
// q/k, kept independent of the library implementation.
Mat brute_attention(const Mat& x, const AttnWeights& w, int heads, const std::vector<Pos2>& pos) {
    const int n = static_cast<int>(x.rows());
    const int d = static_cast<int>(x.cols());
    const int dh = d / heads;
    auto rotate_row = [&](std::vector<double>& row, const Pos2& p) {
        int pairs = static_cast<int>(row.size()) / 2;
        int ga = pairs / 2, gb = pairs - ga;
        for (int j = 0; j < pairs; ++j) {
            double angle = j < ga ? p.a * std::pow(10000.0, -double(j) / ga)
                                  : p.b * std::pow(10000.0, -double(j - ga) / gb);
            double c = std::cos(angle), s = std::sin(angle);
            double a = row[2 * j], b = row[2 * j + 1];
            row[2 * j] = a * c - b * s;
            row[2 * j + 1] = a * s + b * c;
        }
    };

    Mat q(n, d), k(n, d), v(n, d);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < d; ++j) {
            double sq = w.bq(0, j), sk = w.bk(0, j), sv = w.bv(0, j);
            for (int t = 0; t < d; ++t) {
                sq += x(i, t) * w.wq(t, j);
                sk += x(i, t) * w.wk(t, j);
                sv += x(i, t) * w.wv(t, j);
            }
            q(i, j) = sq;
            k(i, j) = sk;
            v(i, j) = sv;
        }
    Mat o(n, d);
    for (int h = 0; h < heads; ++h) {
        std::vector<std::vector<double>> qh(n), kh(n);
        for (int i = 0; i < n; ++i) {
            qh[i].assign(dh, 0.0);
            kh[i].assign(dh, 0.0);
            for (int j = 0; j < dh; ++j) {
                qh[i][j] = q(i, h * dh + j);
                kh[i][j] = k(i, h * dh + j);
            }
            rotate_row(qh[i], pos[i]);
            rotate_row(kh[i], pos[i]);
        }
        for (int i = 0; i < n; ++i) {
            std::vector<double> logits(n, 0.0);
            double mx = -1e300;
            for (int j = 0; j < n; ++j) {
                double s = 0;
                for (int t = 0; t < dh; ++t) s += qh[i][t] * kh[j][t];
                logits[j] = s / std::sqrt(double(dh));
                mx = std::max(mx, logits[j]);
            }
            double denom = 0;
            for (double l : logits) denom += std::exp(l - mx);
            for (int j = 0; j < dh; ++j) {
                double acc = 0;
                for (int t = 0; t < n; ++t)
                    acc += std::exp(logits[t] - mx) / denom * v(t, h * dh + j);
                o(i, h * dh + j) = acc;
            }
        }
    }
    Mat out(n, d);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < d; ++j) {
            double s = w.bo(0, j);
            for (int t = 0; t < d; ++t) s += o(i, t) * w.wo(t, j);
            out(i, j) = s;
        }
    return out;
}

}  // namespace

TEST_CASE("mma single token returns its value vector") {
    Rng rng(11);
    int d = 6;
    AttnWeights w = random_attn(d, rng, /*identity_out=*/true);
    Mat text = rng.normal_mat(1, d);
    Mat image(0, d);
    auto [to, io] = mma(text, image, w, 1, {{0, 0}});
    Mat v = text * w.wv + w.bv;
    CHECK((to - v).cwiseAbs().maxCoeff() < 1e-12);
    CHECK(io.rows() == 0);
}

TEST_CASE("mma with identical keys averages the values") {
    Rng rng(12);
    int d = 6;
    AttnWeights w = random_attn(d, rng, true);
    w.wk = Mat::Zero(d, d);  // all keys collapse to the bias
    Mat text = rng.normal_mat(1, d);
    Mat image = rng.normal_mat(1, d);
    auto [to, io] = mma(text, image, w, 1, {{0, 0}, {0, 0}});
    Mat x(2, d);
    x << text, image;
    Mat v = x * w.wv;
    v.rowwise() += w.bv.row(0);
    Mat mean = 0.5 * (v.row(0) + v.row(1));
    CHECK((to - mean).cwiseAbs().maxCoeff() < 1e-9);
    CHECK((io - mean).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("mma matches brute-force attention") {
    Rng rng(13);

    SUBCASE("single head, d=4, no rope") {
        int d = 4;
        AttnWeights w = random_attn(d, rng, false);
        Mat text = rng.normal_mat(1, d);
        Mat image = rng.normal_mat(2, d);
        std::vector<Pos2> pos(3, Pos2{0, 0});
        auto [to, io] = mma(text, image, w, 1, pos);
        Mat x(3, d);
        x << text, image;
        Mat expect = brute_attention(x, w, 1, pos);
        CHECK((to - expect.topRows(1)).cwiseAbs().maxCoeff() < 1e-6);
        CHECK((io - expect.bottomRows(2)).cwiseAbs().maxCoeff() < 1e-6);
    }

    SUBCASE("two heads with rope positions") {
        int d = 8;
        AttnWeights w = random_attn(d, rng, false);
        Mat text = rng.normal_mat(2, d);
        Mat image = rng.normal_mat(3, d);
        std::vector<Pos2> pos = {{0, 0}, {0, 1}, {1, 3}, {1, 4}, {2, 3}};
        auto [to, io] = mma(text, image, w, 2, pos);
        Mat x(5, d);
        x << text, image;
        Mat expect = brute_attention(x, w, 2, pos);
        Mat got(5, d);
        got << to, io;
        CHECK((got - expect).cwiseAbs().maxCoeff() < 1e-6);
    }
}

TEST_CASE("attention rows sum to one") {
    Rng rng(14);
    int d = 8;
    AttnWeights w = random_attn(d, rng, false);
    Mat x = rng.normal_mat(6, d);
    AttnCache cache;
    attn_forward(x, w, 2, std::vector<Pos2>(6, Pos2{1, 2}), nullptr, &cache);
    for (const Mat& p : cache.probs)
        for (int i = 0; i < p.rows(); ++i) CHECK(std::abs(p.row(i).sum() - 1.0) < 1e-6);
}

TEST_CASE("dit_forward ignores zero-initialized adapters") {
    ModelConfig cfg = tiny_config(8, 2, 2);
    Rng rng(21);
    ModelParameters params = init_parameters(cfg, 5);
    randomize(params, rng);

    AdapterConfig acfg;
    acfg.rank = 2;
    acfg.num_experts = 3;
    acfg.top_k = 2;
    AdapterStack stack = attach(cfg, acfg, 99);

    Mat x = rng.normal_mat(cfg.num_image_tokens(), cfg.patch_dim());
    Mat cond = rng.normal_mat(cfg.num_image_tokens(), cfg.cond_dim());
    auto text = random_text(cfg, rng);
    Mat base = dit_forward(cfg, params, nullptr, text, x, cond, 0.3);
    Mat adapted = dit_forward(cfg, params, &stack, text, x, cond, 0.3);
    CHECK((base - adapted).cwiseAbs().maxCoeff() < 1e-6);
}

TEST_CASE("dit_forward is deterministic") {
    ModelConfig cfg = tiny_config(8, 1, 2);
    Rng rng(22);
    ModelParameters params = init_parameters(cfg, 5);
    randomize(params, rng);
    Mat x = rng.normal_mat(cfg.num_image_tokens(), cfg.patch_dim());
    Mat cond = rng.normal_mat(cfg.num_image_tokens(), cfg.cond_dim());
    auto text = random_text(cfg, rng);
    Mat a = dit_forward(cfg, params, nullptr, text, x, cond, 0.7);
    Mat b = dit_forward(cfg, params, nullptr, text, x, cond, 0.7);
    CHECK((a - b).cwiseAbs().maxCoeff() == 0.0);
}

namespace {

// Standalone scalar re-implementation of the whole forward pass, written
// with per-token loops and no shared helpers, as an independent oracle.
Mat naive_dit_forward(const ModelConfig& cfg, const ModelParameters& p,
                      const std::vector<int>& text_ids, const Mat& x_tok, const Mat& cond,
                      double t) {
    const int m = cfg.max_text_len, n_img = cfg.num_image_tokens(), d = cfg.dim;
    const int n = m + n_img;

    // time features
    std::vector<double> tf(static_cast<size_t>(d));
    for (int i = 0; i < d / 2; ++i) {
        double freq = std::exp(-std::log(10000.0) * double(i) / (d / 2));
        tf[2 * i] = std::sin(1000.0 * t * freq);
        tf[2 * i + 1] = std::cos(1000.0 * t * freq);
    }
    std::vector<double> temb(static_cast<size_t>(d));
    for (int j = 0; j < d; ++j) {
        double s = p.time_b(0, j);
        for (int i = 0; i < d; ++i) s += tf[i] * p.time_w(i, j);
        temb[j] = s;
    }

    std::vector<std::vector<double>> h(static_cast<size_t>(n), std::vector<double>(d, 0.0));
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < d; ++j) h[i][j] = p.text_embed(text_ids[static_cast<size_t>(i)], j) + temb[j];
    for (int i = 0; i < n_img; ++i)
        for (int j = 0; j < d; ++j) {
            double s = p.patch_b(0, j);
            for (int c = 0; c < x_tok.cols(); ++c) s += x_tok(i, c) * p.patch_w(c, j);
            for (int c = 0; c < cond.cols(); ++c) s += cond(i, c) * p.patch_w(x_tok.cols() + c, j);
            h[m + i][j] = s + temb[j];
        }

    auto layernorm = [&](const std::vector<double>& row, const Mat& g, const Mat& b) {
        double mu = 0;
        for (double v : row) mu += v;
        mu /= d;
        double var = 0;
        for (double v : row) var += (v - mu) * (v - mu);
        var /= d;
        double rstd = 1.0 / std::sqrt(var + 1e-6);
        std::vector<double> out(static_cast<size_t>(d));
        for (int j = 0; j < d; ++j) out[j] = (row[j] - mu) * rstd * g(0, j) + b(0, j);
        return out;
    };

    std::vector<Pos2> pos;
    for (int i = 0; i < m; ++i) pos.push_back({0, i});
    for (int r = 0; r < cfg.grid_h(); ++r)
        for (int c = 0; c < cfg.grid_w(); ++c) pos.push_back({1 + r, m + c});

    const int dh = cfg.head_dim();
    for (int bi = 0; bi < cfg.depth; ++bi) {
        const auto& bp = p.blocks[static_cast<size_t>(bi)];
        // LN1 + q/k/v
        std::vector<std::vector<double>> q(n, std::vector<double>(d)), k = q, v = q;
        for (int i = 0; i < n; ++i) {
            auto xn = layernorm(h[i], bp.ln1_g, bp.ln1_b);
            for (int j = 0; j < d; ++j) {
                double sq = bp.attn.bq(0, j), sk = bp.attn.bk(0, j), sv = bp.attn.bv(0, j);
                for (int tt = 0; tt < d; ++tt) {
                    sq += xn[tt] * bp.attn.wq(tt, j);
                    sk += xn[tt] * bp.attn.wk(tt, j);
                    sv += xn[tt] * bp.attn.wv(tt, j);
                }
                q[i][j] = sq;
                k[i][j] = sk;
                v[i][j] = sv;
            }
            // rope per head
            for (int head = 0; head < cfg.heads; ++head) {
                int pairs = dh / 2, ga = pairs / 2, gb = pairs - ga;
                for (int pj = 0; pj < pairs; ++pj) {
                    double angle = pj < ga ? pos[i].a * std::pow(10000.0, -double(pj) / ga)
                                           : pos[i].b * std::pow(10000.0, -double(pj - ga) / gb);
                    double c = std::cos(angle), s = std::sin(angle);
                    int o = head * dh + 2 * pj;
                    double a0 = q[i][o], a1 = q[i][o + 1];
                    q[i][o] = a0 * c - a1 * s;
                    q[i][o + 1] = a0 * s + a1 * c;
                    double b0 = k[i][o], b1 = k[i][o + 1];
                    k[i][o] = b0 * c - b1 * s;
                    k[i][o + 1] = b0 * s + b1 * c;
                }
            }
        }
        // attention + residual
        std::vector<std::vector<double>> h1(n, std::vector<double>(d));
        for (int i = 0; i < n; ++i) {
            std::vector<double> o(static_cast<size_t>(d), 0.0);
            for (int head = 0; head < cfg.heads; ++head) {
                std::vector<double> logits(n);
                double mx = -1e300;
                for (int j = 0; j < n; ++j) {
                    double s = 0;
                    for (int tt = 0; tt < dh; ++tt) s += q[i][head * dh + tt] * k[j][head * dh + tt];
                    logits[j] = s / std::sqrt(double(dh));
                    mx = std::max(mx, logits[j]);
                }
                double denom = 0;
                for (double l : logits) denom += std::exp(l - mx);
                for (int tt = 0; tt < dh; ++tt) {
                    double acc = 0;
                    for (int j = 0; j < n; ++j)
                        acc += std::exp(logits[j] - mx) / denom * v[j][head * dh + tt];
                    o[head * dh + tt] = acc;
                }
            }
            for (int j = 0; j < d; ++j) {
                double s = bp.attn.bo(0, j);
                for (int tt = 0; tt < d; ++tt) s += o[tt] * bp.attn.wo(tt, j);
                h1[i][j] = h[i][j] + s;
            }
        }
        // mlp + residual
        for (int i = 0; i < n; ++i) {
            auto yn = layernorm(h1[i], bp.ln2_g, bp.ln2_b);
            std::vector<double> u(static_cast<size_t>(cfg.mlp_hidden()));
            for (int j = 0; j < cfg.mlp_hidden(); ++j) {
                double s = bp.b1(0, j);
                for (int tt = 0; tt < d; ++tt) s += yn[tt] * bp.w1(tt, j);
                u[j] = 0.5 * s * (1.0 + std::erf(s / std::sqrt(2.0)));
            }
            for (int j = 0; j < d; ++j) {
                double s = bp.b2(0, j);
                for (int tt = 0; tt < cfg.mlp_hidden(); ++tt) s += u[tt] * bp.w2(tt, j);
                h[i][j] = h1[i][j] + s;
            }
        }
    }

    Mat vel(n_img, cfg.patch_dim());
    for (int i = 0; i < n_img; ++i) {
        auto fn = layernorm(h[m + i], p.fln_g, p.fln_b);
        for (int j = 0; j < cfg.patch_dim(); ++j) {
            double s = p.head_b(0, j);
            for (int tt = 0; tt < d; ++tt) s += fn[tt] * p.head_w(tt, j);
            vel(i, j) = s;
        }
    }
    return vel;
}

}  // namespace

TEST_CASE("dit_forward matches an independent scalar re-implementation") {
    ModelConfig cfg = tiny_config(8, 2, 2, 4, 2, 3);
    Rng rng(31);
    ModelParameters params = init_parameters(cfg, 5);
    randomize(params, rng);
    Mat x = rng.normal_mat(cfg.num_image_tokens(), cfg.patch_dim());
    Mat cond = rng.normal_mat(cfg.num_image_tokens(), cfg.cond_dim());
    auto text = random_text(cfg, rng);
    Mat got = dit_forward(cfg, params, nullptr, text, x, cond, 0.42);
    Mat expect = naive_dit_forward(cfg, params, text, x, cond, 0.42);
    CHECK((got - expect).cwiseAbs().maxCoeff() < 1e-5);
}

TEST_CASE("fm_loss of the zero model equals the mean squared target") {
    ModelConfig cfg = tiny_config(8, 1, 2);
    ModelParameters params = init_parameters(cfg, 5);
    for_each_param(params, [](const std::string&, Mat& m) { m.setZero(); });

    Rng rng(41);
    std::vector<FlowItem> batch;
    for (int i = 0; i < 3; ++i) {
        FlowItem item;
        item.x1 = rng.normal_mat(cfg.num_image_tokens(), cfg.patch_dim());
        item.x0 = rng.normal_mat(cfg.num_image_tokens(), cfg.patch_dim());
        item.cond = rng.normal_mat(cfg.num_image_tokens(), cfg.cond_dim());
        item.text_ids = random_text(cfg, rng);
        item.t = rng.uniform();
        batch.push_back(std::move(item));
    }
    double expect = 0;
    for (const auto& item : batch)
        expect += (item.x1 - item.x0).squaredNorm() / double(item.x1.size());
    expect /= batch.size();
    CHECK(fm_loss(cfg, params, nullptr, batch) == doctest::Approx(expect).epsilon(1e-12));
}

TEST_CASE("fm_loss is zero for a perfect predictor") {
    // With x1 = x0 the velocity target vanishes, so the zero model is exact.
    ModelConfig cfg = tiny_config(8, 1, 2);
    ModelParameters params = init_parameters(cfg, 5);
    for_each_param(params, [](const std::string&, Mat& m) { m.setZero(); });
    Rng rng(42);
    FlowItem item;
    item.x1 = rng.normal_mat(cfg.num_image_tokens(), cfg.patch_dim());
    item.x0 = item.x1;
    item.cond = rng.normal_mat(cfg.num_image_tokens(), cfg.cond_dim());
    item.text_ids = random_text(cfg, rng);
    item.t = 0.5;
    CHECK(fm_loss(cfg, params, nullptr, {item}) == 0.0);
}

TEST_CASE("fm_loss is non-negative") {
    ModelConfig cfg = tiny_config(8, 1, 2);
    Rng rng(43);
    ModelParameters params = init_parameters(cfg, 5);
    randomize(params, rng);
    for (int trial = 0; trial < 5; ++trial) {
        FlowItem item;
        item.x1 = rng.normal_mat(cfg.num_image_tokens(), cfg.patch_dim());
        item.x0 = rng.normal_mat(cfg.num_image_tokens(), cfg.patch_dim());
        item.cond = rng.normal_mat(cfg.num_image_tokens(), cfg.cond_dim());
        item.text_ids = random_text(cfg, rng);
        item.t = rng.uniform();
        CHECK(fm_loss(cfg, params, nullptr, {item}) >= 0.0);
    }
}

TEST_CASE("euler with one step and constant velocity") {
    Rng rng(51);
    Mat noise = rng.normal_mat(3, 4);
    Mat v = rng.normal_mat(3, 4);
    Mat out = euler_integrate([&](const Mat&, double) { return v; }, noise, 1);
    CHECK((out - (noise + v)).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("euler rejects a non-positive step count") {
    Mat x = Mat::Zero(1, 1);
    CHECK_THROWS_AS(euler_integrate([](const Mat& m, double) { return m; }, x, 0),
                    std::invalid_argument);
}

namespace {

SampleInputs random_sample_inputs(const ModelConfig& cfg, Rng& rng) {
    SampleInputs in;
    in.cond = rng.normal_mat(cfg.num_image_tokens(), cfg.cond_dim());
    in.text_ids = random_text(cfg, rng);
    in.null_ids = std::vector<int>(static_cast<size_t>(cfg.max_text_len), 0);
    in.src_latent = rng.normal_mat(cfg.num_image_tokens(), cfg.patch_dim());
    in.keep_mask = Mat::Zero(cfg.num_image_tokens(), cfg.patch_dim());
    for (int i = 0; i < in.keep_mask.rows(); ++i)
        if (i % 2 == 0) in.keep_mask.row(i).setOnes();
    in.noise = rng.normal_mat(cfg.num_image_tokens(), cfg.patch_dim());
    return in;
}

}  // namespace

TEST_CASE("guidance one equals pure conditional sampling") {
    ModelConfig cfg = tiny_config(8, 1, 2);
    Rng rng(52);
    ModelParameters params = init_parameters(cfg, 5);
    randomize(params, rng);
    SampleInputs in = random_sample_inputs(cfg, rng);

    Mat guided = euler_sample_latent(cfg, params, nullptr, in, 3, 1.0);
    // Explicit conditional-only integration.
    Mat x = in.noise;
    for (int i = 0; i < 3; ++i) {
        double t = double(i) / 3;
        x += (1.0 / 3) * dit_forward(cfg, params, nullptr, in.text_ids, x, in.cond, t);
        x = recompose_keep(x, in.src_latent, in.noise, double(i + 1) / 3, in.keep_mask);
    }
    CHECK((guided - x).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("euler sampler matches an independent loop with guidance") {
    ModelConfig cfg = tiny_config(8, 2, 2);
    Rng rng(53);
    ModelParameters params = init_parameters(cfg, 5);
    randomize(params, rng, 0.1);
    SampleInputs in = random_sample_inputs(cfg, rng);
    const double g = 2.5;
    const int n = 4;

    Mat got = euler_sample_latent(cfg, params, nullptr, in, n, g);

    Mat x = in.noise;
    for (int i = 0; i < n; ++i) {
        double t = double(i) / n;
        Mat vc = dit_forward(cfg, params, nullptr, in.text_ids, x, in.cond, t);
        Mat vn = dit_forward(cfg, params, nullptr, in.null_ids, x, in.cond, t);
        x += (1.0 / n) * (vn + g * (vc - vn));
        double t1 = double(i + 1) / n;
        Mat interp = t1 * in.src_latent + (1 - t1) * in.noise;
        for (int r = 0; r < x.rows(); ++r)
            for (int c = 0; c < x.cols(); ++c)
                if (in.keep_mask(r, c) == 0.0) x(r, c) = interp(r, c);
    }
    CHECK((got - x).cwiseAbs().maxCoeff() < 1e-6);
}

TEST_CASE("sampling is bit-deterministic") {
    ModelConfig cfg = tiny_config(8, 1, 2);
    Rng rng(54);
    ModelParameters params = init_parameters(cfg, 5);
    randomize(params, rng, 0.1);
    SampleInputs in = random_sample_inputs(cfg, rng);
    Mat a = euler_sample_latent(cfg, params, nullptr, in, 5, 2.0);
    Mat b = euler_sample_latent(cfg, params, nullptr, in, 5, 2.0);
    CHECK((a - b).cwiseAbs().maxCoeff() == 0.0);
}

TEST_SUITE_END();
