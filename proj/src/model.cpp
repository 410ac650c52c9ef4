#include "diptych/model.hpp"

#include <cmath>

#include "diptych/incontext.hpp"

namespace diptych {

namespace {
constexpr double kLnEps = 1e-6;
}

void ModelConfig::validate() const {
    if (patch_size < 1) throw ConfigError("patch_size must be >= 1");
    if (dim < 2 || dim % 2 != 0) throw ConfigError("dim must be even and >= 2");
    if (heads < 1 || dim % heads != 0) throw ConfigError("dim must be divisible by heads");
    if (head_dim() % 2 != 0) throw ConfigError("head dim must be even for rope");
    if (depth < 1) throw ConfigError("depth must be >= 1");
    if (mlp_ratio < 1) throw ConfigError("mlp_ratio must be >= 1");
    if (max_text_len < 1) throw ConfigError("max_text_len must be >= 1");
    if (text_vocab < 2) throw ConfigError("text_vocab must be set from the tokenizer");
    if (panel_h <= 0 || panel_w <= 0 || panel_h % patch_size != 0 || panel_w % patch_size != 0)
        throw ConfigError("panel dims must be positive and divisible by patch_size");
}

// ---- init ----

ModelParameters init_parameters(const ModelConfig& cfg, uint64_t seed) {
    cfg.validate();
    Rng rng(seed, 0xd17);
    auto linear = [&](int in, int out) { return rng.normal_mat(in, out) / std::sqrt(static_cast<double>(in)); };

    ModelParameters p;
    p.text_embed = 0.02 * rng.normal_mat(cfg.text_vocab, cfg.dim);
    p.patch_w = linear(cfg.patch_dim() + cfg.cond_dim(), cfg.dim);
    p.patch_b = Mat::Zero(1, cfg.dim);
    p.time_w = linear(cfg.dim, cfg.dim);
    p.time_b = Mat::Zero(1, cfg.dim);
    p.blocks.resize(static_cast<size_t>(cfg.depth));
    for (auto& b : p.blocks) {
        b.ln1_g = Mat::Ones(1, cfg.dim);
        b.ln1_b = Mat::Zero(1, cfg.dim);
        b.attn.wq = linear(cfg.dim, cfg.dim);
        b.attn.bq = Mat::Zero(1, cfg.dim);
        b.attn.wk = linear(cfg.dim, cfg.dim);
        b.attn.bk = Mat::Zero(1, cfg.dim);
        b.attn.wv = linear(cfg.dim, cfg.dim);
        b.attn.bv = Mat::Zero(1, cfg.dim);
        b.attn.wo = linear(cfg.dim, cfg.dim);
        b.attn.bo = Mat::Zero(1, cfg.dim);
        b.ln2_g = Mat::Ones(1, cfg.dim);
        b.ln2_b = Mat::Zero(1, cfg.dim);
        b.w1 = linear(cfg.dim, cfg.mlp_hidden());
        b.b1 = Mat::Zero(1, cfg.mlp_hidden());
        b.w2 = linear(cfg.mlp_hidden(), cfg.dim);
        b.b2 = Mat::Zero(1, cfg.dim);
    }
    p.fln_g = Mat::Ones(1, cfg.dim);
    p.fln_b = Mat::Zero(1, cfg.dim);
    // Zero output head: the untrained model predicts zero velocity.
    p.head_w = Mat::Zero(cfg.dim, cfg.patch_dim());
    p.head_b = Mat::Zero(1, cfg.patch_dim());
    return p;
}

ModelParameters zeros_like(const ModelParameters& p) {
    ModelParameters z = p;
    for_each_param(z, [](const std::string&, Mat& m) { m.setZero(); });
    return z;
}

int64_t param_count(const ModelParameters& p) {
    int64_t n = 0;
    for_each_param(p, [&](const std::string&, const Mat& m) { n += m.size(); });
    return n;
}

bool params_finite(const ModelParameters& p) {
    bool ok = true;
    for_each_param(p, [&](const std::string&, const Mat& m) { ok = ok && m.allFinite(); });
    return ok;
}

// ---- patchify ----

Mat patchify(const RasterImage& image, int patch_size) {
    if (patch_size < 1 || image.height % patch_size != 0 || image.width % patch_size != 0)
        throw std::invalid_argument("patchify: image dims not divisible by patch size");
    const int p = patch_size;
    const int gh = image.height / p, gw = image.width / p, c = image.channels;
    Mat tokens(gh * gw, c * p * p);
    for (int gy = 0; gy < gh; ++gy)
        for (int gx = 0; gx < gw; ++gx) {
            int row = gy * gw + gx;
            for (int ch = 0; ch < c; ++ch)
                for (int py = 0; py < p; ++py)
                    for (int px = 0; px < p; ++px)
                        tokens(row, ch * p * p + py * p + px) = image.at(gy * p + py, gx * p + px, ch);
        }
    return tokens;
}

RasterImage unpatchify(const Mat& tokens, int height, int width, int channels, int patch_size) {
    const int p = patch_size;
    if (p < 1 || height % p != 0 || width % p != 0)
        throw std::invalid_argument("unpatchify: dims not divisible by patch size");
    const int gh = height / p, gw = width / p;
    if (tokens.rows() != gh * gw || tokens.cols() != channels * p * p)
        throw std::invalid_argument("unpatchify: token shape mismatch");
    RasterImage img(height, width, channels);
    for (int gy = 0; gy < gh; ++gy)
        for (int gx = 0; gx < gw; ++gx) {
            int row = gy * gw + gx;
            for (int ch = 0; ch < channels; ++ch)
                for (int py = 0; py < p; ++py)
                    for (int px = 0; px < p; ++px)
                        img.at(gy * p + py, gx * p + px, ch) = tokens(row, ch * p * p + py * p + px);
        }
    return img;
}

// ---- rope ----

void rope_rotate_inplace(Mat& tokens, const std::vector<Pos2>& positions, bool inverse) {
    const int dim = static_cast<int>(tokens.cols());
    if (dim % 2 != 0) throw std::invalid_argument("rope: dim must be even");
    if (static_cast<int>(positions.size()) != tokens.rows())
        throw std::invalid_argument("rope: positions count mismatch");
    const int pairs = dim / 2;
    const int ga = pairs / 2;       // pairs rotated by the first axis
    const int gb = pairs - ga;
    const double sign = inverse ? -1.0 : 1.0;

    for (int row = 0; row < tokens.rows(); ++row) {
        for (int j = 0; j < pairs; ++j) {
            double angle;
            if (j < ga)
                angle = positions[static_cast<size_t>(row)].a *
                        std::pow(10000.0, -static_cast<double>(j) / ga);
            else
                angle = positions[static_cast<size_t>(row)].b *
                        std::pow(10000.0, -static_cast<double>(j - ga) / gb);
            if (angle == 0.0) continue;
            angle *= sign;
            const double c = std::cos(angle), s = std::sin(angle);
            const double x = tokens(row, 2 * j), y = tokens(row, 2 * j + 1);
            tokens(row, 2 * j) = x * c - y * s;
            tokens(row, 2 * j + 1) = x * s + y * c;
        }
    }
}

Mat rope_rotate(const Mat& tokens, const std::vector<Pos2>& positions) {
    Mat out = tokens;
    rope_rotate_inplace(out, positions);
    return out;
}

std::vector<Pos2> model_positions(const ModelConfig& cfg) {
    std::vector<Pos2> pos;
    pos.reserve(static_cast<size_t>(cfg.total_tokens()));
    for (int i = 0; i < cfg.max_text_len; ++i) pos.push_back({0, i});
    for (int r = 0; r < cfg.grid_h(); ++r)
        for (int c = 0; c < cfg.grid_w(); ++c) pos.push_back({1 + r, cfg.max_text_len + c});
    return pos;
}

// ---- layer norm ----

namespace {

Mat layernorm_forward(const Mat& x, const Mat& g, const Mat& b, Mat* xhat_out, Vec* rstd_out) {
    const int n = static_cast<int>(x.rows()), d = static_cast<int>(x.cols());
    Mat xhat(n, d);
    Vec rstd(n);
    for (int i = 0; i < n; ++i) {
        double mu = x.row(i).mean();
        double var = (x.row(i).array() - mu).square().mean();
        double r = 1.0 / std::sqrt(var + kLnEps);
        xhat.row(i) = (x.row(i).array() - mu) * r;
        rstd[i] = r;
    }
    Mat y = (xhat.array().rowwise() * g.row(0).array()).rowwise() + b.row(0).array();
    if (xhat_out) *xhat_out = std::move(xhat);
    if (rstd_out) *rstd_out = std::move(rstd);
    return y;
}

Mat layernorm_backward(const Mat& dy, const Mat& xhat, const Vec& rstd, const Mat& g, Mat* gg,
                       Mat* gb) {
    const int n = static_cast<int>(dy.rows()), d = static_cast<int>(dy.cols());
    if (gg) gg->row(0).noalias() += (dy.array() * xhat.array()).colwise().sum().matrix();
    if (gb) gb->row(0).noalias() += dy.colwise().sum();
    Mat dxhat = dy.array().rowwise() * g.row(0).array();
    Mat dx(n, d);
    for (int i = 0; i < n; ++i) {
        double m1 = dxhat.row(i).mean();
        double m2 = (dxhat.row(i).array() * xhat.row(i).array()).mean();
        dx.row(i) = rstd[i] * (dxhat.row(i).array() - m1 - xhat.row(i).array() * m2);
    }
    return dx;
}

double gelu(double u) { return 0.5 * u * (1.0 + std::erf(u / M_SQRT2)); }
double gelu_grad(double u) {
    return 0.5 * (1.0 + std::erf(u / M_SQRT2)) + u * std::exp(-0.5 * u * u) / std::sqrt(2.0 * M_PI);
}

Mat softmax_rows(const Mat& s) {
    Mat p(s.rows(), s.cols());
    for (int i = 0; i < s.rows(); ++i) {
        double mx = s.row(i).maxCoeff();
        p.row(i) = (s.row(i).array() - mx).exp();
        p.row(i) /= p.row(i).sum();
    }
    return p;
}

}  // namespace

// ---- attention ----

Mat attn_forward(const Mat& x, const AttnWeights& w, int heads, const std::vector<Pos2>& positions,
                 const BlockAdapters* ad, AttnCache* cache, RoutingStats* stats, int block_index) {
    const int n = static_cast<int>(x.rows());
    const int d = static_cast<int>(x.cols());
    if (w.wq.rows() != d) throw std::invalid_argument("attn: dim mismatch");
    if (d % heads != 0) throw std::invalid_argument("attn: dim not divisible by heads");
    const int dh = d / heads;
    const double scale = 1.0 / std::sqrt(static_cast<double>(dh));

    AttnCache local;
    AttnCache& c = cache ? *cache : local;
    c.x = x;
    c.q = x * w.wq;
    c.q.rowwise() += w.bq.row(0);
    c.k = x * w.wk;
    c.k.rowwise() += w.bk.row(0);
    c.v = x * w.wv;
    c.v.rowwise() += w.bv.row(0);
    if (ad) {
        if (ad->q) c.q += lora_delta(x, *ad->q);
        if (ad->k) c.k += lora_delta(x, *ad->k);
        if (ad->v) c.v += lora_delta(x, *ad->v);
    }

    c.qr = c.q;
    c.kr = c.k;
    for (int h = 0; h < heads; ++h) {
        Mat qh = c.qr.middleCols(h * dh, dh);
        rope_rotate_inplace(qh, positions);
        c.qr.middleCols(h * dh, dh) = qh;
        Mat kh = c.kr.middleCols(h * dh, dh);
        rope_rotate_inplace(kh, positions);
        c.kr.middleCols(h * dh, dh) = kh;
    }

    c.o.resize(n, d);
    c.probs.assign(static_cast<size_t>(heads), Mat());
    for (int h = 0; h < heads; ++h) {
        Mat s = scale * (c.qr.middleCols(h * dh, dh) * c.kr.middleCols(h * dh, dh).transpose());
        Mat p = softmax_rows(s);
        c.o.middleCols(h * dh, dh).noalias() = p * c.v.middleCols(h * dh, dh);
        c.probs[static_cast<size_t>(h)] = std::move(p);
    }

    Mat out = c.o * w.wo;
    out.rowwise() += w.bo.row(0);
    if (ad) {
        if (ad->out_plain) out += lora_delta(c.o, *ad->out_plain);
        if (ad->out_moe) out += moe_delta(c.o, *ad->out_moe, cache ? &c.moe : nullptr, stats, block_index);
    }
    return out;
}

Mat attn_backward(const Mat& dout, const AttnWeights& w, int heads,
                  const std::vector<Pos2>& positions, const BlockAdapters* ad,
                  const AttnCache& c, AttnWeights* gw, BlockAdapters* gad) {
    const int n = static_cast<int>(dout.rows());
    const int d = static_cast<int>(dout.cols());
    const int dh = d / heads;
    const double scale = 1.0 / std::sqrt(static_cast<double>(dh));

    Mat dO = dout * w.wo.transpose();
    if (gw) {
        gw->wo.noalias() += c.o.transpose() * dout;
        gw->bo.row(0).noalias() += dout.colwise().sum();
    }
    if (ad) {
        if (ad->out_plain) lora_backward(c.o, *ad->out_plain, dout, dO, gad ? &*gad->out_plain : nullptr);
        if (ad->out_moe) moe_backward(c.o, *ad->out_moe, c.moe, dout, dO, gad ? &*gad->out_moe : nullptr);
    }

    Mat dQr = Mat::Zero(n, d), dKr = Mat::Zero(n, d), dV = Mat::Zero(n, d);
    for (int h = 0; h < heads; ++h) {
        const Mat& p = c.probs[static_cast<size_t>(h)];
        Mat dOh = dO.middleCols(h * dh, dh);
        Mat dP = dOh * c.v.middleCols(h * dh, dh).transpose();
        dV.middleCols(h * dh, dh).noalias() = p.transpose() * dOh;
        // softmax backward
        Mat dS(n, n);
        for (int i = 0; i < n; ++i) {
            double inner = dP.row(i).dot(p.row(i));
            dS.row(i) = p.row(i).array() * (dP.row(i).array() - inner);
        }
        dQr.middleCols(h * dh, dh).noalias() = scale * (dS * c.kr.middleCols(h * dh, dh));
        dKr.middleCols(h * dh, dh).noalias() = scale * (dS.transpose() * c.qr.middleCols(h * dh, dh));
    }

    // Undo the rotation (its transpose is the inverse rotation).
    Mat dQ = dQr, dK = dKr;
    for (int h = 0; h < heads; ++h) {
        Mat qh = dQ.middleCols(h * dh, dh);
        rope_rotate_inplace(qh, positions, /*inverse=*/true);
        dQ.middleCols(h * dh, dh) = qh;
        Mat kh = dK.middleCols(h * dh, dh);
        rope_rotate_inplace(kh, positions, /*inverse=*/true);
        dK.middleCols(h * dh, dh) = kh;
    }

    Mat dx = dQ * w.wq.transpose() + dK * w.wk.transpose() + dV * w.wv.transpose();
    if (gw) {
        gw->wq.noalias() += c.x.transpose() * dQ;
        gw->bq.row(0).noalias() += dQ.colwise().sum();
        gw->wk.noalias() += c.x.transpose() * dK;
        gw->bk.row(0).noalias() += dK.colwise().sum();
        gw->wv.noalias() += c.x.transpose() * dV;
        gw->bv.row(0).noalias() += dV.colwise().sum();
    }
    if (ad) {
        if (ad->q) lora_backward(c.x, *ad->q, dQ, dx, gad ? &*gad->q : nullptr);
        if (ad->k) lora_backward(c.x, *ad->k, dK, dx, gad ? &*gad->k : nullptr);
        if (ad->v) lora_backward(c.x, *ad->v, dV, dx, gad ? &*gad->v : nullptr);
    }
    return dx;
}

std::pair<Mat, Mat> mma(const Mat& text, const Mat& image, const AttnWeights& w, int heads,
                        const std::vector<Pos2>& positions) {
    if (text.cols() != image.cols()) throw std::invalid_argument("mma: dim mismatch");
    if (static_cast<int>(positions.size()) != text.rows() + image.rows())
        throw std::invalid_argument("mma: positions count mismatch");
    Mat x(text.rows() + image.rows(), text.cols());
    x << text, image;
    Mat out = attn_forward(x, w, heads, positions);
    return {out.topRows(text.rows()), out.bottomRows(image.rows())};
}

// ---- timestep features ----

Mat time_features(double t, int dim) {
    const int half = dim / 2;
    Mat f(1, dim);
    const double s = 1000.0 * t;
    for (int i = 0; i < half; ++i) {
        double freq = std::exp(-std::log(10000.0) * static_cast<double>(i) / half);
        f(0, 2 * i) = std::sin(s * freq);
        f(0, 2 * i + 1) = std::cos(s * freq);
    }
    return f;
}

// ---- DiT forward/backward ----

Mat dit_forward(const ModelConfig& cfg, const ModelParameters& p, const AdapterStack* adapters,
                const std::vector<int>& text_ids, const Mat& x_tok, const Mat& cond, double t,
                ForwardCache* cache, RoutingStats* stats) {
    const int m = cfg.max_text_len;
    const int n_img = cfg.num_image_tokens();
    if (static_cast<int>(text_ids.size()) != m) throw std::invalid_argument("dit: text length mismatch");
    if (x_tok.rows() != n_img || x_tok.cols() != cfg.patch_dim())
        throw std::invalid_argument("dit: latent token shape mismatch");
    if (cond.rows() != n_img || cond.cols() != cfg.cond_dim())
        throw std::invalid_argument("dit: condition shape mismatch");
    if (adapters && !adapters->empty() &&
        static_cast<int>(adapters->blocks.size()) != cfg.depth)
        throw std::invalid_argument("dit: adapter stack depth mismatch");

    ForwardCache local;
    ForwardCache& c = cache ? *cache : local;
    c.text_ids = text_ids;

    c.embed_in.resize(n_img, cfg.patch_dim() + cfg.cond_dim());
    c.embed_in << x_tok, cond;
    c.time_feat = time_features(t, cfg.dim);
    Mat temb = c.time_feat * p.time_w + p.time_b;

    Mat h(cfg.total_tokens(), cfg.dim);
    for (int i = 0; i < m; ++i) h.row(i) = p.text_embed.row(text_ids[static_cast<size_t>(i)]);
    h.bottomRows(n_img).noalias() = c.embed_in * p.patch_w;
    h.bottomRows(n_img).rowwise() += p.patch_b.row(0);
    h.rowwise() += temb.row(0);
    c.h0 = h;

    const auto positions = model_positions(cfg);
    c.blocks.assign(static_cast<size_t>(cfg.depth), BlockCache());
    for (int bi = 0; bi < cfg.depth; ++bi) {
        auto& bp = p.blocks[static_cast<size_t>(bi)];
        auto& bc = c.blocks[static_cast<size_t>(bi)];
        const BlockAdapters* ad =
            adapters && !adapters->empty() ? &adapters->blocks[static_cast<size_t>(bi)] : nullptr;

        bc.x = h;
        bc.xn = layernorm_forward(h, bp.ln1_g, bp.ln1_b, &bc.xhat1, &bc.rstd1);
        Mat ao = attn_forward(bc.xn, bp.attn, cfg.heads, positions, ad, &bc.attn, stats, bi);
        bc.h1 = h + ao;

        bc.yn = layernorm_forward(bc.h1, bp.ln2_g, bp.ln2_b, &bc.xhat2, &bc.rstd2);
        bc.u = bc.yn * bp.w1;
        bc.u.rowwise() += bp.b1.row(0);
        if (ad && ad->w1) bc.u += lora_delta(bc.yn, *ad->w1);
        bc.g = bc.u.unaryExpr([](double v) { return gelu(v); });
        Mat z = bc.g * bp.w2;
        z.rowwise() += bp.b2.row(0);
        if (ad && ad->w2) z += lora_delta(bc.g, *ad->w2);
        h = bc.h1 + z;
    }

    c.hfinal = h;
    c.fn = layernorm_forward(h, p.fln_g, p.fln_b, &c.xhatf, &c.rstdf);
    Mat vel = c.fn.bottomRows(n_img) * p.head_w;
    vel.rowwise() += p.head_b.row(0);
    if (!vel.allFinite()) throw TrainingDivergence("dit_forward produced non-finite values");
    return vel;
}

void dit_backward(const ModelConfig& cfg, const ModelParameters& p, const AdapterStack* adapters,
                  const ForwardCache& c, const Mat& dvel, ModelParameters* gp, AdapterStack* ga) {
    const int m = cfg.max_text_len;
    const int n_img = cfg.num_image_tokens();
    const auto positions = model_positions(cfg);

    Mat dFn = Mat::Zero(cfg.total_tokens(), cfg.dim);
    dFn.bottomRows(n_img).noalias() = dvel * p.head_w.transpose();
    if (gp) {
        gp->head_w.noalias() += c.fn.bottomRows(n_img).transpose() * dvel;
        gp->head_b.row(0).noalias() += dvel.colwise().sum();
    }
    Mat dh = layernorm_backward(dFn, c.xhatf, c.rstdf, p.fln_g, gp ? &gp->fln_g : nullptr,
                                gp ? &gp->fln_b : nullptr);

    for (int bi = cfg.depth - 1; bi >= 0; --bi) {
        auto& bp = p.blocks[static_cast<size_t>(bi)];
        auto& bc = c.blocks[static_cast<size_t>(bi)];
        const BlockAdapters* ad =
            adapters && !adapters->empty() ? &adapters->blocks[static_cast<size_t>(bi)] : nullptr;
        DiTBlockParams* gb = gp ? &gp->blocks[static_cast<size_t>(bi)] : nullptr;
        BlockAdapters* gba = ga && !ga->empty() ? &ga->blocks[static_cast<size_t>(bi)] : nullptr;

        // mlp
        Mat dZ = dh;
        Mat dG = dZ * bp.w2.transpose();
        if (gb) {
            gb->w2.noalias() += bc.g.transpose() * dZ;
            gb->b2.row(0).noalias() += dZ.colwise().sum();
        }
        if (ad && ad->w2) lora_backward(bc.g, *ad->w2, dZ, dG, gba ? &*gba->w2 : nullptr);
        Mat dU = dG.array() * bc.u.unaryExpr([](double v) { return gelu_grad(v); }).array();
        Mat dYn = dU * bp.w1.transpose();
        if (gb) {
            gb->w1.noalias() += bc.yn.transpose() * dU;
            gb->b1.row(0).noalias() += dU.colwise().sum();
        }
        if (ad && ad->w1) lora_backward(bc.yn, *ad->w1, dU, dYn, gba ? &*gba->w1 : nullptr);
        Mat dh1 = dh + layernorm_backward(dYn, bc.xhat2, bc.rstd2, bp.ln2_g,
                                          gb ? &gb->ln2_g : nullptr, gb ? &gb->ln2_b : nullptr);

        // attention
        Mat dXn = attn_backward(dh1, bp.attn, cfg.heads, positions, ad, bc.attn,
                                gb ? &gb->attn : nullptr, gba);
        dh = dh1 + layernorm_backward(dXn, bc.xhat1, bc.rstd1, bp.ln1_g,
                                      gb ? &gb->ln1_g : nullptr, gb ? &gb->ln1_b : nullptr);
    }

    if (gp) {
        Mat dtemb = dh.colwise().sum();
        gp->time_w.noalias() += c.time_feat.transpose() * dtemb;
        gp->time_b.row(0).noalias() += dtemb;
        for (int i = 0; i < m; ++i)
            gp->text_embed.row(c.text_ids[static_cast<size_t>(i)]) += dh.row(i);
        gp->patch_w.noalias() += c.embed_in.transpose() * dh.bottomRows(n_img);
        gp->patch_b.row(0).noalias() += dh.bottomRows(n_img).colwise().sum();
    }
}

// ---- rectified flow loss ----

double fm_loss(const ModelConfig& cfg, const ModelParameters& p, const AdapterStack* adapters,
               const std::vector<FlowItem>& batch, ModelParameters* gp, AdapterStack* ga) {
    if (batch.empty()) throw std::invalid_argument("fm_loss: empty batch");
    const double elems = static_cast<double>(batch.front().x1.size());
    const double bsz = static_cast<double>(batch.size());
    const bool need_grad = gp || ga;

    double loss = 0.0;
    ForwardCache cache;
    for (const auto& item : batch) {
        Mat x_t = item.t * item.x1 + (1.0 - item.t) * item.x0;
        Mat target = item.x1 - item.x0;
        Mat vel = dit_forward(cfg, p, adapters, item.text_ids, x_t, item.cond, item.t,
                              need_grad ? &cache : nullptr);
        Mat diff = vel - target;
        loss += diff.squaredNorm() / elems;
        if (need_grad) {
            Mat dvel = (2.0 / (elems * bsz)) * diff;
            dit_backward(cfg, p, adapters, cache, dvel, gp, ga);
        }
    }
    loss /= bsz;
    if (!std::isfinite(loss)) throw TrainingDivergence("fm_loss is non-finite");
    return loss;
}

// ---- sampling ----

Mat euler_integrate(const VelocityFn& velocity, Mat x, int n_steps, const StepHook& hook) {
    if (n_steps < 1) throw std::invalid_argument("euler: n_steps must be >= 1");
    const double dt = 1.0 / n_steps;
    for (int i = 0; i < n_steps; ++i) {
        double t = static_cast<double>(i) / n_steps;
        x += dt * velocity(x, t);
        if (hook) hook(x, static_cast<double>(i + 1) / n_steps);
    }
    return x;
}

Mat euler_sample_latent(const ModelConfig& cfg, const ModelParameters& p,
                        const AdapterStack* adapters, const SampleInputs& in, int n_steps,
                        double guidance) {
    VelocityFn velocity;
    if (guidance == 1.0) {
        velocity = [&](const Mat& x, double t) {
            return dit_forward(cfg, p, adapters, in.text_ids, x, in.cond, t);
        };
    } else {
        velocity = [&](const Mat& x, double t) {
            Mat v_cond = dit_forward(cfg, p, adapters, in.text_ids, x, in.cond, t);
            Mat v_null = dit_forward(cfg, p, adapters, in.null_ids, x, in.cond, t);
            return Mat(v_null + guidance * (v_cond - v_null));
        };
    }
    StepHook hook = [&](Mat& x, double t_next) {
        x = recompose_keep(x, in.src_latent, in.noise, t_next, in.keep_mask);
    };
    return euler_integrate(velocity, in.noise, n_steps, hook);
}

Mat pixels_to_latent(const Mat& tokens) { return 2.0 * tokens - Mat::Ones(tokens.rows(), tokens.cols()); }
Mat latent_to_pixels(const Mat& tokens) { return 0.5 * (tokens + Mat::Ones(tokens.rows(), tokens.cols())); }

}  // namespace diptych
