#pragma once

#include <string>
#include <unordered_map>
#include <vector>

#include "diptych/data.hpp"
#include "diptych/model.hpp"

namespace diptych {

// Adam with bias correction over any parameter struct exposing
// for_each_param. Gradients are looked up by parameter name.
class AdamOptimizer {
  public:
    AdamOptimizer(double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
        : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

    template <typename Params>
    void step(Params& params, Params& grads) {
        ++t_;
        const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
        const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));

        std::vector<std::pair<std::string, Mat*>> gptr;
        for_each_param(grads, [&](const std::string& n, Mat& m) { gptr.emplace_back(n, &m); });
        size_t gi = 0;
        for_each_param(params, [&](const std::string& n, Mat& p) {
            if (gi >= gptr.size() || gptr[gi].first != n)
                throw std::logic_error("adam: parameter/gradient mismatch at " + n);
            Mat& g = *gptr[gi++].second;
            auto& s = state_[n];
            if (s.m.size() == 0) {
                s.m = Mat::Zero(p.rows(), p.cols());
                s.v = Mat::Zero(p.rows(), p.cols());
            }
            s.m = beta1_ * s.m + (1.0 - beta1_) * g;
            s.v = (beta2_ * s.v.array() + (1.0 - beta2_) * g.array().square()).matrix();
            Mat mhat = s.m / bc1;
            Mat vhat = s.v / bc2;
            p.array() -= lr_ * mhat.array() / (vhat.array().sqrt() + eps_);
        });
    }

    int64_t steps_taken() const { return t_; }

  private:
    struct Slot {
        Mat m, v;
    };
    double lr_, beta1_, beta2_, eps_;
    int64_t t_ = 0;
    std::unordered_map<std::string, Slot> state_;
};

struct TrainConfig {
    int steps = 3000;
    int batch_size = 16;
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    uint64_t seed = 1234;
    double null_prompt_rate = 0.1;  // classifier-free guidance dropout
    int log_every = 200;
};

struct TrainReport {
    int steps = 0;
    double loss_step0 = 0.0;      // held-out loss before training
    double loss_final = 0.0;      // held-out loss after training
    double train_loss_last = 0.0; // last mini-batch loss
};

// Pretraining corpus: procedurally generated diptychs of identical scenes
// ([S | S]) captioned by the scene grammar, with null-prompt dropout. The
// stream is a pure function of (geometry, seed).
FlowItem make_pretrain_item(const ModelConfig& cfg, const SceneGeometry& geo, Rng& rng,
                            double null_prompt_rate);

// Fine-tuning item from an editing pair: clean latent [source | target],
// inpainting condition from the source, IC prompt text.
FlowItem make_finetune_item(const ModelConfig& cfg, const EditPair& pair, Rng& rng,
                            double null_prompt_rate);

// Trains the base model from scratch. Deterministic given the seed;
// divergence (non-finite loss) aborts with a diagnostic.
TrainReport pretrain(const ModelConfig& cfg, const TrainConfig& tc, const SceneGeometry& geo,
                     ModelParameters& params);

// Adapter fine-tuning on editing pairs; base parameters are never touched.
TrainReport finetune(const ModelConfig& cfg, const TrainConfig& tc,
                     const ModelParameters& params, const std::vector<EditPair>& pairs,
                     AdapterStack& adapters);

// Deterministic held-out loss: fixed records with stratified t values.
double heldout_loss(const ModelConfig& cfg, const ModelParameters& params,
                    const AdapterStack* adapters, const SceneGeometry& geo, uint64_t seed,
                    const std::vector<EditPair>* pairs = nullptr, int count = 16);

}  // namespace diptych
