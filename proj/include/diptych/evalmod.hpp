#pragma once

#include <string>
#include <vector>

#include "diptych/data.hpp"
#include "diptych/image.hpp"
#include "diptych/incontext.hpp"

namespace diptych {

// Mean absolute pixel difference, optionally over a region mask.
double l1(const RasterImage& a, const RasterImage& b, const RasterImage* region = nullptr);

// Desk-scale stand-in for learned image-feature similarity: cosine of
// fixed-seed random orthogonal projections of 4x-downsampled, mean-centered
// images. The projection seed is kFeatSimSeed, so values are reproducible.
// Zero vectors (e.g. constant images) score 0 by definition.
constexpr uint64_t kFeatSimSeed = 0xfea751;
double feat_sim(const RasterImage& a, const RasterImage& b);

// Binary desk-scale editing-success criterion: the task predicate must hold
// inside the edit region (tolerance 0.1, inclusive) and the keep region must
// match the source within mean L1 0.05.
constexpr double kTaskTolerance = 0.1;
constexpr double kKeepTolerance = 0.05;
bool edit_success(const RasterImage& edited_panel, const EditPair& pair);
bool edit_success(const EditResult& result, const EditPair& pair);

// Overall = sqrt(SC * PQ) on the 0-10 scale. Throws on out-of-range input.
double vie_overall(double sc, double pq);

// Threshold binarization of the SC score; sc == threshold maps to 1.
double binarize_sc(double sc, double threshold);

struct CaseMetrics {
    int index = 0;
    std::string task;
    double l1_full = 0.0;        // edited vs ground truth, full panel
    double keep_l1 = 0.0;        // edited vs source, outside the edit region
    double feat_sim_source = 0.0;
    double feat_sim_gt = 0.0;
    bool success = false;
    double sc = 0.0;
    double pq = 0.0;
    double vie = 0.0;
    double oracle = 0.0;  // oracle_score of the edited panel
    int nfe = 0;
};

struct MetricAggregates {
    double mean_l1 = 0.0;
    double mean_keep_l1 = 0.0;
    double mean_feat_sim_source = 0.0;
    double mean_feat_sim_gt = 0.0;
    double success_rate = 0.0;
    double mean_sc = 0.0;
    double mean_pq = 0.0;
    double mean_vie = 0.0;
    double mean_oracle = 0.0;
    long long total_nfe = 0;
};

struct BenchmarkSettings {
    uint64_t seed = 9000;  // the single default noise seed
    int n_steps = 20;
    double guidance = 3.0;
    PromptMode prompt_mode = PromptMode::ic;
    bool scaling_enabled = false;
    int num_candidates = 6;
    int preview_steps = 4;
    double sc_threshold = 5.0;
    std::string config_fingerprint;
};

struct MetricReport {
    std::string config_fingerprint;
    std::string settings_json;  // resolved benchmark settings
    std::vector<CaseMetrics> cases;
    MetricAggregates aggregates;
};

MetricAggregates compute_aggregates(const std::vector<CaseMetrics>& cases);

// Evaluates every pair with the single default seed (or the scaling pipeline
// with the oracle judge when enabled). Deterministic given the settings.
MetricReport run_benchmark(const ModelConfig& cfg, const ModelParameters& params,
                           const AdapterStack* adapters, const std::vector<EditPair>& pairs,
                           const BenchmarkSettings& settings);

std::string metric_report_json(const MetricReport& report);
std::string metric_report_table(const MetricReport& report);

}  // namespace diptych
