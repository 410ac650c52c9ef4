#include "diptych/evalmod.hpp"

#include <map>
#include <mutex>
#include <sstream>

#include <json.hpp>

#include "diptych/scaling.hpp"
#include "diptych/verifiers.hpp"

using nlohmann::json;

namespace diptych {

double l1(const RasterImage& a, const RasterImage& b, const RasterImage* region) {
    return mean_l1(a, b, region);
}

// ---- feature similarity ----

namespace {

// 4x box downsample (partial boxes averaged), flattened channel-major.
Vec downsample_features(const RasterImage& img) {
    const int factor = 4;
    const int oh = (img.height + factor - 1) / factor;
    const int ow = (img.width + factor - 1) / factor;
    Vec out(static_cast<Eigen::Index>(oh) * ow * img.channels);
    Eigen::Index idx = 0;
    for (int c = 0; c < img.channels; ++c)
        for (int oy = 0; oy < oh; ++oy)
            for (int ox = 0; ox < ow; ++ox) {
                double sum = 0.0;
                int count = 0;
                for (int y = oy * factor; y < std::min((oy + 1) * factor, img.height); ++y)
                    for (int x = ox * factor; x < std::min((ox + 1) * factor, img.width); ++x) {
                        sum += img.at(y, x, c);
                        ++count;
                    }
                out[idx++] = sum / count;
            }
    return out;
}

// Fixed-seed orthonormal projection rows, cached per input dimension.
const Mat& projection_for(int dims) {
    static std::mutex mu;
    static std::map<int, Mat> cache;
    std::lock_guard<std::mutex> lock(mu);
    auto it = cache.find(dims);
    if (it != cache.end()) return it->second;

    const int k = std::min(32, dims);
    Rng rng(kFeatSimSeed, static_cast<uint64_t>(dims));
    Mat p = rng.normal_mat(k, dims);
    // Gram-Schmidt on the rows.
    for (int i = 0; i < k; ++i) {
        for (int j = 0; j < i; ++j) p.row(i) -= p.row(i).dot(p.row(j)) * p.row(j);
        double norm = p.row(i).norm();
        if (norm < 1e-12) norm = 1.0;
        p.row(i) /= norm;
    }
    return cache.emplace(dims, std::move(p)).first->second;
}

}  // namespace

double feat_sim(const RasterImage& a, const RasterImage& b) {
    if (!a.same_shape(b)) throw std::invalid_argument("feat_sim: shape mismatch");
    Vec fa = downsample_features(a);
    Vec fb = downsample_features(b);
    fa.array() -= fa.mean();
    fb.array() -= fb.mean();
    const Mat& proj = projection_for(static_cast<int>(fa.size()));
    Vec pa = proj * fa;
    Vec pb = proj * fb;
    double na = pa.norm(), nb = pb.norm();
    if (na < 1e-12 || nb < 1e-12) return 0.0;
    return pa.dot(pb) / (na * nb);
}

// ---- edit success ----

namespace {

// Mean absolute distance of masked pixels from a flat color.
double color_error(const RasterImage& img, const RasterImage& mask, const Rgb& color) {
    double sum = 0.0;
    int count = 0;
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x)
            if (mask.at(y, x, 0) != 0.0) {
                sum += std::abs(img.at(y, x, 0) - color.r) + std::abs(img.at(y, x, 1) - color.g) +
                       std::abs(img.at(y, x, 2) - color.b);
                count += 3;
            }
    return count ? sum / count : 0.0;
}

}  // namespace

bool edit_success(const RasterImage& edited_panel, const EditPair& pair) {
    if (!edited_panel.same_shape(pair.target))
        throw std::invalid_argument("edit_success: panel shape mismatch");
    const SceneGeometry geo{pair.source.height};

    RasterImage keep_region = pair.edit_region_mask;
    for (double& v : keep_region.values) v = v == 0.0 ? 1.0 : 0.0;
    if (mean_l1(edited_panel, pair.source, &keep_region) > kKeepTolerance) return false;

    switch (pair.task) {
        case TaskType::removal: {
            const SceneObject& obj = pair.scene.objects.at(static_cast<size_t>(pair.target_object));
            RasterImage obj_mask = object_pixel_mask(obj, geo);
            const Rgb bg = background_palette().at(static_cast<size_t>(pair.scene.background));
            return color_error(edited_panel, obj_mask, bg) <= kTaskTolerance;
        }
        case TaskType::addition:
        case TaskType::swap: {
            RasterImage region = cell_mask(pair.new_object.cell, geo);
            return mean_l1(edited_panel, pair.target, &region) <= kTaskTolerance;
        }
        case TaskType::attribute_mod: {
            const SceneObject& obj = pair.scene.objects.at(static_cast<size_t>(pair.target_object));
            RasterImage obj_mask = object_pixel_mask(obj, geo);
            const Rgb target_color = object_palette().at(static_cast<size_t>(pair.new_color)).second;
            return color_error(edited_panel, obj_mask, target_color) <= kTaskTolerance;
        }
        case TaskType::style:
            return mean_l1(edited_panel, pair.target) <= kTaskTolerance;
    }
    throw std::invalid_argument("edit_success: unknown task type");
}

bool edit_success(const EditResult& result, const EditPair& pair) {
    return edit_success(result.edited, pair);
}

// ---- VIE algebra ----

double vie_overall(double sc, double pq) {
    if (!(sc >= 0.0 && sc <= 10.0) || !(pq >= 0.0 && pq <= 10.0))
        throw std::invalid_argument("vie_overall: scores must lie in [0, 10]");
    return std::sqrt(sc * pq);
}

double binarize_sc(double sc, double threshold) {
    if (!(threshold > 0.0 && threshold <= 10.0))
        throw std::invalid_argument("binarize_sc: threshold must lie in (0, 10]");
    return sc >= threshold ? 1.0 : 0.0;
}

// ---- benchmark harness ----

MetricAggregates compute_aggregates(const std::vector<CaseMetrics>& cases) {
    MetricAggregates agg;
    if (cases.empty()) return agg;
    for (const auto& c : cases) {
        agg.mean_l1 += c.l1_full;
        agg.mean_keep_l1 += c.keep_l1;
        agg.mean_feat_sim_source += c.feat_sim_source;
        agg.mean_feat_sim_gt += c.feat_sim_gt;
        agg.success_rate += c.success ? 1.0 : 0.0;
        agg.mean_sc += c.sc;
        agg.mean_pq += c.pq;
        agg.mean_vie += c.vie;
        agg.mean_oracle += c.oracle;
        agg.total_nfe += c.nfe;
    }
    const double n = static_cast<double>(cases.size());
    agg.mean_l1 /= n;
    agg.mean_keep_l1 /= n;
    agg.mean_feat_sim_source /= n;
    agg.mean_feat_sim_gt /= n;
    agg.success_rate /= n;
    agg.mean_sc /= n;
    agg.mean_pq /= n;
    agg.mean_vie /= n;
    agg.mean_oracle /= n;
    return agg;
}

MetricReport run_benchmark(const ModelConfig& cfg, const ModelParameters& params,
                           const AdapterStack* adapters, const std::vector<EditPair>& pairs,
                           const BenchmarkSettings& settings) {
    if (pairs.empty()) throw DataError("run_benchmark: empty dataset");

    MetricReport report;
    report.config_fingerprint = settings.config_fingerprint;
    {
        json sj{{"seed", settings.seed},
                {"n_steps", settings.n_steps},
                {"guidance", settings.guidance},
                {"prompt_mode", settings.prompt_mode == PromptMode::ic ? "ic" : "bare"},
                {"scaling_enabled", settings.scaling_enabled},
                {"num_candidates", settings.num_candidates},
                {"preview_steps", settings.preview_steps},
                {"sc_threshold", settings.sc_threshold}};
        report.settings_json = sj.dump();
    }

    report.cases.reserve(pairs.size());
    for (size_t i = 0; i < pairs.size(); ++i) {
        const EditPair& pair = pairs[i];
        EditRequest req;
        req.source = pair.source;
        req.instruction = {pair.instruction};
        req.seed = settings.seed;
        req.n_steps = settings.n_steps;
        req.guidance = settings.guidance;

        EditResult result;
        int case_nfe = settings.n_steps;
        if (settings.scaling_enabled) {
            ScalingConfig sc{settings.num_candidates, settings.preview_steps, settings.n_steps};
            OracleJudge judge(pair);
            ScaledEdit scaled = scale_edit(cfg, params, adapters, req, sc, judge, settings.prompt_mode);
            result = std::move(scaled.result);
            case_nfe = scaled.nfe.total;
        } else {
            result = edit(cfg, params, adapters, req, settings.prompt_mode);
        }

        CaseMetrics m;
        m.index = static_cast<int>(i);
        m.task = task_name(pair.task);
        m.l1_full = l1(result.edited, pair.target);
        RasterImage keep_region = pair.edit_region_mask;
        for (double& v : keep_region.values) v = v == 0.0 ? 1.0 : 0.0;
        m.keep_l1 = mean_l1(result.edited, pair.source, &keep_region);
        m.feat_sim_source = feat_sim(result.edited, pair.source);
        m.feat_sim_gt = feat_sim(result.edited, pair.target);
        m.success = edit_success(result, pair);
        double edit_err = mean_l1(result.edited, pair.target, &pair.edit_region_mask);
        m.sc = 10.0 * clamp01(1.0 - (edit_err + m.keep_l1) / 0.5);
        m.pq = 10.0 * clamp01(1.0 - m.l1_full / 0.5);
        m.vie = vie_overall(m.sc, m.pq);
        m.oracle = oracle_score(result.edited, pair);
        m.nfe = case_nfe;
        report.cases.push_back(std::move(m));
    }
    report.aggregates = compute_aggregates(report.cases);
    return report;
}

namespace {

json case_to_json(const CaseMetrics& c) {
    return json{{"index", c.index},
                {"task", c.task},
                {"l1", c.l1_full},
                {"keep_l1", c.keep_l1},
                {"feat_sim_source", c.feat_sim_source},
                {"feat_sim_gt", c.feat_sim_gt},
                {"edit_success", c.success},
                {"sc", c.sc},
                {"pq", c.pq},
                {"vie_overall", c.vie},
                {"oracle", c.oracle},
                {"nfe", c.nfe}};
}

}  // namespace

std::string metric_report_json(const MetricReport& report) {
    json cases = json::array();
    for (const auto& c : report.cases) cases.push_back(case_to_json(c));
    const auto& a = report.aggregates;
    json j{{"config_fingerprint", report.config_fingerprint},
           {"settings", json::parse(report.settings_json.empty() ? "{}" : report.settings_json)},
           {"cases", cases},
           {"aggregates",
            {{"mean_l1", a.mean_l1},
             {"mean_keep_l1", a.mean_keep_l1},
             {"mean_feat_sim_source", a.mean_feat_sim_source},
             {"mean_feat_sim_gt", a.mean_feat_sim_gt},
             {"success_rate", a.success_rate},
             {"mean_sc", a.mean_sc},
             {"mean_pq", a.mean_pq},
             {"mean_vie", a.mean_vie},
             {"mean_oracle", a.mean_oracle},
             {"total_nfe", a.total_nfe}}},
           {"content_hash", to_hex(fnv1a64(cases.dump()))}};
    return j.dump(2) + "\n";
}

std::string metric_report_table(const MetricReport& report) {
    std::ostringstream os;
    char line[256];
    snprintf(line, sizeof(line), "%-6s %-14s %8s %8s %8s %8s %5s %6s %6s %6s\n", "case", "task",
             "l1", "keep_l1", "fs_src", "fs_gt", "ok", "sc", "pq", "vie");
    os << line;
    for (const auto& c : report.cases) {
        snprintf(line, sizeof(line), "%-6d %-14s %8.4f %8.4f %8.4f %8.4f %5s %6.2f %6.2f %6.2f\n",
                 c.index, c.task.c_str(), c.l1_full, c.keep_l1, c.feat_sim_source, c.feat_sim_gt,
                 c.success ? "yes" : "no", c.sc, c.pq, c.vie);
        os << line;
    }
    const auto& a = report.aggregates;
    snprintf(line, sizeof(line),
             "mean   %-14s %8.4f %8.4f %8.4f %8.4f %5.2f %6.2f %6.2f %6.2f\n", "(all)", a.mean_l1,
             a.mean_keep_l1, a.mean_feat_sim_source, a.mean_feat_sim_gt, a.success_rate, a.mean_sc,
             a.mean_pq, a.mean_vie);
    os << line;
    snprintf(line, sizeof(line), "total NFE %lld, mean oracle %.5f\n",
             static_cast<long long>(a.total_nfe), a.mean_oracle);
    os << line;
    return os.str();
}

}  // namespace diptych
