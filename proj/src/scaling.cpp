#include "diptych/scaling.hpp"

#include <cstdio>

namespace diptych {

void ScalingConfig::validate() const {
    if (num_candidates < 1) throw ConfigError("scaling: num_candidates must be >= 1");
    if (preview_steps < 1) throw ConfigError("scaling: preview_steps must be >= 1");
    if (full_steps < preview_steps)
        throw ConfigError("scaling: preview_steps must not exceed full_steps");
}

int nfe(const ScalingConfig& config, bool enabled) {
    config.validate();
    return enabled ? config.full_steps + config.num_candidates * config.preview_steps
                   : config.full_steps;
}

std::vector<Candidate> generate_candidates(const ModelConfig& cfg, const ModelParameters& params,
                                           const AdapterStack* adapters, const EditRequest& request,
                                           const ScalingConfig& config, PromptMode mode) {
    config.validate();
    std::vector<Candidate> out;
    out.reserve(static_cast<size_t>(config.num_candidates));
    for (int i = 0; i < config.num_candidates; ++i) {
        EditRequest preview_req = request;
        preview_req.seed = request.seed + static_cast<uint64_t>(i);
        preview_req.n_steps = config.preview_steps;
        EditResult res = edit(cfg, params, adapters, preview_req, mode);
        out.push_back({preview_req.seed, std::move(res.edited), config.preview_steps});
    }
    return out;
}

TournamentResult tournament_select(const std::vector<Candidate>& candidates,
                                   const PairwiseJudge& judge, const std::string& instruction,
                                   bool full_sort) {
    if (candidates.empty()) throw std::invalid_argument("tournament: no candidates");
    TournamentResult res;

    auto beats_champion = [&](size_t champion, size_t challenger) -> bool {
        ++res.judge_calls;
        try {
            return judge.compare(candidates[champion].preview, candidates[challenger].preview,
                                 instruction).winner == 'B';
        } catch (const std::exception& e) {
            ++res.judge_failures;
            std::fprintf(stderr, "[scaling] judge failure, keeping champion: %s\n", e.what());
            return false;
        }
    };

    if (!full_sort) {
        size_t champion = 0;
        for (size_t i = 1; i < candidates.size(); ++i)
            if (beats_champion(champion, i)) champion = i;
        res.winner = champion;
        return res;
    }

    // Full bubble sort; identical winner for any judge inducing a total order.
    // Winners bubble towards the back.
    std::vector<size_t> order(candidates.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;
    for (size_t pass = 0; pass + 1 < order.size(); ++pass)
        for (size_t i = 0; i + 1 < order.size() - pass; ++i)
            if (!beats_champion(order[i], order[i + 1])) std::swap(order[i], order[i + 1]);
    res.winner = order.back();
    return res;
}

ScaledEdit scale_edit(const ModelConfig& cfg, const ModelParameters& params,
                      const AdapterStack* adapters, const EditRequest& request,
                      const ScalingConfig& config, const PairwiseJudge& judge, PromptMode mode) {
    config.validate();
    auto candidates = generate_candidates(cfg, params, adapters, request, config, mode);
    TournamentResult tr = tournament_select(candidates, judge, request.instruction.text);

    EditRequest final_req = request;
    final_req.seed = candidates[tr.winner].seed;
    final_req.n_steps = config.full_steps;

    ScaledEdit out;
    out.result = edit(cfg, params, adapters, final_req, mode);
    out.nfe = {nfe(config, true), config.num_candidates * config.preview_steps, config.full_steps};
    out.result.nfe_consumed = out.nfe.total;
    out.winner = tr.winner;
    out.judge_calls = tr.judge_calls;
    out.judge_failures = tr.judge_failures;
    return out;
}

}  // namespace diptych
