#pragma once

#include <string>
#include <vector>

#include "diptych/incontext.hpp"
#include "diptych/verifiers.hpp"

namespace diptych {

struct ScalingConfig {
    int num_candidates = 6;  // noise seeds sampled
    int preview_steps = 4;   // m: complete coarse samples use m Euler steps
    int full_steps = 20;     // n: finalization steps for the winner

    void validate() const;
};

struct Candidate {
    uint64_t seed = 0;
    RasterImage preview;  // edited right panel of the m-step sample
    int preview_nfe = 0;
};

struct NFEAccount {
    int total = 0;
    int previews = 0;
    int final_steps = 0;
};

// Closed-form sampling cost: full_steps + num_candidates * preview_steps
// when scaling is enabled, full_steps otherwise.
int nfe(const ScalingConfig& config, bool enabled);

// One complete coarse sample per candidate, seeds request.seed + i.
std::vector<Candidate> generate_candidates(const ModelConfig& cfg, const ModelParameters& params,
                                           const AdapterStack* adapters, const EditRequest& request,
                                           const ScalingConfig& config,
                                           PromptMode mode = PromptMode::ic);

struct TournamentResult {
    size_t winner = 0;
    int judge_calls = 0;
    int judge_failures = 0;
};

// Single max-selection pass: the champion meets each remaining candidate
// once, exactly M-1 judge calls. A judge failure keeps the current champion
// and is logged. full_sort runs a complete pairwise bubble sort instead
// (off by default; only differs for intransitive judges).
TournamentResult tournament_select(const std::vector<Candidate>& candidates,
                                   const PairwiseJudge& judge, const std::string& instruction,
                                   bool full_sort = false);

struct ScaledEdit {
    EditResult result;
    NFEAccount nfe;
    size_t winner = 0;
    int judge_calls = 0;
    int judge_failures = 0;
};

// Early-filter pipeline: coarse previews, judge tournament, winner re-run
// with full_steps.
ScaledEdit scale_edit(const ModelConfig& cfg, const ModelParameters& params,
                      const AdapterStack* adapters, const EditRequest& request,
                      const ScalingConfig& config, const PairwiseJudge& judge,
                      PromptMode mode = PromptMode::ic);

}  // namespace diptych
