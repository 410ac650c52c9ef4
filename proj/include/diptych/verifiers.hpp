#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "diptych/data.hpp"
#include "diptych/image.hpp"

namespace diptych {

struct JudgeVerdict {
    char winner = 'A';  // 'A' or 'B'
    std::optional<double> confidence;
    std::string raw;  // transcript, when available
};

// Pairwise comparator of candidate edits. Implementations must be stateless
// per call; failures surface as exceptions (the tournament retains the
// current champion on failure).
class PairwiseJudge {
  public:
    virtual ~PairwiseJudge() = default;
    virtual JudgeVerdict compare(const RasterImage& a, const RasterImage& b,
                                 const std::string& instruction) const = 0;
    virtual std::string name() const = 0;
};

// Procedural ground-truth score: negated edit-region error against the
// target plus lambda times the negated keep-region error against the source.
double oracle_score(const RasterImage& img, const EditPair& pair, double lambda = 1.0);

// Deterministic total-order judge backed by the generated pair's ground
// truth. Exact ties go to A.
class OracleJudge : public PairwiseJudge {
  public:
    explicit OracleJudge(const EditPair& pair, double lambda = 1.0) : pair_(&pair), lambda_(lambda) {}
    JudgeVerdict compare(const RasterImage& a, const RasterImage& b,
                         const std::string& instruction) const override;
    std::string name() const override { return "oracle"; }

  private:
    const EditPair* pair_;
    double lambda_;
};

// Cosine similarity against a rendered reference in the fixed
// random-projection feature space (see feat_sim). Higher wins, ties to A.
class FeatureJudge : public PairwiseJudge {
  public:
    explicit FeatureJudge(RasterImage reference) : reference_(std::move(reference)) {}
    JudgeVerdict compare(const RasterImage& a, const RasterImage& b,
                         const std::string& instruction) const override;
    std::string name() const override { return "feature"; }

  private:
    RasterImage reference_;
};

struct VLMEndpointConfig {
    std::string base_url;  // e.g. "http://127.0.0.1:8731"
    std::string model = "default";
    std::string auth_token_env = "DIPTYCH_VLM_TOKEN";
    int timeout_ms = 10000;
    int max_retries = 2;
    // Editable filtering prompt; "{instruction}" is substituted.
    std::string prompt_template =
        "Two edited images A and B were produced for the instruction: \"{instruction}\". "
        "Answer with the single letter A or B for the image that better fulfils the "
        "instruction while preserving the rest of the scene.";

    void validate() const;
    static VLMEndpointConfig from_json_file(const std::string& path);
};

// External judge client. Wire contract: POST {base_url}/judge with JSON
// {"instruction", "prompt", "model", "image_a", "image_b"} (images are
// base64 PNG); the response JSON must carry a "decision" field holding a
// single token A or B, optionally "confidence". Retries with exponential
// backoff; total blocking time stays below timeout * (max_retries + 1).
class VlmJudge : public PairwiseJudge {
  public:
    explicit VlmJudge(VLMEndpointConfig config);
    JudgeVerdict compare(const RasterImage& a, const RasterImage& b,
                         const std::string& instruction) const override;
    std::string name() const override { return "vlm"; }
    const VLMEndpointConfig& config() const { return config_; }

  private:
    VLMEndpointConfig config_;
};

// Response-body parsing, exposed for fixture replay tests. Throws
// EndpointError on unparseable replies.
JudgeVerdict parse_vlm_response(const std::string& body);

std::string base64_encode(const std::vector<uint8_t>& bytes);
std::vector<uint8_t> base64_decode(const std::string& text);

}  // namespace diptych
