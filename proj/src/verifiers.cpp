#include "diptych/verifiers.hpp"

#include <chrono>
#include <cstdlib>
#include <thread>

#include <httplib.h>
#include <json.hpp>

#include "diptych/evalmod.hpp"

using nlohmann::json;

namespace diptych {

double oracle_score(const RasterImage& img, const EditPair& pair, double lambda) {
    RasterImage keep_region = pair.edit_region_mask;
    for (double& v : keep_region.values) v = v == 0.0 ? 1.0 : 0.0;
    double edit_err = mean_l1(img, pair.target, &pair.edit_region_mask);
    double keep_err = mean_l1(img, pair.source, &keep_region);
    return -edit_err - lambda * keep_err;
}

JudgeVerdict OracleJudge::compare(const RasterImage& a, const RasterImage& b,
                                  const std::string&) const {
    double sa = oracle_score(a, *pair_, lambda_);
    double sb = oracle_score(b, *pair_, lambda_);
    return {sa >= sb ? 'A' : 'B', std::nullopt, ""};
}

JudgeVerdict FeatureJudge::compare(const RasterImage& a, const RasterImage& b,
                                   const std::string&) const {
    double sa = feat_sim(a, reference_);
    double sb = feat_sim(b, reference_);
    return {sa >= sb ? 'A' : 'B', std::nullopt, ""};
}

// ---- base64 ----

namespace {
constexpr char kB64Alphabet[] = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";
}

std::string base64_encode(const std::vector<uint8_t>& bytes) {
    std::string out;
    out.reserve((bytes.size() + 2) / 3 * 4);
    for (size_t i = 0; i < bytes.size(); i += 3) {
        uint32_t v = static_cast<uint32_t>(bytes[i]) << 16;
        if (i + 1 < bytes.size()) v |= static_cast<uint32_t>(bytes[i + 1]) << 8;
        if (i + 2 < bytes.size()) v |= static_cast<uint32_t>(bytes[i + 2]);
        out.push_back(kB64Alphabet[(v >> 18) & 63]);
        out.push_back(kB64Alphabet[(v >> 12) & 63]);
        out.push_back(i + 1 < bytes.size() ? kB64Alphabet[(v >> 6) & 63] : '=');
        out.push_back(i + 2 < bytes.size() ? kB64Alphabet[v & 63] : '=');
    }
    return out;
}

std::vector<uint8_t> base64_decode(const std::string& text) {
    auto value_of = [](char c) -> int {
        if (c >= 'A' && c <= 'Z') return c - 'A';
        if (c >= 'a' && c <= 'z') return c - 'a' + 26;
        if (c >= '0' && c <= '9') return c - '0' + 52;
        if (c == '+') return 62;
        if (c == '/') return 63;
        return -1;
    };
    std::vector<uint8_t> out;
    uint32_t acc = 0;
    int bits = 0;
    for (char c : text) {
        if (c == '=' || c == '\n' || c == '\r') continue;
        int v = value_of(c);
        if (v < 0) throw std::invalid_argument("base64: invalid character");
        acc = (acc << 6) | static_cast<uint32_t>(v);
        bits += 6;
        if (bits >= 8) {
            bits -= 8;
            out.push_back(static_cast<uint8_t>((acc >> bits) & 0xff));
        }
    }
    return out;
}

// ---- external judge client ----

void VLMEndpointConfig::validate() const {
    if (base_url.empty()) throw ConfigError("vlm endpoint: base_url is required");
    if (timeout_ms <= 0) throw ConfigError("vlm endpoint: timeout must be positive");
    if (max_retries < 0) throw ConfigError("vlm endpoint: max_retries must be >= 0");
}

VLMEndpointConfig VLMEndpointConfig::from_json_file(const std::string& path) {
    auto bytes = read_file_bytes(path);
    json j;
    try {
        j = json::parse(bytes.begin(), bytes.end());
    } catch (const json::exception& e) {
        throw ConfigError(std::string("vlm endpoint config parse error: ") + e.what());
    }
    VLMEndpointConfig cfg;
    cfg.base_url = j.value("base_url", cfg.base_url);
    cfg.model = j.value("model", cfg.model);
    cfg.auth_token_env = j.value("auth_token_env", cfg.auth_token_env);
    cfg.timeout_ms = j.value("timeout_ms", cfg.timeout_ms);
    cfg.max_retries = j.value("max_retries", cfg.max_retries);
    cfg.prompt_template = j.value("prompt_template", cfg.prompt_template);
    cfg.validate();
    return cfg;
}

JudgeVerdict parse_vlm_response(const std::string& body) {
    json j;
    try {
        j = json::parse(body);
    } catch (const json::exception&) {
        throw EndpointError("vlm judge: response is not valid JSON");
    }
    if (!j.contains("decision")) throw EndpointError("vlm judge: response lacks a decision field");
    std::string decision = j.at("decision").get<std::string>();
    // Trim whitespace, accept a single token.
    size_t b = decision.find_first_not_of(" \t\r\n");
    size_t e = decision.find_last_not_of(" \t\r\n");
    if (b == std::string::npos) throw EndpointError("vlm judge: empty decision");
    decision = decision.substr(b, e - b + 1);
    if (decision != "A" && decision != "a" && decision != "B" && decision != "b")
        throw EndpointError("vlm judge: decision must be A or B, got '" + decision + "'");
    JudgeVerdict v;
    v.winner = (decision == "A" || decision == "a") ? 'A' : 'B';
    if (j.contains("confidence")) v.confidence = j.at("confidence").get<double>();
    v.raw = body;
    return v;
}

VlmJudge::VlmJudge(VLMEndpointConfig config) : config_(std::move(config)) { config_.validate(); }

namespace {

std::string render_prompt(const std::string& tmpl, const std::string& instruction) {
    std::string out = tmpl;
    const std::string key = "{instruction}";
    size_t pos = out.find(key);
    if (pos != std::string::npos) out.replace(pos, key.size(), instruction);
    return out;
}

}  // namespace

JudgeVerdict VlmJudge::compare(const RasterImage& a, const RasterImage& b,
                               const std::string& instruction) const {
    using clock = std::chrono::steady_clock;
    const auto start = clock::now();
    const auto deadline =
        start + std::chrono::milliseconds(static_cast<long long>(config_.timeout_ms) *
                                          (config_.max_retries + 1));

    json req{{"instruction", instruction},
             {"prompt", render_prompt(config_.prompt_template, instruction)},
             {"model", config_.model},
             {"image_a", base64_encode(encode_png(a))},
             {"image_b", base64_encode(encode_png(b))}};
    const std::string body = req.dump();

    std::string last_error = "no attempt made";
    for (int attempt = 0; attempt <= config_.max_retries; ++attempt) {
        auto remaining =
            std::chrono::duration_cast<std::chrono::milliseconds>(deadline - clock::now()).count();
        if (remaining <= 0) break;
        int budget_ms = static_cast<int>(std::min<long long>(remaining, config_.timeout_ms));

        httplib::Client client(config_.base_url);
        client.set_connection_timeout(0, budget_ms * 1000);
        client.set_read_timeout(0, budget_ms * 1000);
        client.set_write_timeout(0, budget_ms * 1000);
        if (const char* token = std::getenv(config_.auth_token_env.c_str()); token && *token)
            client.set_bearer_token_auth(token);

        auto res = client.Post("/judge", body, "application/json");
        if (res && res->status == 200) {
            try {
                return parse_vlm_response(res->body);
            } catch (const EndpointError& e) {
                last_error = e.what();
            }
        } else if (res) {
            last_error = "http status " + std::to_string(res->status);
        } else {
            last_error = "transport error: " + httplib::to_string(res.error());
        }

        // Exponential backoff, never past the overall deadline.
        auto left =
            std::chrono::duration_cast<std::chrono::milliseconds>(deadline - clock::now()).count();
        if (left <= 0) break;
        long long backoff = std::min<long long>({50LL << attempt, 500LL, left});
        if (attempt < config_.max_retries && backoff > 0)
            std::this_thread::sleep_for(std::chrono::milliseconds(backoff));
    }
    throw EndpointError("vlm judge failed after " + std::to_string(config_.max_retries + 1) +
                        " attempts: " + last_error);
}

}  // namespace diptych
