#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "dxrag/retrieval.hpp"
#include "dxrag/reward.hpp"
#include "dxrag/transcript.hpp"

namespace dxrag {

struct PolicyDelta {
    std::string text;
    std::vector<double> token_logprobs;  // optional, may be empty
    bool finished = false;
};

/// Generates text continuations. Implementations honor stop markers by ending
/// the delta at (and including) the first marker hit, and are deterministic
/// per episode seed.
class PolicyClient {
public:
    virtual ~PolicyClient() = default;
    virtual void begin_episode(std::uint64_t seed) { (void)seed; }
    virtual PolicyDelta generate(const std::string& context,
                                 const std::vector<std::string>& stop_markers,
                                 std::size_t max_new) = 0;
};

/// Replays a fixed list of deltas in order, one per generate() call.
class ScriptedPolicy final : public PolicyClient {
public:
    explicit ScriptedPolicy(std::vector<std::string> deltas) : deltas_(std::move(deltas)) {}

    /// Replay file: JSON-lines, one {"delta": "..."} object per line.
    static ScriptedPolicy from_file(const std::string& path);

    void begin_episode(std::uint64_t) override { cursor_ = 0; }
    PolicyDelta generate(const std::string&, const std::vector<std::string>&,
                         std::size_t) override;

private:
    std::vector<std::string> deltas_;
    std::size_t cursor_ = 0;
};

/// Plays one canned text marker-by-marker: each generate() returns the chunk
/// up to and including the next stop marker (or the remainder).
class CannedTextPolicy final : public PolicyClient {
public:
    explicit CannedTextPolicy(std::string text) : text_(std::move(text)) {}

    void begin_episode(std::uint64_t) override { cursor_ = 0; }
    PolicyDelta generate(const std::string&, const std::vector<std::string>& stop_markers,
                         std::size_t max_new) override;

private:
    std::string text_;
    std::size_t cursor_ = 0;
};

/// Samples one canned transcript per episode from a vocabulary, then plays it
/// like CannedTextPolicy.
class ToyVocabPolicy final : public PolicyClient {
public:
    explicit ToyVocabPolicy(std::vector<std::string> vocab) : vocab_(std::move(vocab)) {}

    void begin_episode(std::uint64_t seed) override;
    PolicyDelta generate(const std::string&, const std::vector<std::string>& stop_markers,
                         std::size_t max_new) override;

private:
    std::vector<std::string> vocab_;
    std::unique_ptr<CannedTextPolicy> current_;
};

struct PolicyTransportError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// JSON-over-HTTP policy: POST {context, stop, max_new, seed} to /generate,
/// expecting {delta, finished, logprobs?}. Transport failures retry, then
/// surface as PolicyTransportError.
class RemotePolicyClient final : public PolicyClient {
public:
    explicit RemotePolicyClient(std::string host, int port, int retries = 2,
                                int timeout_sec = 30);

    void begin_episode(std::uint64_t seed) override { seed_ = seed; }
    PolicyDelta generate(const std::string& context,
                         const std::vector<std::string>& stop_markers,
                         std::size_t max_new) override;

private:
    std::string host_;
    int port_;
    int retries_;
    int timeout_sec_;
    std::uint64_t seed_ = 0;
};

enum class RolloutMode { agentic, vanilla, rag_free };
enum class EpisodeStatus { running, diagnosed, truncated, malformed };

std::string to_string(RolloutMode mode);
std::string to_string(EpisodeStatus status);
std::optional<RolloutMode> rollout_mode_from_string(std::string_view s);

struct RolloutConfig {
    FormatLimits limits;
    RewardConfig reward;
    RewardWeights weights = stage_weights(4);
    std::size_t l_max = 8000;    // generated-length budget
    std::size_t max_new = 4096;  // per-delta cap
    RolloutMode mode = RolloutMode::agentic;
    bool enforce_limits = false;  // cap tool executions at FormatLimits
    std::uint64_t seed = 0;
    enum class LengthUnit { chars, provider_tokens } length_unit = LengthUnit::chars;
};

struct EnvTraceEntry {
    ActionKind active_kind = ActionKind::lookup;
    std::string query;
    std::string feedback;
    std::vector<std::string> match_diagnoses;  // rank order, match calls only
};

struct EpisodeState {
    std::string prompt;
    std::string generated;
    std::size_t lookup_calls = 0;
    std::size_t match_calls = 0;
    std::size_t search_calls = 0;
    std::size_t total_generated = 0;
    std::size_t l_max = 0;
    EpisodeStatus status = EpisodeStatus::running;
};

struct EpisodeResult {
    std::string case_id;
    std::string dataset;
    std::size_t sample_index = 0;
    std::uint64_t seed = 0;
    RolloutMode mode = RolloutMode::agentic;
    EpisodeStatus status = EpisodeStatus::malformed;
    std::string prompt;
    std::string generated;  // final text minus the prompt
    Transcript transcript;
    RewardBreakdown reward;
    std::vector<EnvTraceEntry> env_trace;
    std::vector<std::string> ground_truth;
    std::vector<double> logprobs;  // per-token, when the policy supplies them

    std::string final_text() const { return prompt + generated; }
};

std::string build_prompt(const DiagnosticCase& c, RolloutMode mode);

EpisodeResult run_episode(const DiagnosticCase& c, PolicyClient& policy, Environment& env,
                          const RolloutConfig& config);

/// G seeded episodes per case, order-stable by (case index, sample index).
/// Per-episode failures are isolated as malformed results.
std::vector<EpisodeResult> run_batch(const std::vector<DiagnosticCase>& cases,
                                     PolicyClient& policy, Environment& env,
                                     const RolloutConfig& config, std::size_t group_size);

std::string episode_to_json_line(const EpisodeResult& r);

}  // namespace dxrag
