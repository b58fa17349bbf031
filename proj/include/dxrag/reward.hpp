#pragma once

#include <array>
#include <string>
#include <vector>

#include "dxrag/matcher.hpp"
#include "dxrag/transcript.hpp"

namespace dxrag {

struct RewardWeights {
    double w_m = 0.0;
    double w_s = 0.0;
    double w_d = 0.0;
};

/// Four-stage weight schedule: stages 1..3 emphasize one reward at 0.9 with
/// the others at 0.05 (order S, M, D), stage 4 runs (w_S, w_M, w_D) =
/// (0.3, 0.3, 0.4).
RewardWeights stage_weights(int stage);

struct StageSchedule {
    std::array<RewardWeights, 4> stages;
    static StageSchedule standard();
};

struct RewardConfig {
    int k = 3;                         // reward = frac^(1/k); k=3 is the cube root
    std::size_t max_n = 6;             // max disease mentions across search payloads
    bool sim_diag_uses_exponent = true;  // sim_diag shares Rwd_S's exponent
    bool dedupe_match_in_combo = false;  // drop the w_M term (Rwd_M stays inside Rwd_D)
    DiseaseMatcher matcher;
    FormatLimits limits;
    ValidateOptions validate_options;
};

struct MatchRewardResult {
    double value = 0.0;
    bool diversity_ok = true;
    std::size_t n_match = 0;
    bool hit = false;
    bool defined = true;  // false when the match/refer structure is broken
};

/// +0.5 on a ground-truth hit in any refer block, minus min(0.1 * n_match, 0.3);
/// zeroed when consecutive match phenotype sets change by fewer than two items.
MatchRewardResult match_reward(const Transcript& t, const std::vector<std::string>& gt,
                               const RewardConfig& config = {});

/// Cube root (frac^(1/k)) of the fraction of ground-truth diagnosis tokens
/// covered by search payload tokens; zero on search/result count mismatch or
/// more than max_n query mentions.
double search_reward(const Transcript& t, const std::vector<std::string>& gt,
                     const RewardConfig& config = {});

struct DiagnosisReward {
    double value = 0.0;
    double sim_diag = 0.0;
};

/// 0.2 + 0.6 * sim_diag + Rwd_M, zeroed when match constraints are violated.
DiagnosisReward diagnosis_reward(const Transcript& t, const std::vector<std::string>& gt,
                                 const MatchRewardResult& match,
                                 const RewardConfig& config = {});

/// clip_[0,1](sigma_f * (w_M * m + w_S * s + w_D * d))
double combine(int sigma_f, double rwd_m, double rwd_s, double rwd_d,
               const RewardWeights& weights);

struct RewardBreakdown {
    int sigma_f = 1;
    double rwd_m = 0.0;
    double rwd_s = 0.0;
    double rwd_d = 0.0;
    double combined = 0.0;
    std::size_t n_match = 0;
    bool diversity_ok = true;
    double sim_diag = 0.0;
    bool match_hit = false;
    bool structure_violation = false;  // match/refer structure broke; rewards zeroed
    RewardWeights weights;
    std::vector<Violation> violations;
    std::vector<Violation> warnings;
};

RewardBreakdown compute_reward(const Transcript& t, const std::vector<std::string>& gt,
                               const RewardWeights& weights, const RewardConfig& config = {});

/// Candidate diagnosis strings inside a feedback payload: parenthesized spans
/// dropped, bold markers unwrapped, then split on , ; : | and newlines.
std::vector<std::string> extract_candidates(std::string_view payload);

}  // namespace dxrag
