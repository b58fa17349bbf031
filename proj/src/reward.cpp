#include "dxrag/reward.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <stdexcept>

#include "dxrag/text.hpp"

namespace dxrag {

RewardWeights stage_weights(int stage) {
    switch (stage) {
        case 1: return {0.05, 0.9, 0.05};   // searching reward emphasized
        case 2: return {0.9, 0.05, 0.05};   // patient matching reward emphasized
        case 3: return {0.05, 0.05, 0.9};   // diagnosis reward emphasized
        case 4: return {0.3, 0.3, 0.4};
        default:
            throw std::invalid_argument("stage must be in 1..4");
    }
}

StageSchedule StageSchedule::standard() {
    return {{stage_weights(1), stage_weights(2), stage_weights(3), stage_weights(4)}};
}

std::vector<std::string> extract_candidates(std::string_view payload) {
    std::string cleaned;
    cleaned.reserve(payload.size());
    int depth = 0;
    for (std::size_t i = 0; i < payload.size(); ++i) {
        char c = payload[i];
        if (c == '(') {
            ++depth;
            continue;
        }
        if (c == ')') {
            if (depth > 0) --depth;
            continue;
        }
        if (depth > 0) continue;
        cleaned.push_back(c);
    }
    // Unwrap \textbf{...} markers, keeping their contents.
    std::string unwrapped;
    unwrapped.reserve(cleaned.size());
    static constexpr std::string_view kMarker = "\\textbf{";
    for (std::size_t i = 0; i < cleaned.size();) {
        if (cleaned.compare(i, kMarker.size(), kMarker) == 0) {
            i += kMarker.size();
            continue;
        }
        if (cleaned[i] == '{' || cleaned[i] == '}') {
            ++i;
            continue;
        }
        unwrapped.push_back(cleaned[i]);
        ++i;
    }
    for (char& c : unwrapped) {
        if (c == ';' || c == ':' || c == '|' || c == '\n') c = ',';
    }
    return split_list(unwrapped);
}

namespace {

std::size_t open_count(const Transcript& t, ActionKind kind) {
    std::size_t n = 0;
    for (const auto& e : t.events) {
        if (e.kind == kind && !e.close) ++n;
    }
    return n;
}

// The match/refer structure under which Rwd_M is defined: match and refer tags
// alternate properly, every match block is immediately followed by a refer
// block and every refer block follows a closed match block.
bool match_structure_ok(const Transcript& t) {
    int match_depth = 0;
    int refer_depth = 0;
    for (const auto& e : t.events) {
        int* depth = nullptr;
        if (e.kind == ActionKind::match) depth = &match_depth;
        if (e.kind == ActionKind::refer) depth = &refer_depth;
        if (depth == nullptr) continue;
        if (!e.close) {
            if (*depth != 0) return false;
            *depth = 1;
        } else {
            if (*depth != 1) return false;
            *depth = 0;
        }
    }
    if (match_depth != 0 || refer_depth != 0) return false;

    for (const auto& b : t.blocks) {
        if (b.kind == ActionKind::match && !b.truncated) {
            const TagEvent* next = nullptr;
            for (const auto& e : t.events) {
                if (e.pos >= b.span.end) {
                    next = &e;
                    break;
                }
            }
            if (next == nullptr || next->close || next->kind != ActionKind::refer) return false;
        }
        if (b.kind == ActionKind::refer) {
            const TagEvent* prev = nullptr;
            for (const auto& e : t.events) {
                if (e.pos + e.len <= b.span.start) prev = &e;
            }
            if (prev == nullptr || !prev->close || prev->kind != ActionKind::match) return false;
        }
    }
    return true;
}

std::set<std::string> normalized_set(const std::vector<std::string>& items) {
    std::set<std::string> out;
    for (const auto& item : items) {
        std::string n = normalize_term(item);
        if (!n.empty()) out.insert(std::move(n));
    }
    return out;
}

std::size_t symmetric_difference_size(const std::set<std::string>& a,
                                      const std::set<std::string>& b) {
    std::size_t n = 0;
    for (const auto& x : a) n += b.count(x) == 0 ? 1 : 0;
    for (const auto& x : b) n += a.count(x) == 0 ? 1 : 0;
    return n;
}

std::set<std::string> ground_truth_tokens(const std::vector<std::string>& gt) {
    std::set<std::string> tokens;
    for (const auto& d : gt) {
        for (auto& tok : tokenize(d)) tokens.insert(std::move(tok));
    }
    return tokens;
}

double token_fraction(const std::set<std::string>& candidate_tokens,
                      const std::set<std::string>& gt_tokens) {
    if (gt_tokens.empty()) return 0.0;
    std::size_t matched = 0;
    for (const auto& tok : gt_tokens) matched += candidate_tokens.count(tok);
    return static_cast<double>(matched) / static_cast<double>(gt_tokens.size());
}

}  // namespace

MatchRewardResult match_reward(const Transcript& t, const std::vector<std::string>& gt,
                               const RewardConfig& config) {
    if (gt.empty()) throw std::invalid_argument("match_reward: empty ground truth");
    MatchRewardResult result;
    if (!match_structure_ok(t)) {
        result.defined = false;
        return result;
    }
    result.n_match = open_count(t, ActionKind::match);

    for (const auto& b : t.blocks) {
        if (b.kind != ActionKind::refer || b.truncated) continue;
        for (const auto& candidate : extract_candidates(b.payload)) {
            if (config.matcher.matches_any(candidate, gt)) {
                result.hit = true;
                break;
            }
        }
        if (result.hit) break;
    }

    double penalty = std::min(0.1 * static_cast<double>(result.n_match), 0.3);
    result.value = result.hit ? 0.5 - penalty : -penalty;
    if (result.n_match == 0) result.value = 0.0;

    if (result.n_match >= 2) {
        for (std::size_t i = 0; i + 1 < t.match_specs.size(); ++i) {
            auto a = normalized_set(t.match_specs[i]);
            auto b = normalized_set(t.match_specs[i + 1]);
            if (symmetric_difference_size(a, b) < 2) {
                result.diversity_ok = false;
                result.value = 0.0;
                break;
            }
        }
    }
    return result;
}

double search_reward(const Transcript& t, const std::vector<std::string>& gt,
                     const RewardConfig& config) {
    if (open_count(t, ActionKind::search) != open_count(t, ActionKind::result)) {
        return 0.0;
    }

    std::size_t mentions = 0;
    std::set<std::string> payload_tokens;
    std::size_t spec_index = 0;
    for (const auto& b : t.blocks) {
        if (b.kind != ActionKind::search || b.truncated) continue;
        const SearchSpec& spec = t.search_specs[spec_index++];
        if (!spec.source_token.empty()) {
            mentions += spec.queries.size();
            for (const auto& q : spec.queries) {
                for (auto& tok : tokenize(q)) payload_tokens.insert(std::move(tok));
            }
        } else {
            auto items = split_list(b.payload);
            mentions += items.size();
            for (auto& tok : tokenize(b.payload)) payload_tokens.insert(std::move(tok));
        }
    }
    if (mentions > config.max_n) return 0.0;

    double frac = token_fraction(payload_tokens, ground_truth_tokens(gt));
    if (frac <= 0.0) return 0.0;
    return std::pow(frac, 1.0 / static_cast<double>(config.k));
}

DiagnosisReward diagnosis_reward(const Transcript& t, const std::vector<std::string>& gt,
                                 const MatchRewardResult& match, const RewardConfig& config) {
    DiagnosisReward result;
    std::set<std::string> diag_tokens;
    for (const auto& d : t.diagnoses) {
        for (auto& tok : tokenize(d)) diag_tokens.insert(std::move(tok));
    }
    double frac = token_fraction(diag_tokens, ground_truth_tokens(gt));
    result.sim_diag = config.sim_diag_uses_exponent && frac > 0.0
                          ? std::pow(frac, 1.0 / static_cast<double>(config.k))
                          : frac;
    if (!match.defined || !match.diversity_ok) {
        result.value = 0.0;
        return result;
    }
    result.value = 0.2 + 0.6 * result.sim_diag + match.value;
    return result;
}

double combine(int sigma_f, double rwd_m, double rwd_s, double rwd_d,
               const RewardWeights& weights) {
    if (sigma_f == 0) return 0.0;
    double total = weights.w_m * rwd_m + weights.w_s * rwd_s + weights.w_d * rwd_d;
    return std::clamp(total, 0.0, 1.0);
}

RewardBreakdown compute_reward(const Transcript& t, const std::vector<std::string>& gt,
                               const RewardWeights& weights, const RewardConfig& config) {
    RewardBreakdown out;
    out.weights = weights;

    FormatReport report = validate(t, config.limits, config.validate_options);
    out.sigma_f = report.sigma_f;
    out.violations = std::move(report.violations);
    out.warnings = std::move(report.warnings);

    MatchRewardResult match = match_reward(t, gt, config);
    out.n_match = match.n_match;
    out.diversity_ok = match.diversity_ok;
    out.match_hit = match.hit;

    if (!match.defined) {
        // Rewards are undefined on broken match/refer structure; report zeros
        // and let the format gate zero the total.
        out.structure_violation = true;
        out.rwd_m = 0.0;
        out.rwd_s = 0.0;
        out.rwd_d = 0.0;
        DiagnosisReward diag = diagnosis_reward(t, gt, match, config);
        out.sim_diag = diag.sim_diag;
    } else {
        out.rwd_m = match.value;
        out.rwd_s = search_reward(t, gt, config);
        DiagnosisReward diag = diagnosis_reward(t, gt, match, config);
        out.rwd_d = diag.value;
        out.sim_diag = diag.sim_diag;
    }

    RewardWeights effective = weights;
    if (config.dedupe_match_in_combo) effective.w_m = 0.0;
    out.combined = combine(out.sigma_f, out.rwd_m, out.rwd_s, out.rwd_d, effective);
    return out;
}

}  // namespace dxrag
