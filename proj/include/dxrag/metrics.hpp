#pragma once

#include <optional>
#include <string>
#include <vector>

#include "dxrag/matcher.hpp"

namespace dxrag {

/// What the metric suite needs from one scored episode.
struct EpisodeOutcome {
    std::string case_id;
    std::string dataset;  // optional grouping label
    int sigma_f = 1;
    std::vector<std::string> diagnoses;              // bold predictions, rank order
    std::vector<std::string> ground_truth;
    std::vector<std::vector<std::string>> match_retrievals;  // diagnoses per match call
    std::vector<std::string> reason_texts;           // reason block payloads
};

/// Fraction of episodes where any of the first n predictions matches any
/// ground-truth diagnosis; episodes with sigma_f = 0 count as incorrect.
double acc_at_n(const std::vector<EpisodeOutcome>& results, std::size_t n,
                const DiseaseMatcher& matcher = {});

/// Fraction of match-tool invocations whose top-n retrieved records share a
/// ground-truth diagnosis. Empty optional when no invocation exists.
std::optional<double> hit_at_n(const std::vector<EpisodeOutcome>& results, std::size_t n,
                               const DiseaseMatcher& matcher = {});

/// Fraction of episodes whose reasoning text mentions a ground-truth disease
/// (normalized substring matching).
double hint_score(const std::vector<EpisodeOutcome>& results);

std::size_t match_invocation_count(const std::vector<EpisodeOutcome>& results);

struct MetricBlock {
    std::string label;
    std::size_t cases = 0;
    std::size_t match_invocations = 0;
    double acc_at_1 = 0.0;
    double acc_at_5 = 0.0;
    std::vector<std::pair<std::size_t, double>> acc_by_n;  // the requested cutoffs
    std::optional<double> hit_at_20;
    double hint = 0.0;
};

struct MetricsReport {
    MetricBlock pooled;
    std::vector<MetricBlock> per_dataset;
};

MetricsReport report(const std::vector<EpisodeOutcome>& results,
                     const DiseaseMatcher& matcher = {},
                     const std::vector<std::size_t>& acc_cutoffs = {1, 5},
                     std::size_t hit_cutoff = 20);

std::string to_json(const MetricsReport& report);
std::string to_text(const MetricsReport& report);  // aligned columns

}  // namespace dxrag
