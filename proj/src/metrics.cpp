#include "dxrag/metrics.hpp"

#include <algorithm>
#include <map>
#include <sstream>

#include "dxrag/text.hpp"
#include "json.hpp"

namespace dxrag {

using nlohmann::json;

namespace {

bool top_n_correct(const EpisodeOutcome& r, std::size_t n, const DiseaseMatcher& matcher) {
    if (r.sigma_f == 0) return false;
    std::size_t limit = std::min(n, r.diagnoses.size());
    for (std::size_t i = 0; i < limit; ++i) {
        if (matcher.matches_any(r.diagnoses[i], r.ground_truth)) return true;
    }
    return false;
}

}  // namespace

double acc_at_n(const std::vector<EpisodeOutcome>& results, std::size_t n,
                const DiseaseMatcher& matcher) {
    if (results.empty()) return 0.0;
    std::size_t correct = 0;
    for (const auto& r : results) {
        if (top_n_correct(r, n, matcher)) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(results.size());
}

std::size_t match_invocation_count(const std::vector<EpisodeOutcome>& results) {
    std::size_t n = 0;
    for (const auto& r : results) n += r.match_retrievals.size();
    return n;
}

std::optional<double> hit_at_n(const std::vector<EpisodeOutcome>& results, std::size_t n,
                               const DiseaseMatcher& matcher) {
    std::size_t invocations = 0;
    std::size_t hits = 0;
    for (const auto& r : results) {
        for (const auto& retrieved : r.match_retrievals) {
            ++invocations;
            std::size_t limit = std::min(n, retrieved.size());
            for (std::size_t i = 0; i < limit; ++i) {
                if (matcher.matches_any(retrieved[i], r.ground_truth)) {
                    ++hits;
                    break;
                }
            }
        }
    }
    if (invocations == 0) return std::nullopt;
    return static_cast<double>(hits) / static_cast<double>(invocations);
}

double hint_score(const std::vector<EpisodeOutcome>& results) {
    if (results.empty()) return 0.0;
    std::size_t hinted = 0;
    for (const auto& r : results) {
        bool found = false;
        for (const auto& reason : r.reason_texts) {
            for (const auto& gt : r.ground_truth) {
                if (contains_normalized(reason, gt)) {
                    found = true;
                    break;
                }
            }
            if (found) break;
        }
        if (found) ++hinted;
    }
    return static_cast<double>(hinted) / static_cast<double>(results.size());
}

namespace {

MetricBlock block_for(const std::string& label, const std::vector<EpisodeOutcome>& results,
                      const DiseaseMatcher& matcher,
                      const std::vector<std::size_t>& acc_cutoffs,
                      std::size_t hit_cutoff) {
    MetricBlock b;
    b.label = label;
    b.cases = results.size();
    b.match_invocations = match_invocation_count(results);
    b.acc_at_1 = acc_at_n(results, 1, matcher);
    b.acc_at_5 = acc_at_n(results, 5, matcher);
    for (std::size_t n : acc_cutoffs) {
        b.acc_by_n.emplace_back(n, acc_at_n(results, n, matcher));
    }
    b.hit_at_20 = hit_at_n(results, hit_cutoff, matcher);
    b.hint = hint_score(results);
    return b;
}

}  // namespace

MetricsReport report(const std::vector<EpisodeOutcome>& results,
                     const DiseaseMatcher& matcher,
                     const std::vector<std::size_t>& acc_cutoffs,
                     std::size_t hit_cutoff) {
    MetricsReport rep;
    rep.pooled = block_for("pooled", results, matcher, acc_cutoffs, hit_cutoff);
    std::map<std::string, std::vector<EpisodeOutcome>> by_dataset;
    for (const auto& r : results) {
        by_dataset[r.dataset.empty() ? "default" : r.dataset].push_back(r);
    }
    for (const auto& [label, subset] : by_dataset) {
        rep.per_dataset.push_back(block_for(label, subset, matcher, acc_cutoffs, hit_cutoff));
    }
    return rep;
}

namespace {

json block_to_json(const MetricBlock& b) {
    json j;
    j["label"] = b.label;
    j["cases"] = b.cases;
    j["match_invocations"] = b.match_invocations;
    j["acc_at_1"] = b.acc_at_1;
    j["acc_at_5"] = b.acc_at_5;
    json by_n = json::object();
    for (const auto& [n, value] : b.acc_by_n) by_n[std::to_string(n)] = value;
    j["acc_at_n"] = by_n;
    if (b.hit_at_20) {
        j["hit_at_20"] = *b.hit_at_20;
    } else {
        j["hit_at_20"] = nullptr;
    }
    j["hint"] = b.hint;
    return j;
}

}  // namespace

std::string to_json(const MetricsReport& report) {
    json j;
    j["pooled"] = block_to_json(report.pooled);
    j["per_dataset"] = json::array();
    for (const auto& b : report.per_dataset) j["per_dataset"].push_back(block_to_json(b));
    return j.dump(2);
}

std::string to_text(const MetricsReport& report) {
    std::ostringstream out;
    auto line = [&](const MetricBlock& b) {
        out << b.label;
        out << std::string(b.label.size() < 16 ? 16 - b.label.size() : 1, ' ');
        char buf[160];
        if (b.hit_at_20) {
            std::snprintf(buf, sizeof(buf),
                          "cases=%-6zu acc@1=%.4f acc@5=%.4f hit@20=%.4f hint=%.4f",
                          b.cases, b.acc_at_1, b.acc_at_5, *b.hit_at_20, b.hint);
        } else {
            std::snprintf(buf, sizeof(buf),
                          "cases=%-6zu acc@1=%.4f acc@5=%.4f hit@20=null   hint=%.4f",
                          b.cases, b.acc_at_1, b.acc_at_5, b.hint);
        }
        out << buf << "\n";
    };
    line(report.pooled);
    for (const auto& b : report.per_dataset) line(b);
    return out.str();
}

}  // namespace dxrag
