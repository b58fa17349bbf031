#include "dxrag/bm25.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_map>

#include "dxrag/text.hpp"

namespace dxrag {

void Bm25Index::add_document(std::string_view text) {
    std::size_t doc_id = doc_lengths_.size();
    auto tokens = tokenize(text);
    std::unordered_map<std::string, std::uint32_t> tf;
    for (auto& t : tokens) tf[t] += 1;
    for (auto& [token, freq] : tf) {
        postings_[token].emplace_back(doc_id, freq);
    }
    doc_lengths_.push_back(static_cast<std::uint32_t>(tokens.size()));
    total_length_ += tokens.size();
}

double Bm25Index::avgdl() const {
    if (doc_lengths_.empty()) return 0.0;
    return static_cast<double>(total_length_) / static_cast<double>(doc_lengths_.size());
}

double Bm25Index::idf(const std::string& token) const {
    auto it = postings_.find(token);
    double n_t = (it == postings_.end()) ? 0.0 : static_cast<double>(it->second.size());
    double n = static_cast<double>(doc_count());
    return std::log((n - n_t + 0.5) / (n_t + 0.5) + 1.0);
}

double Bm25Index::score_tokens(const std::vector<std::string>& tokens,
                               std::size_t doc_id) const {
    double dl = static_cast<double>(doc_lengths_[doc_id]);
    double avg = avgdl();
    double len_ratio = avg > 0.0 ? dl / avg : 0.0;
    double score = 0.0;
    for (const auto& t : tokens) {
        auto it = postings_.find(t);
        if (it == postings_.end()) continue;
        const auto& plist = it->second;
        auto pit = std::lower_bound(plist.begin(), plist.end(), doc_id,
                                    [](const auto& p, std::size_t id) { return p.first < id; });
        if (pit == plist.end() || pit->first != doc_id) continue;
        double f = static_cast<double>(pit->second);
        double denom = f + params_.k1 * (1.0 - params_.b + params_.b * len_ratio);
        score += idf(t) * f * (params_.k1 + 1.0) / denom;
    }
    return score;
}

double Bm25Index::score(std::string_view query, std::size_t doc_id) const {
    if (doc_id >= doc_count()) return 0.0;
    return score_tokens(tokenize(query), doc_id);
}

std::vector<Bm25Hit> Bm25Index::search(std::string_view query, std::size_t top_k) const {
    auto tokens = tokenize(query);
    std::unordered_map<std::size_t, double> accum;
    double avg = avgdl();
    for (const auto& t : tokens) {
        auto it = postings_.find(t);
        if (it == postings_.end()) continue;
        double token_idf = idf(t);
        for (const auto& [doc_id, freq] : it->second) {
            double f = static_cast<double>(freq);
            double len_ratio = avg > 0.0
                                   ? static_cast<double>(doc_lengths_[doc_id]) / avg
                                   : 0.0;
            double denom = f + params_.k1 * (1.0 - params_.b + params_.b * len_ratio);
            accum[doc_id] += token_idf * f * (params_.k1 + 1.0) / denom;
        }
    }
    std::vector<Bm25Hit> hits;
    hits.reserve(accum.size());
    for (const auto& [doc_id, s] : accum) {
        if (s > 0.0) hits.push_back({doc_id, s});
    }
    std::sort(hits.begin(), hits.end(), [](const Bm25Hit& a, const Bm25Hit& b) {
        if (a.score != b.score) return a.score > b.score;
        return a.doc_id < b.doc_id;
    });
    if (top_k > 0 && hits.size() > top_k) hits.resize(top_k);
    return hits;
}

}  // namespace dxrag
