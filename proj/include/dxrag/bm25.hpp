#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace dxrag {

struct Bm25Params {
    double k1 = 1.5;
    double b = 0.75;
};

struct Bm25Hit {
    std::size_t doc_id = 0;
    double score = 0.0;
};

/// Okapi BM25 inverted index over short text documents.
///
/// Score(q, d) = sum over query tokens t of
///   IDF(t) * f(t,d) * (k1 + 1) / (f(t,d) + k1 * (1 - b + b * |d| / avgdl))
/// with IDF(t) = log((N - n(t) + 0.5) / (n(t) + 0.5) + 1), which is
/// non-negative for every token.
class Bm25Index {
public:
    Bm25Index() = default;
    explicit Bm25Index(Bm25Params params) : params_(params) {}

    /// Documents are tokenized with dxrag::tokenize and indexed in order.
    void add_document(std::string_view text);

    std::size_t doc_count() const { return doc_lengths_.size(); }
    double avgdl() const;
    const Bm25Params& params() const { return params_; }

    /// Score one document against a query. Query tokens are summed as a
    /// sequence, so repeated tokens contribute repeatedly.
    double score(std::string_view query, std::size_t doc_id) const;

    /// All documents with score > 0, sorted by score descending then doc_id
    /// ascending, truncated to top_k (top_k = 0 means no truncation).
    std::vector<Bm25Hit> search(std::string_view query, std::size_t top_k = 0) const;

private:
    double idf(const std::string& token) const;
    double score_tokens(const std::vector<std::string>& tokens, std::size_t doc_id) const;

    Bm25Params params_;
    // token -> (doc_id, term frequency), doc_ids ascending
    std::map<std::string, std::vector<std::pair<std::size_t, std::uint32_t>>> postings_;
    std::vector<std::uint32_t> doc_lengths_;
    std::uint64_t total_length_ = 0;
};

}  // namespace dxrag
