#pragma once

#include <atomic>
#include <cstdint>
#include <memory>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "dxrag/bm25.hpp"
#include "dxrag/corpus.hpp"
#include "dxrag/embedding.hpp"
#include "dxrag/matcher.hpp"

namespace dxrag {

inline constexpr const char* kNoReference = "no reference";

struct RetrievalConfig {
    Bm25Params bm25;
    double tau = 0.5;                      // minimum BM25 score for a guideline match
    std::size_t k_pheno = 10;              // phenotypes returned per matched disease
    std::size_t top_n = 20;                // patient matches returned
    std::size_t top_k = 5;                 // knowledge chunks returned per query
    std::size_t max_lookup_diseases = 10;
    std::size_t max_search_queries = 3;
    std::size_t summarize_budget = 1000;   // document chars before summarization kicks in
    std::size_t embed_dim = 64;
};

struct LookupResult {
    std::string query_disease;
    std::optional<std::string> matched_disease;
    std::vector<std::string> phenotypes;  // non-empty iff matched_disease is set
};

struct MatchResult {
    std::string record_id;
    std::string diagnosis;
    std::vector<std::string> phenotypes;
    double score = 0.0;
};

struct SearchHit {
    std::string chunk_id;
    double score = 0.0;
    std::string text;
};

struct SummarizeResult {
    std::string answer;
    bool used_fallback = false;
    bool parse_failed = false;
};

/// Raised when an embedding backend fails; retriable, distinct from an empty
/// result set.
struct ProviderError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Guideline lookup over disease names (BM25 best match, tau-gated).
class GuidelineLookup {
public:
    GuidelineLookup(const GuidelineStore& store, const RetrievalConfig& config);

    /// One result per query, in query order. Throws std::invalid_argument when
    /// the query list is empty or exceeds max_lookup_diseases.
    std::vector<LookupResult> lookup(const std::vector<std::string>& diseases) const;

    const Bm25Index& index() const { return index_; }

private:
    const GuidelineStore* store_;
    RetrievalConfig config_;
    Bm25Index index_;
};

/// Mean-over-query of max-over-record cosine similarity between phenotype
/// embeddings; record embeddings are precomputed at construction.
class PatientMatcher {
public:
    PatientMatcher(const PatientStore& store, std::shared_ptr<const EmbeddingProvider> provider);

    std::vector<MatchResult> match(const std::vector<std::string>& query_phenotypes,
                                   std::size_t top_n) const;

    /// Similarity of a query phenotype set against one stored record.
    double similarity(const std::vector<std::vector<double>>& query_vecs,
                      std::size_t record_index) const;

    const EmbeddingProvider& provider() const { return *provider_; }

private:
    const PatientStore* store_;
    std::shared_ptr<const EmbeddingProvider> provider_;
    std::vector<std::vector<std::vector<double>>> record_vecs_;
};

/// Per-source BM25 over knowledge chunks.
class KnowledgeIndex {
public:
    KnowledgeIndex(const KnowledgeStore& store, const RetrievalConfig& config);

    std::vector<SearchHit> search_one(KnowledgeSource source, const std::string& query,
                                      std::size_t top_k) const;

    /// 1..max_search_queries queries; results merged query-major and
    /// deduplicated by chunk_id keeping the best score.
    std::vector<SearchHit> search(KnowledgeSource source,
                                  const std::vector<std::string>& queries,
                                  std::size_t top_k) const;

    std::size_t chunk_count(KnowledgeSource source) const;

private:
    struct SourceIndex {
        Bm25Index index;
        std::vector<const KnowledgeChunk*> chunks;
    };
    const SourceIndex& routed(KnowledgeSource source) const;

    RetrievalConfig config_;
    SourceIndex sources_[3];
};

/// Backend that turns (source, query, document) into raw model output which is
/// expected to contain a JSON object with an "answer" field.
class Summarizer {
public:
    virtual ~Summarizer() = default;
    virtual std::string complete(KnowledgeSource source, const std::string& query,
                                 const std::string& document) = 0;
};

/// Stub backend: answers with the leading window of the document.
class TruncationSummarizer final : public Summarizer {
public:
    explicit TruncationSummarizer(std::size_t budget = 1000) : budget_(budget) {}
    std::string complete(KnowledgeSource source, const std::string& query,
                         const std::string& document) override;

private:
    std::size_t budget_;
};

/// Documents at or under `budget` come back verbatim. Longer documents go
/// through the summarizer; its output must carry a JSON "answer", otherwise
/// the result is "no reference" with a parse-failure flag. A summarizer
/// failure falls back to leading-window truncation.
SummarizeResult summarize_document(KnowledgeSource source, const std::string& query,
                                   const std::string& document, Summarizer* summarizer,
                                   std::size_t budget);

struct EnvCounters {
    std::atomic<std::uint64_t> lookup_calls{0};
    std::atomic<std::uint64_t> match_calls{0};
    std::atomic<std::uint64_t> search_calls{0};
    std::atomic<std::uint64_t> summarize_calls{0};

    std::uint64_t total() const {
        return lookup_calls + match_calls + search_calls + summarize_calls;
    }
};

struct CorpusBundle {
    GuidelineStore guideline;
    PatientStore patients;
    KnowledgeStore knowledge;
};

/// The three retrieval tools plus summarization behind one interface.
class Environment {
public:
    virtual ~Environment() = default;

    virtual std::vector<LookupResult> lookup(const std::vector<std::string>& diseases) = 0;
    virtual std::vector<MatchResult> match(const std::vector<std::string>& phenotypes,
                                           std::size_t top_n) = 0;
    virtual std::vector<SearchHit> search(KnowledgeSource source,
                                          const std::vector<std::string>& queries,
                                          std::size_t top_k) = 0;
    virtual SummarizeResult summarize(KnowledgeSource source, const std::string& query,
                                      const std::string& document) = 0;

    /// Episode-scoped state (ground truth, seed). No-op for the plain corpus
    /// environment; the adversarial wrapper uses it to pick decoys.
    virtual void begin_episode(const std::vector<std::string>& ground_truth,
                               std::uint64_t seed) {
        (void)ground_truth;
        (void)seed;
    }

    virtual const EnvCounters& counters() const = 0;
    virtual const RetrievalConfig& config() const = 0;
};

class CorpusEnvironment : public Environment {
public:
    CorpusEnvironment(std::shared_ptr<const CorpusBundle> bundle, RetrievalConfig config,
                      std::shared_ptr<Summarizer> summarizer,
                      std::shared_ptr<const EmbeddingProvider> provider = nullptr);

    std::vector<LookupResult> lookup(const std::vector<std::string>& diseases) override;
    std::vector<MatchResult> match(const std::vector<std::string>& phenotypes,
                                   std::size_t top_n) override;
    std::vector<SearchHit> search(KnowledgeSource source,
                                  const std::vector<std::string>& queries,
                                  std::size_t top_k) override;
    SummarizeResult summarize(KnowledgeSource source, const std::string& query,
                              const std::string& document) override;

    const EnvCounters& counters() const override { return counters_; }
    const RetrievalConfig& config() const override { return config_; }
    const CorpusBundle& bundle() const { return *bundle_; }

private:
    std::shared_ptr<const CorpusBundle> bundle_;
    RetrievalConfig config_;
    std::shared_ptr<Summarizer> summarizer_;
    std::shared_ptr<const EmbeddingProvider> provider_;
    GuidelineLookup lookup_tool_;
    PatientMatcher match_tool_;
    KnowledgeIndex search_tool_;
    EnvCounters counters_;
};

/// Replaces every tool response with seeded decoy content whose disease
/// differs from the episode's ground truth. Response shapes stay valid;
/// degrades to empty responses when no decoy content exists.
class AdversarialEnvironment final : public Environment {
public:
    AdversarialEnvironment(std::shared_ptr<const CorpusBundle> bundle, RetrievalConfig config,
                           std::shared_ptr<Summarizer> summarizer, std::uint64_t seed = 0,
                           DiseaseMatcher matcher = {});

    void begin_episode(const std::vector<std::string>& ground_truth,
                       std::uint64_t seed) override;

    std::vector<LookupResult> lookup(const std::vector<std::string>& diseases) override;
    std::vector<MatchResult> match(const std::vector<std::string>& phenotypes,
                                   std::size_t top_n) override;
    std::vector<SearchHit> search(KnowledgeSource source,
                                  const std::vector<std::string>& queries,
                                  std::size_t top_k) override;
    SummarizeResult summarize(KnowledgeSource source, const std::string& query,
                              const std::string& document) override;

    const EnvCounters& counters() const override { return counters_; }
    const RetrievalConfig& config() const override { return config_; }

private:
    bool is_ground_truth(std::string_view disease) const;

    std::shared_ptr<const CorpusBundle> bundle_;
    RetrievalConfig config_;
    std::shared_ptr<Summarizer> summarizer_;
    DiseaseMatcher matcher_;
    std::vector<std::string> ground_truth_;
    std::mt19937_64 rng_;
    EnvCounters counters_;
};

// Passive-block payload rendering. Angle brackets in corpus content are
// replaced so injected feedback always parses under the transcript grammar.
std::string render_guide(const std::vector<LookupResult>& results);
std::string render_refer(const std::vector<MatchResult>& results);
std::string render_result(const std::vector<SearchHit>& hits);
std::string sanitize_feedback(std::string_view text);

}  // namespace dxrag
