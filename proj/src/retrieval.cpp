#include "dxrag/retrieval.hpp"

#include <algorithm>
#include <cmath>

#include "dxrag/text.hpp"
#include "json.hpp"

namespace dxrag {

using nlohmann::json;

// ---------------------------------------------------------------------------
// GuidelineLookup
// ---------------------------------------------------------------------------

GuidelineLookup::GuidelineLookup(const GuidelineStore& store, const RetrievalConfig& config)
    : store_(&store), config_(config), index_(config.bm25) {
    for (const auto& entry : store.entries()) {
        index_.add_document(entry.disease_name);
    }
}

std::vector<LookupResult> GuidelineLookup::lookup(
    const std::vector<std::string>& diseases) const {
    if (diseases.empty()) throw std::invalid_argument("lookup: empty disease list");
    if (diseases.size() > config_.max_lookup_diseases) {
        throw std::invalid_argument("lookup: more than " +
                                    std::to_string(config_.max_lookup_diseases) + " diseases");
    }
    std::vector<LookupResult> results;
    results.reserve(diseases.size());
    for (const auto& query : diseases) {
        LookupResult r;
        r.query_disease = query;
        if (!trim(query).empty() && !store_->empty()) {
            auto hits = index_.search(query);
            if (!hits.empty() && hits.front().score >= config_.tau) {
                // Equal-score ties resolve to the lexicographically smallest name.
                std::size_t best = hits.front().doc_id;
                double best_score = hits.front().score;
                for (const auto& h : hits) {
                    if (h.score != best_score) break;
                    const auto& name = store_->entries()[h.doc_id].disease_name;
                    if (name < store_->entries()[best].disease_name) best = h.doc_id;
                }
                const auto& entry = store_->entries()[best];
                r.matched_disease = entry.disease_name;
                std::size_t n = std::min(config_.k_pheno, entry.phenotypes.size());
                r.phenotypes.assign(entry.phenotypes.begin(), entry.phenotypes.begin() + n);
            }
        }
        results.push_back(std::move(r));
    }
    return results;
}

// ---------------------------------------------------------------------------
// PatientMatcher
// ---------------------------------------------------------------------------

PatientMatcher::PatientMatcher(const PatientStore& store,
                               std::shared_ptr<const EmbeddingProvider> provider)
    : store_(&store), provider_(std::move(provider)) {
    record_vecs_.reserve(store.size());
    for (const auto& record : store.records()) {
        record_vecs_.push_back(provider_->embed(record.phenotypes));
    }
}

double PatientMatcher::similarity(const std::vector<std::vector<double>>& query_vecs,
                                  std::size_t record_index) const {
    const auto& rec = record_vecs_[record_index];
    if (query_vecs.empty() || rec.empty()) return 0.0;
    double total = 0.0;
    for (const auto& qv : query_vecs) {
        double best = -1.0;
        for (const auto& rv : rec) {
            best = std::max(best, cosine(qv, rv));
        }
        total += best;
    }
    return total / static_cast<double>(query_vecs.size());
}

std::vector<MatchResult> PatientMatcher::match(
    const std::vector<std::string>& query_phenotypes, std::size_t top_n) const {
    if (query_phenotypes.empty()) throw std::invalid_argument("match: empty phenotype list");
    if (top_n == 0) throw std::invalid_argument("match: top_n must be >= 1");
    if (store_->empty()) return {};

    auto query_vecs = provider_->embed(query_phenotypes);
    std::vector<MatchResult> scored;
    scored.reserve(store_->size());
    for (std::size_t i = 0; i < store_->size(); ++i) {
        const auto& record = store_->records()[i];
        MatchResult m;
        m.record_id = record.record_id;
        m.diagnosis = record.diagnosis;
        m.phenotypes = record.phenotypes;
        m.score = similarity(query_vecs, i);
        scored.push_back(std::move(m));
    }
    std::sort(scored.begin(), scored.end(), [](const MatchResult& a, const MatchResult& b) {
        if (a.score != b.score) return a.score > b.score;
        return a.record_id < b.record_id;
    });
    if (scored.size() > top_n) scored.resize(top_n);
    return scored;
}

// ---------------------------------------------------------------------------
// KnowledgeIndex
// ---------------------------------------------------------------------------

namespace {

std::size_t source_slot(KnowledgeSource source) {
    return static_cast<std::size_t>(source);
}

}  // namespace

KnowledgeIndex::KnowledgeIndex(const KnowledgeStore& store, const RetrievalConfig& config)
    : config_(config) {
    for (std::size_t s = 0; s < 3; ++s) sources_[s].index = Bm25Index(config.bm25);
    for (const auto& chunk : store.chunks()) {
        auto& slot = sources_[source_slot(chunk.source)];
        slot.index.add_document(chunk.text);
        slot.chunks.push_back(&chunk);
    }
}

const KnowledgeIndex::SourceIndex& KnowledgeIndex::routed(KnowledgeSource source) const {
    return sources_[source_slot(source)];
}

std::size_t KnowledgeIndex::chunk_count(KnowledgeSource source) const {
    return routed(source).chunks.size();
}

std::vector<SearchHit> KnowledgeIndex::search_one(KnowledgeSource source,
                                                  const std::string& query,
                                                  std::size_t top_k) const {
    const auto& slot = routed(source);
    std::vector<SearchHit> hits;
    for (const auto& h : slot.index.search(query, top_k)) {
        const KnowledgeChunk* chunk = slot.chunks[h.doc_id];
        hits.push_back({chunk->chunk_id, h.score, chunk->text});
    }
    return hits;
}

std::vector<SearchHit> KnowledgeIndex::search(KnowledgeSource source,
                                              const std::vector<std::string>& queries,
                                              std::size_t top_k) const {
    if (queries.empty() || queries.size() > config_.max_search_queries) {
        throw std::invalid_argument("search: expected 1.." +
                                    std::to_string(config_.max_search_queries) + " queries");
    }
    std::vector<SearchHit> merged;
    std::unordered_map<std::string, std::size_t> position;
    for (const auto& query : queries) {
        for (auto& hit : search_one(source, query, top_k)) {
            auto it = position.find(hit.chunk_id);
            if (it == position.end()) {
                position.emplace(hit.chunk_id, merged.size());
                merged.push_back(std::move(hit));
            } else if (hit.score > merged[it->second].score) {
                merged[it->second].score = hit.score;
            }
        }
    }
    return merged;
}

// ---------------------------------------------------------------------------
// Summarization
// ---------------------------------------------------------------------------

std::string TruncationSummarizer::complete(KnowledgeSource, const std::string&,
                                           const std::string& document) {
    json j;
    j["answer"] = document.substr(0, budget_);
    return j.dump();
}

namespace {

std::optional<std::string> extract_answer(const std::string& raw) {
    auto try_parse = [](const std::string& s) -> std::optional<std::string> {
        json j = json::parse(s, nullptr, false);
        if (!j.is_discarded() && j.is_object() && j.contains("answer") &&
            j["answer"].is_string()) {
            return j["answer"].get<std::string>();
        }
        return std::nullopt;
    };
    if (auto a = try_parse(raw)) return a;
    std::size_t open = raw.find('{');
    std::size_t close = raw.rfind('}');
    if (open != std::string::npos && close != std::string::npos && close > open) {
        if (auto a = try_parse(raw.substr(open, close - open + 1))) return a;
    }
    return std::nullopt;
}

}  // namespace

SummarizeResult summarize_document(KnowledgeSource source, const std::string& query,
                                   const std::string& document, Summarizer* summarizer,
                                   std::size_t budget) {
    if (document.empty()) throw std::invalid_argument("summarize: empty document");
    SummarizeResult result;
    if (document.size() <= budget) {
        result.answer = document;
        return result;
    }
    std::string raw;
    if (summarizer != nullptr) {
        try {
            raw = summarizer->complete(source, query, document);
        } catch (const std::exception&) {
            result.answer = document.substr(0, budget);
            result.used_fallback = true;
            return result;
        }
    }
    auto answer = extract_answer(raw);
    if (!answer) {
        result.answer = kNoReference;
        result.parse_failed = true;
        return result;
    }
    result.answer = trim(*answer).empty() ? kNoReference : *answer;
    return result;
}

// ---------------------------------------------------------------------------
// CorpusEnvironment
// ---------------------------------------------------------------------------

CorpusEnvironment::CorpusEnvironment(std::shared_ptr<const CorpusBundle> bundle,
                                     RetrievalConfig config,
                                     std::shared_ptr<Summarizer> summarizer,
                                     std::shared_ptr<const EmbeddingProvider> provider)
    : bundle_(std::move(bundle)),
      config_(config),
      summarizer_(std::move(summarizer)),
      provider_(provider ? std::move(provider)
                         : std::make_shared<HashEmbeddingProvider>(config.embed_dim)),
      lookup_tool_(bundle_->guideline, config_),
      match_tool_(bundle_->patients, provider_),
      search_tool_(bundle_->knowledge, config_) {}

std::vector<LookupResult> CorpusEnvironment::lookup(const std::vector<std::string>& diseases) {
    counters_.lookup_calls += 1;
    return lookup_tool_.lookup(diseases);
}

std::vector<MatchResult> CorpusEnvironment::match(const std::vector<std::string>& phenotypes,
                                                  std::size_t top_n) {
    counters_.match_calls += 1;
    return match_tool_.match(phenotypes, top_n);
}

std::vector<SearchHit> CorpusEnvironment::search(KnowledgeSource source,
                                                 const std::vector<std::string>& queries,
                                                 std::size_t top_k) {
    counters_.search_calls += 1;
    return search_tool_.search(source, queries, top_k);
}

SummarizeResult CorpusEnvironment::summarize(KnowledgeSource source, const std::string& query,
                                             const std::string& document) {
    counters_.summarize_calls += 1;
    return summarize_document(source, query, document, summarizer_.get(),
                              config_.summarize_budget);
}

// ---------------------------------------------------------------------------
// AdversarialEnvironment
// ---------------------------------------------------------------------------

AdversarialEnvironment::AdversarialEnvironment(std::shared_ptr<const CorpusBundle> bundle,
                                               RetrievalConfig config,
                                               std::shared_ptr<Summarizer> summarizer,
                                               std::uint64_t seed, DiseaseMatcher matcher)
    : bundle_(std::move(bundle)),
      config_(config),
      summarizer_(std::move(summarizer)),
      matcher_(matcher),
      rng_(seed) {}

void AdversarialEnvironment::begin_episode(const std::vector<std::string>& ground_truth,
                                           std::uint64_t seed) {
    ground_truth_ = ground_truth;
    rng_.seed(seed);
}

bool AdversarialEnvironment::is_ground_truth(std::string_view disease) const {
    return matcher_.matches_any(disease, ground_truth_);
}

std::vector<LookupResult> AdversarialEnvironment::lookup(
    const std::vector<std::string>& diseases) {
    counters_.lookup_calls += 1;
    if (diseases.empty() || diseases.size() > config_.max_lookup_diseases) {
        throw std::invalid_argument("lookup: bad disease list size");
    }
    std::vector<std::size_t> decoys;
    for (std::size_t i = 0; i < bundle_->guideline.size(); ++i) {
        if (!is_ground_truth(bundle_->guideline.entries()[i].disease_name)) decoys.push_back(i);
    }
    std::vector<LookupResult> results;
    for (const auto& query : diseases) {
        LookupResult r;
        r.query_disease = query;
        if (!decoys.empty()) {
            std::size_t pick = decoys[rng_() % decoys.size()];
            const auto& entry = bundle_->guideline.entries()[pick];
            r.matched_disease = entry.disease_name;
            std::size_t n = std::min(config_.k_pheno, entry.phenotypes.size());
            r.phenotypes.assign(entry.phenotypes.begin(), entry.phenotypes.begin() + n);
        }
        results.push_back(std::move(r));
    }
    return results;
}

std::vector<MatchResult> AdversarialEnvironment::match(const std::vector<std::string>&,
                                                       std::size_t top_n) {
    counters_.match_calls += 1;
    std::vector<std::size_t> decoys;
    for (std::size_t i = 0; i < bundle_->patients.size(); ++i) {
        if (!is_ground_truth(bundle_->patients.records()[i].diagnosis)) decoys.push_back(i);
    }
    std::shuffle(decoys.begin(), decoys.end(), rng_);
    if (decoys.size() > top_n) decoys.resize(top_n);
    std::vector<MatchResult> results;
    for (std::size_t i = 0; i < decoys.size(); ++i) {
        const auto& record = bundle_->patients.records()[decoys[i]];
        MatchResult m;
        m.record_id = record.record_id;
        m.diagnosis = record.diagnosis;
        m.phenotypes = record.phenotypes;
        m.score = 1.0 / static_cast<double>(i + 1);
        results.push_back(std::move(m));
    }
    return results;
}

std::vector<SearchHit> AdversarialEnvironment::search(KnowledgeSource source,
                                                      const std::vector<std::string>& queries,
                                                      std::size_t top_k) {
    counters_.search_calls += 1;
    if (queries.empty() || queries.size() > config_.max_search_queries) {
        throw std::invalid_argument("search: bad query count");
    }
    std::vector<const KnowledgeChunk*> decoys;
    for (const auto* chunk : bundle_->knowledge.by_source(source)) {
        bool mentions_gt = false;
        for (const auto& gt : ground_truth_) {
            if (contains_normalized(chunk->text, gt) ||
                (chunk->title && contains_normalized(*chunk->title, gt))) {
                mentions_gt = true;
                break;
            }
        }
        if (!mentions_gt) decoys.push_back(chunk);
    }
    std::shuffle(decoys.begin(), decoys.end(), rng_);
    if (decoys.size() > top_k) decoys.resize(top_k);
    std::vector<SearchHit> hits;
    for (std::size_t i = 0; i < decoys.size(); ++i) {
        hits.push_back({decoys[i]->chunk_id, 1.0 / static_cast<double>(i + 1),
                        decoys[i]->text});
    }
    return hits;
}

SummarizeResult AdversarialEnvironment::summarize(KnowledgeSource source,
                                                  const std::string& query,
                                                  const std::string& document) {
    counters_.summarize_calls += 1;
    return summarize_document(source, query, document, summarizer_.get(),
                              config_.summarize_budget);
}

// ---------------------------------------------------------------------------
// Feedback rendering
// ---------------------------------------------------------------------------

std::string sanitize_feedback(std::string_view text) {
    std::string out;
    out.reserve(text.size());
    for (char c : text) {
        if (c == '<') {
            out.push_back('(');
        } else if (c == '>') {
            out.push_back(')');
        } else {
            out.push_back(c);
        }
    }
    return out;
}

std::string render_guide(const std::vector<LookupResult>& results) {
    std::string out;
    for (const auto& r : results) {
        if (!out.empty()) out += "\n";
        if (r.matched_disease) {
            out += *r.matched_disease + ": ";
            for (std::size_t i = 0; i < r.phenotypes.size(); ++i) {
                if (i != 0) out += ", ";
                out += r.phenotypes[i];
            }
        } else {
            out += r.query_disease + ": ";
            out += kNoReference;
        }
    }
    if (out.empty()) out = kNoReference;
    return sanitize_feedback(out);
}

std::string render_refer(const std::vector<MatchResult>& results) {
    std::string out;
    for (const auto& r : results) {
        if (!out.empty()) out += "; ";
        out += r.diagnosis + " (phenotypes: ";
        for (std::size_t i = 0; i < r.phenotypes.size(); ++i) {
            if (i != 0) out += ", ";
            out += r.phenotypes[i];
        }
        out += ")";
    }
    if (out.empty()) out = kNoReference;
    return sanitize_feedback(out);
}

std::string render_result(const std::vector<SearchHit>& hits) {
    std::string out;
    for (const auto& h : hits) {
        if (!out.empty()) out += "\n";
        out += "- " + h.text;
    }
    if (out.empty()) out = kNoReference;
    return sanitize_feedback(out);
}

}  // namespace dxrag
