#pragma once

#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

namespace dxrag {

enum class Rarity { common, rare };
enum class KnowledgeSource { WIKI, PMC, BOOK };

std::string to_string(Rarity r);
std::string to_string(KnowledgeSource s);
std::optional<Rarity> rarity_from_string(std::string_view s);
std::optional<KnowledgeSource> knowledge_source_from_string(std::string_view s);

struct GuidelineEntry {
    std::string disease_name;
    std::optional<std::string> disease_code;  // ICD-10-CM or ORPHA identifier
    Rarity rarity = Rarity::common;
    std::vector<std::string> phenotypes;  // most-frequent first
    std::uint64_t source_count = 0;
};

struct PatientRecord {
    std::string record_id;
    std::vector<std::string> phenotypes;
    std::string diagnosis;
    std::string source_tag;
};

struct KnowledgeChunk {
    std::string chunk_id;
    KnowledgeSource source = KnowledgeSource::WIKI;
    std::optional<std::string> title;
    std::string text;  // at most kMaxChunkChars characters
};

struct DiagnosticCase {
    std::string case_id;
    std::string presentation_text;
    std::vector<std::string> presentation_phenotypes;  // empty when presentation is free text
    std::vector<std::string> ground_truth_diagnoses;
    Rarity rarity = Rarity::common;
    std::string dataset;  // optional grouping label for reports

    // Presentation as shown to the policy: free text, or the joined phenotype list.
    std::string presentation() const;
};

inline constexpr std::size_t kMaxChunkChars = 1000;

struct IngestReport {
    std::size_t accepted = 0;
    std::size_t skipped = 0;
    std::vector<std::string> errors;  // one message per skipped line
};

class GuidelineStore {
public:
    void add(GuidelineEntry entry);  // merges duplicates by normalized name
    const std::vector<GuidelineEntry>& entries() const { return entries_; }
    const GuidelineEntry* find(std::string_view disease_name) const;
    std::size_t size() const { return entries_.size(); }
    bool empty() const { return entries_.empty(); }

private:
    std::vector<GuidelineEntry> entries_;
    std::unordered_map<std::string, std::size_t> by_norm_name_;
};

class PatientStore {
public:
    void add(PatientRecord record);  // throws on duplicate record_id
    bool contains(std::string_view record_id) const;
    const std::vector<PatientRecord>& records() const { return records_; }
    std::size_t size() const { return records_.size(); }
    bool empty() const { return records_.empty(); }

private:
    std::vector<PatientRecord> records_;
    std::unordered_map<std::string, std::size_t> by_id_;
};

class KnowledgeStore {
public:
    void add(KnowledgeChunk chunk);  // splits overlong bodies, throws on duplicate id
    const std::vector<KnowledgeChunk>& chunks() const { return chunks_; }
    std::vector<const KnowledgeChunk*> by_source(KnowledgeSource source) const;
    std::size_t size() const { return chunks_.size(); }
    bool empty() const { return chunks_.empty(); }

private:
    void add_checked(KnowledgeChunk chunk);

    std::vector<KnowledgeChunk> chunks_;
    std::unordered_map<std::string, std::size_t> by_id_;
};

/// Split `text` into pieces of at most `max_chars` at whitespace boundaries.
/// A single run without whitespace longer than the cap is hard-split.
std::vector<std::string> split_chunk_text(std::string_view text,
                                          std::size_t max_chars = kMaxChunkChars);

struct MalformedLine : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// JSON-lines ingestion. Malformed lines are skipped and counted; in strict
// mode the first malformed line aborts the load.
GuidelineStore ingest_guideline(const std::string& path, IngestReport& report,
                                bool strict = false);
PatientStore ingest_patients(const std::string& path, IngestReport& report,
                             bool strict = false);
KnowledgeStore ingest_knowledge(const std::string& path, IngestReport& report,
                                bool strict = false);
std::vector<DiagnosticCase> ingest_cases(const std::string& path, IngestReport& report,
                                         bool strict = false);

// Canonical JSON-lines serialization (what `ingest --out` writes).
void write_guideline(const GuidelineStore& store, const std::string& path);
void write_patients(const PatientStore& store, const std::string& path);
void write_knowledge(const KnowledgeStore& store, const std::string& path);

// Single-entity JSON codecs, shared by ingestion and the canonical writers.
GuidelineEntry guideline_entry_from_json_line(const std::string& line);
PatientRecord patient_record_from_json_line(const std::string& line);
KnowledgeChunk knowledge_chunk_from_json_line(const std::string& line);
DiagnosticCase diagnostic_case_from_json_line(const std::string& line);

std::string to_json_line(const GuidelineEntry& e);
std::string to_json_line(const PatientRecord& r);
std::string to_json_line(const KnowledgeChunk& c);
std::string to_json_line(const DiagnosticCase& c);

}  // namespace dxrag
