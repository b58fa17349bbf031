#include "dxrag/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <set>
#include <sstream>

#include "dxrag/text.hpp"
#include "json.hpp"

namespace dxrag {

using nlohmann::json;

std::string to_string(Rarity r) {
    return r == Rarity::common ? "common" : "rare";
}

std::string to_string(KnowledgeSource s) {
    switch (s) {
        case KnowledgeSource::WIKI: return "WIKI";
        case KnowledgeSource::PMC: return "PMC";
        case KnowledgeSource::BOOK: return "BOOK";
    }
    return "WIKI";
}

std::optional<Rarity> rarity_from_string(std::string_view s) {
    if (s == "common") return Rarity::common;
    if (s == "rare") return Rarity::rare;
    return std::nullopt;
}

std::optional<KnowledgeSource> knowledge_source_from_string(std::string_view s) {
    if (s == "WIKI") return KnowledgeSource::WIKI;
    if (s == "PMC") return KnowledgeSource::PMC;
    if (s == "BOOK") return KnowledgeSource::BOOK;
    return std::nullopt;
}

std::string DiagnosticCase::presentation() const {
    if (!presentation_text.empty()) return presentation_text;
    std::string joined;
    for (const auto& p : presentation_phenotypes) {
        if (!joined.empty()) joined += ", ";
        joined += p;
    }
    return joined;
}

namespace {

// Dedupe by normalized form, keeping first occurrence order.
std::vector<std::string> dedupe_normalized(const std::vector<std::string>& items) {
    std::vector<std::string> out;
    std::set<std::string> seen;
    for (const auto& item : items) {
        std::string norm = normalize_term(item);
        if (norm.empty()) continue;
        if (seen.insert(norm).second) out.push_back(trim(item));
    }
    return out;
}

}  // namespace

void GuidelineStore::add(GuidelineEntry entry) {
    if (entry.disease_name.empty()) throw MalformedLine("empty disease_name");
    entry.phenotypes = dedupe_normalized(entry.phenotypes);
    if (entry.phenotypes.empty()) throw MalformedLine("empty phenotype list");

    std::string key = normalize_term(entry.disease_name);
    auto it = by_norm_name_.find(key);
    if (it == by_norm_name_.end()) {
        by_norm_name_.emplace(std::move(key), entries_.size());
        entries_.push_back(std::move(entry));
        return;
    }
    // Merge: phenotype union preserving first-seen order, source counts summed.
    GuidelineEntry& existing = entries_[it->second];
    std::set<std::string> seen;
    for (const auto& p : existing.phenotypes) seen.insert(normalize_term(p));
    for (const auto& p : entry.phenotypes) {
        if (seen.insert(normalize_term(p)).second) existing.phenotypes.push_back(p);
    }
    existing.source_count += entry.source_count;
    if (!existing.disease_code && entry.disease_code) existing.disease_code = entry.disease_code;
}

const GuidelineEntry* GuidelineStore::find(std::string_view disease_name) const {
    auto it = by_norm_name_.find(normalize_term(disease_name));
    if (it == by_norm_name_.end()) return nullptr;
    return &entries_[it->second];
}

void PatientStore::add(PatientRecord record) {
    if (record.record_id.empty()) throw MalformedLine("empty record_id");
    if (record.phenotypes.empty()) throw MalformedLine("empty phenotype list");
    if (record.diagnosis.empty()) throw MalformedLine("empty diagnosis");
    if (by_id_.count(record.record_id) != 0) {
        throw MalformedLine("duplicate record_id: " + record.record_id);
    }
    by_id_.emplace(record.record_id, records_.size());
    records_.push_back(std::move(record));
}

bool PatientStore::contains(std::string_view record_id) const {
    return by_id_.count(std::string(record_id)) != 0;
}

std::vector<std::string> split_chunk_text(std::string_view text, std::size_t max_chars) {
    std::vector<std::string> pieces;
    std::size_t pos = 0;
    auto is_ws = [](char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; };
    while (pos < text.size()) {
        std::size_t remaining = text.size() - pos;
        if (remaining <= max_chars) {
            std::string piece = trim(text.substr(pos));
            if (!piece.empty()) pieces.push_back(std::move(piece));
            break;
        }
        std::size_t cut = pos + max_chars;
        // Prefer the last whitespace inside the window so no token is split.
        std::size_t ws = std::string_view::npos;
        for (std::size_t i = cut; i > pos; --i) {
            if (is_ws(text[i - 1])) {
                ws = i - 1;
                break;
            }
        }
        std::size_t piece_end = (ws == std::string_view::npos) ? cut : ws;
        if (piece_end == pos) piece_end = cut;  // leading whitespace run; hard cut
        std::string piece = trim(text.substr(pos, piece_end - pos));
        if (!piece.empty()) pieces.push_back(std::move(piece));
        pos = piece_end;
        while (pos < text.size() && is_ws(text[pos])) ++pos;
    }
    return pieces;
}

void KnowledgeStore::add(KnowledgeChunk chunk) {
    if (chunk.chunk_id.empty()) throw MalformedLine("empty chunk_id");
    if (chunk.text.size() <= kMaxChunkChars) {
        add_checked(std::move(chunk));
        return;
    }
    auto pieces = split_chunk_text(chunk.text);
    for (std::size_t i = 0; i < pieces.size(); ++i) {
        KnowledgeChunk part;
        part.chunk_id = chunk.chunk_id + "#" + std::to_string(i + 1);
        part.source = chunk.source;
        part.title = chunk.title;
        part.text = std::move(pieces[i]);
        add_checked(std::move(part));
    }
}

void KnowledgeStore::add_checked(KnowledgeChunk chunk) {
    if (chunk.text.empty()) throw MalformedLine("empty chunk text");
    if (chunk.text.size() > kMaxChunkChars) throw MalformedLine("chunk text over cap");
    if (by_id_.count(chunk.chunk_id) != 0) {
        throw MalformedLine("duplicate chunk_id: " + chunk.chunk_id);
    }
    by_id_.emplace(chunk.chunk_id, chunks_.size());
    chunks_.push_back(std::move(chunk));
}

std::vector<const KnowledgeChunk*> KnowledgeStore::by_source(KnowledgeSource source) const {
    std::vector<const KnowledgeChunk*> out;
    for (const auto& c : chunks_) {
        if (c.source == source) out.push_back(&c);
    }
    return out;
}

namespace {

json parse_line(const std::string& line) {
    json j = json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.is_object()) throw MalformedLine("invalid JSON object");
    return j;
}

std::string require_string(const json& j, const char* field) {
    if (!j.contains(field) || !j[field].is_string()) {
        throw MalformedLine(std::string("missing or non-string field: ") + field);
    }
    return j[field].get<std::string>();
}

std::vector<std::string> require_string_array(const json& j, const char* field) {
    if (!j.contains(field) || !j[field].is_array()) {
        throw MalformedLine(std::string("missing or non-array field: ") + field);
    }
    std::vector<std::string> out;
    for (const auto& item : j[field]) {
        if (!item.is_string()) throw MalformedLine(std::string("non-string item in: ") + field);
        out.push_back(item.get<std::string>());
    }
    return out;
}

template <typename Entity, typename Parser, typename Sink>
void ingest_lines(const std::string& path, IngestReport& report, bool strict,
                  Parser parse_one, Sink sink) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open file: " + path);
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        try {
            Entity e = parse_one(line);
            sink(std::move(e));
            ++report.accepted;
        } catch (const MalformedLine& err) {
            if (strict) {
                throw std::runtime_error(path + ":" + std::to_string(line_no) + ": " +
                                         err.what());
            }
            ++report.skipped;
            report.errors.push_back(path + ":" + std::to_string(line_no) + ": " + err.what());
        }
    }
}

}  // namespace

GuidelineEntry guideline_entry_from_json_line(const std::string& line) {
    json j = parse_line(line);
    GuidelineEntry e;
    e.disease_name = require_string(j, "disease_name");
    if (e.disease_name.empty()) throw MalformedLine("empty disease_name");
    if (j.contains("disease_code") && !j["disease_code"].is_null()) {
        if (!j["disease_code"].is_string()) throw MalformedLine("non-string disease_code");
        e.disease_code = j["disease_code"].get<std::string>();
    }
    auto rarity = rarity_from_string(require_string(j, "rarity"));
    if (!rarity) throw MalformedLine("rarity must be 'common' or 'rare'");
    e.rarity = *rarity;
    e.phenotypes = require_string_array(j, "phenotypes");
    if (e.phenotypes.empty()) throw MalformedLine("empty phenotype list");
    if (j.contains("source_count")) {
        if (!j["source_count"].is_number_unsigned()) {
            throw MalformedLine("source_count must be a non-negative integer");
        }
        e.source_count = j["source_count"].get<std::uint64_t>();
    }
    return e;
}

PatientRecord patient_record_from_json_line(const std::string& line) {
    json j = parse_line(line);
    PatientRecord r;
    r.record_id = require_string(j, "record_id");
    r.phenotypes = require_string_array(j, "phenotypes");
    r.diagnosis = require_string(j, "diagnosis");
    r.source_tag = j.contains("source_tag") ? require_string(j, "source_tag") : "";
    if (r.record_id.empty()) throw MalformedLine("empty record_id");
    if (r.phenotypes.empty()) throw MalformedLine("empty phenotype list");
    if (r.diagnosis.empty()) throw MalformedLine("empty diagnosis");
    return r;
}

KnowledgeChunk knowledge_chunk_from_json_line(const std::string& line) {
    json j = parse_line(line);
    KnowledgeChunk c;
    c.chunk_id = require_string(j, "chunk_id");
    auto source = knowledge_source_from_string(require_string(j, "source"));
    if (!source) throw MalformedLine("source must be WIKI, PMC or BOOK");
    c.source = *source;
    if (j.contains("title") && !j["title"].is_null()) {
        if (!j["title"].is_string()) throw MalformedLine("non-string title");
        c.title = j["title"].get<std::string>();
    }
    c.text = require_string(j, "text");
    if (c.chunk_id.empty()) throw MalformedLine("empty chunk_id");
    if (trim(c.text).empty()) throw MalformedLine("empty chunk text");
    return c;
}

DiagnosticCase diagnostic_case_from_json_line(const std::string& line) {
    json j = parse_line(line);
    DiagnosticCase c;
    c.case_id = require_string(j, "case_id");
    if (!j.contains("presentation")) throw MalformedLine("missing presentation");
    if (j["presentation"].is_string()) {
        c.presentation_text = j["presentation"].get<std::string>();
    } else if (j["presentation"].is_array()) {
        for (const auto& item : j["presentation"]) {
            if (!item.is_string()) throw MalformedLine("non-string presentation item");
            c.presentation_phenotypes.push_back(item.get<std::string>());
        }
    } else {
        throw MalformedLine("presentation must be text or a phenotype list");
    }
    c.ground_truth_diagnoses = require_string_array(j, "ground_truth_diagnoses");
    if (c.ground_truth_diagnoses.empty()) throw MalformedLine("empty ground_truth_diagnoses");
    auto rarity = rarity_from_string(require_string(j, "rarity"));
    if (!rarity) throw MalformedLine("rarity must be 'common' or 'rare'");
    c.rarity = *rarity;
    if (j.contains("dataset")) c.dataset = require_string(j, "dataset");
    return c;
}

GuidelineStore ingest_guideline(const std::string& path, IngestReport& report, bool strict) {
    GuidelineStore store;
    ingest_lines<GuidelineEntry>(path, report, strict, guideline_entry_from_json_line,
                                 [&](GuidelineEntry e) { store.add(std::move(e)); });
    return store;
}

PatientStore ingest_patients(const std::string& path, IngestReport& report, bool strict) {
    PatientStore store;
    ingest_lines<PatientRecord>(path, report, strict, patient_record_from_json_line,
                                [&](PatientRecord r) { store.add(std::move(r)); });
    return store;
}

KnowledgeStore ingest_knowledge(const std::string& path, IngestReport& report, bool strict) {
    KnowledgeStore store;
    ingest_lines<KnowledgeChunk>(path, report, strict, knowledge_chunk_from_json_line,
                                 [&](KnowledgeChunk c) { store.add(std::move(c)); });
    return store;
}

std::vector<DiagnosticCase> ingest_cases(const std::string& path, IngestReport& report,
                                         bool strict) {
    std::vector<DiagnosticCase> cases;
    ingest_lines<DiagnosticCase>(path, report, strict, diagnostic_case_from_json_line,
                                 [&](DiagnosticCase c) { cases.push_back(std::move(c)); });
    return cases;
}

std::string to_json_line(const GuidelineEntry& e) {
    json j;
    j["disease_name"] = e.disease_name;
    if (e.disease_code) j["disease_code"] = *e.disease_code;
    j["rarity"] = to_string(e.rarity);
    j["phenotypes"] = e.phenotypes;
    j["source_count"] = e.source_count;
    return j.dump();
}

std::string to_json_line(const PatientRecord& r) {
    json j;
    j["record_id"] = r.record_id;
    j["phenotypes"] = r.phenotypes;
    j["diagnosis"] = r.diagnosis;
    j["source_tag"] = r.source_tag;
    return j.dump();
}

std::string to_json_line(const KnowledgeChunk& c) {
    json j;
    j["chunk_id"] = c.chunk_id;
    j["source"] = to_string(c.source);
    if (c.title) j["title"] = *c.title;
    j["text"] = c.text;
    return j.dump();
}

std::string to_json_line(const DiagnosticCase& c) {
    json j;
    j["case_id"] = c.case_id;
    if (!c.presentation_phenotypes.empty()) {
        j["presentation"] = c.presentation_phenotypes;
    } else {
        j["presentation"] = c.presentation_text;
    }
    j["ground_truth_diagnoses"] = c.ground_truth_diagnoses;
    j["rarity"] = to_string(c.rarity);
    if (!c.dataset.empty()) j["dataset"] = c.dataset;
    return j.dump();
}

namespace {

template <typename Range, typename ToLine>
void write_jsonl(const Range& range, const std::string& path, ToLine to_line) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write file: " + path);
    for (const auto& item : range) out << to_line(item) << "\n";
}

}  // namespace

void write_guideline(const GuidelineStore& store, const std::string& path) {
    write_jsonl(store.entries(), path,
                [](const GuidelineEntry& e) { return to_json_line(e); });
}

void write_patients(const PatientStore& store, const std::string& path) {
    write_jsonl(store.records(), path,
                [](const PatientRecord& r) { return to_json_line(r); });
}

void write_knowledge(const KnowledgeStore& store, const std::string& path) {
    write_jsonl(store.chunks(), path,
                [](const KnowledgeChunk& c) { return to_json_line(c); });
}

}  // namespace dxrag
