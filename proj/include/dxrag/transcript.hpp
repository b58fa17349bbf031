#pragma once

#include <cstddef>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "dxrag/corpus.hpp"

namespace dxrag {

enum class ActionKind { reason, lookup, guide, match, refer, search, result, diagnose };

std::string to_string(ActionKind kind);
bool is_active(ActionKind kind);   // reason, lookup, match, search, diagnose
bool is_passive(ActionKind kind);  // guide, refer, result

struct Span {
    std::size_t start = 0;
    std::size_t end = 0;
};

/// Raw tag token found while scanning, before pairing.
struct TagEvent {
    std::size_t pos = 0;
    std::size_t len = 0;
    ActionKind kind = ActionKind::reason;
    bool close = false;
    bool think_spelling = false;  // the reason tag also accepts the <think> spelling
};

struct ActionBlock {
    ActionKind kind = ActionKind::reason;
    std::string payload;
    Span span;                // open tag start to close tag end (or text end if truncated)
    std::size_t index = 0;    // position in document order
    bool truncated = false;   // open tag without a close
};

/// Parsed form of a search payload: `|WIKI| query1, query2`.
struct SearchSpec {
    std::string source_token;
    std::optional<KnowledgeSource> source;
    std::vector<std::string> queries;
    bool well_formed = false;
};

struct Transcript {
    std::string raw;
    std::vector<ActionBlock> blocks;
    std::vector<TagEvent> events;

    std::vector<std::string> diagnoses;  // bold-marked diseases from the diagnose block
    std::vector<SearchSpec> search_specs;
    std::vector<std::vector<std::string>> match_specs;
    std::optional<std::vector<std::string>> lookup_spec;
};

/// Best-effort parse; never fails. Validity is validate()'s job.
Transcript parse(std::string_view text);

/// Parse a `|SRC| q1, q2` search payload. well_formed requires a known source
/// and 1..max_queries non-empty queries.
SearchSpec parse_search_spec(std::string_view payload, std::size_t max_queries = 3);

/// `\textbf{...}` contents, in order. Whitespace inside braces is tolerated;
/// an unmatched brace drops that candidate.
std::vector<std::string> extract_bold(std::string_view text);

struct FormatLimits {
    std::size_t max_match = 3;
    std::size_t max_search = 2;
    std::size_t max_lookup = 1;
    std::size_t max_diagnoses = 5;
    std::size_t max_lookup_diseases = 10;
    std::size_t queries_per_search = 3;
};

enum class Rule {
    R1_diagnose_pair,        // exactly one diagnose open/close pair
    R2_diagnose_order,       // diagnose open precedes close
    R3_bold_required,        // diagnose block holds at least one bold disease
    R4_too_many_diagnoses,   // more than max_diagnoses bold diseases
    R5_too_many_match,       // more than max_match match blocks
    R6_unbalanced_tags,      // unclosed, duplicated or inverted tags of any kind
    R7_feedback_pairing,     // match not followed by refer / orphan passive block
    R8_too_many_lookup,      // more than max_lookup lookup blocks
    R9_search_form,          // too many search blocks or malformed |SRC| payload
    R10_text_outside_tags,   // non-whitespace text outside any tag
    R11_content_kind,        // diseases in match payloads / non-diseases in lookup
    R12_missing_reason,      // no reason block between consecutive tool actions
};

std::string to_string(Rule rule);

struct Violation {
    Rule rule;
    std::string message;
    Span span;
};

struct FormatReport {
    int sigma_f = 1;                    // 1 iff violations is empty
    std::vector<Violation> violations;  // gating
    std::vector<Violation> warnings;    // non-gating (R11/R12 by default)
};

struct ValidateOptions {
    bool gate_lookup_cap = false;        // promote R8 to gating
    bool gate_content_rules = false;     // promote R11 to gating
    bool gate_reason_separation = false; // promote R12 to gating
    const GuidelineStore* guideline = nullptr;  // enables R11 when provided
};

FormatReport validate(const Transcript& t, const FormatLimits& limits = {},
                      const ValidateOptions& options = {});

}  // namespace dxrag
