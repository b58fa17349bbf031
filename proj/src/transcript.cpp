#include "dxrag/transcript.hpp"

#include <algorithm>
#include <array>
#include <cctype>

#include "dxrag/text.hpp"

namespace dxrag {

std::string to_string(ActionKind kind) {
    switch (kind) {
        case ActionKind::reason: return "reason";
        case ActionKind::lookup: return "lookup";
        case ActionKind::guide: return "guide";
        case ActionKind::match: return "match";
        case ActionKind::refer: return "refer";
        case ActionKind::search: return "search";
        case ActionKind::result: return "result";
        case ActionKind::diagnose: return "diagnose";
    }
    return "reason";
}

bool is_active(ActionKind kind) {
    switch (kind) {
        case ActionKind::reason:
        case ActionKind::lookup:
        case ActionKind::match:
        case ActionKind::search:
        case ActionKind::diagnose:
            return true;
        default:
            return false;
    }
}

bool is_passive(ActionKind kind) {
    return !is_active(kind);
}

std::string to_string(Rule rule) {
    switch (rule) {
        case Rule::R1_diagnose_pair: return "R1";
        case Rule::R2_diagnose_order: return "R2";
        case Rule::R3_bold_required: return "R3";
        case Rule::R4_too_many_diagnoses: return "R4";
        case Rule::R5_too_many_match: return "R5";
        case Rule::R6_unbalanced_tags: return "R6";
        case Rule::R7_feedback_pairing: return "R7";
        case Rule::R8_too_many_lookup: return "R8";
        case Rule::R9_search_form: return "R9";
        case Rule::R10_text_outside_tags: return "R10";
        case Rule::R11_content_kind: return "R11";
        case Rule::R12_missing_reason: return "R12";
    }
    return "R?";
}

namespace {

struct TagName {
    const char* text;
    ActionKind kind;
    bool think_spelling;
};

// <think> is an accepted spelling of <reason>; both normalize to reason.
constexpr std::array<TagName, 9> kTagNames = {{
    {"reason", ActionKind::reason, false},
    {"think", ActionKind::reason, true},
    {"lookup", ActionKind::lookup, false},
    {"guide", ActionKind::guide, false},
    {"match", ActionKind::match, false},
    {"refer", ActionKind::refer, false},
    {"search", ActionKind::search, false},
    {"result", ActionKind::result, false},
    {"diagnose", ActionKind::diagnose, false},
}};

std::vector<TagEvent> scan_events(std::string_view text) {
    std::vector<TagEvent> events;
    for (std::size_t i = 0; i < text.size(); ++i) {
        if (text[i] != '<') continue;
        std::size_t name_start = i + 1;
        bool close = name_start < text.size() && text[name_start] == '/';
        if (close) ++name_start;
        for (const auto& tag : kTagNames) {
            std::string_view name(tag.text);
            if (text.substr(name_start, name.size()) != name) continue;
            std::size_t after = name_start + name.size();
            if (after >= text.size() || text[after] != '>') continue;
            TagEvent e;
            e.pos = i;
            e.len = after + 1 - i;
            e.kind = tag.kind;
            e.close = close;
            e.think_spelling = tag.think_spelling;
            events.push_back(e);
            i = after;  // resume after '>'
            break;
        }
    }
    return events;
}

}  // namespace

SearchSpec parse_search_spec(std::string_view payload, std::size_t max_queries) {
    SearchSpec spec;
    std::string body = trim(payload);
    if (body.size() < 2 || body.front() != '|') return spec;
    std::size_t close = body.find('|', 1);
    if (close == std::string::npos) return spec;
    spec.source_token = body.substr(1, close - 1);
    spec.source = knowledge_source_from_string(spec.source_token);
    spec.queries = split_list(body.substr(close + 1));
    spec.well_formed = spec.source.has_value() && !spec.queries.empty() &&
                       spec.queries.size() <= max_queries;
    return spec;
}

std::vector<std::string> extract_bold(std::string_view text) {
    static constexpr std::string_view kMarker = "\\textbf{";
    std::vector<std::string> out;
    std::size_t pos = 0;
    while ((pos = text.find(kMarker, pos)) != std::string_view::npos) {
        std::size_t body = pos + kMarker.size();
        int depth = 1;
        std::size_t i = body;
        for (; i < text.size(); ++i) {
            if (text[i] == '{') ++depth;
            else if (text[i] == '}' && --depth == 0) break;
        }
        if (i >= text.size()) break;  // unmatched brace: drop candidate
        std::string content = trim(text.substr(body, i - body));
        if (!content.empty()) out.push_back(std::move(content));
        pos = i + 1;
    }
    return out;
}

Transcript parse(std::string_view text) {
    Transcript t;
    t.raw = std::string(text);
    t.events = scan_events(text);

    // Per-kind alternation pairing: an open tag pairs with the next close of
    // the same kind; a second open before that close leaves the first one
    // truncated; a close with no pending open stays a stray event.
    struct Pending {
        bool active = false;
        TagEvent open;
    };
    std::array<Pending, 8> pending{};
    auto slot = [](ActionKind k) { return static_cast<std::size_t>(k); };

    auto emit_truncated = [&](const TagEvent& open) {
        ActionBlock b;
        b.kind = open.kind;
        b.span = {open.pos, t.raw.size()};
        b.payload = trim(t.raw.substr(open.pos + open.len));
        b.truncated = true;
        t.blocks.push_back(std::move(b));
    };

    for (const auto& e : t.events) {
        Pending& p = pending[slot(e.kind)];
        if (!e.close) {
            if (p.active) emit_truncated(p.open);
            p.active = true;
            p.open = e;
        } else if (p.active) {
            ActionBlock b;
            b.kind = e.kind;
            b.span = {p.open.pos, e.pos + e.len};
            std::size_t body_start = p.open.pos + p.open.len;
            b.payload = trim(t.raw.substr(body_start, e.pos - body_start));
            t.blocks.push_back(std::move(b));
            p.active = false;
        }
        // stray close: event kept, no block
    }
    for (auto& p : pending) {
        if (p.active) emit_truncated(p.open);
    }

    std::sort(t.blocks.begin(), t.blocks.end(),
              [](const ActionBlock& a, const ActionBlock& b) {
                  return a.span.start < b.span.start;
              });
    for (std::size_t i = 0; i < t.blocks.size(); ++i) t.blocks[i].index = i;

    FormatLimits defaults;
    for (const auto& b : t.blocks) {
        if (b.truncated) continue;
        switch (b.kind) {
            case ActionKind::diagnose:
                if (t.diagnoses.empty()) t.diagnoses = extract_bold(b.payload);
                break;
            case ActionKind::search:
                t.search_specs.push_back(
                    parse_search_spec(b.payload, defaults.queries_per_search));
                break;
            case ActionKind::match:
                t.match_specs.push_back(split_list(b.payload));
                break;
            case ActionKind::lookup:
                if (!t.lookup_spec) t.lookup_spec = split_list(b.payload);
                break;
            default:
                break;
        }
    }
    return t;
}

namespace {

std::size_t count_opens(const Transcript& t, ActionKind kind) {
    std::size_t n = 0;
    for (const auto& e : t.events) {
        if (e.kind == kind && !e.close) ++n;
    }
    return n;
}

std::size_t count_closes(const Transcript& t, ActionKind kind) {
    std::size_t n = 0;
    for (const auto& e : t.events) {
        if (e.kind == kind && e.close) ++n;
    }
    return n;
}

ActionKind active_counterpart(ActionKind passive) {
    switch (passive) {
        case ActionKind::guide: return ActionKind::lookup;
        case ActionKind::refer: return ActionKind::match;
        case ActionKind::result: return ActionKind::search;
        default: return passive;
    }
}

}  // namespace

FormatReport validate(const Transcript& t, const FormatLimits& limits,
                      const ValidateOptions& options) {
    FormatReport report;
    auto add = [&](std::vector<Violation>& sink, Rule rule, std::string message, Span span) {
        sink.push_back({rule, std::move(message), span});
    };
    auto violation = [&](Rule rule, std::string message, Span span = {}) {
        add(report.violations, rule, std::move(message), span);
    };

    // R1 / R2: exactly one diagnose pair, open before close.
    std::size_t diag_opens = count_opens(t, ActionKind::diagnose);
    std::size_t diag_closes = count_closes(t, ActionKind::diagnose);
    if (diag_opens != 1 || diag_closes != 1) {
        violation(Rule::R1_diagnose_pair,
                  "expected exactly one diagnose open/close pair, found " +
                      std::to_string(diag_opens) + "/" + std::to_string(diag_closes));
    }
    {
        const TagEvent* first_open = nullptr;
        const TagEvent* first_close = nullptr;
        for (const auto& e : t.events) {
            if (e.kind != ActionKind::diagnose) continue;
            if (!e.close && first_open == nullptr) first_open = &e;
            if (e.close && first_close == nullptr) first_close = &e;
        }
        if (first_open != nullptr && first_close != nullptr &&
            first_close->pos < first_open->pos) {
            violation(Rule::R2_diagnose_order, "diagnose close precedes open",
                      {first_close->pos, first_close->pos + first_close->len});
        }
    }

    // R3 / R4: bold diseases inside the diagnose block.
    {
        bool any_bold = false;
        for (const auto& b : t.blocks) {
            if (b.kind != ActionKind::diagnose || b.truncated) continue;
            auto bolds = extract_bold(b.payload);
            if (!bolds.empty()) any_bold = true;
            if (bolds.size() > limits.max_diagnoses) {
                violation(Rule::R4_too_many_diagnoses,
                          "diagnose block holds " + std::to_string(bolds.size()) +
                              " bold diseases (max " + std::to_string(limits.max_diagnoses) +
                              ")",
                          b.span);
            }
        }
        if (!any_bold) {
            violation(Rule::R3_bold_required, "no bold disease inside a diagnose block");
        }
    }

    // R5 / R8 / R9 counters.
    std::size_t match_opens = count_opens(t, ActionKind::match);
    if (match_opens > limits.max_match) {
        violation(Rule::R5_too_many_match, std::to_string(match_opens) +
                                               " match blocks (max " +
                                               std::to_string(limits.max_match) + ")");
    }
    // The lookup cap warns rather than gates unless strict mode asks for it:
    // exceeding it is not part of the gating violation set.
    std::size_t lookup_opens = count_opens(t, ActionKind::lookup);
    if (lookup_opens > limits.max_lookup) {
        auto& sink = options.gate_lookup_cap ? report.violations : report.warnings;
        add(sink, Rule::R8_too_many_lookup,
            std::to_string(lookup_opens) + " lookup blocks (max " +
                std::to_string(limits.max_lookup) + ")",
            {});
    }
    std::size_t search_opens = count_opens(t, ActionKind::search);
    if (search_opens > limits.max_search) {
        violation(Rule::R9_search_form, std::to_string(search_opens) +
                                            " search blocks (max " +
                                            std::to_string(limits.max_search) + ")");
    }
    {
        std::size_t spec_index = 0;
        for (const auto& b : t.blocks) {
            if (b.kind != ActionKind::search || b.truncated) continue;
            if (spec_index < t.search_specs.size() &&
                !t.search_specs[spec_index].well_formed) {
                violation(Rule::R9_search_form,
                          "search payload must be |WIKI|/|PMC|/|BOOK| with 1.." +
                              std::to_string(limits.queries_per_search) + " queries",
                          b.span);
            }
            ++spec_index;
        }
    }

    // R6: per-kind tags must alternate open/close starting with an open.
    {
        std::array<int, 8> open_depth{};
        bool bad = false;
        for (const auto& e : t.events) {
            int& d = open_depth[static_cast<std::size_t>(e.kind)];
            if (!e.close) {
                if (d != 0) bad = true;
                d = 1;
            } else {
                if (d != 1) bad = true;
                d = 0;
            }
        }
        for (int d : open_depth) {
            if (d != 0) bad = true;
        }
        if (bad) {
            violation(Rule::R6_unbalanced_tags, "unclosed, duplicated or inverted tag");
        }
    }

    // R7: every match block is immediately followed by a refer block, and
    // every passive block immediately follows its active counterpart's close.
    {
        for (const auto& b : t.blocks) {
            if (b.kind == ActionKind::match && !b.truncated) {
                const TagEvent* next = nullptr;
                for (const auto& e : t.events) {
                    if (e.pos >= b.span.end) {
                        next = &e;
                        break;
                    }
                }
                if (next == nullptr || next->close || next->kind != ActionKind::refer) {
                    violation(Rule::R7_feedback_pairing,
                              "match block not immediately followed by a refer block",
                              b.span);
                }
            }
            if (is_passive(b.kind)) {
                const TagEvent* prev = nullptr;
                for (const auto& e : t.events) {
                    if (e.pos + e.len <= b.span.start) prev = &e;
                }
                ActionKind want = active_counterpart(b.kind);
                if (prev == nullptr || !prev->close || prev->kind != want) {
                    violation(Rule::R7_feedback_pairing,
                              to_string(b.kind) + " block does not follow a closed " +
                                  to_string(want) + " block",
                              b.span);
                }
            }
        }
    }

    // R10: only whitespace may sit outside blocks and tag tokens.
    {
        std::vector<bool> covered(t.raw.size(), false);
        auto cover = [&](std::size_t from, std::size_t to) {
            for (std::size_t i = from; i < to && i < covered.size(); ++i) covered[i] = true;
        };
        for (const auto& b : t.blocks) cover(b.span.start, b.span.end);
        for (const auto& e : t.events) cover(e.pos, e.pos + e.len);
        for (std::size_t i = 0; i < t.raw.size(); ++i) {
            if (!covered[i] && std::isspace(static_cast<unsigned char>(t.raw[i])) == 0) {
                violation(Rule::R10_text_outside_tags, "non-whitespace text outside tags",
                          {i, i + 1});
                break;
            }
        }
    }

    // R11 (content kinds) is checkable only against a guideline store.
    if (options.guideline != nullptr) {
        auto& sink = options.gate_content_rules ? report.violations : report.warnings;
        for (const auto& spec : t.match_specs) {
            for (const auto& item : spec) {
                if (options.guideline->find(item) != nullptr) {
                    add(sink, Rule::R11_content_kind,
                        "match payload lists the disease '" + item + "'", {});
                }
            }
        }
        if (t.lookup_spec) {
            for (const auto& item : *t.lookup_spec) {
                if (options.guideline->find(item) == nullptr) {
                    add(sink, Rule::R11_content_kind,
                        "lookup payload item '" + item + "' is not a known disease", {});
                }
            }
        }
    }

    // R12: a reason block between consecutive tool/diagnose actions.
    {
        auto& sink = options.gate_reason_separation ? report.violations : report.warnings;
        const ActionBlock* prev_tool = nullptr;
        bool reason_seen = false;
        for (const auto& b : t.blocks) {
            if (b.kind == ActionKind::reason) {
                reason_seen = true;
                continue;
            }
            if (!is_active(b.kind)) continue;
            if (prev_tool != nullptr && !reason_seen) {
                add(sink, Rule::R12_missing_reason,
                    "no reason block between " + to_string(prev_tool->kind) + " and " +
                        to_string(b.kind),
                    b.span);
            }
            prev_tool = &b;
            reason_seen = false;
        }
    }

    report.sigma_f = report.violations.empty() ? 1 : 0;
    return report;
}

}  // namespace dxrag
