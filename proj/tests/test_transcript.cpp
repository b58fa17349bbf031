#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <random>

#include "doctest.h"
#include "dxrag/transcript.hpp"
#include "format_fuzz.hpp"
#include "oracles.hpp"

using namespace dxrag;
using format_fuzz::canonical_transcript;
using format_fuzz::mutate;

TEST_CASE("the canonical episode parses into 15 ordered blocks") {
    Transcript t = parse(canonical_transcript());
    REQUIRE(t.blocks.size() == 15);
    const ActionKind expected[] = {
        ActionKind::reason, ActionKind::lookup, ActionKind::guide,  ActionKind::reason,
        ActionKind::match,  ActionKind::refer,  ActionKind::reason, ActionKind::match,
        ActionKind::refer,  ActionKind::reason, ActionKind::lookup, ActionKind::guide,
        ActionKind::search, ActionKind::result, ActionKind::diagnose};
    for (std::size_t i = 0; i < t.blocks.size(); ++i) {
        CHECK(t.blocks[i].kind == expected[i]);
        CHECK(t.blocks[i].index == i);
        CHECK(!t.blocks[i].truncated);
    }
    REQUIRE(t.diagnoses.size() == 5);
    CHECK(t.diagnoses[0] == "Acute myeloid leukemia");
    CHECK(t.diagnoses[4] == "Primary central nervous system lymphoma");
    REQUIRE(t.match_specs.size() == 2);
    CHECK(t.match_specs[1] ==
          std::vector<std::string>{"thrombocytopenia", "hypertension", "atrial fibrillation"});
    REQUIRE(t.search_specs.size() == 1);
    CHECK(t.search_specs[0].well_formed);
    CHECK(t.search_specs[0].source == KnowledgeSource::PMC);
    CHECK(t.search_specs[0].queries.size() == 2);
    REQUIRE(t.lookup_spec.has_value());
    CHECK(t.lookup_spec->size() == 3);
}

TEST_CASE("the canonical episode passes the format gate") {
    Transcript t = parse(canonical_transcript());
    FormatReport report = validate(t);
    CHECK(report.sigma_f == 1);
    CHECK(report.violations.empty());
    // Two lookups exceed the prompt cap and two tool pairs lack a reason
    // separator; both are warnings, not gate violations.
    bool has_r8 = false;
    for (const auto& w : report.warnings) {
        if (w.rule == Rule::R8_too_many_lookup) has_r8 = true;
    }
    CHECK(has_r8);
}

TEST_CASE("empty input parses to an empty block list") {
    Transcript t = parse("");
    CHECK(t.blocks.empty());
    CHECK(t.diagnoses.empty());
}

TEST_CASE("minimal well-formed terminal") {
    Transcript t = parse("<diagnose>\\textbf{X}</diagnose>");
    REQUIRE(t.blocks.size() == 1);
    CHECK(t.blocks[0].kind == ActionKind::diagnose);
    CHECK(t.diagnoses == std::vector<std::string>{"X"});
    CHECK(validate(t).sigma_f == 1);
}

TEST_CASE("close before open zeroes the gate with R2") {
    Transcript t = parse("</diagnose> stray \\textbf{X} <diagnose>");
    FormatReport report = validate(t);
    CHECK(report.sigma_f == 0);
    bool has_r2 = false;
    for (const auto& v : report.violations) {
        if (v.rule == Rule::R2_diagnose_order) has_r2 = true;
    }
    CHECK(has_r2);
}

TEST_CASE("four match/refer pairs violate R5") {
    std::string text;
    for (int i = 0; i < 4; ++i) {
        text += "<match> a" + std::to_string(i) + ", b" + std::to_string(i) + " </match>\n";
        text += "<refer>case " + std::to_string(i) + "</refer>\n";
    }
    text += "<diagnose>\\textbf{X}</diagnose>";
    FormatReport report = validate(parse(text));
    CHECK(report.sigma_f == 0);
    bool has_r5 = false;
    for (const auto& v : report.violations) {
        if (v.rule == Rule::R5_too_many_match) has_r5 = true;
    }
    CHECK(has_r5);
}

TEST_CASE("adding a match block never repairs an R5 violation") {
    std::string text;
    for (int n = 4; n <= 8; ++n) {
        text = "";
        for (int i = 0; i < n; ++i) {
            text += "<match> q" + std::to_string(i) + " </match>\n<refer>r</refer>\n";
        }
        text += "<diagnose>\\textbf{X}</diagnose>";
        CHECK(validate(parse(text)).sigma_f == 0);
    }
}

TEST_CASE("think is accepted as a reason spelling") {
    Transcript t = parse("<think> pondering </think><diagnose>\\textbf{X}</diagnose>");
    REQUIRE(t.blocks.size() == 2);
    CHECK(t.blocks[0].kind == ActionKind::reason);
    CHECK(validate(t).sigma_f == 1);
}

TEST_CASE("unclosed tags become truncated blocks and fail R6") {
    Transcript t = parse("<diagnose>\\textbf{X}</diagnose>\n<search> |WIKI| q");
    bool has_truncated = false;
    for (const auto& b : t.blocks) {
        if (b.truncated) has_truncated = true;
    }
    CHECK(has_truncated);
    FormatReport report = validate(t);
    CHECK(report.sigma_f == 0);
}

TEST_CASE("non-whitespace outside tags fails R10") {
    FormatReport report =
        validate(parse("preamble text <diagnose>\\textbf{X}</diagnose>"));
    CHECK(report.sigma_f == 0);
    bool has_r10 = false;
    for (const auto& v : report.violations) {
        if (v.rule == Rule::R10_text_outside_tags) has_r10 = true;
    }
    CHECK(has_r10);
    // Whitespace between blocks is always legal.
    CHECK(validate(parse("\n  <diagnose>\\textbf{X}</diagnose>\n\t")).sigma_f == 1);
}

TEST_CASE("malformed search payloads fail R9") {
    CHECK(validate(parse("<search> |XYZ| q </search>\n<result>r</result>\n"
                         "<diagnose>\\textbf{X}</diagnose>"))
              .sigma_f == 0);
    CHECK(validate(parse("<search> no source marker </search>\n<result>r</result>\n"
                         "<diagnose>\\textbf{X}</diagnose>"))
              .sigma_f == 0);
    CHECK(validate(parse("<search> |WIKI| a, b, c, d </search>\n<result>r</result>\n"
                         "<diagnose>\\textbf{X}</diagnose>"))
              .sigma_f == 0);
    CHECK(validate(parse("<search> |WIKI| a, b, c </search>\n<result>r</result>\n"
                         "<diagnose>\\textbf{X}</diagnose>"))
              .sigma_f == 1);
}

TEST_CASE("three search blocks fail R9") {
    std::string text;
    for (int i = 0; i < 3; ++i) {
        text += "<search> |WIKI| q" + std::to_string(i) + " </search>\n<result>r</result>\n";
    }
    text += "<diagnose>\\textbf{X}</diagnose>";
    CHECK(validate(parse(text)).sigma_f == 0);
}

TEST_CASE("orphan passive blocks fail R7") {
    CHECK(validate(parse("<refer>unsolicited</refer>\n<diagnose>\\textbf{X}</diagnose>"))
              .sigma_f == 0);
    CHECK(validate(parse("<guide>unsolicited</guide>\n<diagnose>\\textbf{X}</diagnose>"))
              .sigma_f == 0);
    CHECK(validate(parse("<match> a </match>\n<reason> no refer follows </reason>\n"
                         "<diagnose>\\textbf{X}</diagnose>"))
              .sigma_f == 0);
}

TEST_CASE("more than five bold diagnoses fail R4") {
    std::string text = "<diagnose>";
    for (int i = 0; i < 6; ++i) text += "\\textbf{D" + std::to_string(i) + "}, ";
    text += "</diagnose>";
    FormatReport report = validate(parse(text));
    CHECK(report.sigma_f == 0);
}

TEST_CASE("bold extraction tolerates inner whitespace and drops unmatched braces") {
    auto bolds = extract_bold("\\textbf{  spaced name  } and \\textbf{broken");
    REQUIRE(bolds.size() == 1);
    CHECK(bolds[0] == "spaced name");
    auto nested = extract_bold("\\textbf{outer {inner}, with comma}");
    REQUIRE(nested.size() == 1);
    CHECK(nested[0] == "outer {inner}, with comma");
}

TEST_CASE("spans cover the raw text exactly and blocks stay ordered") {
    Transcript t = parse(canonical_transcript());
    std::size_t cursor = 0;
    for (const auto& b : t.blocks) {
        CHECK(b.span.start >= cursor);
        CHECK(b.span.end <= t.raw.size());
        // Gap before this block is whitespace only.
        for (std::size_t i = cursor; i < b.span.start; ++i) {
            CHECK(std::isspace(static_cast<unsigned char>(t.raw[i])) != 0);
        }
        std::string slice = t.raw.substr(b.span.start, b.span.end - b.span.start);
        CHECK(slice.find(b.payload) != std::string::npos);
        cursor = b.span.end;
    }
}

TEST_CASE("R11 content checks warn against the guideline store by default") {
    GuidelineStore store;
    GuidelineEntry e;
    e.disease_name = "acute myeloid leukemia";
    e.rarity = Rarity::common;
    e.phenotypes = {"thrombocytopenia"};
    store.add(std::move(e));

    // A disease in the match payload; a non-disease in the lookup payload.
    std::string text =
        "<lookup> not a known disease </lookup>\n<guide>g</guide>\n"
        "<match> acute myeloid leukemia </match>\n<refer>r</refer>\n"
        "<diagnose>\\textbf{X}</diagnose>";
    ValidateOptions options;
    options.guideline = &store;
    FormatReport lenient = validate(parse(text), {}, options);
    CHECK(lenient.sigma_f == 1);
    std::size_t r11 = 0;
    for (const auto& w : lenient.warnings) {
        if (w.rule == Rule::R11_content_kind) ++r11;
    }
    CHECK(r11 == 2);

    options.gate_content_rules = true;
    CHECK(validate(parse(text), {}, options).sigma_f == 0);
}

TEST_CASE("R12 reason separation warns by default and gates in strict mode") {
    std::string text =
        "<lookup> a </lookup>\n<guide>g</guide>\n"
        "<search> |WIKI| q </search>\n<result>r</result>\n"
        "<diagnose>\\textbf{X}</diagnose>";
    FormatReport lenient = validate(parse(text));
    CHECK(lenient.sigma_f == 1);
    bool has_r12 = false;
    for (const auto& w : lenient.warnings) {
        if (w.rule == Rule::R12_missing_reason) has_r12 = true;
    }
    CHECK(has_r12);

    ValidateOptions strict;
    strict.gate_reason_separation = true;
    CHECK(validate(parse(text), {}, strict).sigma_f == 0);
}

// ---------------------------------------------------------------------------
// Mutation fuzz: sigma_f agrees with the independent rule evaluator
// ---------------------------------------------------------------------------



TEST_CASE("1000 seeded mutations: gate agrees with the independent evaluator") {
    std::string base = canonical_transcript();
    std::mt19937_64 rng(4242);
    std::size_t zeroed = 0;
    for (int i = 0; i < 1000; ++i) {
        std::string variant = mutate(base, rng);
        int engine_sigma = validate(parse(variant)).sigma_f;
        int oracle_sigma = oracles::oracle_format(variant).sigma();
        if (engine_sigma != oracle_sigma) {
            CAPTURE(variant);
        }
        REQUIRE(engine_sigma == oracle_sigma);
        if (engine_sigma == 0) ++zeroed;
    }
    CHECK(zeroed > 500);  // mutations overwhelmingly break the format
}
