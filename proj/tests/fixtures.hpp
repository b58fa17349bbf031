#pragma once

#include <filesystem>
#include <fstream>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "dxrag/corpus.hpp"
#include "dxrag/retrieval.hpp"

namespace fixtures {

inline const std::vector<std::string>& word_pool() {
    static const std::vector<std::string> words = {
        "acute",     "chronic",   "myeloid",      "lymphoid",   "leukemia",
        "anemia",    "fever",     "fatigue",      "thrombosis", "hepatomegaly",
        "splenomegaly", "hypertension", "fibrosis", "carcinoma", "renal",
        "cardiac",   "pulmonary", "hepatic",      "bleeding",   "petechiae",
        "nausea",    "dyspnea",   "edema",        "arthritis",  "neuropathy",
        "dermatitis", "jaundice", "ascites",      "tremor",     "seizure",
        "rash",      "cough",     "syncope",      "arrhythmia", "myalgia",
        "cyanosis",  "vertigo",   "pruritus",     "dysphagia",  "hematuria",
    };
    return words;
}

inline std::string random_phrase(std::mt19937_64& rng, std::size_t n_words) {
    const auto& pool = word_pool();
    std::string out;
    for (std::size_t i = 0; i < n_words; ++i) {
        if (i != 0) out += " ";
        out += pool[rng() % pool.size()];
    }
    return out;
}

inline std::vector<std::string> random_names(std::uint64_t seed, std::size_t count,
                                             std::size_t words_min, std::size_t words_max) {
    std::mt19937_64 rng(seed);
    std::vector<std::string> names;
    names.reserve(count);
    for (std::size_t i = 0; i < count; ++i) {
        std::size_t n = words_min + rng() % (words_max - words_min + 1);
        names.push_back(random_phrase(rng, n) + " " + std::to_string(i));
    }
    return names;
}

inline dxrag::GuidelineStore make_guideline(std::uint64_t seed, std::size_t count) {
    std::mt19937_64 rng(seed);
    dxrag::GuidelineStore store;
    for (std::size_t i = 0; i < count; ++i) {
        dxrag::GuidelineEntry e;
        e.disease_name = random_phrase(rng, 2 + rng() % 2) + " type " + std::to_string(i);
        e.rarity = (i % 3 == 0) ? dxrag::Rarity::rare : dxrag::Rarity::common;
        std::size_t n_phenos = 3 + rng() % 5;
        for (std::size_t p = 0; p < n_phenos; ++p) {
            e.phenotypes.push_back(random_phrase(rng, 1 + rng() % 2) + " sign " +
                                   std::to_string(p));
        }
        e.source_count = 1 + rng() % 4;
        store.add(std::move(e));
    }
    return store;
}

inline dxrag::PatientStore make_patients(std::uint64_t seed, std::size_t count) {
    std::mt19937_64 rng(seed);
    dxrag::PatientStore store;
    for (std::size_t i = 0; i < count; ++i) {
        dxrag::PatientRecord r;
        r.record_id = "rec-" + std::to_string(i);
        r.diagnosis = random_phrase(rng, 2) + " disease " + std::to_string(i % 40);
        std::size_t n = 2 + rng() % 5;
        for (std::size_t p = 0; p < n; ++p) r.phenotypes.push_back(random_phrase(rng, 2));
        r.source_tag = (i % 2 == 0) ? "center-a" : "center-b";
        store.add(std::move(r));
    }
    return store;
}

inline dxrag::KnowledgeStore make_knowledge(std::uint64_t seed, std::size_t count) {
    std::mt19937_64 rng(seed);
    dxrag::KnowledgeStore store;
    const dxrag::KnowledgeSource sources[] = {dxrag::KnowledgeSource::WIKI,
                                              dxrag::KnowledgeSource::PMC,
                                              dxrag::KnowledgeSource::BOOK};
    for (std::size_t i = 0; i < count; ++i) {
        dxrag::KnowledgeChunk c;
        c.chunk_id = "chunk-" + std::to_string(i);
        c.source = sources[i % 3];
        c.text = random_phrase(rng, 10 + rng() % 30);
        store.add(std::move(c));
    }
    return store;
}

struct TempDir {
    std::filesystem::path path;
    explicit TempDir(const std::string& prefix) {
        auto stamp = std::chrono::steady_clock::now().time_since_epoch().count();
        path = std::filesystem::temp_directory_path() /
               (prefix + std::to_string(stamp) + "-" + std::to_string(::getpid()));
        std::filesystem::create_directories(path);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path, ec);
    }
    std::string file(const std::string& name) const { return (path / name).string(); }
};

inline void write_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::trunc);
    out << content;
}

// ---------------------------------------------------------------------------
// Case replay fixture: a leukemia workup with the canonical 15-block shape
// (reason, lookup, guide, reason, match, refer, reason, match, refer, reason,
// lookup, guide, search, result, diagnose).
// ---------------------------------------------------------------------------

struct CaseReplay {
    dxrag::DiagnosticCase diag_case;
    std::shared_ptr<const dxrag::CorpusBundle> bundle;
    dxrag::RetrievalConfig rconfig;
    std::vector<std::string> deltas;
};

inline CaseReplay make_case_replay() {
    CaseReplay fix;
    fix.diag_case.case_id = "replay-1";
    fix.diag_case.presentation_text =
        "51-year-old male, longstanding alcohol use, platelets 85k, thoracic aortic "
        "aneurysm, sigmoid diverticulosis, refractory hypertension, new atrial "
        "fibrillation, hepatomegaly, petechiae, fatigue";
    fix.diag_case.ground_truth_diagnoses = {"acute myeloid leukemia"};
    fix.diag_case.rarity = dxrag::Rarity::common;

    auto bundle = std::make_shared<dxrag::CorpusBundle>();

    auto add_disease = [&](const std::string& name, std::vector<std::string> phenos) {
        dxrag::GuidelineEntry e;
        e.disease_name = name;
        e.rarity = dxrag::Rarity::common;
        e.phenotypes = std::move(phenos);
        e.source_count = 2;
        bundle->guideline.add(std::move(e));
    };
    add_disease("alcoholic liver disease",
                {"hepatomegaly", "portal hypertension", "ascites", "varices"});
    add_disease("portal hypertension",
                {"splenomegaly", "hypersplenism", "thrombocytopenia", "ascites"});
    add_disease("immune thrombocytopenic purpura",
                {"isolated thrombocytopenia", "mucocutaneous bleeding",
                 "normal spleen size"});
    add_disease("acute myeloid leukemia",
                {"thrombocytopenia", "anemia", "neutropenia", "bleeding tendency",
                 "hepatomegaly", "fatigue"});
    add_disease("primary myelofibrosis",
                {"thrombocytopenia", "splenomegaly", "constitutional symptoms"});
    add_disease("chronic myelomonocytic leukemia",
                {"monocytosis", "thrombocytopenia", "splenomegaly"});

    auto add_record = [&](const std::string& id, const std::string& diagnosis,
                          std::vector<std::string> phenos) {
        dxrag::PatientRecord r;
        r.record_id = id;
        r.diagnosis = diagnosis;
        r.phenotypes = std::move(phenos);
        r.source_tag = "fixture";
        bundle->patients.add(std::move(r));
    };
    add_record("p1", "primary cns lymphoma",
               {"aortic aneurysm", "bowel diverticulosis", "alcoholism"});
    add_record("p2", "primary myelofibrosis",
               {"thrombocytopenia", "splenomegaly", "fatigue"});
    add_record("p3", "hepatocellular carcinoma", {"hepatomegaly", "ascites", "alcoholism"});
    add_record("p4", "acute myeloid leukemia",
               {"thrombocytopenia", "hypertension", "atrial fibrillation", "bone pain"});
    add_record("p5", "giant cell arteritis", {"headache", "jaw claudication"});
    add_record("p6", "t-cell prolymphocytic leukemia",
               {"thrombocytopenia", "splenomegaly", "lymphocytosis"});

    // One long PMC chunk (over the fixture's summarize budget) plus short decoys.
    std::string long_text =
        "Sustained heavy alcohol exposure suppresses marrow output across all three "
        "lineages, and thrombocytopenia is often the first laboratory signal. ";
    while (long_text.size() < 600) {
        long_text +=
            "Longitudinal cohorts link chronic alcohol use with secondary leukemia risk, "
            "including acute myeloid leukemia arising after marrow injury. ";
    }
    dxrag::KnowledgeChunk main_chunk;
    main_chunk.chunk_id = "pmc-alcohol-marrow";
    main_chunk.source = dxrag::KnowledgeSource::PMC;
    main_chunk.title = "alcohol and marrow suppression";
    main_chunk.text = long_text.substr(0, 950);
    bundle->knowledge.add(std::move(main_chunk));

    dxrag::KnowledgeChunk decoy;
    decoy.chunk_id = "pmc-unrelated";
    decoy.source = dxrag::KnowledgeSource::PMC;
    decoy.text = "Dietary fiber intake and diverticular disease outcomes in older adults.";
    bundle->knowledge.add(std::move(decoy));

    fix.bundle = bundle;
    fix.rconfig.tau = 0.5;
    fix.rconfig.k_pheno = 10;
    fix.rconfig.top_n = 4;
    fix.rconfig.top_k = 1;
    fix.rconfig.summarize_budget = 400;

    fix.deltas = {
        "<reason> Alcohol history with low platelets: weigh liver disease, portal "
        "hypertension and primary marrow pathology first. </reason>\n"
        "<lookup> alcoholic liver disease, portal hypertension, immune thrombocytopenic "
        "purpura </lookup>",

        "\n<reason> Guideline profiles do not cover the aneurysm or the new atrial "
        "fibrillation; cast a wide net over similar cases. </reason>\n"
        "<match> alcoholism, aortic aneurysm, bowel diverticulosis, thrombocytopenia, "
        "hypertension, atrial fibrillation </match>",

        "\n<reason> Retrieved cases scatter across hematologic malignancies; narrow to "
        "the thrombocytopenia triad. </reason>\n"
        "<match> thrombocytopenia, hypertension, atrial fibrillation </match>",

        "\n<reason> Refined matching favors acute leukemias; check their typical "
        "presentations against this patient. </reason>\n"
        "<lookup> acute myeloid leukemia, primary myelofibrosis, chronic myelomonocytic "
        "leukemia </lookup>",

        "\n<search> |PMC| alcohol marrow suppression, secondary leukemia risk factors "
        "</search>",

        "\n<diagnose> \\textbf{Acute myeloid leukemia}, \\textbf{Primary myelofibrosis}, "
        "\\textbf{Chronic myelomonocytic leukemia}, \\textbf{T-cell prolymphocytic "
        "leukemia}, \\textbf{Primary central nervous system lymphoma} </diagnose>",
    };
    return fix;
}

}  // namespace fixtures
