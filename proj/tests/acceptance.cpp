// Acceptance suite: runs every acceptance criterion at its stated tolerance
// and prints one pass/fail line per criterion.

#include <chrono>
#include <cmath>
#include <functional>
#include <iostream>
#include <random>
#include <set>
#include <sstream>

#include "dxrag/cli.hpp"
#include "dxrag/grpo.hpp"
#include "dxrag/metrics.hpp"
#include "dxrag/rollout.hpp"
#include "dxrag/service.hpp"
#include "dxrag/transcript.hpp"
#include "fixtures.hpp"
#include "format_fuzz.hpp"
#include "httplib.h"
#include "json.hpp"
#include "oracles.hpp"
#include "reward_table.hpp"

using namespace dxrag;
using nlohmann::json;

namespace {

struct CheckFailure : std::runtime_error {
    using std::runtime_error::runtime_error;
};

void expect(bool condition, const std::string& what) {
    if (!condition) throw CheckFailure(what);
}

void expect_close(double actual, double wanted, double tol, const std::string& what) {
    if (std::abs(actual - wanted) > tol) {
        std::ostringstream msg;
        msg << what << ": got " << actual << ", wanted " << wanted << " (tol " << tol << ")";
        throw CheckFailure(msg.str());
    }
}

// --------------------------------------------------------------------------
// C1: hand-evaluated reward fixtures within 1e-9
// --------------------------------------------------------------------------
void c1_reward_fixtures() {
    auto rows = reward_table::fixture_table();
    expect(rows.size() >= 12, "fixture table must hold at least 12 rows");
    for (const auto& row : rows) {
        RewardBreakdown b = compute_reward(parse(row.text), row.gt, row.weights, row.config);
        expect(b.sigma_f == row.sigma_f, std::string(row.name) + ": sigma_f");
        expect_close(b.rwd_m, row.rwd_m, 1e-9, std::string(row.name) + ": rwd_m");
        expect_close(b.rwd_s, row.rwd_s, 1e-9, std::string(row.name) + ": rwd_s");
        expect_close(b.rwd_d, row.rwd_d, 1e-9, std::string(row.name) + ": rwd_d");
        expect_close(b.combined, row.combined, 1e-9, std::string(row.name) + ": combined");
    }
}

// --------------------------------------------------------------------------
// C2: 1000 seeded mutations, gate agrees with the independent evaluator
// --------------------------------------------------------------------------
void c2_format_fuzz() {
    std::string base = format_fuzz::canonical_transcript();
    expect(validate(parse(base)).sigma_f == 1, "base transcript must be valid");
    std::mt19937_64 rng(4242);
    for (int i = 0; i < 1000; ++i) {
        std::string variant = format_fuzz::mutate(base, rng);
        int engine = validate(parse(variant)).sigma_f;
        int oracle = oracles::oracle_format(variant).sigma();
        if (engine != oracle) {
            throw CheckFailure("gate disagreement on mutation " + std::to_string(i));
        }
    }
}

// --------------------------------------------------------------------------
// C3: BM25 vs brute force on 200 documents x 50 queries
// --------------------------------------------------------------------------
void c3_bm25_oracle() {
    auto docs = fixtures::random_names(21, 200, 2, 5);
    Bm25Index index;
    oracles::BruteBm25 brute;
    for (const auto& d : docs) {
        index.add_document(d);
        brute.add(d);
    }
    std::mt19937_64 rng(22);
    for (int q = 0; q < 50; ++q) {
        std::string query = fixtures::random_phrase(rng, 1 + rng() % 4);
        auto fast = index.search(query);
        auto slow = brute.rank(query);
        expect(fast.size() == slow.size(), "hit count mismatch");
        for (std::size_t i = 0; i < fast.size(); ++i) {
            expect(fast[i].doc_id == slow[i].first, "rank order mismatch");
            expect_close(fast[i].score, slow[i].second, 1e-9, "score mismatch");
        }
    }
}

// --------------------------------------------------------------------------
// C4: patient matcher vs brute-force Sim on 500 records, plus Sim(P,P)=1
// --------------------------------------------------------------------------
void c4_matcher_oracle() {
    auto store = fixtures::make_patients(51, 500);
    auto provider = std::make_shared<HashEmbeddingProvider>(64);
    PatientMatcher matcher(store, provider);

    std::mt19937_64 rng(52);
    for (int q = 0; q < 30; ++q) {
        std::vector<std::string> query;
        std::size_t n = 1 + rng() % 4;
        for (std::size_t i = 0; i < n; ++i) query.push_back(fixtures::random_phrase(rng, 2));
        auto fast = matcher.match(query, 20);

        auto query_vecs = provider->embed(query);
        std::vector<std::pair<std::string, double>> rows;
        for (const auto& rec : store.records()) {
            rows.emplace_back(rec.record_id, oracles::brute_sim(
                                                 query_vecs, provider->embed(rec.phenotypes)));
        }
        std::sort(rows.begin(), rows.end(), [](const auto& a, const auto& b) {
            if (a.second != b.second) return a.second > b.second;
            return a.first < b.first;
        });
        expect(fast.size() == 20, "top-20 size");
        for (std::size_t i = 0; i < 20; ++i) {
            expect(fast[i].record_id == rows[i].first, "top-20 order mismatch");
            expect_close(fast[i].score, rows[i].second, 1e-9, "Sim score mismatch");
        }
    }

    for (int i = 0; i < 100; ++i) {
        std::vector<std::string> phenos;
        std::size_t n = 1 + rng() % 6;
        for (std::size_t p = 0; p < n; ++p) phenos.push_back(fixtures::random_phrase(rng, 2));
        auto vecs = provider->embed(phenos);
        expect_close(oracles::brute_sim(vecs, vecs), 1.0, 1e-9, "Sim(P,P)");
    }
}

// --------------------------------------------------------------------------
// C5: case-study replay — sigma_f = 1, six environment invocations in tool
// order lookup, match, match, lookup, search (the long search result invokes
// the summarizer once), passive blocks at the correct offsets
// --------------------------------------------------------------------------
void c5_rollout_replay() {
    auto fix = fixtures::make_case_replay();
    auto summarizer = std::make_shared<TruncationSummarizer>(fix.rconfig.summarize_budget);
    CorpusEnvironment env(fix.bundle, fix.rconfig, summarizer);
    ScriptedPolicy policy(fix.deltas);
    RolloutConfig config;
    config.l_max = 20000;
    auto result = run_episode(fix.diag_case, policy, env, config);

    expect(result.reward.sigma_f == 1, "sigma_f must be 1");
    expect(result.status == EpisodeStatus::diagnosed, "episode must end diagnosed");

    const ActionKind order[] = {ActionKind::lookup, ActionKind::match, ActionKind::match,
                                ActionKind::lookup, ActionKind::search};
    expect(result.env_trace.size() == 5, "five passive injections");
    for (std::size_t i = 0; i < 5; ++i) {
        expect(result.env_trace[i].active_kind == order[i], "tool order mismatch");
    }
    expect(env.counters().total() == 6, "exactly six environment invocations");
    expect(env.counters().summarize_calls == 1, "one summarizer invocation");

    // Passive offsets: each passive block directly follows its active block.
    expect(result.transcript.blocks.size() == 15, "15 blocks");
    for (std::size_t i = 0; i < result.transcript.blocks.size(); ++i) {
        const auto& b = result.transcript.blocks[i];
        if (!is_passive(b.kind)) continue;
        expect(i > 0, "passive block cannot lead");
        const auto& prev = result.transcript.blocks[i - 1];
        expect(is_active(prev.kind), "passive block must follow an active block");
        for (std::size_t c = prev.span.end; c < b.span.start; ++c) {
            expect(std::isspace(static_cast<unsigned char>(result.generated[c])) != 0,
                   "only whitespace between active block and its feedback");
        }
    }
}

// --------------------------------------------------------------------------
// C6: GRPO math — normalization identity, KL >= 0, gradient check
// --------------------------------------------------------------------------
void c6_grpo_math() {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    for (int trial = 0; trial < 200; ++trial) {
        std::size_t g = 2 + rng() % 14;
        std::vector<double> rewards(g);
        for (auto& r : rewards) r = unit(rng);
        auto a = group_advantages(rewards);
        double mean = 0.0;
        for (double v : a) mean += v;
        mean /= static_cast<double>(g);
        double var = 0.0;
        for (double v : a) var += (v - mean) * (v - mean);
        var /= static_cast<double>(g);
        bool guarded = std::all_of(a.begin(), a.end(), [](double v) { return v == 0.0; });
        expect(std::abs(mean) <= 1e-9, "advantage mean must be 0");
        if (!guarded) {
            expect(std::abs(std::sqrt(var) - 1.0) <= 1e-9, "advantage std must be 1");
        }
    }

    std::uniform_real_distribution<double> mass(0.01, 1.0);
    for (int trial = 0; trial < 10000; ++trial) {
        std::size_t n = 2 + rng() % 6;
        std::vector<double> p(n), q(n);
        double sp = 0.0, sq = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            p[i] = mass(rng);
            q[i] = mass(rng);
            sp += p[i];
            sq += q[i];
        }
        for (std::size_t i = 0; i < n; ++i) {
            p[i] /= sp;
            q[i] /= sq;
        }
        expect(kl_exact(p, q) >= -1e-12, "KL must be non-negative");
    }

    std::uniform_real_distribution<double> logit(-1.5, 1.5);
    for (int config_i = 0; config_i < 100; ++config_i) {
        std::size_t vocab = 3 + rng() % 6;
        ToyPolicy policy;
        policy.temperature = 0.5 + unit(rng);
        for (std::size_t v = 0; v < vocab; ++v) policy.logits.push_back(logit(rng));
        ToyPolicy ref;
        ref.temperature = policy.temperature;
        for (std::size_t v = 0; v < vocab; ++v) ref.logits.push_back(logit(rng));
        auto ref_probs = ref.probs();

        std::size_t g = 4 + rng() % 5;
        std::vector<std::size_t> samples(g);
        std::vector<double> rewards(g);
        for (std::size_t i = 0; i < g; ++i) {
            samples[i] = rng() % vocab;
            rewards[i] = unit(rng);
        }
        auto advantages = group_advantages(rewards);
        double beta = unit(rng) * 0.2;
        auto grad = toy_loss_gradient(policy, samples, advantages, ref_probs, beta);
        const double h = 1e-6;
        for (std::size_t j = 0; j < vocab; ++j) {
            ToyPolicy plus = policy;
            ToyPolicy minus = policy;
            plus.logits[j] += h;
            minus.logits[j] -= h;
            double fd = (toy_loss(plus, samples, advantages, ref_probs, beta) -
                         toy_loss(minus, samples, advantages, ref_probs, beta)) /
                        (2.0 * h);
            double denom = std::max({1.0, std::abs(grad[j]), std::abs(fd)});
            expect(std::abs(grad[j] - fd) / denom <= 1e-6, "gradient check");
        }
    }
}

// --------------------------------------------------------------------------
// C7: toy GRPO training over a 16-element vocabulary scored by the real
// reward stack under stage-4 weights
// --------------------------------------------------------------------------
std::vector<std::string> c7_vocabulary() {
    std::vector<std::string> vocab;
    // The target: diverse match hit, full-coverage search, exact diagnosis.
    vocab.push_back(
        "<match> thrombocytopenia, anemia </match>\n"
        "<refer>acute myeloid leukemia (phenotypes: marrow failure)</refer>\n"
        "<search> |PMC| acute myeloid leukemia outcomes </search>\n<result>r</result>\n"
        "<diagnose> \\textbf{Acute myeloid leukemia} </diagnose>");
    vocab.push_back("<diagnose> \\textbf{Acute myeloid leukemia} </diagnose>");
    vocab.push_back(
        "<search> |PMC| myeloid leukemia pathways </search>\n<result>r</result>\n"
        "<diagnose> \\textbf{Portal hypertension} </diagnose>");
    vocab.push_back("<diagnose> \\textbf{Chronic myeloid leukemia} </diagnose>");
    vocab.push_back("<reason> never commits to a diagnosis </reason>");
    vocab.push_back("loose text outside tags <diagnose> \\textbf{X} </diagnose>");
    vocab.push_back(
        "<match> a, b, c </match>\n<refer>acute myeloid leukemia (x)</refer>\n"
        "<match> a, b, c, d </match>\n<refer>other</refer>\n"
        "<diagnose> \\textbf{Acute myeloid leukemia} </diagnose>");
    vocab.push_back(
        "<match> fever, cough </match>\n<refer>common cold</refer>\n"
        "<diagnose> \\textbf{Acute myeloid leukemia} </diagnose>");
    vocab.push_back("<diagnose> \\textbf{Unrelated disorder} </diagnose>");
    vocab.push_back("<diagnose> no bold markers at all </diagnose>");
    vocab.push_back(
        "<search> |XYZ| broken source </search>\n<result>r</result>\n"
        "<diagnose> \\textbf{Acute myeloid leukemia} </diagnose>");
    vocab.push_back(
        "<search> |WIKI| leukemia </search>\n"
        "<diagnose> \\textbf{Acute myeloid leukemia} </diagnose>");
    vocab.push_back(
        "<lookup> acute myeloid leukemia </lookup>\n<guide>g</guide>\n"
        "<diagnose> \\textbf{Primary myelofibrosis} </diagnose>");
    vocab.push_back(
        "<match> petechiae, bleeding </match>\n<refer>viral infection</refer>\n"
        "<match> petechiae, bleeding </match>\n<refer>viral infection</refer>\n"
        "<diagnose> \\textbf{Acute myeloid leukemia} </diagnose>");
    vocab.push_back("</diagnose> inverted \\textbf{X} <diagnose>");
    vocab.push_back(
        "<search> |BOOK| marrow failure textbooks </search>\n<result>r</result>\n"
        "<diagnose> \\textbf{Myelodysplastic syndrome} </diagnose>");
    return vocab;
}

void c7_toy_training() {
    auto vocab = c7_vocabulary();
    expect(vocab.size() == 16, "vocabulary must hold 16 elements");
    const std::vector<std::string> gt = {"acute myeloid leukemia"};
    RewardConfig reward_config;

    struct Components {
        int sigma_f;
        double m, s, d;
    };
    std::vector<Components> components;
    for (const auto& text : vocab) {
        auto b = compute_reward(parse(text), gt, stage_weights(4), reward_config);
        components.push_back({b.sigma_f, b.rwd_m, b.rwd_s, b.rwd_d});
    }
    auto reward_fn = [&](std::size_t i, const RewardWeights& w) {
        return combine(components[i].sigma_f, components[i].m, components[i].s,
                       components[i].d, w);
    };

    // The intended winner is the full-pipeline element 0.
    std::size_t best = 0;
    double best_reward = -1.0;
    for (std::size_t i = 0; i < vocab.size(); ++i) {
        double r = reward_fn(i, stage_weights(4));
        if (r > best_reward) {
            best_reward = r;
            best = i;
        }
    }
    expect(best == 0, "element 0 must carry the highest reward");

    ToyPolicy policy;
    policy.logits.assign(vocab.size(), 0.0);
    ToyTrainConfig config;
    config.iters = 200;
    config.group_size = 8;
    config.beta = 0.01;
    config.lr = 0.5;
    config.seed = 0;
    auto trace = train_toy(policy, vocab.size(), reward_fn, config);
    expect(!trace.diverged, "training must not diverge");
    expect(trace.iterations.size() == 200, "200 iterations");

    double first = trace.iterations.front().mean_reward;
    double last = trace.iterations.back().mean_reward;
    expect(first > 0.0, "iteration-0 mean reward must be positive");
    expect(last >= 1.5 * first, "mean reward must improve by at least 50%");
    auto probs = policy.probs();
    std::size_t argmax =
        std::distance(probs.begin(), std::max_element(probs.begin(), probs.end()));
    expect(argmax == best, "training must concentrate on the best element");
    expect(probs[argmax] > 0.9, "argmax probability must exceed 0.9");
}

// --------------------------------------------------------------------------
// C8: stage schedule exact values
// --------------------------------------------------------------------------
void c8_stage_schedule() {
    const double wanted[4][3] = {
        {0.9, 0.05, 0.05}, {0.05, 0.9, 0.05}, {0.05, 0.05, 0.9}, {0.3, 0.3, 0.4}};
    for (int stage = 1; stage <= 4; ++stage) {
        auto w = stage_weights(stage);
        expect(w.w_s == wanted[stage - 1][0], "w_S stage " + std::to_string(stage));
        expect(w.w_m == wanted[stage - 1][1], "w_M stage " + std::to_string(stage));
        expect(w.w_d == wanted[stage - 1][2], "w_D stage " + std::to_string(stage));
    }
    auto schedule = StageSchedule::standard();
    for (int stage = 1; stage <= 4; ++stage) {
        expect(schedule.stages[stage - 1].w_s == stage_weights(stage).w_s, "schedule w_s");
        expect(schedule.stages[stage - 1].w_m == stage_weights(stage).w_m, "schedule w_m");
        expect(schedule.stages[stage - 1].w_d == stage_weights(stage).w_d, "schedule w_d");
    }
}

// --------------------------------------------------------------------------
// C9: metrics against hand counts on a 20-episode fixture
// --------------------------------------------------------------------------
void c9_metrics() {
    std::vector<EpisodeOutcome> results;
    auto with_rank = [](int rank) {
        EpisodeOutcome o;
        o.ground_truth = {"target disease"};
        for (int i = 1; i <= 6; ++i) {
            o.diagnoses.push_back(i == rank ? "target disease"
                                            : "filler " + std::to_string(i));
        }
        return o;
    };
    // Ranks: 4 episodes at rank 1, 3 at rank 2, 3 at rank 5, 10 absent.
    for (int i = 0; i < 4; ++i) results.push_back(with_rank(1));
    for (int i = 0; i < 3; ++i) results.push_back(with_rank(2));
    for (int i = 0; i < 3; ++i) results.push_back(with_rank(5));
    for (int i = 0; i < 10; ++i) results.push_back(with_rank(-1));
    // 10 match invocations across the fixture, 6 of them hits.
    for (int i = 0; i < 10; ++i) {
        std::vector<std::string> retrieved = {"other disease"};
        if (i < 6) retrieved.push_back("target disease");
        results[static_cast<std::size_t>(i)].match_retrievals.push_back(retrieved);
    }
    // 7 episodes mention the target in their reasoning.
    for (int i = 0; i < 7; ++i) {
        results[static_cast<std::size_t>(i)].reason_texts = {
            "weighing target disease against the alternatives"};
    }

    expect_close(acc_at_n(results, 1, {}), 4.0 / 20.0, 1e-12, "acc@1");
    expect_close(acc_at_n(results, 5, {}), 10.0 / 20.0, 1e-12, "acc@5");
    auto hit = hit_at_n(results, 20, {});
    expect(hit.has_value(), "hit@20 defined");
    expect_close(*hit, 0.6, 1e-12, "hit@20");
    expect_close(hint_score(results), 7.0 / 20.0, 1e-12, "hint");

    std::mt19937_64 rng(5);
    for (int trial = 0; trial < 100; ++trial) {
        std::vector<EpisodeOutcome> sample;
        std::size_t n = 1 + rng() % 30;
        for (std::size_t i = 0; i < n; ++i) {
            sample.push_back(with_rank(static_cast<int>(rng() % 8)));
        }
        expect(acc_at_n(sample, 5, {}) >= acc_at_n(sample, 1, {}),
               "acc@5 must dominate acc@1");
    }
}

// --------------------------------------------------------------------------
// C10: adversarial environment — zero hit rate, controls unchanged
// --------------------------------------------------------------------------
void c10_adversarial() {
    auto fix = fixtures::make_case_replay();
    auto summarizer = std::make_shared<TruncationSummarizer>(fix.rconfig.summarize_budget);

    AdversarialEnvironment adversarial(fix.bundle, fix.rconfig, summarizer);
    ScriptedPolicy policy(fix.deltas);
    RolloutConfig config;
    config.l_max = 20000;
    auto result = run_episode(fix.diag_case, policy, adversarial, config);

    EpisodeOutcome outcome;
    outcome.ground_truth = result.ground_truth;
    for (const auto& e : result.env_trace) {
        if (e.active_kind == ActionKind::match) {
            outcome.match_retrievals.push_back(e.match_diagnoses);
        }
    }
    expect(outcome.match_retrievals.size() == 2, "two match invocations");
    auto hit = hit_at_n({outcome}, 20, {});
    expect(hit.has_value() && *hit == 0.0, "hit@20 must be 0 under decoys");

    // Control: a vanilla no-tool policy scores identically under both envs.
    ScriptedPolicy v1({"<diagnose> \\textbf{Acute myeloid leukemia} </diagnose>"});
    ScriptedPolicy v2({"<diagnose> \\textbf{Acute myeloid leukemia} </diagnose>"});
    RolloutConfig vconfig;
    vconfig.mode = RolloutMode::vanilla;
    CorpusEnvironment normal(fix.bundle, fix.rconfig, summarizer);
    AdversarialEnvironment decoy(fix.bundle, fix.rconfig, summarizer);
    auto a = run_episode(fix.diag_case, v1, normal, vconfig);
    auto b = run_episode(fix.diag_case, v2, decoy, vconfig);
    expect(a.reward.combined == b.reward.combined, "vanilla reward must be unchanged");
    expect(a.generated == b.generated, "vanilla transcript must be unchanged");
}

// --------------------------------------------------------------------------
// C11: service equivalence, readiness and error codes
// --------------------------------------------------------------------------
void c11_service() {
    auto fix = fixtures::make_case_replay();
    auto env = std::make_shared<CorpusEnvironment>(
        fix.bundle, fix.rconfig,
        std::make_shared<TruncationSummarizer>(fix.rconfig.summarize_budget));
    ServiceConfig sconfig;
    sconfig.port = 0;
    RetrievalService service(env, sconfig);
    int port = service.start();
    httplib::Client client("127.0.0.1", port);

    auto health = client.Get("/healthz");
    expect(health && health->status == 200, "healthz must be ready");
    expect(json::parse(health->body)["status"] == "ready", "healthz status field");

    json batch = json::array();
    for (int i = 0; i < 50; ++i) {
        json req;
        req["phenotypes"] = {"thrombocytopenia", "case " + std::to_string(i % 9)};
        req["top_n"] = 3;
        batch.push_back(req);
    }
    auto batch_res = client.Post("/match", batch.dump(), "application/json");
    expect(batch_res && batch_res->status == 200, "batch request must succeed");
    auto batch_body = json::parse(batch_res->body);
    expect(batch_body.is_array() && batch_body.size() == 50, "batch must echo 50 rows");
    for (int i = 0; i < 50; ++i) {
        auto single = client.Post("/match", batch[i].dump(), "application/json");
        expect(single && single->status == 200, "single request must succeed");
        expect(batch_body[static_cast<std::size_t>(i)].dump() == single->body,
               "batch row must equal the sequential response byte-for-byte");
    }

    json bad;
    bad["source"] = "XYZ";
    bad["queries"] = {"q"};
    auto res = client.Post("/search", bad.dump(), "application/json");
    expect(res && res->status == 400, "unknown source must 400");
    expect(json::parse(res->body)["error"]["code"] == "unknown_source",
           "unknown_source code");

    service.stop();
}

struct Criterion {
    const char* id;
    const char* label;
    double budget_seconds;
    std::function<void()> run;
};

}  // namespace

int main() {
    const std::vector<Criterion> criteria = {
        {"C1", "reward fixtures match hand evaluation within 1e-9", 1.0,
         c1_reward_fixtures},
        {"C2", "format gate agrees with the independent evaluator on 1000 mutations",
         10.0, c2_format_fuzz},
        {"C3", "BM25 index equals brute force on 200 docs x 50 queries", 5.0,
         c3_bm25_oracle},
        {"C4", "patient matcher equals brute-force Sim on 500 records", 10.0,
         c4_matcher_oracle},
        {"C5", "case replay: sigma_f 1, six env invocations, correct offsets", 1.0,
         c5_rollout_replay},
        {"C6", "GRPO math: normalization, KL >= 0, gradient check", 30.0, c6_grpo_math},
        {"C7", "toy GRPO training improves >= 50% and concentrates > 0.9", 60.0,
         c7_toy_training},
        {"C8", "stage schedule reproduces the four weight vectors exactly", 1.0,
         c8_stage_schedule},
        {"C9", "metrics equal hand counts on the 20-episode fixture", 5.0, c9_metrics},
        {"C10", "adversarial mode: zero hit rate, vanilla controls unchanged", 5.0,
         c10_adversarial},
        {"C11", "service: batch equals sequential byte-for-byte, ready, error codes",
         30.0, c11_service},
    };

    int failed = 0;
    for (const auto& c : criteria) {
        auto start = std::chrono::steady_clock::now();
        std::string error;
        try {
            c.run();
        } catch (const std::exception& e) {
            error = e.what();
        }
        double seconds =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        if (error.empty() && seconds > c.budget_seconds) {
            std::ostringstream msg;
            msg << "exceeded runtime budget (" << seconds << "s > " << c.budget_seconds
                << "s)";
            error = msg.str();
        }
        char timing[32];
        std::snprintf(timing, sizeof(timing), "%.2fs", seconds);
        if (error.empty()) {
            std::cout << "[PASS] " << c.id << " " << c.label << " (" << timing << ")\n";
        } else {
            std::cout << "[FAIL] " << c.id << " " << c.label << " (" << timing
                      << "): " << error << "\n";
            ++failed;
        }
    }
    if (failed != 0) {
        std::cout << failed << " criterion(s) failed\n";
        return 1;
    }
    std::cout << "all " << criteria.size() << " acceptance criteria passed\n";
    return 0;
}
