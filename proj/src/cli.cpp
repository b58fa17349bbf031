#include "dxrag/cli.hpp"

#include <filesystem>
#include <fstream>
#include <future>
#include <iostream>
#include <map>
#include <thread>

#include "CLI11.hpp"
#include "dxrag/grpo.hpp"
#include "dxrag/metrics.hpp"
#include "dxrag/rollout.hpp"
#include "dxrag/service.hpp"
#include "dxrag/text.hpp"
#include "json.hpp"

namespace dxrag::cli {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct ExitWith {
    int code;
    std::string message;
};

json load_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ExitWith{kDataError, "cannot open file: " + path};
    json j = json::parse(in, nullptr, false);
    if (j.is_discarded()) throw ExitWith{kConfigError, "invalid JSON in " + path};
    return j;
}

// Known config-file keys; anything else is rejected with one message per key.
const std::map<std::string, std::vector<std::string>> kConfigSchema = {
    {"", {"store", "cases", "policy", "mode", "adversarial", "seed", "out"}},
    {"limits",
     {"max_match", "max_search", "max_lookup", "max_diagnoses", "max_lookup_diseases",
      "queries_per_search"}},
    {"reward",
     {"k", "max_n", "sim_diag_uses_exponent", "dedupe_match_in_combo", "stage",
      "gate_content_rules", "gate_reason_separation", "weights"}},
    {"reward.weights", {"w_m", "w_s", "w_d"}},
    {"retrieval", {"tau", "k_pheno", "top_n", "top_k", "summarize_budget", "embed_dim",
                   "k1", "b"}},
    {"rollout", {"l_max", "max_new", "group_size", "enforce_limits", "length_unit"}},
    {"train", {"iters", "group_size", "beta", "lr", "staged"}},
    {"service",
     {"bind", "port", "max_batch", "only", "summarizer", "summarizer_host",
      "summarizer_port"}},
    {"eval", {"matcher", "threshold", "hit_n"}},
};

std::vector<std::string> validate_config_keys(const json& j) {
    std::vector<std::string> errors;
    auto check_level = [&](const json& node, const std::string& prefix) {
        auto it = kConfigSchema.find(prefix);
        for (const auto& [key, value] : node.items()) {
            std::string path = prefix.empty() ? key : prefix + "." + key;
            bool known = false;
            if (it != kConfigSchema.end()) {
                known = std::find(it->second.begin(), it->second.end(), key) !=
                        it->second.end();
            }
            if (!known && kConfigSchema.count(path) != 0) known = true;
            if (!known) errors.push_back("unknown config key: " + path);
        }
    };
    check_level(j, "");
    for (const auto& [key, value] : j.items()) {
        if (value.is_object()) {
            check_level(value, key);
            for (const auto& [k2, v2] : value.items()) {
                if (v2.is_object()) check_level(v2, key + "." + k2);
            }
        }
    }
    return errors;
}

/// Applies config-file values as defaults for options the user did not pass.
struct FileDefaults {
    json data;
    bool loaded = false;
    std::vector<std::string> errors;

    const json* resolve(const std::string& dotted) const {
        if (!loaded) return nullptr;
        const json* node = &data;
        std::size_t start = 0;
        while (start <= dotted.size()) {
            std::size_t dot = dotted.find('.', start);
            std::string key = dotted.substr(start, dot - start);
            if (!node->is_object() || !node->contains(key)) return nullptr;
            node = &(*node)[key];
            if (dot == std::string::npos) break;
            start = dot + 1;
        }
        return node;
    }

    template <typename T>
    void apply(const CLI::Option* opt, T& target, const std::string& path) {
        if (opt != nullptr && opt->count() > 0) return;  // flag overrides file
        const json* node = resolve(path);
        if (node == nullptr) return;
        try {
            target = node->get<T>();
        } catch (const std::exception&) {
            errors.push_back("config value has wrong type: " + path);
        }
    }
};

FileDefaults load_file_defaults(const std::string& path) {
    FileDefaults fd;
    if (path.empty()) return fd;
    fd.data = load_json_file(path);
    fd.loaded = true;
    auto unknown = validate_config_keys(fd.data);
    fd.errors.insert(fd.errors.end(), unknown.begin(), unknown.end());
    return fd;
}

void fail_on_config_errors(const std::vector<std::string>& errors) {
    if (errors.empty()) return;
    std::string all = "configuration errors:";
    for (const auto& e : errors) all += "\n  - " + e;
    throw ExitWith{kConfigError, all};
}

RewardWeights parse_weights_smd(const std::string& spec) {
    auto parts = split_list(spec);
    if (parts.size() != 3) {
        throw ExitWith{kConfigError, "--weights expects \"S,M,D\", e.g. 0.3,0.3,0.4"};
    }
    RewardWeights w;
    try {
        w.w_s = std::stod(parts[0]);
        w.w_m = std::stod(parts[1]);
        w.w_d = std::stod(parts[2]);
    } catch (const std::exception&) {
        throw ExitWith{kConfigError, "--weights values must be numbers"};
    }
    for (double v : {w.w_s, w.w_m, w.w_d}) {
        if (v < 0.0 || v > 1.0) {
            throw ExitWith{kConfigError, "--weights values must be in [0,1]"};
        }
    }
    return w;
}

void print_resolved(const std::string& command, const json& resolved) {
    json j;
    j["command"] = command;
    j["config"] = resolved;
    std::cerr << j.dump() << "\n";
}

std::vector<DiagnosticCase> load_cases_or_fail(const std::string& path) {
    IngestReport report;
    try {
        auto cases = ingest_cases(path, report, /*strict=*/false);
        if (cases.empty()) {
            std::cerr << "warning: no valid cases in " << path << "\n";
        }
        for (const auto& e : report.errors) std::cerr << "warning: " << e << "\n";
        return cases;
    } catch (const std::exception& e) {
        throw ExitWith{kDataError, e.what()};
    }
}

// ---------------------------------------------------------------------------
// ingest
// ---------------------------------------------------------------------------

int cmd_ingest(const std::string& guideline, const std::string& patients,
               const std::string& knowledge, const std::string& cases,
               const std::string& out_dir, bool strict) {
    IngestReport g_report, p_report, k_report, c_report;
    GuidelineStore g;
    PatientStore p;
    KnowledgeStore k;
    std::vector<DiagnosticCase> case_list;
    try {
        g = ingest_guideline(guideline, g_report, strict);
        p = ingest_patients(patients, p_report, strict);
        k = ingest_knowledge(knowledge, k_report, strict);
        if (!cases.empty()) case_list = ingest_cases(cases, c_report, strict);
    } catch (const std::exception& e) {
        throw ExitWith{kDataError, e.what()};
    }

    fs::create_directories(out_dir);
    write_guideline(g, (fs::path(out_dir) / "guideline.jsonl").string());
    write_patients(p, (fs::path(out_dir) / "patients.jsonl").string());
    write_knowledge(k, (fs::path(out_dir) / "knowledge.jsonl").string());
    json manifest;
    manifest["version"] = 1;
    manifest["files"] = {{"guideline", "guideline.jsonl"},
                         {"patients", "patients.jsonl"},
                         {"knowledge", "knowledge.jsonl"}};
    if (!cases.empty()) {
        std::ofstream out(fs::path(out_dir) / "cases.jsonl");
        for (const auto& c : case_list) out << to_json_line(c) << "\n";
        manifest["files"]["cases"] = "cases.jsonl";
    }
    manifest["counts"] = {{"guideline", g.size()},
                          {"patients", p.size()},
                          {"knowledge", k.size()},
                          {"cases", case_list.size()}};
    manifest["skipped"] = {{"guideline", g_report.skipped},
                           {"patients", p_report.skipped},
                           {"knowledge", k_report.skipped},
                           {"cases", c_report.skipped}};
    std::ofstream mout(fs::path(out_dir) / "manifest.json");
    mout << manifest.dump(2) << "\n";

    std::cout << manifest.dump(2) << "\n";
    for (const auto* rep : {&g_report, &p_report, &k_report, &c_report}) {
        for (const auto& e : rep->errors) std::cerr << "skipped: " << e << "\n";
    }
    return kOk;
}

}  // namespace

CorpusBundle load_store(const std::string& dir) {
    json manifest = load_json_file((fs::path(dir) / "manifest.json").string());
    if (!manifest.contains("files")) {
        throw ExitWith{kDataError, "store manifest lacks a files section: " + dir};
    }
    auto file_of = [&](const char* key) {
        return (fs::path(dir) / manifest["files"][key].get<std::string>()).string();
    };
    CorpusBundle bundle;
    IngestReport report;
    try {
        bundle.guideline = ingest_guideline(file_of("guideline"), report, /*strict=*/true);
        bundle.patients = ingest_patients(file_of("patients"), report, /*strict=*/true);
        bundle.knowledge = ingest_knowledge(file_of("knowledge"), report, /*strict=*/true);
    } catch (const ExitWith&) {
        throw;
    } catch (const std::exception& e) {
        throw ExitWith{kDataError, std::string("store load failed: ") + e.what()};
    }
    return bundle;
}

namespace {

RetrievalConfig retrieval_from_flags(double tau, std::size_t k_pheno, std::size_t top_n,
                                     std::size_t top_k, std::size_t summarize_budget,
                                     std::size_t embed_dim) {
    RetrievalConfig rc;
    rc.tau = tau;
    rc.k_pheno = k_pheno;
    rc.top_n = top_n;
    rc.top_k = top_k;
    rc.summarize_budget = summarize_budget;
    rc.embed_dim = embed_dim;
    return rc;
}

// ---------------------------------------------------------------------------
// serve
// ---------------------------------------------------------------------------

int cmd_serve(const std::string& store_dir, const std::string& bind, int port,
              std::size_t max_batch, const std::vector<std::string>& only,
              const std::string& summarizer_kind, const std::string& summarizer_host,
              int summarizer_port, bool request_log, const RetrievalConfig& rconfig) {
    auto bundle = std::make_shared<CorpusBundle>(load_store(store_dir));
    std::shared_ptr<Summarizer> summarizer;
    if (summarizer_kind == "stub") {
        summarizer = std::make_shared<TruncationSummarizer>(rconfig.summarize_budget);
    } else if (summarizer_kind == "remote") {
        summarizer = std::make_shared<RemoteSummarizer>(summarizer_host, summarizer_port);
    } else {
        throw ExitWith{kConfigError, "--summarizer must be stub or remote"};
    }
    auto env = std::make_shared<CorpusEnvironment>(bundle, rconfig, summarizer);
    ServiceConfig sconfig;
    sconfig.bind_address = bind;
    sconfig.port = port;
    sconfig.max_batch = max_batch;
    sconfig.request_log = request_log;
    for (const auto& o : only) {
        if (o != "lookup" && o != "match" && o != "search" && o != "summarize") {
            throw ExitWith{kConfigError, "--only accepts lookup|match|search|summarize"};
        }
        sconfig.only.insert(o);
    }
    RetrievalService service(env, sconfig);
    std::cerr << "listening on " << bind << ":" << port << "\n";
    return service.serve_forever() == 0 ? kOk : kRuntimeError;
}

// ---------------------------------------------------------------------------
// rollout
// ---------------------------------------------------------------------------

std::unique_ptr<PolicyClient> make_policy(const std::string& spec) {
    auto colon = spec.find(':');
    std::string kind = spec.substr(0, colon);
    std::string arg = colon == std::string::npos ? "" : spec.substr(colon + 1);
    if (kind == "scripted") {
        if (arg.empty()) throw ExitWith{kConfigError, "policy scripted:FILE needs a path"};
        return std::make_unique<ScriptedPolicy>(ScriptedPolicy::from_file(arg));
    }
    if (kind == "toy") {
        if (arg.empty()) throw ExitWith{kConfigError, "policy toy:FILE needs a vocab path"};
        std::ifstream in(arg);
        if (!in) throw ExitWith{kDataError, "cannot open vocab file: " + arg};
        std::vector<std::string> vocab;
        std::string line;
        while (std::getline(in, line)) {
            if (trim(line).empty()) continue;
            json j = json::parse(line, nullptr, false);
            if (j.is_discarded() || !j.contains("text")) {
                throw ExitWith{kDataError, "vocab line is not a {\"text\": ...} object"};
            }
            vocab.push_back(j["text"].get<std::string>());
        }
        if (vocab.empty()) throw ExitWith{kDataError, "vocab file is empty"};
        return std::make_unique<ToyVocabPolicy>(std::move(vocab));
    }
    if (kind == "remote") {
        auto sep = arg.rfind(':');
        if (sep == std::string::npos) {
            throw ExitWith{kConfigError, "policy remote:HOST:PORT needs host and port"};
        }
        return std::make_unique<RemotePolicyClient>(arg.substr(0, sep),
                                                    std::stoi(arg.substr(sep + 1)));
    }
    throw ExitWith{kConfigError, "policy must be scripted:FILE, toy:FILE or remote:HOST:PORT"};
}

int cmd_rollout(const std::string& store_dir, const std::string& cases_path,
                const std::string& policy_spec, const std::string& mode_name,
                const std::string& out_path, const RolloutConfig& base_config,
                std::size_t group_size, bool adversarial, const RetrievalConfig& rconfig) {
    auto bundle = std::make_shared<CorpusBundle>(load_store(store_dir));
    auto cases = load_cases_or_fail(cases_path);
    auto policy = make_policy(policy_spec);

    RolloutConfig config = base_config;
    auto mode = rollout_mode_from_string(mode_name);
    if (!mode) throw ExitWith{kConfigError, "--mode must be agentic|vanilla|rag_free"};
    config.mode = *mode;

    auto summarizer = std::make_shared<TruncationSummarizer>(rconfig.summarize_budget);
    std::unique_ptr<Environment> env;
    if (adversarial) {
        env = std::make_unique<AdversarialEnvironment>(bundle, rconfig, summarizer,
                                                       config.seed);
    } else {
        env = std::make_unique<CorpusEnvironment>(bundle, rconfig, summarizer);
    }

    auto results = run_batch(cases, *policy, *env, config, group_size);

    std::ostream* out = &std::cout;
    std::ofstream file;
    if (!out_path.empty()) {
        file.open(out_path, std::ios::trunc);
        if (!file) throw ExitWith{kRuntimeError, "cannot write " + out_path};
        out = &file;
    }
    double reward_sum = 0.0;
    std::map<std::string, std::size_t> status_counts;
    for (const auto& r : results) {
        (*out) << episode_to_json_line(r) << "\n";
        reward_sum += r.reward.combined;
        status_counts[to_string(r.status)] += 1;
    }
    json summary;
    summary["episodes"] = results.size();
    summary["mean_combined_reward"] =
        results.empty() ? 0.0 : reward_sum / static_cast<double>(results.size());
    summary["status"] = status_counts;

    // Logging parity: when the policy supplies per-token log-probabilities and
    // sampling is grouped, report the GRPO objective over each case group.
    if (group_size >= 2) {
        double objective_sum = 0.0;
        std::size_t groups = 0;
        for (std::size_t start = 0; start + group_size <= results.size();
             start += group_size) {
            GroupBatch batch;
            bool has_logprobs = true;
            for (std::size_t g = 0; g < group_size; ++g) {
                const auto& r = results[start + g];
                if (r.logprobs.empty()) {
                    has_logprobs = false;
                    break;
                }
                batch.rewards.push_back(r.reward.combined);
                batch.logp_cur.push_back(r.logprobs);
            }
            if (!has_logprobs) continue;
            objective_sum += grpo_objective(batch, 0.0);
            ++groups;
        }
        if (groups > 0) {
            summary["mean_group_objective"] =
                objective_sum / static_cast<double>(groups);
        }
    }
    std::cerr << summary.dump() << "\n";
    return kOk;
}

// ---------------------------------------------------------------------------
// reward
// ---------------------------------------------------------------------------

int cmd_reward(const std::string& transcripts_path, const std::string& gt_path,
               const RewardWeights& weights, const RewardConfig& config,
               const std::string& out_path, std::size_t jobs) {
    auto cases = load_cases_or_fail(gt_path);
    std::map<std::string, std::vector<std::string>> gt_by_case;
    for (const auto& c : cases) gt_by_case[c.case_id] = c.ground_truth_diagnoses;

    std::ifstream in(transcripts_path);
    if (!in) throw ExitWith{kDataError, "cannot open transcripts: " + transcripts_path};
    struct Row {
        std::string case_id;
        std::string text;
    };
    std::vector<Row> rows;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        json j = json::parse(line, nullptr, false);
        if (j.is_discarded() || !j.is_object() || !j.contains("case_id") ||
            !j.contains("text")) {
            throw ExitWith{kDataError, transcripts_path + ":" + std::to_string(line_no) +
                                           ": expected {case_id, text}"};
        }
        rows.push_back({j["case_id"].get<std::string>(), j["text"].get<std::string>()});
    }
    for (const auto& row : rows) {
        if (gt_by_case.count(row.case_id) == 0) {
            throw ExitWith{kDataError, "no ground truth for case_id " + row.case_id};
        }
    }

    std::vector<RewardBreakdown> breakdowns(rows.size());
    auto score_range = [&](std::size_t begin, std::size_t end) {
        for (std::size_t i = begin; i < end; ++i) {
            Transcript t = parse(rows[i].text);
            breakdowns[i] = compute_reward(t, gt_by_case[rows[i].case_id], weights, config);
        }
    };
    std::size_t workers = std::max<std::size_t>(1, jobs);
    if (workers == 1 || rows.size() < 2) {
        score_range(0, rows.size());
    } else {
        std::vector<std::thread> pool;
        std::size_t chunk = (rows.size() + workers - 1) / workers;
        for (std::size_t w = 0; w < workers; ++w) {
            std::size_t begin = w * chunk;
            std::size_t end = std::min(rows.size(), begin + chunk);
            if (begin >= end) break;
            pool.emplace_back(score_range, begin, end);
        }
        for (auto& th : pool) th.join();
    }

    std::ostream* out = &std::cout;
    std::ofstream file;
    if (!out_path.empty()) {
        file.open(out_path, std::ios::trunc);
        if (!file) throw ExitWith{kRuntimeError, "cannot write " + out_path};
        out = &file;
    }
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const auto& b = breakdowns[i];
        json j;
        j["case_id"] = rows[i].case_id;
        j["sigma_f"] = b.sigma_f;
        j["rwd_m"] = b.rwd_m;
        j["rwd_s"] = b.rwd_s;
        j["rwd_d"] = b.rwd_d;
        j["combined"] = b.combined;
        j["n_match"] = b.n_match;
        j["diversity_ok"] = b.diversity_ok;
        j["sim_diag"] = b.sim_diag;
        j["match_hit"] = b.match_hit;
        j["structure_violation"] = b.structure_violation;
        json violations = json::array();
        for (const auto& v : b.violations) violations.push_back(to_string(v.rule));
        j["violations"] = violations;
        json warnings = json::array();
        for (const auto& v : b.warnings) warnings.push_back(to_string(v.rule));
        j["warnings"] = warnings;
        (*out) << j.dump() << "\n";
    }
    return kOk;
}

// ---------------------------------------------------------------------------
// eval
// ---------------------------------------------------------------------------

std::vector<EpisodeOutcome> load_outcomes(const std::string& results_path) {
    std::ifstream in(results_path);
    if (!in) throw ExitWith{kDataError, "cannot open results: " + results_path};
    std::vector<EpisodeOutcome> outcomes;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        json j = json::parse(line, nullptr, false);
        if (j.is_discarded() || !j.is_object()) {
            throw ExitWith{kDataError,
                           results_path + ":" + std::to_string(line_no) + ": invalid JSON"};
        }
        EpisodeOutcome o;
        o.case_id = j.value("case_id", "");
        o.dataset = j.value("dataset", "");
        if (j.contains("reward") && j["reward"].is_object()) {
            o.sigma_f = j["reward"].value("sigma_f", 1);
        }
        if (j.contains("diagnoses")) {
            for (const auto& d : j["diagnoses"]) o.diagnoses.push_back(d.get<std::string>());
        }
        if (j.contains("ground_truth")) {
            for (const auto& d : j["ground_truth"]) {
                o.ground_truth.push_back(d.get<std::string>());
            }
        }
        if (j.contains("env_trace")) {
            for (const auto& entry : j["env_trace"]) {
                if (entry.value("kind", "") != "match") continue;
                std::vector<std::string> retrieved;
                for (const auto& d : entry["match_diagnoses"]) {
                    retrieved.push_back(d.get<std::string>());
                }
                o.match_retrievals.push_back(std::move(retrieved));
            }
        }
        if (j.contains("text")) {
            Transcript t = parse(j["text"].get<std::string>());
            for (const auto& b : t.blocks) {
                if (b.kind == ActionKind::reason) o.reason_texts.push_back(b.payload);
            }
        }
        outcomes.push_back(std::move(o));
    }
    return outcomes;
}

int cmd_eval(const std::string& results_path, const std::string& matcher_name,
             double threshold, const std::string& n_spec, std::size_t hit_n,
             bool text_output, const std::string& out_path) {
    DiseaseMatcher matcher;
    if (matcher_name == "normalized_exact") {
        matcher.mode = DiseaseMatcher::Mode::normalized_exact;
    } else if (matcher_name == "token_f1") {
        matcher.mode = DiseaseMatcher::Mode::token_f1;
        matcher.threshold = threshold;
    } else {
        throw ExitWith{kConfigError, "--matcher must be normalized_exact or token_f1"};
    }
    std::vector<std::size_t> cutoffs;
    for (const auto& item : split_list(n_spec)) {
        try {
            long v = std::stol(item);
            if (v < 1) throw std::invalid_argument("n");
            cutoffs.push_back(static_cast<std::size_t>(v));
        } catch (const std::exception&) {
            throw ExitWith{kConfigError, "--n expects positive integers, e.g. 1,5"};
        }
    }
    if (cutoffs.empty()) throw ExitWith{kConfigError, "--n must name at least one cutoff"};
    auto outcomes = load_outcomes(results_path);
    MetricsReport rep = report(outcomes, matcher, cutoffs, hit_n);
    std::string rendered = text_output ? to_text(rep) : to_json(rep) + "\n";
    if (out_path.empty()) {
        std::cout << rendered;
    } else {
        std::ofstream file(out_path, std::ios::trunc);
        if (!file) throw ExitWith{kRuntimeError, "cannot write " + out_path};
        file << rendered;
    }
    return kOk;
}

// ---------------------------------------------------------------------------
// train-toy
// ---------------------------------------------------------------------------

int cmd_train_toy(const std::string& vocab_path, const std::string& gt_path,
                  const ToyTrainConfig& config, const RewardConfig& reward_config,
                  const std::string& trace_path, const std::string& format) {
    std::ifstream in(vocab_path);
    if (!in) throw ExitWith{kDataError, "cannot open vocab: " + vocab_path};
    std::vector<std::string> vocab;
    std::string line;
    while (std::getline(in, line)) {
        if (trim(line).empty()) continue;
        json j = json::parse(line, nullptr, false);
        if (j.is_discarded() || !j.contains("text")) {
            throw ExitWith{kDataError, "vocab line is not a {\"text\": ...} object"};
        }
        vocab.push_back(j["text"].get<std::string>());
    }
    if (vocab.size() < 2) throw ExitWith{kDataError, "vocab needs at least two elements"};

    auto cases = load_cases_or_fail(gt_path);
    if (cases.empty()) throw ExitWith{kDataError, "ground-truth case file is empty"};
    const auto& gt = cases.front().ground_truth_diagnoses;

    // Reward components per element are weight-independent; stage weights only
    // change the combination.
    struct Components {
        int sigma_f;
        double m, s, d;
    };
    std::vector<Components> components;
    components.reserve(vocab.size());
    for (const auto& text : vocab) {
        Transcript t = parse(text);
        RewardBreakdown b = compute_reward(t, gt, stage_weights(4), reward_config);
        components.push_back({b.sigma_f, b.rwd_m, b.rwd_s, b.rwd_d});
    }
    auto reward_fn = [&](std::size_t index, const RewardWeights& w) {
        const auto& c = components[index];
        return combine(c.sigma_f, c.m, c.s, c.d, w);
    };

    ToyPolicy policy;
    policy.logits.assign(vocab.size(), 0.0);
    TrainTrace trace = train_toy(policy, vocab.size(), reward_fn, config);

    std::string rendered = format == "csv" ? trace_to_csv(trace) : trace_to_json(trace);
    if (trace_path.empty()) {
        std::cout << rendered;
    } else {
        std::ofstream file(trace_path, std::ios::trunc);
        if (!file) throw ExitWith{kRuntimeError, "cannot write " + trace_path};
        file << rendered;
    }

    json summary;
    if (!trace.iterations.empty()) {
        summary["first_mean_reward"] = trace.iterations.front().mean_reward;
        summary["last_mean_reward"] = trace.iterations.back().mean_reward;
        summary["argmax_index"] = trace.iterations.back().argmax_index;
        summary["argmax_prob"] = trace.iterations.back().argmax_prob;
    }
    summary["diverged"] = trace.diverged;
    std::cerr << summary.dump() << "\n";
    return trace.diverged ? kRuntimeError : kOk;
}

}  // namespace

int run(std::vector<std::string> args) {
    CLI::App app{"diagnostic retrieval-augmented episode engine"};
    app.require_subcommand(1);

    // Shared option storage.
    std::string config_path;
    std::uint64_t seed = 0;

    // ingest
    auto* ingest = app.add_subcommand("ingest", "load corpus files into a store directory");
    std::string g_path, p_path, k_path, c_path, out_dir;
    bool strict = false;
    ingest->add_option("--guideline", g_path, "guideline JSONL")->required();
    ingest->add_option("--patients", p_path, "patient record JSONL")->required();
    ingest->add_option("--knowledge", k_path, "knowledge chunk JSONL")->required();
    ingest->add_option("--cases", c_path, "diagnostic case JSONL");
    ingest->add_option("--out", out_dir, "output store directory")->required();
    ingest->add_flag("--strict", strict, "abort on the first malformed line");
    ingest->add_option("--seed", seed, "run seed (recorded only)");

    // serve
    auto* serve = app.add_subcommand("serve", "serve the retrieval environment over HTTP");
    std::string store_dir, bind = "127.0.0.1";
    int port = 8080;
    std::size_t max_batch = 64;
    std::vector<std::string> only;
    std::string summarizer_kind = "stub", summarizer_host = "127.0.0.1";
    int summarizer_port = 9090;
    double tau = 0.5;
    std::size_t k_pheno = 10, top_n = 20, top_k = 5, summarize_budget = 1000, embed_dim = 64;
    auto add_retrieval_flags = [&](CLI::App* cmd) {
        cmd->add_option("--tau", tau, "BM25 acceptance threshold");
        cmd->add_option("--k-pheno", k_pheno, "phenotypes per matched disease");
        cmd->add_option("--top-n", top_n, "patient matches returned");
        cmd->add_option("--top-k", top_k, "knowledge chunks per query");
        cmd->add_option("--summarize-budget", summarize_budget,
                        "document chars before summarization");
        cmd->add_option("--embed-dim", embed_dim, "hash embedder dimension");
    };
    bool request_log = false;
    serve->add_option("--store", store_dir, "store directory (env DXRAG_STORE)")
        ->envname("DXRAG_STORE")
        ->required();
    serve->add_option("--bind", bind, "bind address (env DXRAG_BIND)")
        ->envname("DXRAG_BIND");
    serve->add_option("--port", port, "port (env DXRAG_PORT)")->envname("DXRAG_PORT");
    serve->add_option("--max-batch", max_batch, "max requests per batch");
    serve->add_option("--only", only, "restrict endpoints")->delimiter(',');
    serve->add_option("--summarizer", summarizer_kind, "stub or remote");
    serve
        ->add_option("--summarizer-host", summarizer_host,
                     "remote summarizer host (env DXRAG_SUMMARIZER_HOST)")
        ->envname("DXRAG_SUMMARIZER_HOST");
    serve
        ->add_option("--summarizer-port", summarizer_port,
                     "remote summarizer port (env DXRAG_SUMMARIZER_PORT)")
        ->envname("DXRAG_SUMMARIZER_PORT");
    serve->add_flag("--request-log", request_log, "JSON-lines request log on stderr");
    serve->add_option("--seed", seed, "run seed (recorded only)");
    add_retrieval_flags(serve);

    // rollout
    auto* rollout = app.add_subcommand("rollout", "run interleaved episodes");
    std::string cases_path, policy_spec, mode_name = "agentic", out_path;
    std::size_t l_max = 8000, max_new = 4096, group_size = 1;
    bool adversarial = false, enforce_limits = false;
    int stage = 4;
    std::string weights_spec;
    std::string length_unit = "chars";
    rollout->add_option("--store", store_dir, "store directory")->required();
    rollout->add_option("--cases", cases_path, "diagnostic case JSONL")->required();
    rollout->add_option("--policy", policy_spec,
                        "scripted:FILE | toy:FILE | remote:HOST:PORT")->required();
    rollout->add_option("--mode", mode_name, "agentic | vanilla | rag_free");
    rollout->add_option("--out", out_path, "results JSONL (default stdout)");
    rollout->add_option("--l-max", l_max, "generated-length budget");
    rollout->add_option("--max-new", max_new, "per-delta generation cap");
    rollout->add_option("--group-size", group_size, "episodes per case");
    rollout->add_option("--seed", seed, "base seed");
    auto* stage_opt = rollout->add_option("--stage", stage, "reward stage 1..4");
    auto* weights_opt =
        rollout->add_option("--weights", weights_spec, "explicit weights \"S,M,D\"");
    rollout->add_flag("--adversarial", adversarial, "serve gt-disjoint decoy feedback");
    rollout->add_flag("--enforce-limits", enforce_limits, "cap tool calls at FormatLimits");
    rollout->add_option("--length-unit", length_unit, "chars | provider_tokens");
    add_retrieval_flags(rollout);
    rollout->add_option("--config", config_path, "JSON config file (flags override)");

    // reward
    auto* reward_cmd = app.add_subcommand("reward", "re-score transcripts offline");
    std::string transcripts_path, gt_path;
    int k_exp = 3;
    std::size_t max_n = 6;
    bool dedupe = false, raw_sim = false, strict_content = false, strict_reason = false;
    std::size_t jobs = 1;
    reward_cmd->add_option("--transcripts", transcripts_path, "JSONL of {case_id, text}")
        ->required();
    reward_cmd->add_option("--gt", gt_path, "diagnostic case JSONL")->required();
    auto* r_stage_opt = reward_cmd->add_option("--stage", stage, "reward stage 1..4");
    auto* r_weights_opt =
        reward_cmd->add_option("--weights", weights_spec, "explicit weights \"S,M,D\"");
    reward_cmd->add_option("--k", k_exp, "similarity exponent (reward = frac^(1/k))");
    reward_cmd->add_option("--max-n", max_n, "max search query mentions");
    reward_cmd->add_flag("--dedupe-match-in-combo", dedupe,
                         "drop the weighted Rwd_M term from the combination");
    reward_cmd->add_flag("--raw-sim-diag", raw_sim, "sim_diag without the exponent");
    reward_cmd->add_flag("--strict-content", strict_content, "gate R11 content checks");
    reward_cmd->add_flag("--strict-reason", strict_reason, "gate R12 reason separation");
    reward_cmd->add_option("--out", out_path, "breakdown JSONL (default stdout)");
    reward_cmd->add_option("--jobs", jobs, "parallel scoring threads");
    reward_cmd->add_option("--seed", seed, "run seed (recorded only)");

    // eval
    auto* eval_cmd = app.add_subcommand("eval", "compute metrics over results");
    std::string results_path, matcher_name = "normalized_exact", n_spec = "1,5";
    double threshold = 0.6;
    std::size_t hit_n = 20;
    bool text_output = false;
    eval_cmd->add_option("--results", results_path, "results JSONL")->required();
    eval_cmd->add_option("--matcher", matcher_name, "normalized_exact | token_f1");
    eval_cmd->add_option("--threshold", threshold, "token_f1 threshold");
    eval_cmd->add_option("--n", n_spec, "Acc@N cutoffs, e.g. 1,5");
    eval_cmd->add_option("--hit-n", hit_n, "Hit@N cutoff");
    eval_cmd->add_flag("--text", text_output, "aligned text rendering");
    eval_cmd->add_option("--out", out_path, "write report here instead of stdout");
    eval_cmd->add_option("--seed", seed, "run seed (recorded only)");

    // train-toy
    auto* train = app.add_subcommand("train-toy", "GRPO training over a toy vocabulary");
    std::string vocab_path, trace_path, trace_format = "json";
    int iters = 200, t_group = 8;
    double beta = 0.01, lr = 0.5;
    bool staged = false;
    train->add_option("--vocab", vocab_path, "JSONL of {text} canned transcripts")
        ->required();
    train->add_option("--gt", gt_path, "diagnostic case JSONL (first case's labels)")
        ->required();
    train->add_option("--iters", iters, "iterations");
    train->add_option("--group-size", t_group, "samples per update");
    train->add_option("--beta", beta, "KL penalty weight");
    train->add_option("--lr", lr, "learning rate on logits");
    train->add_flag("--staged", staged, "run the four-stage weight schedule");
    train->add_option("--trace", trace_path, "trace output (default stdout)");
    train->add_option("--format", trace_format, "csv | json");
    train->add_option("--k", k_exp, "similarity exponent");
    train->add_option("--max-n", max_n, "max search query mentions");
    train->add_option("--seed", seed, "training seed");

    std::vector<char*> argv_storage;
    std::vector<std::string> owned = std::move(args);
    argv_storage.push_back(const_cast<char*>("dxrag"));
    for (auto& a : owned) argv_storage.push_back(a.data());

    try {
        app.parse(static_cast<int>(argv_storage.size()), argv_storage.data());
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? kOk : kConfigError;
    }

    try {
        if (*ingest) {
            print_resolved("ingest", json{{"guideline", g_path},
                                          {"patients", p_path},
                                          {"knowledge", k_path},
                                          {"cases", c_path},
                                          {"out", out_dir},
                                          {"strict", strict},
                                          {"seed", seed}});
            return cmd_ingest(g_path, p_path, k_path, c_path, out_dir, strict);
        }
        if (*serve) {
            auto rconfig = retrieval_from_flags(tau, k_pheno, top_n, top_k,
                                                summarize_budget, embed_dim);
            print_resolved("serve", json{{"store", store_dir},
                                         {"bind", bind},
                                         {"port", port},
                                         {"max_batch", max_batch},
                                         {"summarizer", summarizer_kind},
                                         {"tau", tau},
                                         {"seed", seed}});
            return cmd_serve(store_dir, bind, port, max_batch, only, summarizer_kind,
                             summarizer_host, summarizer_port, request_log, rconfig);
        }
        if (*rollout) {
            FileDefaults fd = load_file_defaults(config_path);
            fd.apply(rollout->get_option("--l-max"), l_max, "rollout.l_max");
            fd.apply(rollout->get_option("--max-new"), max_new, "rollout.max_new");
            fd.apply(rollout->get_option("--group-size"), group_size, "rollout.group_size");
            fd.apply(rollout->get_option("--enforce-limits"), enforce_limits,
                     "rollout.enforce_limits");
            fd.apply(rollout->get_option("--length-unit"), length_unit,
                     "rollout.length_unit");
            fd.apply(rollout->get_option("--seed"), seed, "seed");
            fd.apply(rollout->get_option("--mode"), mode_name, "mode");
            fd.apply(rollout->get_option("--adversarial"), adversarial, "adversarial");
            fd.apply(rollout->get_option("--tau"), tau, "retrieval.tau");
            fd.apply(rollout->get_option("--k-pheno"), k_pheno, "retrieval.k_pheno");
            fd.apply(rollout->get_option("--top-n"), top_n, "retrieval.top_n");
            fd.apply(rollout->get_option("--top-k"), top_k, "retrieval.top_k");
            fd.apply(rollout->get_option("--summarize-budget"), summarize_budget,
                     "retrieval.summarize_budget");
            fd.apply(rollout->get_option("--stage"), stage, "reward.stage");

            RolloutConfig config;
            fd.apply(nullptr, config.limits.max_match, "limits.max_match");
            fd.apply(nullptr, config.limits.max_search, "limits.max_search");
            fd.apply(nullptr, config.limits.max_lookup, "limits.max_lookup");
            fd.apply(nullptr, config.limits.max_diagnoses, "limits.max_diagnoses");
            fd.apply(nullptr, config.limits.max_lookup_diseases,
                     "limits.max_lookup_diseases");
            fd.apply(nullptr, config.limits.queries_per_search,
                     "limits.queries_per_search");
            fd.apply(nullptr, config.reward.k, "reward.k");
            fd.apply(nullptr, config.reward.max_n, "reward.max_n");
            fd.apply(nullptr, config.reward.sim_diag_uses_exponent,
                     "reward.sim_diag_uses_exponent");
            fd.apply(nullptr, config.reward.dedupe_match_in_combo,
                     "reward.dedupe_match_in_combo");
            fd.apply(nullptr, config.reward.validate_options.gate_content_rules,
                     "reward.gate_content_rules");
            fd.apply(nullptr, config.reward.validate_options.gate_reason_separation,
                     "reward.gate_reason_separation");
            fail_on_config_errors(fd.errors);

            config.l_max = l_max;
            config.max_new = max_new;
            config.seed = seed;
            config.enforce_limits = enforce_limits;
            if (length_unit == "provider_tokens") {
                config.length_unit = RolloutConfig::LengthUnit::provider_tokens;
            } else if (length_unit != "chars") {
                throw ExitWith{kConfigError, "--length-unit must be chars|provider_tokens"};
            }
            if (weights_opt->count() > 0 && stage_opt->count() > 0) {
                throw ExitWith{kConfigError, "--stage and --weights are mutually exclusive"};
            }
            config.weights = weights_opt->count() > 0 ? parse_weights_smd(weights_spec)
                                                      : stage_weights(stage);
            if (weights_opt->count() == 0 && stage_opt->count() == 0) {
                fd.apply(nullptr, config.weights.w_s, "reward.weights.w_s");
                fd.apply(nullptr, config.weights.w_m, "reward.weights.w_m");
                fd.apply(nullptr, config.weights.w_d, "reward.weights.w_d");
                fail_on_config_errors(fd.errors);
            }
            auto rconfig = retrieval_from_flags(tau, k_pheno, top_n, top_k,
                                                summarize_budget, embed_dim);
            print_resolved("rollout", json{{"store", store_dir},
                                           {"cases", cases_path},
                                           {"policy", policy_spec},
                                           {"mode", mode_name},
                                           {"l_max", l_max},
                                           {"group_size", group_size},
                                           {"seed", seed},
                                           {"adversarial", adversarial},
                                           {"stage", stage},
                                           {"tau", tau}});
            return cmd_rollout(store_dir, cases_path, policy_spec, mode_name, out_path,
                               config, group_size, adversarial, rconfig);
        }
        if (*reward_cmd) {
            if (r_weights_opt->count() > 0 && r_stage_opt->count() > 0) {
                throw ExitWith{kConfigError, "--stage and --weights are mutually exclusive"};
            }
            RewardWeights weights = r_weights_opt->count() > 0
                                        ? parse_weights_smd(weights_spec)
                                        : stage_weights(stage);
            RewardConfig rc;
            rc.k = k_exp;
            rc.max_n = max_n;
            rc.sim_diag_uses_exponent = !raw_sim;
            rc.dedupe_match_in_combo = dedupe;
            rc.validate_options.gate_content_rules = strict_content;
            rc.validate_options.gate_reason_separation = strict_reason;
            print_resolved("reward", json{{"transcripts", transcripts_path},
                                          {"gt", gt_path},
                                          {"stage", stage},
                                          {"k", k_exp},
                                          {"max_n", max_n},
                                          {"dedupe_match_in_combo", dedupe},
                                          {"jobs", jobs},
                                          {"seed", seed}});
            return cmd_reward(transcripts_path, gt_path, weights, rc, out_path, jobs);
        }
        if (*eval_cmd) {
            print_resolved("eval", json{{"results", results_path},
                                        {"matcher", matcher_name},
                                        {"threshold", threshold},
                                        {"n", n_spec},
                                        {"hit_n", hit_n},
                                        {"seed", seed}});
            return cmd_eval(results_path, matcher_name, threshold, n_spec, hit_n,
                            text_output, out_path);
        }
        if (*train) {
            ToyTrainConfig config;
            config.iters = iters;
            config.group_size = t_group;
            config.beta = beta;
            config.lr = lr;
            config.seed = seed;
            config.use_schedule = staged;
            RewardConfig rc;
            rc.k = k_exp;
            rc.max_n = max_n;
            print_resolved("train-toy", json{{"vocab", vocab_path},
                                             {"gt", gt_path},
                                             {"iters", iters},
                                             {"group_size", t_group},
                                             {"beta", beta},
                                             {"lr", lr},
                                             {"staged", staged},
                                             {"seed", seed}});
            return cmd_train_toy(vocab_path, gt_path, config, rc, trace_path, trace_format);
        }
    } catch (const ExitWith& e) {
        std::cerr << "error: " << e.message << "\n";
        return e.code;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kRuntimeError;
    }
    return kConfigError;
}

int run(int argc, char** argv) {
    std::vector<std::string> args;
    for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
    return run(std::move(args));
}

}  // namespace dxrag::cli
