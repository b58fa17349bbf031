#include "dxrag/rollout.hpp"

#include <algorithm>
#include <fstream>

#include "dxrag/text.hpp"
#include "httplib.h"
#include "json.hpp"

namespace dxrag {

using nlohmann::json;

std::string to_string(RolloutMode mode) {
    switch (mode) {
        case RolloutMode::agentic: return "agentic";
        case RolloutMode::vanilla: return "vanilla";
        case RolloutMode::rag_free: return "rag_free";
    }
    return "agentic";
}

std::string to_string(EpisodeStatus status) {
    switch (status) {
        case EpisodeStatus::running: return "running";
        case EpisodeStatus::diagnosed: return "diagnosed";
        case EpisodeStatus::truncated: return "truncated";
        case EpisodeStatus::malformed: return "malformed";
    }
    return "malformed";
}

std::optional<RolloutMode> rollout_mode_from_string(std::string_view s) {
    if (s == "agentic") return RolloutMode::agentic;
    if (s == "vanilla") return RolloutMode::vanilla;
    if (s == "rag_free") return RolloutMode::rag_free;
    return std::nullopt;
}

// ---------------------------------------------------------------------------
// Policies
// ---------------------------------------------------------------------------

ScriptedPolicy ScriptedPolicy::from_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open replay file: " + path);
    std::vector<std::string> deltas;
    std::string line;
    while (std::getline(in, line)) {
        if (trim(line).empty()) continue;
        json j = json::parse(line, nullptr, false);
        if (j.is_discarded() || !j.is_object() || !j.contains("delta") ||
            !j["delta"].is_string()) {
            throw std::runtime_error("replay file line is not a {\"delta\": ...} object");
        }
        deltas.push_back(j["delta"].get<std::string>());
    }
    return ScriptedPolicy(std::move(deltas));
}

PolicyDelta ScriptedPolicy::generate(const std::string&, const std::vector<std::string>&,
                                     std::size_t) {
    PolicyDelta d;
    if (cursor_ >= deltas_.size()) {
        d.finished = true;
        return d;
    }
    d.text = deltas_[cursor_++];
    d.finished = cursor_ >= deltas_.size();
    return d;
}

PolicyDelta CannedTextPolicy::generate(const std::string&,
                                       const std::vector<std::string>& stop_markers,
                                       std::size_t max_new) {
    PolicyDelta d;
    if (cursor_ >= text_.size()) {
        d.finished = true;
        return d;
    }
    std::size_t end = text_.size();
    for (const auto& marker : stop_markers) {
        std::size_t pos = text_.find(marker, cursor_);
        if (pos != std::string::npos) end = std::min(end, pos + marker.size());
    }
    if (max_new > 0 && end - cursor_ > max_new) end = cursor_ + max_new;
    d.text = text_.substr(cursor_, end - cursor_);
    cursor_ = end;
    d.finished = cursor_ >= text_.size();
    return d;
}

void ToyVocabPolicy::begin_episode(std::uint64_t seed) {
    if (vocab_.empty()) throw std::runtime_error("toy policy: empty vocabulary");
    std::mt19937_64 rng(seed);
    current_ = std::make_unique<CannedTextPolicy>(vocab_[rng() % vocab_.size()]);
    current_->begin_episode(seed);
}

PolicyDelta ToyVocabPolicy::generate(const std::string& context,
                                     const std::vector<std::string>& stop_markers,
                                     std::size_t max_new) {
    if (!current_) begin_episode(0);
    return current_->generate(context, stop_markers, max_new);
}

RemotePolicyClient::RemotePolicyClient(std::string host, int port, int retries,
                                       int timeout_sec)
    : host_(std::move(host)), port_(port), retries_(retries), timeout_sec_(timeout_sec) {}

PolicyDelta RemotePolicyClient::generate(const std::string& context,
                                         const std::vector<std::string>& stop_markers,
                                         std::size_t max_new) {
    json request;
    request["context"] = context;
    request["stop"] = stop_markers;
    request["max_new"] = max_new;
    request["seed"] = seed_;
    std::string body = request.dump();

    for (int attempt = 0; attempt <= retries_; ++attempt) {
        httplib::Client client(host_, port_);
        client.set_read_timeout(timeout_sec_, 0);
        auto res = client.Post("/generate", body, "application/json");
        if (!res || res->status >= 500) continue;
        json j = json::parse(res->body, nullptr, false);
        if (j.is_discarded() || !j.is_object() || !j.contains("delta")) {
            throw PolicyTransportError("policy response is not a {delta, finished} object");
        }
        PolicyDelta d;
        d.text = j["delta"].get<std::string>();
        d.finished = j.value("finished", false);
        if (j.contains("logprobs") && j["logprobs"].is_array()) {
            for (const auto& v : j["logprobs"]) d.token_logprobs.push_back(v.get<double>());
        }
        return d;
    }
    throw PolicyTransportError("policy endpoint unreachable after retries");
}

// ---------------------------------------------------------------------------
// Prompts
// ---------------------------------------------------------------------------

namespace {

constexpr std::string_view kPlaceholder = "{presentation}";

constexpr std::string_view kFrameworkInstruction =
    "You are a clinical diagnosis assistant. Analyze the patient presentation "
    "and reach a final disease diagnosis through stepwise reasoning, using the "
    "retrieval tools below.\n"
    "\n"
    "Tools:\n"
    "1. Guideline lookup: <lookup> disease1, disease2 </lookup> returns typical "
    "phenotypes of up to 10 diseases in one call. The system replies inside a "
    "<guide> tag.\n"
    "2. Patient record match: <match> phenotype1, phenotype2 </match> retrieves "
    "similar known cases. The system replies inside a <refer> tag.\n"
    "3. Knowledge search: <search> |WIKI| query1, query2 </search> retrieves "
    "passages from exactly one source per call (|WIKI|, |PMC| or |BOOK|), with "
    "up to three comma-separated queries. The system replies inside a <result> "
    "tag.\n"
    "\n"
    "Format rules:\n"
    "- Put your analysis between actions inside <reason> </reason> tags.\n"
    "- <lookup> may appear at most once and must list only diseases.\n"
    "- <match> may appear up to three times and must list only phenotypes or "
    "symptoms, never diseases.\n"
    "- <search> may appear at most twice, always in the |SOURCE| query1, query2 "
    "form.\n"
    "- Finish with exactly one <diagnose> </diagnose> block naming up to five "
    "diseases, each wrapped as \\textbf{Disease}.\n"
    "- Write no text outside the tags, and never emit <guide>, <refer> or "
    "<result> yourself; the system injects those.\n";

constexpr std::string_view kRefinementGuide =
    "\n"
    "Query refinement:\n"
    "When repeating <match>, change the phenotype set: add phenotypes common in "
    "the suspected disease category, swap in alternative medical terminology, "
    "include likely complications, or use earlier- and later-stage "
    "manifestations. At least two phenotypes must differ between consecutive "
    "match calls.\n";

constexpr std::string_view kCaseHeader =
    "\n"
    "Patient presentation:\n"
    "{presentation}\n";

constexpr std::string_view kVanillaInstruction =
    "You are a disease diagnosis assistant. Given the symptoms or phenotypes "
    "below, your answer should only be diseases, with no other explanation. "
    "Write up to five diagnoses inside one <diagnose> </diagnose> block, each "
    "wrapped as \\textbf{Disease}.\n"
    "\n"
    "Patient presentation:\n"
    "{presentation}\n";

std::string substitute(std::string_view tmpl, const std::string& presentation) {
    std::string out(tmpl);
    std::size_t pos = out.find(kPlaceholder);
    if (pos == std::string::npos) throw std::logic_error("prompt template lacks placeholder");
    out.replace(pos, kPlaceholder.size(), presentation);
    return out;
}

}  // namespace

std::string build_prompt(const DiagnosticCase& c, RolloutMode mode) {
    std::string presentation = c.presentation();
    switch (mode) {
        case RolloutMode::vanilla:
            return substitute(kVanillaInstruction, presentation);
        case RolloutMode::rag_free:
            return substitute(std::string(kFrameworkInstruction) + std::string(kCaseHeader),
                              presentation);
        case RolloutMode::agentic:
        default:
            return substitute(std::string(kFrameworkInstruction) +
                                  std::string(kRefinementGuide) + std::string(kCaseHeader),
                              presentation);
    }
}

// ---------------------------------------------------------------------------
// Episode loop
// ---------------------------------------------------------------------------

namespace {

struct MarkerHit {
    bool found = false;
    std::size_t pos = 0;
    std::size_t len = 0;
    ActionKind kind = ActionKind::lookup;
};

MarkerHit find_first_marker(const std::string& text) {
    static const std::pair<std::string_view, ActionKind> kMarkers[] = {
        {"</lookup>", ActionKind::lookup},
        {"</match>", ActionKind::match},
        {"</search>", ActionKind::search},
    };
    MarkerHit best;
    for (const auto& [marker, kind] : kMarkers) {
        std::size_t pos = text.find(marker);
        if (pos == std::string::npos) continue;
        if (!best.found || pos < best.pos) {
            best.found = true;
            best.pos = pos;
            best.len = marker.size();
            best.kind = kind;
        }
    }
    return best;
}

std::string extract_query(const std::string& generated, ActionKind kind,
                          std::size_t marker_start) {
    std::string open = "<" + to_string(kind) + ">";
    std::size_t pos = generated.rfind(open, marker_start);
    if (pos == std::string::npos) return "";
    std::size_t body = pos + open.size();
    if (body > marker_start) return "";
    return trim(std::string_view(generated).substr(body, marker_start - body));
}

ActionKind passive_for(ActionKind active) {
    switch (active) {
        case ActionKind::lookup: return ActionKind::guide;
        case ActionKind::match: return ActionKind::refer;
        case ActionKind::search: return ActionKind::result;
        default: return ActionKind::guide;
    }
}

struct ToolOutcome {
    std::string feedback;
    std::vector<std::string> match_diagnoses;
};

ToolOutcome invoke_tool(Environment& env, ActionKind kind, const std::string& query,
                        EpisodeState& state, const RolloutConfig& config) {
    ToolOutcome out;
    out.feedback = kNoReference;
    try {
        if (kind == ActionKind::lookup) {
            if (config.enforce_limits && state.lookup_calls >= config.limits.max_lookup) {
                return out;
            }
            auto diseases = split_list(query);
            if (diseases.empty() || diseases.size() > config.limits.max_lookup_diseases) {
                throw std::invalid_argument("lookup budget violated");
            }
            auto results = env.lookup(diseases);
            ++state.lookup_calls;
            out.feedback = render_guide(results);
        } else if (kind == ActionKind::match) {
            if (config.enforce_limits && state.match_calls >= config.limits.max_match) {
                return out;
            }
            auto phenotypes = split_list(query);
            if (phenotypes.empty()) throw std::invalid_argument("empty match query");
            auto results = env.match(phenotypes, env.config().top_n);
            ++state.match_calls;
            for (const auto& r : results) out.match_diagnoses.push_back(r.diagnosis);
            out.feedback = render_refer(results);
        } else {
            if (config.enforce_limits && state.search_calls >= config.limits.max_search) {
                return out;
            }
            auto spec = parse_search_spec(query, config.limits.queries_per_search);
            if (!spec.well_formed) throw std::invalid_argument("malformed search action");
            auto hits = env.search(*spec.source, spec.queries, env.config().top_k);
            ++state.search_calls;
            for (auto& hit : hits) {
                if (hit.text.size() > env.config().summarize_budget) {
                    hit.text = env.summarize(*spec.source, spec.queries.front(), hit.text)
                                   .answer;
                }
            }
            out.feedback = render_result(hits);
        }
    } catch (const std::exception&) {
        out.feedback = kNoReference;  // tool failure: the episode keeps going
        out.match_diagnoses.clear();
    }
    return out;
}

std::size_t delta_length(const PolicyDelta& delta, const std::string& cut_text,
                         RolloutConfig::LengthUnit unit) {
    if (unit == RolloutConfig::LengthUnit::provider_tokens &&
        !delta.token_logprobs.empty()) {
        return delta.token_logprobs.size();
    }
    return cut_text.size();
}

}  // namespace

EpisodeResult run_episode(const DiagnosticCase& c, PolicyClient& policy, Environment& env,
                          const RolloutConfig& config) {
    EpisodeResult result;
    result.case_id = c.case_id;
    result.dataset = c.dataset;
    result.seed = config.seed;
    result.mode = config.mode;
    result.ground_truth = c.ground_truth_diagnoses;
    result.prompt = build_prompt(c, config.mode);

    env.begin_episode(c.ground_truth_diagnoses, config.seed);
    policy.begin_episode(config.seed);

    EpisodeState state;
    state.prompt = result.prompt;
    state.l_max = config.l_max;
    const std::vector<std::string> stop_markers = {"</lookup>", "</match>", "</search>"};

    bool transport_failed = false;
    while (state.total_generated < config.l_max) {
        PolicyDelta delta;
        try {
            delta = policy.generate(result.prompt + state.generated, stop_markers,
                                    config.max_new);
        } catch (const std::exception&) {
            transport_failed = true;
            break;
        }
        if (delta.text.empty()) break;
        result.logprobs.insert(result.logprobs.end(), delta.token_logprobs.begin(),
                               delta.token_logprobs.end());

        MarkerHit marker = find_first_marker(delta.text);
        if (!marker.found) {
            state.generated += delta.text;
            state.total_generated += delta_length(delta, delta.text, config.length_unit);
            break;  // no active tag in the delta: the response is complete
        }

        // Keep the delta only up to and including the marker.
        std::string cut = delta.text.substr(0, marker.pos + marker.len);
        state.generated += cut;
        state.total_generated += delta_length(delta, cut, config.length_unit);

        std::size_t marker_start = state.generated.size() - marker.len;
        std::string query = extract_query(state.generated, marker.kind, marker_start);
        ToolOutcome tool = invoke_tool(env, marker.kind, query, state, config);

        ActionKind passive = passive_for(marker.kind);
        std::string feedback_block = "\n<" + to_string(passive) + ">" + tool.feedback +
                                     "</" + to_string(passive) + ">\n";
        state.generated += feedback_block;
        state.total_generated += feedback_block.size();

        EnvTraceEntry entry;
        entry.active_kind = marker.kind;
        entry.query = query;
        entry.feedback = tool.feedback;
        entry.match_diagnoses = std::move(tool.match_diagnoses);
        result.env_trace.push_back(std::move(entry));
    }

    result.generated = state.generated;
    result.transcript = parse(result.generated);

    bool has_diagnose = false;
    for (const auto& b : result.transcript.blocks) {
        if (b.kind == ActionKind::diagnose && !b.truncated) has_diagnose = true;
    }
    if (transport_failed) {
        result.status = EpisodeStatus::malformed;
    } else if (has_diagnose) {
        result.status = EpisodeStatus::diagnosed;
    } else if (state.total_generated >= config.l_max) {
        result.status = EpisodeStatus::truncated;
    } else {
        result.status = EpisodeStatus::malformed;
    }

    RewardConfig reward_config = config.reward;
    reward_config.limits = config.limits;
    result.reward = compute_reward(result.transcript, c.ground_truth_diagnoses,
                                   config.weights, reward_config);
    return result;
}

std::vector<EpisodeResult> run_batch(const std::vector<DiagnosticCase>& cases,
                                     PolicyClient& policy, Environment& env,
                                     const RolloutConfig& config, std::size_t group_size) {
    if (group_size == 0) throw std::invalid_argument("run_batch: group_size >= 1");
    std::vector<EpisodeResult> results;
    results.reserve(cases.size() * group_size);
    for (std::size_t ci = 0; ci < cases.size(); ++ci) {
        for (std::size_t g = 0; g < group_size; ++g) {
            RolloutConfig episode_config = config;
            episode_config.seed = config.seed + ci * group_size + g;
            EpisodeResult r;
            try {
                r = run_episode(cases[ci], policy, env, episode_config);
            } catch (const std::exception&) {
                r.case_id = cases[ci].case_id;
                r.dataset = cases[ci].dataset;
                r.ground_truth = cases[ci].ground_truth_diagnoses;
                r.seed = episode_config.seed;
                r.mode = config.mode;
                r.status = EpisodeStatus::malformed;
            }
            r.sample_index = g;
            results.push_back(std::move(r));
        }
    }
    return results;
}

std::string episode_to_json_line(const EpisodeResult& r) {
    json j;
    j["case_id"] = r.case_id;
    if (!r.dataset.empty()) j["dataset"] = r.dataset;
    j["sample_index"] = r.sample_index;
    j["seed"] = r.seed;
    j["mode"] = to_string(r.mode);
    j["status"] = to_string(r.status);
    j["prompt_chars"] = r.prompt.size();
    j["text"] = r.generated;
    j["diagnoses"] = r.transcript.diagnoses;
    j["ground_truth"] = r.ground_truth;

    json reward;
    reward["sigma_f"] = r.reward.sigma_f;
    reward["rwd_m"] = r.reward.rwd_m;
    reward["rwd_s"] = r.reward.rwd_s;
    reward["rwd_d"] = r.reward.rwd_d;
    reward["combined"] = r.reward.combined;
    reward["n_match"] = r.reward.n_match;
    reward["diversity_ok"] = r.reward.diversity_ok;
    reward["sim_diag"] = r.reward.sim_diag;
    reward["match_hit"] = r.reward.match_hit;
    reward["structure_violation"] = r.reward.structure_violation;
    json violations = json::array();
    for (const auto& v : r.reward.violations) violations.push_back(to_string(v.rule));
    reward["violations"] = violations;
    json warnings = json::array();
    for (const auto& v : r.reward.warnings) warnings.push_back(to_string(v.rule));
    reward["warnings"] = warnings;
    j["reward"] = reward;

    json trace = json::array();
    for (const auto& entry : r.env_trace) {
        json te;
        te["kind"] = to_string(entry.active_kind);
        te["query"] = entry.query;
        te["feedback"] = entry.feedback;
        te["match_diagnoses"] = entry.match_diagnoses;
        trace.push_back(te);
    }
    j["env_trace"] = trace;
    return j.dump();
}

}  // namespace dxrag
