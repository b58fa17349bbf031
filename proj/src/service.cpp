#include "dxrag/service.hpp"

#include <atomic>
#include <functional>
#include <thread>

#include "httplib.h"
#include "json.hpp"

namespace dxrag {

using nlohmann::json;

namespace {

struct RequestError : std::runtime_error {
    RequestError(int status, std::string code, std::string detail)
        : std::runtime_error(detail), status(status), code(std::move(code)) {}
    int status;
    std::string code;
};

json error_body(const std::string& code, const std::string& detail) {
    json j;
    j["error"] = {{"code", code}, {"detail", detail}};
    return j;
}

std::vector<std::string> string_array(const json& j, const char* field) {
    if (!j.contains(field) || !j[field].is_array()) {
        throw RequestError(400, "bad_request", std::string("missing array field: ") + field);
    }
    std::vector<std::string> out;
    for (const auto& item : j[field]) {
        if (!item.is_string()) {
            throw RequestError(400, "bad_request", std::string("non-string item in: ") + field);
        }
        out.push_back(item.get<std::string>());
    }
    return out;
}

KnowledgeSource parse_source(const json& j) {
    if (!j.contains("source") || !j["source"].is_string()) {
        throw RequestError(400, "bad_request", "missing string field: source");
    }
    auto source = knowledge_source_from_string(j["source"].get<std::string>());
    if (!source) {
        throw RequestError(400, "unknown_source",
                           "source must be WIKI, PMC or BOOK, got '" +
                               j["source"].get<std::string>() + "'");
    }
    return *source;
}

}  // namespace

struct RetrievalService::Impl {
    std::shared_ptr<CorpusEnvironment> env;
    ServiceConfig config;
    httplib::Server server;
    std::thread thread;
    std::atomic<bool> ready{false};
    int bound_port = 0;

    Impl(std::shared_ptr<CorpusEnvironment> e, ServiceConfig c)
        : env(std::move(e)), config(std::move(c)) {
        setup_routes();
    }

    bool endpoint_enabled(const std::string& name) const {
        return config.only.empty() || config.only.count(name) != 0;
    }

    json handle_lookup(const json& request) {
        auto diseases = string_array(request, "diseases");
        std::vector<LookupResult> results;
        try {
            results = env->lookup(diseases);
        } catch (const std::invalid_argument& e) {
            throw RequestError(400, "bad_request", e.what());
        }
        json out;
        out["results"] = json::array();
        for (const auto& r : results) {
            json item;
            item["query_disease"] = r.query_disease;
            if (r.matched_disease) {
                item["matched_disease"] = *r.matched_disease;
                item["phenotypes"] = r.phenotypes;
            } else {
                item["matched_disease"] = nullptr;
                item["feedback"] = kNoReference;
            }
            out["results"].push_back(item);
        }
        return out;
    }

    json handle_match(const json& request) {
        auto phenotypes = string_array(request, "phenotypes");
        std::size_t top_n = request.value("top_n", env->config().top_n);
        std::vector<MatchResult> results;
        try {
            results = env->match(phenotypes, top_n);
        } catch (const std::invalid_argument& e) {
            throw RequestError(400, "bad_request", e.what());
        } catch (const ProviderError& e) {
            throw RequestError(503, "provider_unavailable", e.what());
        }
        json out;
        out["results"] = json::array();
        for (const auto& r : results) {
            json item;
            item["record_id"] = r.record_id;
            item["diagnosis"] = r.diagnosis;
            item["phenotypes"] = r.phenotypes;
            item["score"] = r.score;
            out["results"].push_back(item);
        }
        return out;
    }

    json handle_search(const json& request) {
        KnowledgeSource source = parse_source(request);
        auto queries = string_array(request, "queries");
        std::size_t top_k = request.value("top_k", env->config().top_k);
        std::vector<SearchHit> hits;
        try {
            hits = env->search(source, queries, top_k);
        } catch (const std::invalid_argument& e) {
            throw RequestError(400, "bad_request", e.what());
        }
        json out;
        out["results"] = json::array();
        for (const auto& h : hits) {
            json item;
            item["chunk_id"] = h.chunk_id;
            item["score"] = h.score;
            item["text"] = h.text;
            out["results"].push_back(item);
        }
        return out;
    }

    json handle_summarize(const json& request) {
        KnowledgeSource source = parse_source(request);
        if (!request.contains("query") || !request["query"].is_string() ||
            !request.contains("document") || !request["document"].is_string()) {
            throw RequestError(400, "bad_request", "expected string query and document");
        }
        std::string document = request["document"].get<std::string>();
        if (document.empty()) {
            throw RequestError(400, "bad_request", "document must be non-empty");
        }
        SummarizeResult r =
            env->summarize(source, request["query"].get<std::string>(), document);
        json out;
        out["answer"] = r.answer;
        out["used_fallback"] = r.used_fallback;
        out["parse_failed"] = r.parse_failed;
        return out;
    }

    void install(const std::string& name, std::function<json(const json&)> handler) {
        if (!endpoint_enabled(name)) return;
        server.Post("/" + name, [this, handler](const httplib::Request& req,
                                                httplib::Response& res) {
            json parsed = json::parse(req.body, nullptr, false);
            if (parsed.is_discarded()) {
                res.status = 400;
                res.set_content(error_body("bad_json", "request body is not JSON").dump(),
                                "application/json");
                return;
            }
            try {
                if (parsed.is_array()) {
                    if (parsed.size() > config.max_batch) {
                        res.status = 400;
                        res.set_content(
                            error_body("batch_too_large",
                                       "batch limit is " + std::to_string(config.max_batch))
                                .dump(),
                            "application/json");
                        return;
                    }
                    json out = json::array();
                    for (const auto& item : parsed) out.push_back(handler(item));
                    res.set_content(out.dump(), "application/json");
                } else if (parsed.is_object()) {
                    res.set_content(handler(parsed).dump(), "application/json");
                } else {
                    res.status = 400;
                    res.set_content(
                        error_body("bad_request", "expected object or array").dump(),
                        "application/json");
                }
            } catch (const RequestError& e) {
                res.status = e.status;
                res.set_content(error_body(e.code, e.what()).dump(), "application/json");
            } catch (const std::exception& e) {
                res.status = 500;
                res.set_content(error_body("internal", e.what()).dump(), "application/json");
            }
        });
    }

    void setup_routes() {
        server.Get("/healthz", [this](const httplib::Request&, httplib::Response& res) {
            json j;
            j["status"] = ready.load() ? "ready" : "starting";
            res.status = ready.load() ? 200 : 503;
            res.set_content(j.dump(), "application/json");
        });
        server.Get("/stats", [this](const httplib::Request&, httplib::Response& res) {
            const auto& bundle = env->bundle();
            const auto& counters = env->counters();
            json j;
            j["index"] = {{"guideline_entries", bundle.guideline.size()},
                          {"patient_records", bundle.patients.size()},
                          {"knowledge_chunks", bundle.knowledge.size()}};
            j["queries"] = {{"lookup", counters.lookup_calls.load()},
                            {"match", counters.match_calls.load()},
                            {"search", counters.search_calls.load()},
                            {"summarize", counters.summarize_calls.load()}};
            res.set_content(j.dump(), "application/json");
        });
        install("lookup", [this](const json& r) { return handle_lookup(r); });
        install("match", [this](const json& r) { return handle_match(r); });
        install("search", [this](const json& r) { return handle_search(r); });
        install("summarize", [this](const json& r) { return handle_summarize(r); });
        server.set_read_timeout(config.request_timeout_sec, 0);
        server.set_write_timeout(config.request_timeout_sec, 0);
        if (config.request_log) {
            server.set_logger([](const httplib::Request& req, const httplib::Response& res) {
                json line;
                line["method"] = req.method;
                line["path"] = req.path;
                line["status"] = res.status;
                line["request_bytes"] = req.body.size();
                line["response_bytes"] = res.body.size();
                std::fprintf(stderr, "%s\n", line.dump().c_str());
            });
        }
    }
};

RetrievalService::RetrievalService(std::shared_ptr<CorpusEnvironment> env,
                                   ServiceConfig config)
    : impl_(std::make_unique<Impl>(std::move(env), std::move(config))) {}

RetrievalService::~RetrievalService() {
    stop();
}

int RetrievalService::start() {
    if (impl_->config.port == 0) {
        impl_->bound_port = impl_->server.bind_to_any_port(impl_->config.bind_address);
    } else {
        if (!impl_->server.bind_to_port(impl_->config.bind_address, impl_->config.port)) {
            throw std::runtime_error("cannot bind " + impl_->config.bind_address + ":" +
                                     std::to_string(impl_->config.port));
        }
        impl_->bound_port = impl_->config.port;
    }
    impl_->ready = true;
    impl_->thread = std::thread([this] { impl_->server.listen_after_bind(); });
    impl_->server.wait_until_ready();
    return impl_->bound_port;
}

void RetrievalService::stop() {
    if (impl_ && impl_->thread.joinable()) {
        impl_->server.stop();
        impl_->thread.join();
        impl_->ready = false;
    }
}

bool RetrievalService::running() const {
    return impl_->server.is_running();
}

int RetrievalService::serve_forever() {
    impl_->ready = true;
    if (!impl_->server.listen(impl_->config.bind_address, impl_->config.port)) {
        return 1;
    }
    return 0;
}

RemoteSummarizer::RemoteSummarizer(std::string host, int port, int timeout_sec)
    : host_(std::move(host)), port_(port), timeout_sec_(timeout_sec) {}

std::string RemoteSummarizer::complete(KnowledgeSource source, const std::string& query,
                                       const std::string& document) {
    json request;
    request["source"] = to_string(source);
    request["query"] = query;
    request["document"] = document;
    httplib::Client client(host_, port_);
    client.set_read_timeout(timeout_sec_, 0);
    auto res = client.Post("/summarize", request.dump(), "application/json");
    if (!res || res->status != 200) {
        throw std::runtime_error("summarizer endpoint unavailable");
    }
    return res->body;
}

}  // namespace dxrag
