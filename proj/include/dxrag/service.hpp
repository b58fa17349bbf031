#pragma once

#include <memory>
#include <set>
#include <string>

#include "dxrag/retrieval.hpp"

namespace dxrag {

struct ServiceConfig {
    std::string bind_address = "127.0.0.1";
    int port = 8080;                 // 0: pick any free port
    std::size_t max_batch = 64;
    int request_timeout_sec = 30;
    bool request_log = false;        // JSON-lines request log on stderr
    std::set<std::string> only;     // empty: all endpoints; else subset of
                                    // {lookup, match, search, summarize}
};

/// HTTP front over a CorpusEnvironment. Endpoints:
///   POST /lookup     {diseases:[...]}                    -> {results:[...]}
///   POST /match      {phenotypes:[...], top_n}           -> {results:[...]}
///   POST /search     {source, queries:[...], top_k}      -> {results:[...]}
///   POST /summarize  {source, query, document}           -> {answer, ...}
///   GET  /healthz, GET /stats
/// Each POST endpoint also accepts a JSON array of request objects and
/// answers with the array of the corresponding single responses, in order.
class RetrievalService {
public:
    RetrievalService(std::shared_ptr<CorpusEnvironment> env, ServiceConfig config);
    ~RetrievalService();

    RetrievalService(const RetrievalService&) = delete;
    RetrievalService& operator=(const RetrievalService&) = delete;

    /// Binds and serves on a background thread; returns the bound port.
    int start();
    void stop();
    bool running() const;

    /// Blocking serve loop for the CLI path.
    int serve_forever();

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

/// Forwards summarization to an external endpoint: POST /summarize with
/// {source, query, document}, returning the raw body (expected to carry the
/// JSON "answer" contract).
class RemoteSummarizer final : public Summarizer {
public:
    RemoteSummarizer(std::string host, int port, int timeout_sec = 30);
    std::string complete(KnowledgeSource source, const std::string& query,
                         const std::string& document) override;

private:
    std::string host_;
    int port_;
    int timeout_sec_;
};

}  // namespace dxrag
