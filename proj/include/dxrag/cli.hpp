#pragma once

#include <string>
#include <vector>

#include "dxrag/retrieval.hpp"

namespace dxrag::cli {

// Exit codes: 0 ok, 2 config error, 3 data error, 4 runtime error.
inline constexpr int kOk = 0;
inline constexpr int kConfigError = 2;
inline constexpr int kDataError = 3;
inline constexpr int kRuntimeError = 4;

int run(std::vector<std::string> args);
int run(int argc, char** argv);

/// Loads the canonical store written by `ingest --out`.
CorpusBundle load_store(const std::string& dir);

}  // namespace dxrag::cli
