#include "dxrag/embedding.hpp"

#include <cmath>
#include <stdexcept>

#include "dxrag/text.hpp"

namespace dxrag {

std::uint64_t fnv1a64(std::string_view data) {
    std::uint64_t hash = 14695981039346656037ULL;
    for (unsigned char c : data) {
        hash ^= c;
        hash *= 1099511628211ULL;
    }
    return hash;
}

std::vector<std::vector<double>> HashEmbeddingProvider::embed(
    const std::vector<std::string>& texts) const {
    std::vector<std::vector<double>> out;
    out.reserve(texts.size());
    for (const auto& text : texts) {
        std::vector<double> vec(dimension_, 0.0);
        auto tokens = tokenize(text);
        if (tokens.empty()) {
            vec[0] = 1.0;
        } else {
            for (const auto& t : tokens) {
                vec[fnv1a64(t) % dimension_] += 1.0;
            }
        }
        out.push_back(std::move(vec));
    }
    return out;
}

double cosine(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size()) throw std::invalid_argument("cosine: dimension mismatch");
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        dot += a[i] * b[i];
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    if (na == 0.0 || nb == 0.0) return 0.0;
    return dot / (std::sqrt(na) * std::sqrt(nb));
}

}  // namespace dxrag
