#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace dxrag {

/// Maps texts to fixed-dimension real vectors. Implementations must be
/// deterministic per input text and never return a zero vector.
class EmbeddingProvider {
public:
    virtual ~EmbeddingProvider() = default;
    virtual std::size_t dimension() const = 0;
    virtual std::vector<std::vector<double>> embed(
        const std::vector<std::string>& texts) const = 0;
};

/// Deterministic bag-of-tokens embedder: each token is hashed (FNV-1a 64)
/// into one of `dimension` buckets and counted. Texts with no tokens map to
/// a unit vector on bucket 0 so outputs are never zero.
class HashEmbeddingProvider final : public EmbeddingProvider {
public:
    explicit HashEmbeddingProvider(std::size_t dimension = 64) : dimension_(dimension) {}

    std::size_t dimension() const override { return dimension_; }
    std::vector<std::vector<double>> embed(
        const std::vector<std::string>& texts) const override;

private:
    std::size_t dimension_;
};

std::uint64_t fnv1a64(std::string_view data);

/// Cosine similarity; 0 when either vector has zero norm.
double cosine(const std::vector<double>& a, const std::vector<double>& b);

}  // namespace dxrag
