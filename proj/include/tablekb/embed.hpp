#pragma once
// Embedding provider interface plus the deterministic feature-hashing
// baseline embedder.

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

namespace tablekb {

using Vector = std::vector<double>;

double dot(const Vector& a, const Vector& b);

class EmbeddingProvider {
public:
    virtual ~EmbeddingProvider() = default;
    virtual Vector embed_query(const std::string& text) const = 0;
    virtual Vector embed_context(const std::string& text) const = 0;
    virtual size_t dim() const = 0;
    // Identifies the provider + parameters; indexes built with a different
    // fingerprint are rejected on load.
    virtual std::string fingerprint() const = 0;
};

// Lowercase word tokens (maximal alnum runs).
std::vector<std::string> tokenize_lower(const std::string& text);

// 64-bit FNV-1a; stable across platforms.
uint64_t fnv1a64(const std::string& s);

// Signed bag-of-tokens feature hashing, L2-normalized (zero vector for
// empty text). Query and context sides are identical.
class HashingEmbedder : public EmbeddingProvider {
public:
    explicit HashingEmbedder(size_t dim = 256);

    Vector embed_query(const std::string& text) const override;
    Vector embed_context(const std::string& text) const override;
    size_t dim() const override { return dim_; }
    std::string fingerprint() const override;

    // Raw hashed features before normalization is not needed by callers;
    // the normalized vector doubles as the training feature vector.
    Vector features(const std::string& text) const;

private:
    size_t dim_;
};

}  // namespace tablekb
