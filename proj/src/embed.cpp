#include "tablekb/embed.hpp"

#include <cassert>
#include <cctype>
#include <cmath>
#include <stdexcept>

namespace tablekb {

double dot(const Vector& a, const Vector& b) {
    if (a.size() != b.size())
        throw std::invalid_argument("dot: dimension mismatch");
    double s = 0.0;
    for (size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

std::vector<std::string> tokenize_lower(const std::string& text) {
    std::vector<std::string> tokens;
    std::string cur;
    for (unsigned char c : text) {
        if (std::isalnum(c)) {
            cur += static_cast<char>(std::tolower(c));
        } else if (!cur.empty()) {
            tokens.push_back(std::move(cur));
            cur.clear();
        }
    }
    if (!cur.empty()) tokens.push_back(std::move(cur));
    return tokens;
}

uint64_t fnv1a64(const std::string& s) {
    uint64_t h = 14695981039346656037ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

HashingEmbedder::HashingEmbedder(size_t dim) : dim_(dim) {
    if (dim < 8) throw std::invalid_argument("hashing embedder: dim must be >= 8");
}

Vector HashingEmbedder::features(const std::string& text) const {
    Vector v(dim_, 0.0);
    for (const auto& tok : tokenize_lower(text)) {
        uint64_t h = fnv1a64(tok);
        size_t bucket = h % dim_;
        double sign = ((h >> 63) & 1) ? -1.0 : 1.0;
        v[bucket] += sign;
    }
    double norm = std::sqrt(dot(v, v));
    if (norm > 0.0)
        for (auto& x : v) x /= norm;
    return v;
}

Vector HashingEmbedder::embed_query(const std::string& text) const {
    return features(text);
}

Vector HashingEmbedder::embed_context(const std::string& text) const {
    return features(text);
}

std::string HashingEmbedder::fingerprint() const {
    return "hash-v1:d=" + std::to_string(dim_);
}

}  // namespace tablekb
