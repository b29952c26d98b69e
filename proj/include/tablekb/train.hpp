#pragma once
// Contrastive retrieval loss and a trainable linear bi-encoder over hashed
// text features.

#include <Eigen/Dense>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "tablekb/dataset.hpp"
#include "tablekb/embed.hpp"

namespace tablekb {

// L = -Σ_j log( e^{s+_j} / (e^{s+_j} + Σ_k e^{s-_k}) ), max-shifted.
// Throws on NaN input.
double contrastive_loss(const std::vector<double>& pos_scores,
                        const std::vector<double>& neg_scores);

// Two-tower linear model: embed(text) = W * hash_features(text) with
// independent query/context projections, identity-initialized so the
// untrained model equals the hashing embedder.
class LinearEmbedder : public EmbeddingProvider {
public:
    explicit LinearEmbedder(size_t dim = 256);

    Vector embed_query(const std::string& text) const override;
    Vector embed_context(const std::string& text) const override;
    size_t dim() const override { return dim_; }
    std::string fingerprint() const override;

    Eigen::MatrixXd& query_projection() { return w_query_; }
    Eigen::MatrixXd& context_projection() { return w_context_; }
    const Eigen::MatrixXd& query_projection() const { return w_query_; }
    const Eigen::MatrixXd& context_projection() const { return w_context_; }
    const HashingEmbedder& base() const { return base_; }

    void save(const std::string& path) const;
    static LinearEmbedder load(const std::string& path);

private:
    size_t dim_;
    HashingEmbedder base_;
    Eigen::MatrixXd w_query_;
    Eigen::MatrixXd w_context_;
};

// One training example in feature space: hashed question vector plus hashed
// context vectors for positives and negatives.
struct FeaturizedInstance {
    Eigen::VectorXd question;
    std::vector<Eigen::VectorXd> positives;
    std::vector<Eigen::VectorXd> negatives;
};

struct LossGradient {
    double loss = 0.0;
    Eigen::MatrixXd d_query;
    Eigen::MatrixXd d_context;
};

// Loss and analytic gradient of the contrastive loss w.r.t. both
// projections, with scores s = (Wq hq)ᵀ (Wc hc).
LossGradient loss_gradient(const FeaturizedInstance& inst,
                           const Eigen::MatrixXd& w_query,
                           const Eigen::MatrixXd& w_context);

struct TrainConfig {
    int epochs = 20;
    int batch_size = 16;
    double learning_rate = 1e-5;
    uint64_t seed = 0;
    size_t dim = 256;
};

struct EpochLog {
    int epoch = 0;
    double train_loss = 0.0;
    std::optional<double> dev_recall_at_5;
};

struct TrainResult {
    LinearEmbedder model;
    std::vector<EpochLog> log;
};

// Seeded mini-batch SGD; returns the epoch with best dev R@5 when a dev set
// is supplied, else the final epoch. Throws if the loss diverges to NaN.
TrainResult train_bi_encoder(const std::vector<RetrievalInstance>& dataset,
                             const std::map<std::string, Table>& tables,
                             const LabelMap& labels, const TrainConfig& cfg,
                             const std::vector<RetrievalInstance>* dev_set = nullptr);

// Dev-set R@k of a provider over instances, scoring positives against
// positives ∪ negatives. Used for model selection and reporting.
double instance_recall_at_k(const EmbeddingProvider& provider,
                            const std::vector<RetrievalInstance>& instances,
                            const std::map<std::string, Table>& tables,
                            const LabelMap& labels, int k);

}  // namespace tablekb
