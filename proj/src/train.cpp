#include "tablekb/train.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>

#include "tablekb/retrieve.hpp"
#include "tablekb/rng.hpp"
#include "tablekb/serialize.hpp"

namespace tablekb {

double contrastive_loss(const std::vector<double>& pos_scores,
                        const std::vector<double>& neg_scores) {
    if (pos_scores.empty())
        throw std::invalid_argument("contrastive_loss: need at least one positive");
    for (double s : pos_scores)
        if (std::isnan(s)) throw std::invalid_argument("contrastive_loss: NaN score");
    for (double s : neg_scores)
        if (std::isnan(s)) throw std::invalid_argument("contrastive_loss: NaN score");

    double loss = 0.0;
    for (double sp : pos_scores) {
        // log(e^{sp} + Σ e^{sn}) - sp, max-shifted.
        double m = sp;
        for (double sn : neg_scores) m = std::max(m, sn);
        double sum = std::exp(sp - m);
        for (double sn : neg_scores) sum += std::exp(sn - m);
        loss += std::log(sum) + m - sp;
    }
    return loss;
}

LinearEmbedder::LinearEmbedder(size_t dim)
    : dim_(dim),
      base_(dim),
      w_query_(Eigen::MatrixXd::Identity(dim, dim)),
      w_context_(Eigen::MatrixXd::Identity(dim, dim)) {}

namespace {

Vector project(const Eigen::MatrixXd& w, const Vector& features) {
    Eigen::Map<const Eigen::VectorXd> x(features.data(), features.size());
    Eigen::VectorXd y = w * x;
    return Vector(y.data(), y.data() + y.size());
}

uint64_t hash_matrix(uint64_t h, const Eigen::MatrixXd& m) {
    const auto* bytes = reinterpret_cast<const unsigned char*>(m.data());
    for (Eigen::Index i = 0; i < m.size() * static_cast<Eigen::Index>(sizeof(double)); ++i) {
        h ^= bytes[i];
        h *= 1099511628211ull;
    }
    return h;
}

}  // namespace

Vector LinearEmbedder::embed_query(const std::string& text) const {
    return project(w_query_, base_.features(text));
}

Vector LinearEmbedder::embed_context(const std::string& text) const {
    return project(w_context_, base_.features(text));
}

std::string LinearEmbedder::fingerprint() const {
    uint64_t h = 14695981039346656037ull;
    h = hash_matrix(h, w_query_);
    h = hash_matrix(h, w_context_);
    return "linear-v1:d=" + std::to_string(dim_) + ":w=" + std::to_string(h);
}

void LinearEmbedder::save(const std::string& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write model file: " + path);
    const char magic[4] = {'T', 'K', 'L', 'M'};
    uint32_t version = 1;
    uint64_t d = dim_;
    out.write(magic, 4);
    out.write(reinterpret_cast<const char*>(&version), sizeof(version));
    out.write(reinterpret_cast<const char*>(&d), sizeof(d));
    auto write_matrix = [&](const Eigen::MatrixXd& m) {
        out.write(reinterpret_cast<const char*>(m.data()),
                  static_cast<std::streamsize>(m.size() * sizeof(double)));
    };
    write_matrix(w_query_);
    write_matrix(w_context_);
    if (!out) throw std::runtime_error("model write failed: " + path);
}

LinearEmbedder LinearEmbedder::load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open model file: " + path);
    char magic[4];
    uint32_t version = 0;
    uint64_t d = 0;
    in.read(magic, 4);
    in.read(reinterpret_cast<char*>(&version), sizeof(version));
    in.read(reinterpret_cast<char*>(&d), sizeof(d));
    if (!in || std::string(magic, 4) != "TKLM" || version != 1)
        throw std::runtime_error("not a model file: " + path);
    LinearEmbedder model(d);
    auto read_matrix = [&](Eigen::MatrixXd& m) {
        in.read(reinterpret_cast<char*>(m.data()),
                static_cast<std::streamsize>(m.size() * sizeof(double)));
    };
    read_matrix(model.w_query_);
    read_matrix(model.w_context_);
    if (!in) throw std::runtime_error("model file truncated: " + path);
    return model;
}

LossGradient loss_gradient(const FeaturizedInstance& inst,
                           const Eigen::MatrixXd& w_query,
                           const Eigen::MatrixXd& w_context) {
    const size_t m = inst.positives.size();
    const size_t n = inst.negatives.size();
    if (m == 0)
        throw std::invalid_argument("loss_gradient: need at least one positive");

    Eigen::VectorXd qv = w_query * inst.question;
    std::vector<Eigen::VectorXd> pos_ctx(m), neg_ctx(n);
    std::vector<double> pos_scores(m), neg_scores(n);
    for (size_t j = 0; j < m; ++j) {
        pos_ctx[j] = w_context * inst.positives[j];
        pos_scores[j] = qv.dot(pos_ctx[j]);
    }
    for (size_t k = 0; k < n; ++k) {
        neg_ctx[k] = w_context * inst.negatives[k];
        neg_scores[k] = qv.dot(neg_ctx[k]);
    }

    LossGradient out;
    out.loss = contrastive_loss(pos_scores, neg_scores);
    out.d_query = Eigen::MatrixXd::Zero(w_query.rows(), w_query.cols());
    out.d_context = Eigen::MatrixXd::Zero(w_context.rows(), w_context.cols());

    // dL/ds per score, accumulated over the per-positive softmax terms.
    std::vector<double> d_pos(m, 0.0), d_neg(n, 0.0);
    for (size_t j = 0; j < m; ++j) {
        double shift = pos_scores[j];
        for (double sn : neg_scores) shift = std::max(shift, sn);
        double z = std::exp(pos_scores[j] - shift);
        for (double sn : neg_scores) z += std::exp(sn - shift);
        double p_pos = std::exp(pos_scores[j] - shift) / z;
        d_pos[j] += p_pos - 1.0;
        for (size_t k = 0; k < n; ++k)
            d_neg[k] += std::exp(neg_scores[k] - shift) / z;
    }

    // s = (Wq hq)·(Wc hc) ⇒ ds/dWq = (Wc hc) hqᵀ, ds/dWc = (Wq hq) hcᵀ.
    for (size_t j = 0; j < m; ++j) {
        out.d_query += d_pos[j] * pos_ctx[j] * inst.question.transpose();
        out.d_context += d_pos[j] * qv * inst.positives[j].transpose();
    }
    for (size_t k = 0; k < n; ++k) {
        out.d_query += d_neg[k] * neg_ctx[k] * inst.question.transpose();
        out.d_context += d_neg[k] * qv * inst.negatives[k].transpose();
    }
    return out;
}

namespace {

std::string context_text(const Triple& tr,
                         const std::map<std::string, Table>& tables,
                         const std::string& table_id, const LabelMap& labels) {
    auto it = tables.find(table_id);
    if (it == tables.end()) return serialize_triple(tr, labels);
    return build_retrieval_context(triple_related_subtable(it->second, tr), tr,
                                   labels);
}

FeaturizedInstance featurize(const RetrievalInstance& inst,
                             const HashingEmbedder& base,
                             const std::map<std::string, Table>& tables,
                             const LabelMap& labels) {
    FeaturizedInstance f;
    Vector hq = base.features(inst.question);
    f.question = Eigen::Map<const Eigen::VectorXd>(hq.data(), hq.size());
    auto to_vec = [&](const Triple& tr) {
        Vector h = base.features(context_text(tr, tables, inst.table_id, labels));
        return Eigen::VectorXd(Eigen::Map<const Eigen::VectorXd>(h.data(), h.size()));
    };
    for (const auto& t : inst.positives) f.positives.push_back(to_vec(t));
    for (const auto& t : inst.negatives) f.negatives.push_back(to_vec(t));
    return f;
}

}  // namespace

double instance_recall_at_k(const EmbeddingProvider& provider,
                            const std::vector<RetrievalInstance>& instances,
                            const std::map<std::string, Table>& tables,
                            const LabelMap& labels, int k) {
    if (instances.empty()) return 0.0;
    double total = 0.0;
    for (const auto& inst : instances) {
        Vector qv = provider.embed_query(inst.question);
        std::vector<std::pair<double, bool>> scored;  // (score, is_positive)
        std::vector<std::pair<std::string, size_t>> order;
        auto add = [&](const Triple& tr, bool positive) {
            double s = dot(qv, provider.embed_context(context_text(
                                   tr, tables, inst.table_id, labels)));
            order.emplace_back(triple_key(tr), scored.size());
            scored.emplace_back(s, positive);
        };
        for (const auto& t : inst.positives) add(t, true);
        for (const auto& t : inst.negatives) add(t, false);
        std::sort(order.begin(), order.end(), [&](const auto& a, const auto& b) {
            double sa = scored[a.second].first, sb = scored[b.second].first;
            if (sa != sb) return sa > sb;
            return a.first < b.first;
        });
        size_t hits = 0;
        for (size_t i = 0; i < order.size() && i < static_cast<size_t>(k); ++i)
            if (scored[order[i].second].second) ++hits;
        total += static_cast<double>(hits) /
                 static_cast<double>(inst.positives.size());
    }
    return total / static_cast<double>(instances.size());
}

TrainResult train_bi_encoder(const std::vector<RetrievalInstance>& dataset,
                             const std::map<std::string, Table>& tables,
                             const LabelMap& labels, const TrainConfig& cfg,
                             const std::vector<RetrievalInstance>* dev_set) {
    if (dataset.empty())
        throw std::invalid_argument("train_bi_encoder: empty dataset");
    LinearEmbedder model(cfg.dim);

    std::vector<FeaturizedInstance> feats;
    feats.reserve(dataset.size());
    for (const auto& inst : dataset)
        feats.push_back(featurize(inst, model.base(), tables, labels));

    TrainResult result{std::move(model), {}};
    LinearEmbedder best = result.model;
    double best_dev = -1.0;

    Rng rng(cfg.seed);
    std::vector<size_t> order(feats.size());
    std::iota(order.begin(), order.end(), 0);

    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        rng.shuffle(order);
        double epoch_loss = 0.0;
        for (size_t start = 0; start < order.size();
             start += static_cast<size_t>(cfg.batch_size)) {
            size_t end = std::min(order.size(),
                                  start + static_cast<size_t>(cfg.batch_size));
            Eigen::MatrixXd gq = Eigen::MatrixXd::Zero(cfg.dim, cfg.dim);
            Eigen::MatrixXd gc = Eigen::MatrixXd::Zero(cfg.dim, cfg.dim);
            for (size_t i = start; i < end; ++i) {
                LossGradient g = loss_gradient(feats[order[i]],
                                               result.model.query_projection(),
                                               result.model.context_projection());
                epoch_loss += g.loss;
                gq += g.d_query;
                gc += g.d_context;
            }
            double scale = cfg.learning_rate / static_cast<double>(end - start);
            result.model.query_projection() -= scale * gq;
            result.model.context_projection() -= scale * gc;
        }
        epoch_loss /= static_cast<double>(feats.size());
        if (std::isnan(epoch_loss))
            throw std::runtime_error(
                "training diverged (loss is NaN); lower the learning rate");

        EpochLog log{epoch, epoch_loss, std::nullopt};
        if (dev_set) {
            double r5 =
                instance_recall_at_k(result.model, *dev_set, tables, labels, 5);
            log.dev_recall_at_5 = r5;
            if (r5 > best_dev) {
                best_dev = r5;
                best = result.model;
            }
        }
        result.log.push_back(log);
    }
    if (dev_set && best_dev >= 0.0) result.model = best;
    return result;
}

}  // namespace tablekb
