#include "expertnet/experts.hpp"

#include "expertnet/errors.hpp"

#include <cmath>

namespace expertnet::experts {

namespace {
constexpr double kProbFloor = 1e-12;
}

void ExpertEnsemble::validate() const {
    if (experts.empty()) throw InvalidArgument("ensemble needs at least one expert");
    for (const auto& e : experts) {
        e.validate();
        if (e.input_dim() != experts.front().input_dim()) throw ShapeError("experts disagree on input dim");
        if (e.output_dim() != class_count) throw ShapeError("expert output dim != class count");
    }
}

ExpertEnsemble make_ensemble(std::size_t k, std::size_t latent_dim, const std::vector<std::size_t>& hidden,
                             std::size_t class_count, std::uint64_t seed) {
    if (k < 1) throw InvalidArgument("ensemble needs k >= 1");
    if (class_count < 2) throw InvalidArgument("need at least two classes");
    ExpertEnsemble ens;
    ens.class_count = class_count;
    std::vector<std::size_t> dims{latent_dim};
    dims.insert(dims.end(), hidden.begin(), hidden.end());
    dims.push_back(class_count);
    for (std::size_t j = 0; j < k; ++j)
        ens.experts.push_back(nn::make_network(dims, nn::Activation::Softmax, derive_seed(seed, 0xE0, j)));
    return ens;
}

CohortRealization sample_cohorts(const Matrix& q, std::uint64_t seed) {
    const auto k = static_cast<std::size_t>(q.cols());
    CohortRealization out;
    out.assignment.resize(static_cast<std::size_t>(q.rows()));
    out.cohorts.assign(k, {});
    Rng rng(seed);
    for (Eigen::Index i = 0; i < q.rows(); ++i) {
        const double u = uniform01(rng);
        double acc = 0.0;
        int pick = -1;
        int last_positive = 0;
        for (Eigen::Index j = 0; j < q.cols(); ++j) {
            if (q(i, j) > 0.0) last_positive = static_cast<int>(j);
            acc += q(i, j);
            if (pick < 0 && u < acc && q(i, j) > 0.0) pick = static_cast<int>(j);
        }
        // rows summing to 1 - eps can leave u above the running total
        if (pick < 0) pick = last_positive;
        out.assignment[i] = pick;
        out.cohorts[pick].push_back(static_cast<std::size_t>(i));
    }
    return out;
}

CohortRealization argmax_cohorts(const Matrix& q) {
    CohortRealization out;
    out.assignment.resize(static_cast<std::size_t>(q.rows()));
    out.cohorts.assign(static_cast<std::size_t>(q.cols()), {});
    for (Eigen::Index i = 0; i < q.rows(); ++i) {
        Eigen::Index best = 0;
        for (Eigen::Index j = 1; j < q.cols(); ++j)
            if (q(i, j) > q(i, best)) best = j;
        out.assignment[i] = static_cast<int>(best);
        out.cohorts[best].push_back(static_cast<std::size_t>(i));
    }
    return out;
}

Matrix cohort_weights(const Matrix& q, const CohortRealization& cohorts) {
    if (cohorts.assignment.size() != static_cast<std::size_t>(q.rows()))
        throw ShapeError("cohort realization does not match q");
    Matrix w = Matrix::Zero(q.rows(), q.cols());
    for (Eigen::Index i = 0; i < q.rows(); ++i) {
        const int j = cohorts.assignment[i];
        w(i, j) = q(i, j);
    }
    return w;
}

ExpertLoss expert_cross_entropy(const Matrix& probs, std::span<const int> labels, const Vector& weights,
                                double normalizer) {
    if (static_cast<std::size_t>(probs.rows()) != labels.size() || weights.size() != probs.rows())
        throw ShapeError("expert_cross_entropy: row counts differ");
    if (!(normalizer > 0.0)) throw InvalidArgument("normalizer must be positive");
    ExpertLoss out;
    out.logit_grad = probs;
    out.cross_entropy.resize(probs.rows());
    for (Eigen::Index i = 0; i < probs.rows(); ++i) {
        const int y = labels[i];
        if (y < 0 || y >= probs.cols()) throw InvalidArgument("label out of range");
        const double ce = -std::log(std::max(probs(i, y), kProbFloor));
        out.cross_entropy[i] = ce;
        out.loss += weights[i] * ce;
        // d(-log softmax_y)/dlogits = p - onehot(y)
        out.logit_grad(i, y) -= 1.0;
        out.logit_grad.row(i) *= weights[i] / normalizer;
    }
    out.loss /= normalizer;
    return out;
}

SupervisedLoss supervised_loss(const Matrix& weights, std::span<const int> labels,
                               const std::vector<Matrix>& expert_probs, double normalizer) {
    if (static_cast<std::size_t>(weights.cols()) != expert_probs.size())
        throw ShapeError("supervised_loss: weight columns != expert count");
    SupervisedLoss out;
    out.weight_grad.resize(weights.rows(), weights.cols());
    for (std::size_t j = 0; j < expert_probs.size(); ++j) {
        const auto col = static_cast<Eigen::Index>(j);
        ExpertLoss e = expert_cross_entropy(expert_probs[j], labels, weights.col(col), normalizer);
        out.loss += e.loss;
        out.weight_grad.col(col) = e.cross_entropy / normalizer;
        out.logit_grads.push_back(std::move(e.logit_grad));
    }
    return out;
}

Vector predict(const Vector& q_row, const std::vector<Vector>& expert_probs_row) {
    if (static_cast<std::size_t>(q_row.size()) != expert_probs_row.size() || expert_probs_row.empty())
        throw ShapeError("predict: gate and expert count differ");
    Vector out = Vector::Zero(expert_probs_row.front().size());
    for (std::size_t j = 0; j < expert_probs_row.size(); ++j) out += q_row[static_cast<Eigen::Index>(j)] * expert_probs_row[j];
    return out;
}

Vector hard_predict_mode(const Vector& q_row, const std::vector<Vector>& expert_probs_row) {
    if (static_cast<std::size_t>(q_row.size()) != expert_probs_row.size() || expert_probs_row.empty())
        throw ShapeError("hard_predict_mode: gate and expert count differ");
    Eigen::Index best = 0;
    for (Eigen::Index j = 1; j < q_row.size(); ++j)
        if (q_row[j] > q_row[best]) best = j;
    return expert_probs_row[static_cast<std::size_t>(best)];
}

Matrix predict_batch(const Matrix& q, const std::vector<Matrix>& expert_probs, bool weighted) {
    if (static_cast<std::size_t>(q.cols()) != expert_probs.size() || expert_probs.empty())
        throw ShapeError("predict_batch: gate and expert count differ");
    Matrix out = Matrix::Zero(q.rows(), expert_probs.front().cols());
    if (weighted) {
        for (std::size_t j = 0; j < expert_probs.size(); ++j)
            out += q.col(static_cast<Eigen::Index>(j)).asDiagonal() * expert_probs[j];
        return out;
    }
    const auto cohorts = argmax_cohorts(q);
    for (Eigen::Index i = 0; i < q.rows(); ++i) out.row(i) = expert_probs[cohorts.assignment[i]].row(i);
    return out;
}

}  // namespace expertnet::experts
