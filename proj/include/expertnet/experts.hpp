#pragma once

#include "expertnet/nn.hpp"
#include "expertnet/types.hpp"

#include <cstdint>
#include <span>
#include <vector>

namespace expertnet::experts {

/// k local classifiers sharing one latent input space. Each maps p -> B
/// softmax probabilities.
struct ExpertEnsemble {
    std::vector<nn::MlpNetwork> experts;
    std::size_t class_count = 0;

    std::size_t k() const noexcept { return experts.size(); }
    std::size_t input_dim() const { return experts.front().input_dim(); }
    void validate() const;

    bool operator==(const ExpertEnsemble&) const = default;
};

/// Experts of shape latent_dim -> hidden... -> class_count, each seeded from
/// its own derived stream.
ExpertEnsemble make_ensemble(std::size_t k, std::size_t latent_dim, const std::vector<std::size_t>& hidden,
                             std::size_t class_count, std::uint64_t seed);

/// One realization of cluster membership: assignment[i] in [0, k) and the
/// index lists it induces.
struct CohortRealization {
    std::vector<int> assignment;
    std::vector<std::vector<std::size_t>> cohorts;
};

/// Draw s_i ~ Categorical(q_i.) independently per row.
CohortRealization sample_cohorts(const Matrix& q, std::uint64_t seed);

/// Deterministic cohorts from argmax_j q_ij (lowest index on ties).
CohortRealization argmax_cohorts(const Matrix& q);

/// q masked to each point's cohort: w_ij = q_ij if s_i == j else 0.
Matrix cohort_weights(const Matrix& q, const CohortRealization& cohorts);

/// Weighted cross entropy of a single expert over its rows.
struct ExpertLoss {
    double loss = 0.0;       // sum_i w_i * CE_i / normalizer
    Matrix logit_grad;       // rows x B, dL/dlogits
    Vector cross_entropy;    // CE_i = -log max(p_i,y, 1e-12), unweighted
};

ExpertLoss expert_cross_entropy(const Matrix& probs, std::span<const int> labels, const Vector& weights,
                                double normalizer);

/// L_s = (1/normalizer) sum_j sum_i w_ij CE(y_i, probs_j[i]).
struct SupervisedLoss {
    double loss = 0.0;
    std::vector<Matrix> logit_grads;  // one per expert, N x B
    Matrix weight_grad;               // dL/dw_ij = CE_ij / normalizer
};

SupervisedLoss supervised_loss(const Matrix& weights, std::span<const int> labels,
                               const std::vector<Matrix>& expert_probs, double normalizer = 1.0);

/// Q-weighted mixture: sum_j q_j * probs_j.
Vector predict(const Vector& q_row, const std::vector<Vector>& expert_probs_row);

/// Output of expert argmax_j q_j alone; ties go to the lowest index.
Vector hard_predict_mode(const Vector& q_row, const std::vector<Vector>& expert_probs_row);

/// Batched forms of the two rules above. expert_probs[j] is N x B.
Matrix predict_batch(const Matrix& q, const std::vector<Matrix>& expert_probs, bool weighted);

}  // namespace expertnet::experts
