#pragma once

#include "expertnet/types.hpp"

#include <cstdint>
#include <vector>

namespace expertnet::clustering {

/// Centroids in latent space plus the soft assignment and its sharpened target.
struct ClusterState {
    Matrix centroids;  // k x p
    Matrix q;          // N x k
    Matrix p_target;   // N x k
};

/// Student-t kernel (one degree of freedom) similarity, row-normalized:
///   q_ij = (1 + |z_i - mu_j|^2)^-1 / sum_l (1 + |z_i - mu_l|^2)^-1
Matrix soft_assign(const Matrix& z, const Matrix& centroids);

/// Self-training target: square q, divide by cluster frequency sum_i q_ij,
/// renormalize each row.
Matrix target_distribution(const Matrix& q);

/// KL(P || Q) summed over all entries, with 0 log 0 = 0.
double kl_loss(const Matrix& p_target, const Matrix& q);

struct ClusterGradients {
    Matrix dz;   // N x p
    Matrix dmu;  // k x p
};

/// Closed-form gradients of kl_loss with P held fixed.
ClusterGradients kl_gradients(const Matrix& z, const Matrix& centroids, const Matrix& p_target,
                              const Matrix& q);

/// Chain an arbitrary upstream gradient dL/dq through soft_assign to z and the
/// centroids. Used for the balance and supervised terms, which depend on q.
ClusterGradients soft_assign_backward(const Matrix& z, const Matrix& centroids, const Matrix& q,
                                      const Matrix& dq);

struct KMeansResult {
    Matrix centroids;
    std::vector<int> labels;
    std::vector<double> inertia_history;  // one entry per assignment step
    int iterations = 0;
    bool converged = false;
};

/// k-means++ seeding followed by Lloyd iterations until the assignment stops
/// changing or `max_iters` is hit. An empty cluster is reseeded at the point
/// farthest from its current centroid.
KMeansResult kmeans(const Matrix& z, int k, std::uint64_t seed, int max_iters = 100);

/// Soft cluster sizes S_j = (1/N) sum_i q_ij compared with the uniform vector:
///   L_bal = 1/2 * || sqrt(S) - sqrt(1/k) ||_2
double balance_loss(const Matrix& q);

/// dL_bal/dq (N x k). Zero at exact balance, where the norm is not differentiable.
Matrix balance_gradient(const Matrix& q);

/// Soft cluster sizes normalized to a distribution.
Vector cluster_sizes(const Matrix& q);

/// argmax_j q_ij per row; ties go to the lowest index.
std::vector<int> hard_assignments(const Matrix& q);

}  // namespace expertnet::clustering
