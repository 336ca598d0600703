#include "expertnet/clustering.hpp"

#include "expertnet/errors.hpp"

#include <cmath>
#include <limits>

namespace expertnet::clustering {

namespace {

constexpr double kSizeFloor = 1e-12;

void check_latent(const Matrix& z, const Matrix& centroids) {
    if (centroids.rows() < 1) throw InvalidArgument("need at least one centroid");
    if (z.cols() != centroids.cols())
        throw ShapeError("latent dim " + std::to_string(z.cols()) + " != centroid dim " +
                         std::to_string(centroids.cols()));
}

// (1 + |z_i - mu_j|^2)^-1 for every pair.
Matrix student_kernel(const Matrix& z, const Matrix& centroids) {
    Matrix kern(z.rows(), centroids.rows());
    for (Eigen::Index j = 0; j < centroids.rows(); ++j)
        kern.col(j) = (1.0 + (z.rowwise() - centroids.row(j)).rowwise().squaredNorm().array()).inverse().matrix();
    return kern;
}

double squared_distance(const Matrix& a, Eigen::Index i, const Matrix& b, Eigen::Index j) {
    return (a.row(i) - b.row(j)).squaredNorm();
}

}  // namespace

Matrix soft_assign(const Matrix& z, const Matrix& centroids) {
    check_latent(z, centroids);
    Matrix kern = student_kernel(z, centroids);
    const Vector sums = kern.rowwise().sum();
    return kern.array().colwise() / sums.array();
}

Matrix target_distribution(const Matrix& q) {
    const RowVector freq = q.colwise().sum();
    if ((freq.array() <= 0.0).any() || !freq.allFinite())
        throw NumericError("target_distribution: a cluster has zero total assignment");
    // A single row is its own target: the frequency division cancels.
    if (q.rows() == 1) return q;
    Matrix weight = q.array().square().rowwise() / freq.array();
    const Vector sums = weight.rowwise().sum();
    if ((sums.array() <= 0.0).any()) throw NumericError("target_distribution: zero row");
    return weight.array().colwise() / sums.array();
}

double kl_loss(const Matrix& p_target, const Matrix& q) {
    if (p_target.rows() != q.rows() || p_target.cols() != q.cols())
        throw ShapeError("kl_loss: P and Q shapes differ");
    double total = 0.0;
    for (Eigen::Index i = 0; i < q.rows(); ++i) {
        for (Eigen::Index j = 0; j < q.cols(); ++j) {
            const double p = p_target(i, j);
            if (p <= 0.0) continue;
            if (q(i, j) <= 0.0) throw NumericError("kl_loss: p > 0 where q = 0");
            total += p * std::log(p / q(i, j));
        }
    }
    return total;
}

ClusterGradients kl_gradients(const Matrix& z, const Matrix& centroids, const Matrix& p_target,
                              const Matrix& q) {
    check_latent(z, centroids);
    if (p_target.rows() != z.rows() || q.rows() != z.rows() || p_target.cols() != centroids.rows() ||
        q.cols() != centroids.rows())
        throw ShapeError("kl_gradients: inconsistent shapes");
    const Matrix kern = student_kernel(z, centroids);
    // c_ij = 2 k_ij (p_ij - q_ij)
    const Matrix coef = 2.0 * kern.cwiseProduct(p_target - q);
    ClusterGradients g;
    // dz_i = sum_j c_ij (z_i - mu_j)
    g.dz = coef.rowwise().sum().asDiagonal() * z - coef * centroids;
    // dmu_j = sum_i -c_ij (z_i - mu_j)
    g.dmu = coef.colwise().sum().transpose().asDiagonal() * centroids - coef.transpose() * z;
    return g;
}

ClusterGradients soft_assign_backward(const Matrix& z, const Matrix& centroids, const Matrix& q,
                                      const Matrix& dq) {
    check_latent(z, centroids);
    if (q.rows() != z.rows() || dq.rows() != z.rows() || q.cols() != centroids.rows() ||
        dq.cols() != centroids.rows())
        throw ShapeError("soft_assign_backward: inconsistent shapes");
    const Matrix kern = student_kernel(z, centroids);
    // dL/dlog k_il = q_il (G_il - <G_i, q_i>)
    const Vector inner = dq.cwiseProduct(q).rowwise().sum();
    const Matrix a = q.cwiseProduct(dq.colwise() - inner);
    // dlog k_il/dz_i = -2 k_il (z_i - mu_l); dlog k_il/dmu_l = +2 k_il (z_i - mu_l)
    const Matrix coef = -2.0 * a.cwiseProduct(kern);
    ClusterGradients g;
    g.dz = coef.rowwise().sum().asDiagonal() * z - coef * centroids;
    g.dmu = coef.colwise().sum().transpose().asDiagonal() * centroids - coef.transpose() * z;
    return g;
}

KMeansResult kmeans(const Matrix& z, int k, std::uint64_t seed, int max_iters) {
    const Eigen::Index n = z.rows();
    if (k < 1) throw InvalidArgument("kmeans: k must be >= 1");
    if (n < k) throw InvalidArgument("kmeans: fewer points (" + std::to_string(n) + ") than clusters (" +
                                     std::to_string(k) + ")");
    if (max_iters < 1) throw InvalidArgument("kmeans: max_iters must be >= 1");

    Rng rng(seed);
    KMeansResult res;
    res.centroids.resize(k, z.cols());

    // k-means++ seeding
    std::vector<double> d2(static_cast<std::size_t>(n), std::numeric_limits<double>::infinity());
    std::vector<bool> chosen(static_cast<std::size_t>(n), false);
    auto first = static_cast<Eigen::Index>(uniform01(rng) * static_cast<double>(n));
    if (first >= n) first = n - 1;
    res.centroids.row(0) = z.row(first);
    chosen[static_cast<std::size_t>(first)] = true;
    for (int c = 1; c < k; ++c) {
        double total = 0.0;
        for (Eigen::Index i = 0; i < n; ++i) {
            d2[i] = std::min(d2[i], squared_distance(z, i, res.centroids, c - 1));
            total += d2[i];
        }
        Eigen::Index pick = -1;
        if (total > 0.0) {
            const double target = uniform01(rng) * total;
            double acc = 0.0;
            for (Eigen::Index i = 0; i < n; ++i) {
                acc += d2[i];
                if (d2[i] > 0.0 && acc > target) {
                    pick = i;
                    break;
                }
            }
            if (pick < 0) {
                for (Eigen::Index i = n; i-- > 0;)
                    if (d2[i] > 0.0) {
                        pick = i;
                        break;
                    }
            }
        }
        if (pick < 0) {
            // every remaining point coincides with a centroid; take the first unused one
            for (Eigen::Index i = 0; i < n; ++i)
                if (!chosen[i]) {
                    pick = i;
                    break;
                }
        }
        chosen[static_cast<std::size_t>(pick)] = true;
        res.centroids.row(c) = z.row(pick);
    }

    res.labels.assign(static_cast<std::size_t>(n), -1);
    std::vector<double> dist(static_cast<std::size_t>(n), 0.0);
    for (int iter = 0; iter < max_iters; ++iter) {
        bool changed = false;
        double inertia = 0.0;
        for (Eigen::Index i = 0; i < n; ++i) {
            int best = 0;
            double best_d = squared_distance(z, i, res.centroids, 0);
            for (int c = 1; c < k; ++c) {
                const double d = squared_distance(z, i, res.centroids, c);
                if (d < best_d) {
                    best_d = d;
                    best = c;
                }
            }
            if (res.labels[i] != best) changed = true;
            res.labels[i] = best;
            dist[i] = best_d;
            inertia += best_d;
        }

        // Reseed empty clusters at the worst-served point; this only lowers inertia.
        std::vector<Eigen::Index> counts(static_cast<std::size_t>(k), 0);
        for (int l : res.labels) ++counts[l];
        for (int c = 0; c < k; ++c) {
            if (counts[c] > 0) continue;
            Eigen::Index far = -1;
            for (Eigen::Index i = 0; i < n; ++i)
                if (counts[res.labels[i]] > 1 && (far < 0 || dist[i] > dist[far])) far = i;
            if (far < 0) break;
            --counts[res.labels[far]];
            ++counts[c];
            inertia -= dist[far];
            res.labels[far] = c;
            dist[far] = 0.0;
            res.centroids.row(c) = z.row(far);
            changed = true;
        }
        res.inertia_history.push_back(inertia);
        res.iterations = iter + 1;

        if (!changed && iter > 0) {
            res.converged = true;
            break;
        }

        Matrix sums = Matrix::Zero(k, z.cols());
        for (Eigen::Index i = 0; i < n; ++i) sums.row(res.labels[i]) += z.row(i);
        for (int c = 0; c < k; ++c)
            if (counts[c] > 0) res.centroids.row(c) = sums.row(c) / static_cast<double>(counts[c]);
    }
    return res;
}

Vector cluster_sizes(const Matrix& q) {
    if (q.rows() == 0) throw InvalidArgument("cluster_sizes: empty q");
    return q.colwise().sum().transpose() / static_cast<double>(q.rows());
}

double balance_loss(const Matrix& q) {
    const Vector s = cluster_sizes(q);
    const double u = std::sqrt(1.0 / static_cast<double>(q.cols()));
    const Vector diff = s.array().max(kSizeFloor).sqrt() - u;
    return 0.5 * diff.norm();
}

Matrix balance_gradient(const Matrix& q) {
    const Vector s = cluster_sizes(q).array().max(kSizeFloor);
    const double u = std::sqrt(1.0 / static_cast<double>(q.cols()));
    const Vector root = s.array().sqrt();
    const Vector diff = root.array() - u;
    const double dist = diff.norm();
    Matrix grad = Matrix::Zero(q.rows(), q.cols());
    if (dist < 1e-15) return grad;
    // dL/dS_j = (sqrt(S_j) - u) / (4 D sqrt(S_j)); dS_j/dq_ij = 1/N
    const Vector ds = diff.array() / (4.0 * dist * root.array());
    grad.rowwise() = ds.transpose() / static_cast<double>(q.rows());
    return grad;
}

std::vector<int> hard_assignments(const Matrix& q) {
    std::vector<int> out(static_cast<std::size_t>(q.rows()));
    for (Eigen::Index i = 0; i < q.rows(); ++i) {
        Eigen::Index best = 0;
        for (Eigen::Index j = 1; j < q.cols(); ++j)
            if (q(i, j) > q(i, best)) best = j;
        out[i] = static_cast<int>(best);
    }
    return out;
}

}  // namespace expertnet::clustering
