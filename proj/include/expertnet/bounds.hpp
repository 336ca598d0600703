#pragma once

#include "expertnet/types.hpp"

#include <span>
#include <string>
#include <vector>

/// Margin losses and generalization-gap calculators for piecewise models
/// (one predictor per cluster region). Everything here is closed-form
/// arithmetic over supplied norms and empirical quantities.
namespace expertnet::bounds {

/// Ramp: 0 for q >= rho, 1 - q/rho on [0, rho], 1 for q <= 0.
double ramp(double q, double rho);

/// Binary margin loss of score fx for y in {-1, +1}.
double margin_loss_binary(double fx, int y, double rho);

/// Multiclass margin loss: ramp(fx_y - max_{y' != y} fx_y').
double margin_loss_multiclass(std::span<const double> fx, int y, double rho);

/// 1{fx * y <= 0}.
int zero_one_loss_binary(double fx, int y);

/// 1{y != argmax fx}, argmax taking the lowest index on ties.
int zero_one_loss_multiclass(std::span<const double> fx, int y);

struct BoundParams {
    double rho = 1.0;
    int expert_depth = 1;                       // L
    int shared_depth = 1;                       // Q
    std::vector<double> shared_norm_caps;       // M^0, length Q
    std::vector<std::vector<double>> expert_norm_caps;  // M^j, k rows of length L
    std::vector<double> input_bounds;           // B_j, length k
    double sample_count = 1.0;                  // N
    double delta = 0.05;
    int class_count = 2;

    int k() const noexcept { return static_cast<int>(input_bounds.size()); }
    void validate() const;
};

/// Per-cluster quantities for the general (non-uniform) bounds.
struct ClusterEmpirics {
    std::vector<double> empirical_loss;   // mean margin loss in cluster j
    std::vector<double> rademacher;       // Rademacher estimate for cluster j
    std::vector<double> loss_cap;         // lambda_j
    std::vector<double> probability;      // Pr(x in Omega_j)
    std::vector<double> sample_count;     // N_j

    std::size_t k() const noexcept { return empirical_loss.size(); }
    void validate() const;
};

/// Norm-based Rademacher bound for one cluster's composed network:
///   B_j sqrt(k) (sqrt(2 ln2 (L+Q)) + 1) prod M^j prod M^0 / sqrt(N)
double rademacher_term(double input_bound, int k, int expert_depth, int shared_depth,
                       std::span<const double> expert_caps, std::span<const double> shared_caps,
                       double sample_count);

struct GapBound {
    double complexity = 0.0;
    double confidence = 0.0;
    double total = 0.0;
};

/// Uniform-partition bound:
///   zeta (sum_j B_j prod_l M_l^j) / sqrt(kN) + 3 sqrt(k ln(2k/delta) / 2N)
/// with zeta = 2/rho (sqrt(2 ln2 (L+Q)) + 1) prod_l M_l^0.
GapBound bound_uniform(const BoundParams& params);

/// zeta of bound_uniform, exposed for reporting.
double complexity_coefficient(const BoundParams& params);

/// General loss bounded by lambda_j:
///   sum_j Pr_j (emp_j + 2 R_j + 3 lambda_j sqrt(ln(k/delta) / 2N_j))
double bound_general(const ClusterEmpirics& emp, double delta);

/// Multiclass margin bound:
///   sum_j Pr_j (emp_j + (2B^2/rho) R_j + (1 + 2B^2/rho) sqrt(ln(2k/delta) / 2N_j))
double bound_multiclass(const ClusterEmpirics& emp, double delta, double rho, int class_count);

/// Binary margin bound:
///   sum_j Pr_j (emp_j + (2/rho) R_j + 3 sqrt(ln(2/delta) / 2N_j))
double bound_binary(const ClusterEmpirics& emp, double delta, double rho);

/// How a k sweep extends a parameter set to k clusters.
enum class KSweepMode {
    // sum_j B_j prod M^j held at its base value, split evenly over the k clusters
    FixedBudget,
    // every cluster copies cluster 0's B_j and M^j, so the budget grows with k
    FixedPerCluster,
};

struct SweepRow {
    double axis = 0.0;  // k or N
    GapBound gap;
};

/// bound_uniform at k = 1..k_max.
std::vector<SweepRow> sweep_k(const BoundParams& base, int k_max, KSweepMode mode);

/// bound_uniform at each sample count, everything else fixed.
std::vector<SweepRow> sweep_n(const BoundParams& base, std::span<const double> sample_counts);

}  // namespace expertnet::bounds
