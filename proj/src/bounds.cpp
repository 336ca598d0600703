#include "expertnet/bounds.hpp"

#include "expertnet/errors.hpp"

#include <cmath>
#include <functional>
#include <numbers>
#include <numeric>

namespace expertnet::bounds {

namespace {

double product(std::span<const double> v) {
    return std::accumulate(v.begin(), v.end(), 1.0, std::multiplies<>());
}

double depth_factor(int expert_depth, int shared_depth) {
    return std::sqrt(2.0 * std::numbers::ln2 * static_cast<double>(expert_depth + shared_depth)) + 1.0;
}

void check_delta(double delta) {
    if (!(delta > 0.0 && delta < 1.0)) throw InvalidArgument("delta must lie in (0, 1)");
}

void check_rho(double rho) {
    if (!(rho > 0.0) || !std::isfinite(rho)) throw InvalidArgument("rho must be positive");
}

bool nonnegative(std::span<const double> v) {
    for (double x : v)
        if (!(x >= 0.0) || !std::isfinite(x)) return false;
    return true;
}

}  // namespace

double ramp(double q, double rho) {
    check_rho(rho);
    if (q >= rho) return 0.0;
    if (q <= 0.0) return 1.0;
    return 1.0 - q / rho;
}

double margin_loss_binary(double fx, int y, double rho) {
    if (y != 1 && y != -1) throw InvalidArgument("binary label must be -1 or +1");
    return ramp(fx * y, rho);
}

double margin_loss_multiclass(std::span<const double> fx, int y, double rho) {
    if (fx.size() < 2) throw InvalidArgument("multiclass margin needs at least two scores");
    if (y < 0 || static_cast<std::size_t>(y) >= fx.size()) throw InvalidArgument("label out of range");
    double other = -std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < fx.size(); ++c)
        if (static_cast<int>(c) != y) other = std::max(other, fx[c]);
    return ramp(fx[static_cast<std::size_t>(y)] - other, rho);
}

int zero_one_loss_binary(double fx, int y) {
    if (y != 1 && y != -1) throw InvalidArgument("binary label must be -1 or +1");
    return fx * y <= 0.0 ? 1 : 0;
}

int zero_one_loss_multiclass(std::span<const double> fx, int y) {
    if (fx.empty()) throw InvalidArgument("empty score vector");
    if (y < 0 || static_cast<std::size_t>(y) >= fx.size()) throw InvalidArgument("label out of range");
    std::size_t best = 0;
    for (std::size_t c = 1; c < fx.size(); ++c)
        if (fx[c] > fx[best]) best = c;
    return static_cast<int>(best) == y ? 0 : 1;
}

void BoundParams::validate() const {
    check_rho(rho);
    check_delta(delta);
    if (expert_depth < 1 || shared_depth < 1) throw InvalidArgument("depths must be >= 1");
    if (!(sample_count >= 1.0)) throw InvalidArgument("sample count must be >= 1");
    if (input_bounds.empty()) throw InvalidArgument("need at least one cluster");
    if (shared_norm_caps.size() != static_cast<std::size_t>(shared_depth))
        throw InvalidArgument("shared_norm_caps needs one entry per shared layer");
    if (expert_norm_caps.size() != input_bounds.size())
        throw InvalidArgument("expert_norm_caps needs one row per cluster");
    for (const auto& row : expert_norm_caps) {
        if (row.size() != static_cast<std::size_t>(expert_depth))
            throw InvalidArgument("expert_norm_caps rows need one entry per expert layer");
        if (!nonnegative(row)) throw InvalidArgument("norm caps must be >= 0");
    }
    if (!nonnegative(shared_norm_caps) || !nonnegative(input_bounds))
        throw InvalidArgument("norm caps and input bounds must be >= 0");
    if (class_count < 2) throw InvalidArgument("class_count must be >= 2");
}

void ClusterEmpirics::validate() const {
    const std::size_t k = empirical_loss.size();
    if (k == 0) throw InvalidArgument("need at least one cluster");
    if (rademacher.size() != k || loss_cap.size() != k || probability.size() != k || sample_count.size() != k)
        throw InvalidArgument("cluster empirics vectors differ in length");
    for (double n : sample_count)
        if (!(n >= 1.0)) throw InvalidArgument("every cluster needs N_j >= 1");
    if (!nonnegative(empirical_loss) || !nonnegative(rademacher) || !nonnegative(loss_cap) ||
        !nonnegative(probability))
        throw InvalidArgument("cluster empirics must be nonnegative");
    const double total = std::accumulate(probability.begin(), probability.end(), 0.0);
    if (std::abs(total - 1.0) > 1e-9) throw InvalidArgument("cluster probabilities must sum to 1");
}

double rademacher_term(double input_bound, int k, int expert_depth, int shared_depth,
                       std::span<const double> expert_caps, std::span<const double> shared_caps,
                       double sample_count) {
    if (k < 1 || expert_depth < 1 || shared_depth < 1 || !(sample_count > 0.0))
        throw InvalidArgument("rademacher_term: k, depths and N must be positive");
    return input_bound * std::sqrt(static_cast<double>(k)) * depth_factor(expert_depth, shared_depth) *
           product(expert_caps) * product(shared_caps) / std::sqrt(sample_count);
}

double complexity_coefficient(const BoundParams& p) {
    return 2.0 / p.rho * depth_factor(p.expert_depth, p.shared_depth) * product(p.shared_norm_caps);
}

GapBound bound_uniform(const BoundParams& p) {
    p.validate();
    const double k = static_cast<double>(p.k());
    double weighted = 0.0;
    for (std::size_t j = 0; j < p.input_bounds.size(); ++j)
        weighted += p.input_bounds[j] * product(p.expert_norm_caps[j]);
    GapBound g;
    g.complexity = complexity_coefficient(p) * weighted / std::sqrt(k * p.sample_count);
    g.confidence = 3.0 * std::sqrt(k * std::log(2.0 * k / p.delta) / (2.0 * p.sample_count));
    g.total = g.complexity + g.confidence;
    return g;
}

double bound_general(const ClusterEmpirics& emp, double delta) {
    emp.validate();
    check_delta(delta);
    const double k = static_cast<double>(emp.k());
    double total = 0.0;
    for (std::size_t j = 0; j < emp.k(); ++j)
        total += emp.probability[j] * (emp.empirical_loss[j] + 2.0 * emp.rademacher[j] +
                                       3.0 * emp.loss_cap[j] * std::sqrt(std::log(k / delta) / (2.0 * emp.sample_count[j])));
    return total;
}

double bound_multiclass(const ClusterEmpirics& emp, double delta, double rho, int class_count) {
    emp.validate();
    check_delta(delta);
    check_rho(rho);
    if (class_count < 2) throw InvalidArgument("class_count must be >= 2");
    const double k = static_cast<double>(emp.k());
    const double coef = 2.0 * class_count * class_count / rho;
    double total = 0.0;
    for (std::size_t j = 0; j < emp.k(); ++j)
        total += emp.probability[j] * (emp.empirical_loss[j] + coef * emp.rademacher[j] +
                                       (1.0 + coef) * std::sqrt(std::log(2.0 * k / delta) / (2.0 * emp.sample_count[j])));
    return total;
}

double bound_binary(const ClusterEmpirics& emp, double delta, double rho) {
    emp.validate();
    check_delta(delta);
    check_rho(rho);
    double total = 0.0;
    for (std::size_t j = 0; j < emp.k(); ++j)
        total += emp.probability[j] * (emp.empirical_loss[j] + 2.0 / rho * emp.rademacher[j] +
                                       3.0 * std::sqrt(std::log(2.0 / delta) / (2.0 * emp.sample_count[j])));
    return total;
}

std::vector<SweepRow> sweep_k(const BoundParams& base, int k_max, KSweepMode mode) {
    base.validate();
    if (k_max < 1) throw InvalidArgument("k_max must be >= 1");
    double budget = 0.0;
    for (std::size_t j = 0; j < base.input_bounds.size(); ++j)
        budget += base.input_bounds[j] * product(base.expert_norm_caps[j]);
    std::vector<SweepRow> rows;
    for (int k = 1; k <= k_max; ++k) {
        BoundParams p = base;
        const auto n = static_cast<std::size_t>(k);
        if (mode == KSweepMode::FixedBudget) {
            p.expert_norm_caps.assign(n, std::vector<double>(static_cast<std::size_t>(base.expert_depth), 1.0));
            p.input_bounds.assign(n, budget / k);
        } else {
            p.expert_norm_caps.assign(n, base.expert_norm_caps.front());
            p.input_bounds.assign(n, base.input_bounds.front());
        }
        rows.push_back({static_cast<double>(k), bound_uniform(p)});
    }
    return rows;
}

std::vector<SweepRow> sweep_n(const BoundParams& base, std::span<const double> sample_counts) {
    std::vector<SweepRow> rows;
    for (double n : sample_counts) {
        BoundParams p = base;
        p.sample_count = n;
        rows.push_back({n, bound_uniform(p)});
    }
    return rows;
}

}  // namespace expertnet::bounds
