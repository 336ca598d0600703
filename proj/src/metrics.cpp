#include "expertnet/metrics.hpp"

#include "expertnet/errors.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <set>
#include <sstream>

namespace expertnet::metrics {

namespace {

constexpr double kPFloor = 1e-300;
constexpr double kSignificance = 0.05;

double beta_continued_fraction(double a, double b, double x) {
    constexpr int kMaxIter = 10000;
    constexpr double kEps = 1e-15;
    constexpr double kTiny = 1e-300;
    const double qab = a + b;
    const double qap = a + 1.0;
    const double qam = a - 1.0;
    double c = 1.0;
    double d = 1.0 - qab * x / qap;
    if (std::abs(d) < kTiny) d = kTiny;
    d = 1.0 / d;
    double h = d;
    for (int m = 1; m <= kMaxIter; ++m) {
        const double m2 = 2.0 * m;
        double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if (std::abs(d) < kTiny) d = kTiny;
        c = 1.0 + aa / c;
        if (std::abs(c) < kTiny) c = kTiny;
        d = 1.0 / d;
        h *= d * c;
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if (std::abs(d) < kTiny) d = kTiny;
        c = 1.0 + aa / c;
        if (std::abs(c) < kTiny) c = kTiny;
        d = 1.0 / d;
        const double del = d * c;
        h *= del;
        if (std::abs(del - 1.0) < kEps) return h;
    }
    throw NumericError("incomplete beta continued fraction did not converge");
}

double mean_of(std::span<const double> v) {
    return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double sample_variance(std::span<const double> v, double mean) {
    double ss = 0.0;
    for (double x : v) ss += (x - mean) * (x - mean);
    return ss / static_cast<double>(v.size() - 1);
}

std::string fmt(double v) {
    std::ostringstream os;
    os.precision(10);
    os << v;
    return os.str();
}

}  // namespace

double incomplete_beta(double a, double b, double x) {
    if (!(a > 0.0) || !(b > 0.0)) throw InvalidArgument("incomplete_beta: a and b must be positive");
    if (!(x >= 0.0 && x <= 1.0)) throw InvalidArgument("incomplete_beta: x must lie in [0, 1]");
    if (x == 0.0) return 0.0;
    if (x == 1.0) return 1.0;
    const double log_front =
        std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) + a * std::log(x) + b * std::log1p(-x);
    const double front = std::exp(log_front);
    // the continued fraction converges fast on this side of the mean
    if (x < (a + 1.0) / (a + b + 2.0)) return front * beta_continued_fraction(a, b, x) / a;
    return 1.0 - front * beta_continued_fraction(b, a, 1.0 - x) / b;
}

double student_t_two_sided(double t, double df) {
    if (!(df > 0.0)) throw InvalidArgument("degrees of freedom must be positive");
    if (std::isnan(t)) throw NumericError("t statistic is NaN");
    if (std::isinf(t)) return 0.0;
    return incomplete_beta(0.5 * df, 0.5, df / (df + t * t));
}

TTestResult welch_t_test(std::span<const double> a, std::span<const double> b) {
    if (a.size() < 2 || b.size() < 2) throw InvalidArgument("welch_t_test needs at least 2 values per sample");
    const double ma = mean_of(a);
    const double mb = mean_of(b);
    const double va = sample_variance(a, ma) / static_cast<double>(a.size());
    const double vb = sample_variance(b, mb) / static_cast<double>(b.size());
    const double se2 = va + vb;
    TTestResult r;
    if (se2 == 0.0) {
        r.df = static_cast<double>(a.size() + b.size() - 2);
        if (ma == mb) return r;  // t = 0, p = 1
        r.t = ma > mb ? std::numeric_limits<double>::infinity() : -std::numeric_limits<double>::infinity();
        r.p = kPFloor;
        return r;
    }
    r.t = (ma - mb) / std::sqrt(se2);
    r.df = se2 * se2 / (va * va / static_cast<double>(a.size() - 1) + vb * vb / static_cast<double>(b.size() - 1));
    r.p = std::clamp(student_t_two_sided(r.t, r.df), kPFloor, 1.0);
    return r;
}

HtfdResult htfd(const Matrix& features, std::span<const int> assignments, int k) {
    if (k < 2) throw UndefinedMetric("HTFD is not defined for k = 1");
    if (static_cast<std::size_t>(features.rows()) != assignments.size())
        throw ShapeError("htfd: assignment count != rows");
    std::vector<std::vector<Eigen::Index>> members(static_cast<std::size_t>(k));
    for (std::size_t i = 0; i < assignments.size(); ++i) {
        if (assignments[i] < 0 || assignments[i] >= k) throw InvalidArgument("htfd: assignment out of range");
        members[static_cast<std::size_t>(assignments[i])].push_back(static_cast<Eigen::Index>(i));
    }
    for (int c = 0; c < k; ++c)
        if (members[static_cast<std::size_t>(c)].empty())
            throw UndefinedMetric("HTFD undefined: cluster " + std::to_string(c) + " is empty");
    // each t-test needs two values on both sides
    for (int c = 0; c < k; ++c) {
        const std::size_t m = members[static_cast<std::size_t>(c)].size();
        if (m < 2 || assignments.size() - m < 2)
            throw UndefinedMetric("HTFD undefined: cluster " + std::to_string(c) + " is too small for a t-test");
    }

    HtfdResult out;
    std::vector<double> inside, rest;
    for (int c = 0; c < k; ++c) {
        double acc = 0.0;
        for (Eigen::Index f = 0; f < features.cols(); ++f) {
            inside.clear();
            rest.clear();
            for (std::size_t i = 0; i < assignments.size(); ++i)
                (assignments[i] == c ? inside : rest).push_back(features(static_cast<Eigen::Index>(i), f));
            const auto t = welch_t_test(inside, rest);
            acc += -std::log(t.p) * kSignificance;
        }
        out.per_cluster.push_back(acc / static_cast<double>(features.cols()));
    }
    out.mean = std::accumulate(out.per_cluster.begin(), out.per_cluster.end(), 0.0) / k;
    return out;
}

double silhouette(const Matrix& z, std::span<const int> assignments, int k) {
    if (k < 2) throw UndefinedMetric("silhouette is not defined for k = 1");
    const auto n = static_cast<std::size_t>(z.rows());
    if (assignments.size() != n) throw ShapeError("silhouette: assignment count != rows");
    if (n < 2) throw InvalidArgument("silhouette needs at least 2 points");
    std::vector<std::size_t> counts(static_cast<std::size_t>(k), 0);
    for (int a : assignments) {
        if (a < 0 || a >= k) throw InvalidArgument("silhouette: assignment out of range");
        ++counts[static_cast<std::size_t>(a)];
    }
    if (std::count_if(counts.begin(), counts.end(), [](std::size_t c) { return c > 0; }) < 2)
        throw UndefinedMetric("silhouette needs at least two non-empty clusters");

    double total = 0.0;
    std::vector<double> dist_sum(static_cast<std::size_t>(k));
    for (std::size_t i = 0; i < n; ++i) {
        std::fill(dist_sum.begin(), dist_sum.end(), 0.0);
        for (std::size_t j = 0; j < n; ++j) {
            if (j == i) continue;
            dist_sum[static_cast<std::size_t>(assignments[j])] +=
                (z.row(static_cast<Eigen::Index>(i)) - z.row(static_cast<Eigen::Index>(j))).norm();
        }
        const auto own = static_cast<std::size_t>(assignments[i]);
        if (counts[own] == 1) continue;  // singleton scores 0
        const double a = dist_sum[own] / static_cast<double>(counts[own] - 1);
        double b = std::numeric_limits<double>::infinity();
        for (std::size_t c = 0; c < dist_sum.size(); ++c)
            if (c != own && counts[c] > 0) b = std::min(b, dist_sum[c] / static_cast<double>(counts[c]));
        const double denom = std::max(a, b);
        if (denom > 0.0) total += (b - a) / denom;
    }
    return total / static_cast<double>(n);
}

double auc_binary(std::span<const int> labels, std::span<const double> scores) {
    if (labels.size() != scores.size()) throw ShapeError("auc: labels and scores differ in length");
    const std::size_t n = labels.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
    double rank_sum_pos = 0.0;
    std::size_t n_pos = 0;
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j + 1 < n && scores[order[j + 1]] == scores[order[i]]) ++j;
        const double avg_rank = 0.5 * static_cast<double>(i + j) + 1.0;  // 1-based midrank
        for (std::size_t r = i; r <= j; ++r)
            if (labels[order[r]] == 1) {
                rank_sum_pos += avg_rank;
                ++n_pos;
            }
        i = j + 1;
    }
    const std::size_t n_neg = n - n_pos;
    if (n_pos == 0 || n_neg == 0) throw UndefinedMetric("AUC needs both classes present");
    const double np = static_cast<double>(n_pos);
    return (rank_sum_pos - np * (np + 1.0) / 2.0) / (np * static_cast<double>(n_neg));
}

double auc(std::span<const int> labels, const Matrix& probs) {
    if (static_cast<std::size_t>(probs.rows()) != labels.size()) throw ShapeError("auc: rows != labels");
    if (probs.cols() < 2) throw InvalidArgument("auc needs at least two score columns");
    std::vector<double> scores(labels.size());
    std::vector<int> binary(labels.size());
    auto column_auc = [&](Eigen::Index c) {
        for (std::size_t i = 0; i < labels.size(); ++i) {
            scores[i] = probs(static_cast<Eigen::Index>(i), c);
            binary[i] = labels[i] == c ? 1 : 0;
        }
        return auc_binary(binary, scores);
    };
    if (probs.cols() == 2) return column_auc(1);
    double total = 0.0;
    int used = 0;
    for (Eigen::Index c = 0; c < probs.cols(); ++c) {
        const auto pos = std::count(labels.begin(), labels.end(), static_cast<int>(c));
        if (pos == 0 || static_cast<std::size_t>(pos) == labels.size()) continue;
        total += column_auc(c);
        ++used;
    }
    if (used == 0) throw UndefinedMetric("AUC needs at least two classes present");
    return total / used;
}

double f1(std::span<const int> labels, std::span<const int> predictions, int class_count) {
    if (labels.size() != predictions.size()) throw ShapeError("f1: length mismatch");
    auto class_f1 = [&](int c) {
        double tp = 0, fp = 0, fn = 0;
        for (std::size_t i = 0; i < labels.size(); ++i) {
            const bool truth = labels[i] == c;
            const bool pred = predictions[i] == c;
            tp += truth && pred;
            fp += !truth && pred;
            fn += truth && !pred;
        }
        const double precision = tp + fp > 0 ? tp / (tp + fp) : 0.0;
        const double recall = tp + fn > 0 ? tp / (tp + fn) : 0.0;
        return precision + recall > 0 ? 2.0 * precision * recall / (precision + recall) : 0.0;
    };
    if (class_count == 2) return class_f1(1);
    std::set<int> classes(labels.begin(), labels.end());
    classes.insert(predictions.begin(), predictions.end());
    if (classes.empty()) return 0.0;
    double total = 0.0;
    for (int c : classes) total += class_f1(c);
    return total / static_cast<double>(classes.size());
}

std::vector<int> argmax_rows(const Matrix& probs) {
    std::vector<int> out(static_cast<std::size_t>(probs.rows()));
    for (Eigen::Index i = 0; i < probs.rows(); ++i) {
        Eigen::Index best = 0;
        for (Eigen::Index j = 1; j < probs.cols(); ++j)
            if (probs(i, j) > probs(i, best)) best = j;
        out[static_cast<std::size_t>(i)] = static_cast<int>(best);
    }
    return out;
}

double adjusted_rand_index(std::span<const int> a, std::span<const int> b) {
    if (a.size() != b.size()) throw ShapeError("adjusted_rand_index: length mismatch");
    std::map<std::pair<int, int>, double> table;
    std::map<int, double> rows, cols;
    for (std::size_t i = 0; i < a.size(); ++i) {
        table[{a[i], b[i]}] += 1.0;
        rows[a[i]] += 1.0;
        cols[b[i]] += 1.0;
    }
    auto choose2 = [](double x) { return x * (x - 1.0) / 2.0; };
    double index = 0.0, sum_rows = 0.0, sum_cols = 0.0;
    for (const auto& [key, v] : table) index += choose2(v);
    for (const auto& [key, v] : rows) sum_rows += choose2(v);
    for (const auto& [key, v] : cols) sum_cols += choose2(v);
    const double total = choose2(static_cast<double>(a.size()));
    const double expected = total > 0 ? sum_rows * sum_cols / total : 0.0;
    const double max_index = 0.5 * (sum_rows + sum_cols);
    if (max_index == expected) return 1.0;  // both labelings trivial
    return (index - expected) / (max_index - expected);
}

std::string report_csv_header() {
    return "rows,k,hard_predict,auc,f1,silhouette,htfd_mean,adjusted_rand,htfd_per_cluster";
}

std::string report_csv_row(const MetricsReport& r) {
    std::ostringstream os;
    os << r.rows << ',' << r.k << ',' << (r.hard_predict ? "true" : "false") << ',' << fmt(r.auc) << ','
       << fmt(r.f1) << ',' << (r.silhouette ? fmt(*r.silhouette) : "NA") << ','
       << (r.htfd_mean ? fmt(*r.htfd_mean) : "NA") << ',' << (r.adjusted_rand ? fmt(*r.adjusted_rand) : "NA")
       << ',';
    if (r.htfd_per_cluster) {
        for (std::size_t i = 0; i < r.htfd_per_cluster->size(); ++i)
            os << (i ? ";" : "") << fmt((*r.htfd_per_cluster)[i]);
    } else {
        os << "NA";
    }
    return os.str();
}

}  // namespace expertnet::metrics
