#pragma once

#include "expertnet/types.hpp"

#include <optional>
#include <span>
#include <string>
#include <vector>

namespace expertnet::metrics {

/// Regularized incomplete beta I_x(a, b), continued fraction evaluated with
/// the modified Lentz method.
double incomplete_beta(double a, double b, double x);

/// Two-sided tail probability P(|T| >= |t|) for Student's t with `df` degrees of freedom.
double student_t_two_sided(double t, double df);

struct TTestResult {
    double t = 0.0;
    double df = 0.0;
    double p = 1.0;  // two-sided, clamped to >= 1e-300
};

/// Welch's unequal-variance two-sample t-test. Both samples need >= 2 values.
TTestResult welch_t_test(std::span<const double> a, std::span<const double> b);

struct HtfdResult {
    std::vector<double> per_cluster;
    double mean = 0.0;
};

/// Per cluster i: mean over features f of -ln(p(X_i^f vs rest^f)) * 0.05.
HtfdResult htfd(const Matrix& features, std::span<const int> assignments, int k);

/// Mean silhouette (b - a) / max(a, b) with Euclidean distances; a point alone
/// in its cluster scores 0. Needs at least two non-empty clusters.
double silhouette(const Matrix& z, std::span<const int> assignments, int k);

/// Mann-Whitney AUC of scores for labels == 1 vs labels == 0; ties count 1/2.
double auc_binary(std::span<const int> labels, std::span<const double> scores);

/// Binary when probs has 2 columns (scores = column 1), otherwise the
/// unweighted mean of one-vs-rest AUCs over classes that have both positives and negatives.
double auc(std::span<const int> labels, const Matrix& probs);

/// Binary (class_count == 2): F1 of class 1. Otherwise macro F1 over
/// classes that appear in labels or predictions. 0/0 counts as 0.
double f1(std::span<const int> labels, std::span<const int> predictions, int class_count);

/// argmax per row, lowest index on ties.
std::vector<int> argmax_rows(const Matrix& probs);

struct MetricsReport {
    double auc = 0.0;
    double f1 = 0.0;
    std::optional<double> silhouette;
    std::optional<std::vector<double>> htfd_per_cluster;
    std::optional<double> htfd_mean;
    std::optional<double> adjusted_rand;  // only when ground-truth groups are known
    bool hard_predict = false;
    std::size_t rows = 0;
    int k = 0;
};

/// CSV header/row pair. Undefined metrics are written as "NA".
std::string report_csv_header();
std::string report_csv_row(const MetricsReport& report);

/// Adjusted Rand index between two labelings via the contingency table.
double adjusted_rand_index(std::span<const int> a, std::span<const int> b);

}  // namespace expertnet::metrics
