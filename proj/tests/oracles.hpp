#pragma once

// Independent reference computations for the unit tests and the acceptance
// suite. Nothing here calls into the library's numerical code: loops over
// plain arrays only.

#include "expertnet/nn.hpp"
#include "expertnet/types.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <random>
#include <vector>

namespace oracle {

using expertnet::Matrix;
using expertnet::Vector;

inline Matrix random_matrix(std::mt19937_64& rng, Eigen::Index rows, Eigen::Index cols, double scale = 1.0) {
    std::normal_distribution<double> n(0.0, scale);
    Matrix m(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i)
        for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = n(rng);
    return m;
}

// Rows drawn from a Dirichlet(1,...,1): valid, strictly positive distributions.
inline Matrix random_simplex_rows(std::mt19937_64& rng, Eigen::Index rows, Eigen::Index k) {
    std::exponential_distribution<double> e(1.0);
    Matrix q(rows, k);
    for (Eigen::Index i = 0; i < rows; ++i) {
        double s = 0.0;
        for (Eigen::Index j = 0; j < k; ++j) s += (q(i, j) = e(rng) + 1e-6);
        for (Eigen::Index j = 0; j < k; ++j) q(i, j) /= s;
    }
    return q;
}

// Triple-loop forward pass.
inline Matrix naive_forward(const expertnet::nn::MlpNetwork& net, const Matrix& x) {
    using expertnet::nn::Activation;
    std::vector<std::vector<double>> cur(static_cast<std::size_t>(x.rows()));
    for (Eigen::Index i = 0; i < x.rows(); ++i)
        for (Eigen::Index j = 0; j < x.cols(); ++j) cur[static_cast<std::size_t>(i)].push_back(x(i, j));
    for (std::size_t l = 0; l < net.depth(); ++l) {
        const auto& w = net.weights[l];
        const auto& b = net.biases[l];
        const Activation act = l + 1 == net.depth() ? net.output_activation : net.hidden_activation;
        for (auto& row : cur) {
            std::vector<double> next(static_cast<std::size_t>(w.rows()));
            for (Eigen::Index o = 0; o < w.rows(); ++o) {
                double s = b[o];
                for (Eigen::Index in = 0; in < w.cols(); ++in) s += w(o, in) * row[static_cast<std::size_t>(in)];
                next[static_cast<std::size_t>(o)] = s;
            }
            if (act == Activation::ReLU)
                for (auto& v : next) v = v > 0.0 ? v : 0.0;
            if (act == Activation::Softmax) {
                double mx = *std::max_element(next.begin(), next.end()), s = 0.0;
                for (auto& v : next) s += (v = std::exp(v - mx));
                for (auto& v : next) v /= s;
            }
            row = std::move(next);
        }
    }
    Matrix out(x.rows(), static_cast<Eigen::Index>(net.output_dim()));
    for (Eigen::Index i = 0; i < out.rows(); ++i)
        for (Eigen::Index j = 0; j < out.cols(); ++j) out(i, j) = cur[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
    return out;
}

// Central difference of f with respect to every entry of m, eps = 1e-5.
inline Matrix numeric_gradient(Matrix& m, const std::function<double()>& f, double eps = 1e-5) {
    Matrix g(m.rows(), m.cols());
    for (Eigen::Index i = 0; i < m.rows(); ++i)
        for (Eigen::Index j = 0; j < m.cols(); ++j) {
            const double keep = m(i, j);
            m(i, j) = keep + eps;
            const double up = f();
            m(i, j) = keep - eps;
            const double down = f();
            m(i, j) = keep;
            g(i, j) = (up - down) / (2.0 * eps);
        }
    return g;
}

inline Vector numeric_gradient(Vector& v, const std::function<double()>& f, double eps = 1e-5) {
    Matrix as_col = v;
    Matrix g = numeric_gradient(as_col, [&] {
        v = as_col.col(0);
        return f();
    }, eps);
    v = as_col.col(0);
    return g.col(0);
}

// Worst violation of the rule: relative error <= tol, except entries where
// both values are below 1e-8 in magnitude, which are compared absolutely.
inline double gradient_mismatch(const Matrix& analytic, const Matrix& numeric) {
    double worst = 0.0;
    for (Eigen::Index i = 0; i < analytic.rows(); ++i)
        for (Eigen::Index j = 0; j < analytic.cols(); ++j) {
            const double a = analytic(i, j), n = numeric(i, j);
            const double scale = std::max(std::abs(a), std::abs(n));
            const double err = scale < 1e-8 ? std::abs(a - n) : std::abs(a - n) / scale;
            worst = std::max(worst, err);
        }
    return worst;
}

inline double euclid(const Matrix& z, Eigen::Index a, Eigen::Index b) {
    double s = 0.0;
    for (Eigen::Index c = 0; c < z.cols(); ++c) s += (z(a, c) - z(b, c)) * (z(a, c) - z(b, c));
    return std::sqrt(s);
}

// Silhouette straight from the definition.
inline double silhouette(const Matrix& z, const std::vector<int>& lab, int k) {
    const auto n = static_cast<Eigen::Index>(lab.size());
    std::vector<int> size(static_cast<std::size_t>(k), 0);
    for (int l : lab) ++size[static_cast<std::size_t>(l)];
    double total = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
        const int own = lab[static_cast<std::size_t>(i)];
        if (size[static_cast<std::size_t>(own)] == 1) continue;
        std::vector<double> sum(static_cast<std::size_t>(k), 0.0);
        for (Eigen::Index j = 0; j < n; ++j)
            if (j != i) sum[static_cast<std::size_t>(lab[static_cast<std::size_t>(j)])] += euclid(z, i, j);
        const double a = sum[static_cast<std::size_t>(own)] / (size[static_cast<std::size_t>(own)] - 1);
        double b = INFINITY;
        for (int c = 0; c < k; ++c)
            if (c != own && size[static_cast<std::size_t>(c)] > 0)
                b = std::min(b, sum[static_cast<std::size_t>(c)] / size[static_cast<std::size_t>(c)]);
        const double m = std::max(a, b);
        total += m > 0.0 ? (b - a) / m : 0.0;
    }
    return total / static_cast<double>(n);
}

// Adjusted Rand index by enumerating all pairs.
inline double adjusted_rand_pairs(const std::vector<int>& a, const std::vector<int>& b) {
    const std::size_t n = a.size();
    double both = 0, in_a = 0, in_b = 0, pairs = 0;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j) {
            const bool sa = a[i] == a[j], sb = b[i] == b[j];
            both += sa && sb;
            in_a += sa;
            in_b += sb;
            pairs += 1;
        }
    const double expected = in_a * in_b / pairs;
    const double max_index = 0.5 * (in_a + in_b);
    if (max_index == expected) return 1.0;
    return (both - expected) / (max_index - expected);
}

// Student-t soft assignment from the formula.
inline Matrix soft_assign(const Matrix& z, const Matrix& mu) {
    Matrix q(z.rows(), mu.rows());
    for (Eigen::Index i = 0; i < z.rows(); ++i) {
        double s = 0.0;
        for (Eigen::Index j = 0; j < mu.rows(); ++j) {
            double d = 0.0;
            for (Eigen::Index c = 0; c < z.cols(); ++c) d += (z(i, c) - mu(j, c)) * (z(i, c) - mu(j, c));
            s += (q(i, j) = 1.0 / (1.0 + d));
        }
        for (Eigen::Index j = 0; j < mu.rows(); ++j) q(i, j) /= s;
    }
    return q;
}

// Welch's test inputs and scipy.stats.ttest_ind(a, b, equal_var=False)
// outputs, computed offline (scipy 1.15.3) and frozen here.
struct WelchGolden {
    std::vector<double> a, b;
    double t, p;
};

inline const std::vector<WelchGolden>& welch_golden() {
    static const std::vector<WelchGolden> cases = {
        {{-0.211189, -0.517733, 0.149596, -1.789897, 0.284452},
         {-0.143391, -0.952101, 0.697075, -3.402948, 0.183174, -0.96257, 1.319391},
         0.071032034966027696, 0.9448428181963695},
        {{1.221221, 0.536069, 0.533416, 0.264981, 0.606155, 1.159707, 1.428635, 1.1144, 1.0174, 0.566276, 1.097885,
          0.592155},
         {1.395852, 1.218963, 1.642407, 1.380988, 1.84753, 1.136714, 1.602378, 1.390064, 1.978622},
         -4.7186839878908984, 0.00014994033041037128},
        {{-1.962054, 0.874258, -1.023652, -0.868647, -0.018363, -1.510559, -1.194581, -0.505542, -0.322484,
          -1.903679, -0.873631, -0.145914, -0.131928, -0.662308, -0.004089, -0.513374, 1.173499, -0.809135,
          0.059104, -0.489595, 0.854562, -0.971549, 0.876603, -1.195302, -1.366997, -0.54847, 0.092127, -1.521024,
          -0.504189, -0.00397},
         {0.064442, 0.975566, 0.884274, 0.432831, 1.013433, 1.039726, -1.009162, 2.285262, 0.051073, -0.505942,
          0.700149, -0.388577, 0.727157, -1.101399, 0.825358, -1.163874, 0.475733, -0.113225, -0.401483, 0.253073,
          -0.475308, -0.671943, 0.494906, 2.031207, -0.897757},
         -3.0882486455200038, 0.003329964332408696},
        {{5.465502, 5.244673, -1.360241, 2.570704}, {-0.895192, -1.182171, -0.784156, -0.824418}, 2.4509810847631046,
         0.091057511622716705},
        {{8.396875, 5.779669, 6.892061, 8.624233, 5.405981, 3.999554, 2.098171, 5.57291, 2.465567, 7.195387, 5.29433,
          6.622115, 5.325427, 7.476663, 4.087291, 5.100135, 7.80023, 2.483378, 5.385054, 6.950515},
         {4.736467, 5.100281, 4.550089, 6.980756, 5.61062, 5.484847, 4.387456, 4.736212, 6.726532, 5.610534,
          5.399113, 6.591898, 4.89413, 7.413377, 5.431785, 5.286957, 5.534835, 5.837342, 6.501169, 5.101164,
          4.975973, 5.838157, 6.138946, 6.677255, 5.323247, 6.767012, 4.780107, 7.185778, 4.707928, 5.713736,
          5.995294, 6.813168, 7.260168, 5.849231, 7.695644, 4.980475, 6.127086, 5.563099, 6.372427, 4.848142},
         -0.31218297859441074, 0.75770235487794735},
        {{-1.097837, 1.283161, 1.06403, 0.561118, -0.702213, 0.592071, 0.447158, 1.233463},
         {3.232916, 1.385481, 2.78374, 2.972555, 3.792205, 2.752227, 1.941783, 4.150392, 3.385599, 1.902576,
          2.336161, 3.919146, 1.650632, 3.967976, 3.022872},
         -6.3542188204636716, 1.5174330316210659e-05},
    };
    return cases;
}

// Generalization-bound worked values, evaluated independently in Python:
// sqrt(2 ln2 * 2) = 1.6651092223153954.
inline constexpr double kUniformExampleZeta = 5.330218444630791;       // 2 (1.66511 + 1)
inline constexpr double kUniformExampleComplexity = 0.5330218444630791;
inline constexpr double kUniformExampleConfidence = 0.36716202460212244;  // 3 sqrt(ln 20 / 200)
inline constexpr double kUniformExampleTotal = 0.9001838690652015;
inline constexpr double kRademacherExample = 0.26651092223153955;
inline constexpr double kGeneralBoundExample = 0.5218949039434021;  // 0.2 + 3 sqrt(ln 10 / 200)

}  // namespace oracle
