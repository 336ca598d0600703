#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "expertnet/clustering.hpp"
#include "expertnet/errors.hpp"
#include "oracles.hpp"

using namespace expertnet;
using namespace expertnet::clustering;

namespace {

double max_row_sum_error(const Matrix& m) { return (m.rowwise().sum().array() - 1.0).abs().maxCoeff(); }

}  // namespace

TEST_CASE("soft_assign worked values") {
    Matrix z(1, 1), mu(2, 1);
    z << 0.0;
    mu << 0.0, 2.0;
    const Matrix q = soft_assign(z, mu);
    CHECK(q(0, 0) == doctest::Approx(5.0 / 6.0).epsilon(1e-15));
    CHECK(q(0, 1) == doctest::Approx(1.0 / 6.0).epsilon(1e-15));

    Matrix mid(1, 1);
    mid << 1.0;
    const Matrix sym = soft_assign(mid, mu);
    CHECK(sym(0, 0) == 0.5);
    CHECK(sym(0, 1) == 0.5);

    std::mt19937_64 rng(1);
    const Matrix one = soft_assign(oracle::random_matrix(rng, 6, 3), oracle::random_matrix(rng, 1, 3));
    CHECK(one.isOnes(0.0));
}

TEST_CASE("soft_assign matches the formula and rows sum to one") {
    std::mt19937_64 rng(2);
    double worst_sum = 0.0, worst_diff = 0.0;
    for (int t = 0; t < 200; ++t) {
        const Matrix z = oracle::random_matrix(rng, 20, 4, 2.0);
        const Matrix mu = oracle::random_matrix(rng, 1 + t % 6, 4, 2.0);
        const Matrix q = soft_assign(z, mu);
        worst_sum = std::max(worst_sum, max_row_sum_error(q));
        worst_diff = std::max(worst_diff, (q - oracle::soft_assign(z, mu)).cwiseAbs().maxCoeff());
        CHECK((q.array() > 0.0).all());
    }
    CHECK(worst_sum <= 1e-9);
    CHECK(worst_diff <= 1e-12);
}

TEST_CASE("target_distribution worked values") {
    Matrix q(2, 2);
    q << 0.8, 0.2, 0.6, 0.4;
    // column sums f = [1.4, 0.6]; p_ij = (q_ij^2 / f_j) / sum_l (q_il^2 / f_l)
    const double r00 = 0.64 / 1.4, r01 = 0.04 / 0.6, r10 = 0.36 / 1.4, r11 = 0.16 / 0.6;
    const Matrix p = target_distribution(q);
    CHECK(p(0, 0) == doctest::Approx(r00 / (r00 + r01)).epsilon(1e-14));
    CHECK(p(1, 1) == doctest::Approx(r11 / (r10 + r11)).epsilon(1e-14));
    CHECK(std::abs(p(0, 0) - 0.872727) <= 1e-6);
    CHECK(std::abs(p(0, 1) - 0.127273) <= 1e-6);
    CHECK(std::abs(p(1, 0) - 0.490909) <= 1e-6);
    CHECK(std::abs(p(1, 1) - 0.509091) <= 1e-6);
}

TEST_CASE("target_distribution special cases") {
    std::mt19937_64 rng(3);
    const Matrix single = oracle::random_simplex_rows(rng, 1, 4);
    CHECK(target_distribution(single) == single);

    Matrix same(5, 3);
    same.rowwise() = oracle::random_simplex_rows(rng, 1, 3).row(0);
    const Matrix p = target_distribution(same);
    for (Eigen::Index i = 1; i < 5; ++i) CHECK((p.row(i) - p.row(0)).cwiseAbs().maxCoeff() <= 1e-15);

    Matrix dead(2, 2);
    dead << 1.0, 0.0, 1.0, 0.0;
    CHECK_THROWS_AS(target_distribution(dead), NumericError);
}

TEST_CASE("target_distribution rows sum to one and sharpen") {
    std::mt19937_64 rng(4);
    for (int k = 2; k <= 6; ++k) {
        const Matrix q = oracle::random_simplex_rows(rng, 10000, k);
        const Matrix p = target_distribution(q);
        CHECK(max_row_sum_error(p) <= 1e-9);
        // Dividing by the cluster frequency can flip a near-tie toward the
        // lighter cluster, so rows whose top two entries are within 0.01 are
        // exempt; nothing else may lose mass on its top entry.
        int blunted = 0;
        for (Eigen::Index i = 0; i < q.rows(); ++i) {
            RowVector r = q.row(i);
            std::sort(r.data(), r.data() + r.size(), std::greater<>());
            if (r(0) - r(1) < 0.01) continue;
            blunted += p.row(i).maxCoeff() < q.row(i).maxCoeff();
        }
        CHECK(blunted == 0);
    }
}

TEST_CASE("kl_loss") {
    std::mt19937_64 rng(5);
    const Matrix q = oracle::random_simplex_rows(rng, 7, 3);
    CHECK(kl_loss(q, q) == 0.0);
    Matrix p1(1, 2), q1(1, 2);
    p1 << 1.0, 0.0;
    q1 << 0.5, 0.5;
    CHECK(kl_loss(p1, q1) == doctest::Approx(std::log(2.0)).epsilon(1e-15));
    for (int t = 0; t < 100; ++t) {
        const Matrix a = oracle::random_simplex_rows(rng, 5, 4), b = oracle::random_simplex_rows(rng, 5, 4);
        CHECK(kl_loss(a, b) >= 0.0);
    }
    Matrix zero(1, 2);
    zero << 1.0, 0.0;
    CHECK_THROWS_AS(kl_loss(q1, zero), NumericError);
}

TEST_CASE("kl_gradients vanish when P equals Q") {
    std::mt19937_64 rng(6);
    const Matrix z = oracle::random_matrix(rng, 6, 3), mu = oracle::random_matrix(rng, 2, 3);
    const Matrix q = soft_assign(z, mu);
    const auto g = kl_gradients(z, mu, q, q);
    CHECK(g.dz.isZero(1e-15));
    CHECK(g.dmu.isZero(1e-15));

    const Matrix z1 = oracle::random_matrix(rng, 1, 3), mu1 = oracle::random_matrix(rng, 1, 3);
    const Matrix q1 = soft_assign(z1, mu1);
    CHECK(kl_gradients(z1, mu1, q1, q1).dz.isZero(0.0));
}

TEST_CASE("kl_gradients match finite differences with P fixed") {
    std::mt19937_64 rng(7);
    std::uniform_int_distribution<int> n_d(1, 8), k_d(1, 4), p_d(1, 5);
    double worst = 0.0;
    for (int t = 0; t < 150; ++t) {
        const int n = n_d(rng), k = k_d(rng), dim = p_d(rng);
        Matrix z = oracle::random_matrix(rng, n, dim), mu = oracle::random_matrix(rng, k, dim);
        const Matrix p = oracle::random_simplex_rows(rng, n, k);
        const auto g = kl_gradients(z, mu, p, soft_assign(z, mu));
        auto loss = [&] { return kl_loss(p, soft_assign(z, mu)); };
        worst = std::max(worst, oracle::gradient_mismatch(g.dz, oracle::numeric_gradient(z, loss)));
        worst = std::max(worst, oracle::gradient_mismatch(g.dmu, oracle::numeric_gradient(mu, loss)));
    }
    CHECK(worst <= 1e-4);
}

TEST_CASE("soft_assign_backward matches finite differences") {
    std::mt19937_64 rng(8);
    double worst = 0.0;
    for (int t = 0; t < 100; ++t) {
        Matrix z = oracle::random_matrix(rng, 5, 3), mu = oracle::random_matrix(rng, 3, 3);
        const Matrix upstream = oracle::random_matrix(rng, 5, 3);
        auto loss = [&] { return (soft_assign(z, mu).array() * upstream.array()).sum(); };
        const auto g = soft_assign_backward(z, mu, soft_assign(z, mu), upstream);
        worst = std::max(worst, oracle::gradient_mismatch(g.dz, oracle::numeric_gradient(z, loss)));
        worst = std::max(worst, oracle::gradient_mismatch(g.dmu, oracle::numeric_gradient(mu, loss)));
    }
    CHECK(worst <= 1e-4);
}

TEST_CASE("kmeans recovers blob means") {
    std::mt19937_64 rng(9);
    Matrix z(40, 2);
    std::normal_distribution<double> jitter(0.0, 0.01);
    for (int i = 0; i < 40; ++i) {
        z(i, 0) = (i < 20 ? 0.0 : 50.0) + jitter(rng);
        z(i, 1) = (i < 20 ? 0.0 : -30.0) + jitter(rng);
    }
    const auto r = kmeans(z, 2, 11);
    const Eigen::RowVector2d a = z.topRows(20).colwise().mean(), b = z.bottomRows(20).colwise().mean();
    const int first = (r.centroids.row(0) - a).norm() < (r.centroids.row(1) - a).norm() ? 0 : 1;
    CHECK((r.centroids.row(first) - a).norm() <= 1e-6);
    CHECK((r.centroids.row(1 - first) - b).norm() <= 1e-6);
    CHECK(r.converged);
}

TEST_CASE("kmeans degenerate k") {
    std::mt19937_64 rng(10);
    const Matrix z = oracle::random_matrix(rng, 12, 3);
    const auto one = kmeans(z, 1, 1);
    CHECK((one.centroids.row(0) - z.colwise().mean()).norm() <= 1e-12);

    const auto all = kmeans(z, 12, 2);
    CHECK(all.inertia_history.back() <= 1e-24);
    std::vector<int> labels = all.labels;
    std::sort(labels.begin(), labels.end());
    CHECK(std::adjacent_find(labels.begin(), labels.end()) == labels.end());

    CHECK_THROWS_AS(kmeans(z, 13, 3), InvalidArgument);
}

TEST_CASE("kmeans inertia never increases and no cluster is left empty") {
    std::mt19937_64 rng(11);
    for (int t = 0; t < 30; ++t) {
        const Matrix z = oracle::random_matrix(rng, 60, 3);
        const auto r = kmeans(z, 2 + t % 5, static_cast<std::uint64_t>(t));
        for (std::size_t i = 1; i < r.inertia_history.size(); ++i)
            CHECK(r.inertia_history[i] <= r.inertia_history[i - 1] + 1e-9);
        std::vector<int> count(static_cast<std::size_t>(r.centroids.rows()), 0);
        for (int l : r.labels) ++count[static_cast<std::size_t>(l)];
        CHECK(std::count(count.begin(), count.end(), 0) == 0);
    }
}

TEST_CASE("kmeans is deterministic in its seed") {
    std::mt19937_64 rng(12);
    const Matrix z = oracle::random_matrix(rng, 50, 4);
    CHECK(kmeans(z, 3, 5).centroids == kmeans(z, 3, 5).centroids);
}

TEST_CASE("balance_loss worked values and range") {
    Matrix balanced(4, 2);
    balanced << 0.7, 0.3, 0.3, 0.7, 0.5, 0.5, 0.5, 0.5;
    CHECK(balance_loss(balanced) <= 1e-15);

    Matrix collapsed(3, 2);
    collapsed << 1.0, 0.0, 1.0, 0.0, 1.0, 0.0;
    const double r = std::sqrt(0.5);
    const double hand = 0.5 * std::sqrt((1.0 - r) * (1.0 - r) + r * r);
    CHECK(std::abs(hand - 0.382683) <= 1e-6);
    CHECK(std::abs(balance_loss(collapsed) - hand) <= 1e-6);

    std::mt19937_64 rng(13);
    for (int t = 0; t < 200; ++t) {
        const Matrix q = oracle::random_simplex_rows(rng, 10, 2 + t % 5);
        const double v = balance_loss(q);
        CHECK(v >= 0.0);
        CHECK(v <= 0.5 * std::sqrt(2.0));
    }
}

TEST_CASE("balance_loss is permutation invariant in clusters") {
    std::mt19937_64 rng(14);
    const Matrix q = oracle::random_simplex_rows(rng, 9, 4);
    Matrix perm(9, 4);
    perm << q.col(2), q.col(0), q.col(3), q.col(1);
    CHECK(balance_loss(perm) == doctest::Approx(balance_loss(q)).epsilon(1e-14));
}

TEST_CASE("balance_gradient") {
    std::mt19937_64 rng(15);
    double worst = 0.0;
    for (int t = 0; t < 100; ++t) {
        Matrix q = oracle::random_simplex_rows(rng, 6, 2 + t % 4);
        const Matrix g = balance_gradient(q);
        worst = std::max(worst, oracle::gradient_mismatch(g, oracle::numeric_gradient(q, [&] { return balance_loss(q); })));
    }
    CHECK(worst <= 1e-4);

    Matrix balanced(2, 2);
    balanced << 0.5, 0.5, 0.5, 0.5;
    CHECK(balance_gradient(balanced).norm() <= 1e-9);
    CHECK(balance_gradient(oracle::random_simplex_rows(rng, 5, 1)).isZero(0.0));
}

TEST_CASE("hard assignments take the lowest index on ties") {
    Matrix q(3, 3);
    q << 0.2, 0.5, 0.3, 0.4, 0.4, 0.2, 0.1, 0.1, 0.8;
    CHECK(hard_assignments(q) == std::vector<int>{1, 0, 2});
}
