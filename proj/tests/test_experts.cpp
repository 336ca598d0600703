#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "expertnet/errors.hpp"
#include "expertnet/experts.hpp"
#include "oracles.hpp"

using namespace expertnet;
using namespace expertnet::experts;

TEST_CASE("ensemble construction") {
    auto e = make_ensemble(3, 20, {64, 32, 16, 8}, 2, 7);
    CHECK(e.k() == 3);
    CHECK(e.input_dim() == 20);
    for (const auto& net : e.experts) {
        CHECK(net.layer_dims == std::vector<std::size_t>{20, 64, 32, 16, 8, 2});
        CHECK(net.output_activation == nn::Activation::Softmax);
    }
    CHECK_FALSE(e.experts[0] == e.experts[1]);
    CHECK(make_ensemble(3, 20, {64, 32, 16, 8}, 2, 7) == e);
}

TEST_CASE("degenerate rows always land in their cluster") {
    Matrix q = Matrix::Zero(50, 3);
    q.col(0).setOnes();
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const auto c = sample_cohorts(q, seed);
        CHECK(std::all_of(c.assignment.begin(), c.assignment.end(), [](int s) { return s == 0; }));
        CHECK(c.cohorts[0].size() == 50);
    }
}

TEST_CASE("cohort frequencies follow q") {
    Matrix q(1, 2);
    q << 0.8, 0.2;
    int zeros = 0;
    for (std::uint64_t seed = 0; seed < 10000; ++seed) zeros += sample_cohorts(q, seed).assignment[0] == 0;
    CHECK(zeros >= 7800);
    CHECK(zeros <= 8200);

    // one draw of 10000 rows with the same distribution
    Matrix many(10000, 2);
    many.col(0).setConstant(0.8);
    many.col(1).setConstant(0.2);
    const auto c = sample_cohorts(many, 99);
    const double f = static_cast<double>(c.cohorts[0].size()) / 10000.0;
    CHECK(std::abs(f - 0.8) <= 3.0 * std::sqrt(0.8 * 0.2 / 10000.0));
}

TEST_CASE("cohorts are deterministic and partition the rows") {
    std::mt19937_64 rng(1);
    const Matrix q = oracle::random_simplex_rows(rng, 200, 4);
    const auto a = sample_cohorts(q, 5), b = sample_cohorts(q, 5);
    CHECK(a.assignment == b.assignment);
    std::vector<int> seen(200, 0);
    for (std::size_t j = 0; j < a.cohorts.size(); ++j)
        for (std::size_t i : a.cohorts[j]) {
            ++seen[i];
            CHECK(a.assignment[i] == static_cast<int>(j));
        }
    CHECK(std::all_of(seen.begin(), seen.end(), [](int s) { return s == 1; }));
    CHECK_FALSE(sample_cohorts(q, 6).assignment == a.assignment);
}

TEST_CASE("argmax cohorts") {
    Matrix q(3, 2);
    q << 0.3, 0.7, 0.5, 0.5, 0.9, 0.1;
    CHECK(argmax_cohorts(q).assignment == std::vector<int>{1, 0, 0});
}

TEST_CASE("cohort weights mask q") {
    Matrix q(2, 2);
    q << 0.6, 0.4, 0.1, 0.9;
    CohortRealization c;
    c.assignment = {1, 1};
    c.cohorts = {{}, {0, 1}};
    Matrix w = cohort_weights(q, c);
    Matrix expect(2, 2);
    expect << 0.0, 0.4, 0.0, 0.9;
    CHECK(w == expect);
}

TEST_CASE("supervised loss worked values") {
    const std::vector<int> y{1};
    Matrix w = Matrix::Ones(1, 1);
    Matrix half(1, 2);
    half << 0.5, 0.5;
    CHECK(supervised_loss(w, y, {half}).loss == doctest::Approx(std::log(2.0)).epsilon(1e-15));

    Matrix perfect(1, 2);
    perfect << 0.0, 1.0;
    CHECK(supervised_loss(w, y, {perfect}).loss == 0.0);
}

TEST_CASE("zero weight means zero gradient from that sample") {
    Matrix w(2, 2);
    w << 0.0, 1.0, 0.5, 0.5;
    Matrix p(2, 2);
    p << 0.3, 0.7, 0.6, 0.4;
    const auto s = supervised_loss(w, std::vector<int>{0, 1}, {p, p});
    CHECK(s.logit_grads[0].row(0).isZero(0.0));
    CHECK_FALSE(s.logit_grads[1].row(0).isZero(0.0));
}

TEST_CASE("supervised loss is non-increasing in the true-class probability") {
    Matrix w(1, 2);
    w << 0.3, 0.7;
    Matrix other(1, 3);
    other << 0.2, 0.5, 0.3;
    double prev = INFINITY;
    for (double pt = 0.05; pt < 1.0; pt += 0.05) {
        Matrix p(1, 3);
        p << (1.0 - pt) / 2.0, pt, (1.0 - pt) / 2.0;
        const double l = supervised_loss(w, std::vector<int>{1}, {p, other}).loss;
        CHECK(l <= prev);
        prev = l;
    }
}

TEST_CASE("supervised loss gradients match finite differences") {
    std::mt19937_64 rng(2);
    double worst = 0.0;
    for (int t = 0; t < 30; ++t) {
        const int k = 1 + t % 3;
        auto ens = make_ensemble(static_cast<std::size_t>(k), 3, {4}, 3, rng());
        Matrix z = oracle::random_matrix(rng, 6, 3);
        Matrix w = oracle::random_simplex_rows(rng, 6, k);
        std::vector<int> y(6);
        for (auto& v : y) v = static_cast<int>(rng() % 3);
        auto loss = [&] {
            std::vector<Matrix> probs;
            for (const auto& e : ens.experts) probs.push_back(nn::infer(e, z));
            return supervised_loss(w, y, probs, 6.0).loss;
        };
        std::vector<nn::ForwardResult> fw;
        std::vector<Matrix> probs;
        for (const auto& e : ens.experts) {
            fw.push_back(nn::forward(e, z));
            probs.push_back(fw.back().output);
        }
        const auto s = supervised_loss(w, y, probs, 6.0);
        worst = std::max(worst, oracle::gradient_mismatch(s.weight_grad, oracle::numeric_gradient(w, loss)));
        Matrix dz = Matrix::Zero(6, 3);
        for (int j = 0; j < k; ++j) {
            auto bw = nn::backward(ens.experts[j], fw[j].tape, s.logit_grads[j], nn::GradientOf::PreActivation);
            dz += bw.input_grad;
            worst = std::max(worst, oracle::gradient_mismatch(bw.grads.weights[0],
                                                              oracle::numeric_gradient(ens.experts[j].weights[0], loss)));
            worst = std::max(worst, oracle::gradient_mismatch(bw.grads.weights[1],
                                                              oracle::numeric_gradient(ens.experts[j].weights[1], loss)));
        }
        worst = std::max(worst, oracle::gradient_mismatch(dz, oracle::numeric_gradient(z, loss)));
    }
    CHECK(worst <= 1e-4);
}

TEST_CASE("cross entropy clamps zero probabilities") {
    Matrix p(1, 2);
    p << 1.0, 0.0;
    const auto e = expert_cross_entropy(p, std::vector<int>{1}, Vector::Ones(1), 1.0);
    CHECK(e.loss == doctest::Approx(-std::log(1e-12)));
    CHECK(std::isfinite(e.loss));
}

TEST_CASE("predict rules") {
    Vector a(2), b(2);
    a << 0.2, 0.8;
    b << 0.8, 0.2;
    Vector one_hot(2), half(2), lean(2);
    one_hot << 1.0, 0.0;
    half << 0.5, 0.5;
    lean << 0.1, 0.9;
    CHECK(predict(one_hot, {a, b}) == a);
    CHECK(predict(half, {a, b}).isApprox(half, 1e-15));
    CHECK(hard_predict_mode(lean, {a, b}) == b);
    CHECK(hard_predict_mode(half, {a, b}) == a);
    CHECK(hard_predict_mode(one_hot, {a, b}) == predict(one_hot, {a, b}));
}

TEST_CASE("predictions are valid distributions") {
    std::mt19937_64 rng(3);
    for (int t = 0; t < 200; ++t) {
        const int k = 1 + t % 4;
        const Matrix q = oracle::random_simplex_rows(rng, 5, k);
        std::vector<Matrix> probs;
        for (int j = 0; j < k; ++j) probs.push_back(oracle::random_simplex_rows(rng, 5, 3));
        for (bool weighted : {true, false}) {
            const Matrix out = predict_batch(q, probs, weighted);
            CHECK((out.rowwise().sum().array() - 1.0).abs().maxCoeff() <= 1e-12);
            CHECK((out.array() >= 0.0).all());
        }
        std::vector<Vector> row;
        for (const auto& p : probs) row.push_back(p.row(2).transpose());
        CHECK((predict_batch(q, probs, true).row(2).transpose() - predict(q.row(2).transpose(), row)).norm() <= 1e-15);
    }
}
