#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "expertnet/clustering.hpp"
#include "expertnet/errors.hpp"
#include "expertnet/trainer.hpp"
#include "gradient_checks.hpp"
#include "oracles.hpp"

using namespace expertnet;
using namespace expertnet::trainer;

namespace {

TrainConfig tiny_config() {
    TrainConfig c;
    c.encoder_hidden = {8};
    c.latent_dim = 3;
    c.expert_hidden = {4};
    c.batch_size = 32;
    c.pretrain_epochs = 5;
    c.max_epochs = 4;
    c.finetune_epochs = 2;
    c.patience = 50;
    c.seed = 3;
    return c;
}

struct Splits {
    data::Dataset train, val;
};

Splits small_synth(std::uint64_t seed = 1) {
    data::SynthParams p;
    p.n_per_cluster = 60;
    p.dim = 4;
    p.seed = seed;
    auto ds = data::synth_heterogeneous(p).data;
    auto [tr, va, te] = data::split(ds, {0.6, 0.2, 0.2, seed});
    auto [st, trs] = data::standardize(tr);
    return {trs, st.apply(va)};
}

}  // namespace

TEST_CASE("learning rate schedule") {
    TrainConfig c;
    c.base_rate = 0.1;
    c.rate_decay = 0.1;
    CHECK(learning_rate(10, c) == doctest::Approx(0.05).epsilon(1e-15));
    for (int e = 0; e < 200; ++e) {
        CHECK(learning_rate(e + 1, c) <= learning_rate(e, c));
        CHECK(learning_rate(e, c) > 0.0);
    }
    c.rate_decay = 0.0;
    CHECK(learning_rate(0, c) == 0.1);
    CHECK(learning_rate(1000, c) == 0.1);
    CHECK_THROWS_AS(learning_rate(-1, c), InvalidArgument);
}

TEST_CASE("sub-iteration schedule") {
    TrainConfig c;
    CHECK(sub_iterations(0, c) == 1);
    CHECK(sub_iterations(4, c) == 1);
    CHECK(sub_iterations(5, c) == 2);
    CHECK(sub_iterations(44, c) == 9);
    CHECK(sub_iterations(45, c) == 10);
    CHECK(sub_iterations(500, c) == 10);
}

TEST_CASE("config validation") {
    TrainConfig c;
    c.k = 0;
    CHECK_THROWS_AS(c.validate(), InvalidArgument);
    c = {};
    c.gamma = -1.0;
    CHECK_THROWS_AS(c.validate(), InvalidArgument);
    c = {};
    c.sub_iter_start = 3;
    c.sub_iter_max = 2;
    CHECK_THROWS_AS(c.validate(), InvalidArgument);
    c = {};
    c.batch_size = 0;
    CHECK_THROWS_AS(c.validate(), InvalidArgument);
}

TEST_CASE("pretraining recovers a linear subspace") {
    std::mt19937_64 rng(11);
    const Matrix x = oracle::random_matrix(rng, 200, 2) * oracle::random_matrix(rng, 2, 10, 0.5);
    TrainConfig c;
    c.encoder_hidden = {};
    c.latent_dim = 2;
    c.batch_size = 20;
    c.pretrain_epochs = 200;
    c.base_rate = 0.02;
    auto s = initial_state(10, 2, c);
    const double before = reconstruction_loss(s.encoder, s.decoder, x);
    const auto hist = pretrain(s.encoder, s.decoder, x, c);
    const double after = reconstruction_loss(s.encoder, s.decoder, x);
    CHECK(hist.size() == 200);
    CHECK(after < before);
    CHECK(after <= 1e-2);
}

TEST_CASE("pretraining on constant data learns the constant") {
    Matrix x = Matrix::Constant(64, 5, 0.7);
    TrainConfig c = tiny_config();
    c.pretrain_epochs = 300;
    auto s = initial_state(5, 2, c);
    const auto hist = pretrain(s.encoder, s.decoder, x, c);
    CHECK(hist.back() <= 1e-2 * hist.front());
}

TEST_CASE("full-batch pretraining descends") {
    std::mt19937_64 rng(12);
    const Matrix x = oracle::random_matrix(rng, 40, 6);
    TrainConfig c = tiny_config();
    c.batch_size = 40;
    c.pretrain_epochs = 60;
    c.base_rate = 5e-3;
    auto s = initial_state(6, 2, c);
    const auto hist = pretrain(s.encoder, s.decoder, x, c);
    for (std::size_t e = 1; e < hist.size(); ++e) CHECK(hist[e] <= hist[e - 1]);
}

TEST_CASE("joint step gradients match finite differences per loss component") {
    using gradcheck::Component;
    std::mt19937_64 rng(13);
    for (Component c : {Component::Reconstruction, Component::Clustering, Component::Supervised, Component::Balance}) {
        double worst = 0.0;
        for (int t = 0; t < 25; ++t) {
            auto jc = gradcheck::random_joint_case(rng, c);
            worst = std::max(worst, gradcheck::joint_gradient_mismatch(jc));
        }
        CAPTURE(static_cast<int>(c));
        CHECK(worst <= 1e-4);
    }
}

TEST_CASE("zero loss weights reduce the joint loop to pretraining") {
    const auto s = small_synth();
    TrainConfig c = tiny_config();
    c.beta = c.gamma = c.delta = 0.0;
    c.rate_decay = 0.0;
    c.finetune_epochs = 0;
    const auto model = train(s.train, s.val, c);

    TrainConfig longer = c;
    longer.pretrain_epochs = c.pretrain_epochs + c.max_epochs;
    auto st = initial_state(s.train.dims(), s.train.class_count(), longer);
    const auto hist = pretrain(st.encoder, st.decoder, s.train.features, longer);
    REQUIRE(model.history.size() == static_cast<std::size_t>(c.max_epochs));
    for (int e = 0; e < c.max_epochs; ++e)
        CHECK(std::abs(model.history[static_cast<std::size_t>(e)].l_r - hist[static_cast<std::size_t>(c.pretrain_epochs + e)]) <= 1e-10);
}

TEST_CASE("k = 1 has no clustering or balance signal") {
    const auto s = small_synth();
    TrainConfig c = tiny_config();
    c.k = 1;
    const auto model = train(s.train, s.val, c);
    for (const auto& r : model.history) {
        CHECK(r.l_bal == 0.0);
        CHECK(r.l_c == 0.0);
    }
    const Matrix z = encode(model, s.train.features);
    const Matrix q = clustering::soft_assign(z, model.centroids);
    const auto g = clustering::kl_gradients(z, model.centroids, clustering::target_distribution(q), q);
    CHECK(g.dz.cwiseAbs().maxCoeff() == 0.0);
    CHECK(g.dmu.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("target distribution is fixed within an epoch") {
    const auto s = small_synth();
    TrainConfig c = tiny_config();
    std::vector<Matrix> first;
    int changed_within = 0;
    TrainHooks hooks;
    hooks.on_batch = [&](int epoch, int batch, const Matrix& target) {
        if (batch == 0) {
            first.push_back(target);
            return;
        }
        changed_within += !(target == first[static_cast<std::size_t>(epoch)]);
    };
    train(s.train, s.val, c, hooks);
    CHECK(first.size() == static_cast<std::size_t>(c.max_epochs));
    CHECK(changed_within == 0);
    CHECK_FALSE(first[0] == first[1]);
}

TEST_CASE("without sampling the cohorts are the argmax clusters") {
    const auto s = small_synth();
    TrainConfig c = tiny_config();
    c.sampling_at_train = false;
    c.sub_iter_start = 3;
    c.sub_iter_max = 3;
    int seen = 0, mismatched = 0;
    TrainHooks hooks;
    hooks.on_cohorts = [&](const Matrix& q, const experts::CohortRealization& cohorts) {
        ++seen;
        mismatched += cohorts.assignment != clustering::hard_assignments(q);
    };
    train(s.train, s.val, c, hooks);
    CHECK(seen > 0);
    CHECK(mismatched == 0);
}

TEST_CASE("centroid update on one batch matches a hand computation") {
    std::mt19937_64 rng(14);
    TrainConfig c = tiny_config();
    c.k = 3;
    c.beta = 0.8;
    c.gamma = c.delta = 0.0;
    auto st = initial_state(4, 2, c);
    st.centroids = oracle::random_matrix(rng, 3, 3);
    const Matrix x = oracle::random_matrix(rng, 10, 4);
    const std::vector<int> y{0, 1, 0, 1, 1, 0, 0, 1, 0, 1};
    const Matrix p = oracle::random_simplex_rows(rng, 10, 3);
    const Matrix z = nn::infer(st.encoder, x);
    const Matrix q = oracle::soft_assign(z, st.centroids);

    // dL_c/dmu_j = -2 sum_i (1 + |z_i - mu_j|^2)^-1 (p_ij - q_ij)(z_i - mu_j)
    Matrix grad = Matrix::Zero(3, 3);
    for (int j = 0; j < 3; ++j)
        for (int i = 0; i < 10; ++i) {
            double d2 = 0.0;
            for (int a = 0; a < 3; ++a) d2 += (z(i, a) - st.centroids(j, a)) * (z(i, a) - st.centroids(j, a));
            for (int a = 0; a < 3; ++a)
                grad(j, a) -= 2.0 / (1.0 + d2) * (p(i, j) - q(i, j)) * (z(i, a) - st.centroids(j, a));
        }
    const double rate = 0.05;
    const Matrix expect = st.centroids - rate * c.beta / 10.0 * grad;
    joint_step(st, x, y, p, 1, rate, c, 5);
    CHECK((st.centroids - expect).cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("early stopping returns the best validation snapshot") {
    const auto s = small_synth(2);
    TrainConfig c = tiny_config();
    c.max_epochs = 40;
    c.patience = 2;
    c.finetune_epochs = 0;
    c.base_rate = 0.05;
    const auto model = train(s.train, s.val, c);
    REQUIRE(model.best_epoch >= 0);
    double best = -1.0;
    for (const auto& r : model.history) best = std::max(best, r.val_auc);
    CHECK(model.best_val_auc == best);
    CHECK(model.history[static_cast<std::size_t>(model.best_epoch)].val_auc == best);
    CHECK(metrics::auc(s.val.labels, predict_proba(model, s.val.features, true)) == best);
    if (model.history.size() < static_cast<std::size_t>(c.max_epochs))
        CHECK(model.best_epoch + c.patience + 1 == static_cast<int>(model.history.size()));
}

TEST_CASE("fine-tuning touches only the experts") {
    const auto s = small_synth();
    TrainConfig c = tiny_config();
    c.finetune_epochs = 0;
    auto model = train(s.train, s.val, c);
    const auto before = model;

    CHECK(finetune_experts(model, s.train, 0).empty());
    CHECK(model.experts == before.experts);

    finetune_experts(model, s.train, 3);
    CHECK(model.encoder == before.encoder);
    CHECK(model.decoder == before.decoder);
    CHECK(model.centroids == before.centroids);
    CHECK_FALSE(model.experts == before.experts);
}

TEST_CASE("full-batch fine-tuning on fixed cohorts descends") {
    const auto s = small_synth();
    TrainConfig c = tiny_config();
    c.finetune_epochs = 0;
    auto model = train(s.train, s.val, c);
    model.config.sampling_at_train = false;
    model.config.batch_size = static_cast<int>(s.train.rows());
    model.config.rate_decay = 0.0;
    const auto hist = finetune_experts(model, s.train, 30);
    for (std::size_t e = 1; e < hist.size(); ++e) CHECK(hist[e] <= hist[e - 1]);
}

TEST_CASE("training is deterministic") {
    const auto s = small_synth();
    const TrainConfig c = tiny_config();
    const auto a = train(s.train, s.val, c);
    const auto b = train(s.train, s.val, c);
    CHECK(a.encoder == b.encoder);
    CHECK(a.decoder == b.decoder);
    CHECK(a.experts == b.experts);
    CHECK(a.centroids == b.centroids);
    CHECK(a.pretrain_history == b.pretrain_history);
    CHECK(a.finetune_history == b.finetune_history);
    REQUIRE(a.history.size() == b.history.size());
    for (std::size_t e = 0; e < a.history.size(); ++e) {
        CHECK(a.history[e].total == b.history[e].total);
        CHECK(a.history[e].val_auc == b.history[e].val_auc);
    }
}

TEST_CASE("training rejects bad inputs with typed errors") {
    const auto s = small_synth();
    TrainConfig c = tiny_config();

    data::Dataset empty = s.train.subset(std::vector<std::size_t>{});
    CHECK_THROWS_AS(train(empty, s.val, c), InvalidArgument);

    c.k = static_cast<int>(s.train.rows()) + 1;
    CHECK_THROWS_AS(train(s.train, s.val, c), InvalidArgument);

    c = tiny_config();
    data::Dataset narrow = s.val;
    narrow.features = narrow.features.leftCols(2).eval();
    narrow.feature_names.resize(2);
    CHECK_THROWS_AS(train(s.train, narrow, c), ShapeError);

    data::Dataset unlabeled = s.val;
    unlabeled.labeled = false;
    const auto model = train(s.train, s.val, c);
    CHECK_THROWS_AS(evaluate(model, unlabeled, true), InvalidArgument);
    CHECK_THROWS_AS(predict_proba(model, narrow.features, true), ShapeError);
}

TEST_CASE("evaluate fills the report") {
    const auto s = small_synth();
    const auto model = train(s.train, s.val, tiny_config());
    const auto r = evaluate(model, s.val, true);
    CHECK(r.rows == s.val.rows());
    CHECK(r.k == 2);
    CHECK_FALSE(r.hard_predict);
    CHECK(r.auc >= 0.0);
    CHECK(r.auc <= 1.0);
    CHECK(r.adjusted_rand.has_value());
    CHECK(evaluate(model, s.val, false).hard_predict);
}
