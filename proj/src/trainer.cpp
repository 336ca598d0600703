#include "expertnet/trainer.hpp"

#include "expertnet/clustering.hpp"
#include "expertnet/errors.hpp"
#include "expertnet/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <set>

namespace expertnet::trainer {

namespace {

// Stream tags for derive_seed.
enum SeedTag : std::uint64_t {
    kEncoderInit = 1,
    kDecoderInit = 2,
    kExpertInit = 3,
    kKMeans = 4,
    kShuffle = 5,
    kCohort = 6,
    kFinetuneShuffle = 7,
    kFinetuneCohort = 8,
};

std::vector<std::size_t> encoder_dims(std::size_t input_dim, const TrainConfig& c) {
    std::vector<std::size_t> dims{input_dim};
    dims.insert(dims.end(), c.encoder_hidden.begin(), c.encoder_hidden.end());
    dims.push_back(c.latent_dim);
    return dims;
}

std::vector<std::size_t> decoder_dims(std::size_t input_dim, const TrainConfig& c) {
    std::vector<std::size_t> dims{c.latent_dim};
    dims.insert(dims.end(), c.encoder_hidden.rbegin(), c.encoder_hidden.rend());
    dims.push_back(input_dim);
    return dims;
}

std::vector<std::vector<std::size_t>> make_batches(const std::vector<std::size_t>& order, int batch_size) {
    std::vector<std::vector<std::size_t>> out;
    const auto bs = static_cast<std::size_t>(batch_size);
    for (std::size_t start = 0; start < order.size(); start += bs) {
        const std::size_t end = std::min(order.size(), start + bs);
        out.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(start),
                         order.begin() + static_cast<std::ptrdiff_t>(end));
    }
    return out;
}

std::vector<int> gather_labels(std::span<const int> labels, const std::vector<std::size_t>& rows) {
    std::vector<int> out;
    out.reserve(rows.size());
    for (std::size_t r : rows) out.push_back(labels[r]);
    return out;
}

void require_finite(double v, const char* what) {
    if (!std::isfinite(v)) throw NumericError(std::string("non-finite ") + what);
}

experts::CohortRealization draw_cohorts(const Matrix& q, const TrainConfig& config, std::uint64_t seed) {
    return config.sampling_at_train ? experts::sample_cohorts(q, seed) : experts::argmax_cohorts(q);
}

// Forward/backward of one expert on its cohort with q-weighted cross entropy.
struct ExpertPass {
    double loss = 0.0;
    nn::GradientSet grads;
    Matrix latent_grad;  // rows of the cohort
    Vector cross_entropy;
};

ExpertPass expert_pass(const nn::MlpNetwork& expert, const Matrix& z, const std::vector<std::size_t>& rows,
                       std::span<const int> labels, const Matrix& q, Eigen::Index j, double normalizer) {
    const Matrix zj = gather_rows(z, rows);
    const auto yj = gather_labels(labels, rows);
    Vector wj(static_cast<Eigen::Index>(rows.size()));
    for (std::size_t r = 0; r < rows.size(); ++r) wj[static_cast<Eigen::Index>(r)] = q(static_cast<Eigen::Index>(rows[r]), j);
    auto fw = nn::forward(expert, zj);
    auto ce = experts::expert_cross_entropy(fw.output, yj, wj, normalizer);
    auto bw = nn::backward(expert, fw.tape, ce.logit_grad, nn::GradientOf::PreActivation);
    return {ce.loss, std::move(bw.grads), std::move(bw.input_grad), std::move(ce.cross_entropy)};
}

double validation_auc(const TrainedModel& model, const data::Dataset& val, double* f1_out) {
    const Matrix probs = predict_proba(model, val.features, model.config.weighting_at_predict);
    if (f1_out)
        *f1_out = metrics::f1(val.labels, metrics::argmax_rows(probs), static_cast<int>(val.class_count()));
    return metrics::auc(val.labels, probs);
}

}  // namespace

void TrainConfig::validate() const {
    if (k < 1) throw InvalidArgument("k must be >= 1");
    if (!(beta >= 0.0) || !(gamma >= 0.0) || !(delta >= 0.0))
        throw InvalidArgument("loss weights beta, gamma, delta must be >= 0");
    if (batch_size < 1) throw InvalidArgument("batch_size must be >= 1");
    if (pretrain_epochs < 0 || max_epochs < 0 || finetune_epochs < 0)
        throw InvalidArgument("epoch counts must be >= 0");
    if (patience < 1) throw InvalidArgument("patience must be >= 1");
    if (!(base_rate > 0.0) || !std::isfinite(base_rate)) throw InvalidArgument("base_rate must be > 0");
    if (!(rate_decay >= 0.0) || !std::isfinite(rate_decay)) throw InvalidArgument("rate_decay must be >= 0");
    if (sub_iter_start < 1 || sub_iter_max < sub_iter_start)
        throw InvalidArgument("need sub_iter_max >= sub_iter_start >= 1");
    if (sub_iter_growth_period < 1) throw InvalidArgument("sub_iter_growth_period must be >= 1");
    if (latent_dim < 1) throw InvalidArgument("latent_dim must be >= 1");
    for (auto h : encoder_hidden)
        if (h < 1) throw InvalidArgument("encoder layer sizes must be >= 1");
    for (auto h : expert_hidden)
        if (h < 1) throw InvalidArgument("expert layer sizes must be >= 1");
    if (kmeans_max_iters < 1) throw InvalidArgument("kmeans_max_iters must be >= 1");
}

void TrainedModel::validate() const {
    encoder.validate();
    decoder.validate();
    experts.validate();
    if (encoder.output_dim() != static_cast<std::size_t>(centroids.cols()) ||
        experts.input_dim() != encoder.output_dim())
        throw ShapeError("encoder output, centroid and expert input dims must agree");
    if (static_cast<std::size_t>(centroids.rows()) != experts.k()) throw ShapeError("centroid count != expert count");
    if (decoder.input_dim() != encoder.output_dim() || decoder.output_dim() != encoder.input_dim())
        throw ShapeError("decoder shape does not mirror encoder");
    if (!centroids.allFinite()) throw NumericError("non-finite centroid");
}

double learning_rate(int epoch, const TrainConfig& config) {
    if (epoch < 0) throw InvalidArgument("epoch must be >= 0");
    return config.base_rate / (1.0 + config.rate_decay * epoch);
}

int sub_iterations(int epoch, const TrainConfig& config) {
    return std::min(config.sub_iter_max, config.sub_iter_start + epoch / config.sub_iter_growth_period);
}

JointState initial_state(std::size_t input_dim, std::size_t class_count, const TrainConfig& config) {
    JointState s;
    s.encoder = nn::make_network(encoder_dims(input_dim, config), nn::Activation::Identity,
                                 derive_seed(config.seed, kEncoderInit));
    s.decoder = nn::make_network(decoder_dims(input_dim, config), nn::Activation::Identity,
                                 derive_seed(config.seed, kDecoderInit));
    s.experts = experts::make_ensemble(static_cast<std::size_t>(config.k), config.latent_dim, config.expert_hidden,
                                       class_count, derive_seed(config.seed, kExpertInit));
    s.centroids = Matrix::Zero(config.k, static_cast<Eigen::Index>(config.latent_dim));
    return s;
}

double reconstruction_loss(const nn::MlpNetwork& encoder, const nn::MlpNetwork& decoder, const Matrix& x) {
    const Matrix recon = nn::infer(decoder, nn::infer(encoder, x));
    return (recon - x).squaredNorm() / static_cast<double>(x.rows());
}

std::vector<double> pretrain(nn::MlpNetwork& encoder, nn::MlpNetwork& decoder, const Matrix& x,
                             const TrainConfig& config) {
    config.validate();
    if (x.rows() == 0) throw InvalidArgument("pretrain: empty dataset");
    std::vector<double> history;
    history.reserve(static_cast<std::size_t>(config.pretrain_epochs));
    for (int epoch = 0; epoch < config.pretrain_epochs; ++epoch) {
        const double rate = learning_rate(epoch, config);
        Rng rng(derive_seed(config.seed, kShuffle, epoch));
        const auto batches = make_batches(shuffled_indices(static_cast<std::size_t>(x.rows()), rng), config.batch_size);
        double sum = 0.0;
        for (const auto& rows : batches) {
            const Matrix xb = gather_rows(x, rows);
            const double m = static_cast<double>(rows.size());
            auto fe = nn::forward(encoder, xb);
            auto fd = nn::forward(decoder, fe.output);
            const Matrix residual = fd.output - xb;
            const double loss = residual.squaredNorm() / m;
            require_finite(loss, "reconstruction loss during pretraining");
            sum += loss;
            auto bd = nn::backward(decoder, fd.tape, (2.0 / m) * residual);
            auto be = nn::backward(encoder, fe.tape, bd.input_grad);
            nn::sgd_step(decoder, bd.grads, rate);
            nn::sgd_step(encoder, be.grads, rate);
        }
        history.push_back(sum / static_cast<double>(batches.size()));
    }
    return history;
}

BatchLosses joint_step(JointState& state, const Matrix& xb, std::span<const int> yb, const Matrix& target,
                       int sub_iters, double rate, const TrainConfig& config, std::uint64_t cohort_seed,
                       const TrainHooks& hooks) {
    const Eigen::Index m = xb.rows();
    const double md = static_cast<double>(m);
    const auto k = static_cast<Eigen::Index>(state.experts.k());
    if (m == 0) throw InvalidArgument("joint_step: empty batch");
    if (target.rows() != m || target.cols() != k) throw ShapeError("joint_step: target shape mismatch");
    if (static_cast<Eigen::Index>(yb.size()) != m) throw ShapeError("joint_step: label count mismatch");
    if (sub_iters < 1) throw InvalidArgument("joint_step: need at least one sub-iteration");

    auto cohort_seed_for = [&](int t) {
        return derive_seed(cohort_seed, config.resample_each_subiter ? static_cast<std::uint64_t>(t) : 0ULL);
    };

    // Expert-only sub-iterations on the current embedding; the encoder is untouched.
    if (sub_iters > 1) {
        const Matrix z = nn::infer(state.encoder, xb);
        const Matrix q = clustering::soft_assign(z, state.centroids);
        for (int t = 0; t + 1 < sub_iters; ++t) {
            const auto cohorts = draw_cohorts(q, config, cohort_seed_for(t));
            if (hooks.on_cohorts) hooks.on_cohorts(q, cohorts);
            for (Eigen::Index j = 0; j < k; ++j) {
                const auto& rows = cohorts.cohorts[static_cast<std::size_t>(j)];
                if (rows.empty()) continue;
                auto pass = expert_pass(state.experts.experts[j], z, rows, yb, q, j, md);
                require_finite(pass.loss, "supervised loss");
                nn::sgd_step(state.experts.experts[j], pass.grads, rate);
            }
        }
    }

    // Final sub-iteration: the combined loss reaches every parameter group.
    BatchLosses out;
    auto fe = nn::forward(state.encoder, xb);
    const Matrix& z = fe.output;
    const Matrix q = clustering::soft_assign(z, state.centroids);

    auto fd = nn::forward(state.decoder, z);
    const Matrix residual = fd.output - xb;
    out.l_r = residual.squaredNorm() / md;
    auto bd = nn::backward(state.decoder, fd.tape, (2.0 / md) * residual);
    Matrix dz = bd.input_grad;

    out.l_c = clustering::kl_loss(target, q) / md;
    const auto kl = clustering::kl_gradients(z, state.centroids, target, q);
    dz += (config.beta / md) * kl.dz;
    Matrix dmu = (config.beta / md) * kl.dmu;

    // dL/dq from the supervised and balance terms, chained through soft_assign below
    Matrix dq = Matrix::Zero(m, k);
    const auto cohorts = draw_cohorts(q, config, cohort_seed_for(sub_iters - 1));
    if (hooks.on_cohorts) hooks.on_cohorts(q, cohorts);
    std::vector<std::optional<nn::GradientSet>> expert_grads(static_cast<std::size_t>(k));
    for (Eigen::Index j = 0; j < k; ++j) {
        const auto& rows = cohorts.cohorts[static_cast<std::size_t>(j)];
        if (rows.empty()) continue;
        auto pass = expert_pass(state.experts.experts[j], z, rows, yb, q, j, md);
        out.l_s += pass.loss;
        for (std::size_t r = 0; r < rows.size(); ++r) {
            const auto i = static_cast<Eigen::Index>(rows[r]);
            dz.row(i) += config.gamma * pass.latent_grad.row(static_cast<Eigen::Index>(r));
            dq(i, j) += config.gamma * pass.cross_entropy[static_cast<Eigen::Index>(r)] / md;
        }
        expert_grads[static_cast<std::size_t>(j)] = std::move(pass.grads);
    }

    out.l_bal = clustering::balance_loss(q);
    dq += config.delta * clustering::balance_gradient(q);

    const auto via_q = clustering::soft_assign_backward(z, state.centroids, q, dq);
    dz += via_q.dz;
    dmu += via_q.dmu;

    out.total = out.l_r + config.beta * out.l_c + config.gamma * out.l_s + config.delta * out.l_bal;
    require_finite(out.total, "combined loss");
    if (!dz.allFinite() || !dmu.allFinite()) throw NumericError("non-finite latent or centroid gradient");

    auto be = nn::backward(state.encoder, fe.tape, dz);
    nn::sgd_step(state.encoder, be.grads, rate);
    nn::sgd_step(state.decoder, bd.grads, rate);
    state.centroids -= rate * dmu;
    for (Eigen::Index j = 0; j < k; ++j)
        if (expert_grads[static_cast<std::size_t>(j)])
            nn::sgd_step(state.experts.experts[j], *expert_grads[static_cast<std::size_t>(j)], rate);
    return out;
}

TrainedModel train(const data::Dataset& train_set, const data::Dataset& val_set, const TrainConfig& config,
                   const TrainHooks& hooks) {
    config.validate();
    if (train_set.rows() == 0) throw InvalidArgument("training set is empty");
    train_set.validate();
    val_set.validate();
    if (train_set.dims() != val_set.dims()) throw ShapeError("train and validation feature counts differ");
    if (train_set.class_names != val_set.class_names) throw InvalidArgument("train and validation class sets differ");
    if (train_set.class_count() < 2) throw InvalidArgument("need at least two classes");
    if (static_cast<std::size_t>(config.k) > train_set.rows())
        throw InvalidArgument("k exceeds the number of training rows");
    if (std::set<int>(val_set.labels.begin(), val_set.labels.end()).size() < 2)
        throw InvalidArgument("validation set must contain at least two classes");

    const Matrix& x = train_set.features;
    JointState state = initial_state(train_set.dims(), train_set.class_count(), config);

    TrainedModel model;
    model.config = config;
    model.pretrain_history = pretrain(state.encoder, state.decoder, x, config);

    {
        const Matrix z = nn::infer(state.encoder, x);
        state.centroids = clustering::kmeans(z, config.k, derive_seed(config.seed, kKMeans), config.kmeans_max_iters).centroids;
    }
    Matrix target = clustering::target_distribution(clustering::soft_assign(nn::infer(state.encoder, x), state.centroids));

    auto load = [&](const JointState& s) {
        model.encoder = s.encoder;
        model.decoder = s.decoder;
        model.experts = s.experts;
        model.centroids = s.centroids;
    };
    load(state);

    JointState best = state;
    model.best_val_auc = -1.0;
    int since_best = 0;
    for (int epoch = 0; epoch < config.max_epochs; ++epoch) {
        const double rate = learning_rate(epoch, config);
        const int sub_iters = sub_iterations(epoch, config);
        // continues the pretraining shuffle stream
        Rng rng(derive_seed(config.seed, kShuffle, config.pretrain_epochs + epoch));
        const auto batches = make_batches(shuffled_indices(train_set.rows(), rng), config.batch_size);

        EpochRecord rec;
        rec.epoch = epoch;
        rec.sub_iters = sub_iters;
        rec.rate = rate;
        for (std::size_t b = 0; b < batches.size(); ++b) {
            const auto& rows = batches[b];
            if (hooks.on_batch) hooks.on_batch(epoch, static_cast<int>(b), target);
            const Matrix xb = gather_rows(x, rows);
            const Matrix pb = gather_rows(target, rows);
            const auto yb = gather_labels(train_set.labels, rows);
            const auto losses = joint_step(state, xb, yb, pb, sub_iters, rate, config,
                                           derive_seed(config.seed, kCohort, epoch, b), hooks);
            rec.l_r += losses.l_r;
            rec.l_c += losses.l_c;
            rec.l_s += losses.l_s;
            rec.l_bal += losses.l_bal;
            rec.total += losses.total;
        }
        const double nb = static_cast<double>(batches.size());
        rec.l_r /= nb;
        rec.l_c /= nb;
        rec.l_s /= nb;
        rec.l_bal /= nb;
        rec.total /= nb;

        target = clustering::target_distribution(clustering::soft_assign(nn::infer(state.encoder, x), state.centroids));

        load(state);
        rec.val_auc = validation_auc(model, val_set, &rec.val_f1);
        model.history.push_back(rec);

        if (rec.val_auc > model.best_val_auc) {
            model.best_val_auc = rec.val_auc;
            model.best_epoch = epoch;
            best = state;
            since_best = 0;
        } else if (++since_best >= config.patience) {
            break;
        }
    }
    load(best);
    model.finetune_history = finetune_experts(model, train_set, config.finetune_epochs, hooks);
    return model;
}

std::vector<double> finetune_experts(TrainedModel& model, const data::Dataset& train_set, int epochs,
                                     const TrainHooks& hooks) {
    if (epochs < 0) throw InvalidArgument("finetune epochs must be >= 0");
    std::vector<double> history;
    if (epochs == 0) return history;
    const auto& config = model.config;
    const Matrix z = encode(model, train_set.features);
    const Matrix q = clustering::soft_assign(z, model.centroids);
    const auto k = static_cast<Eigen::Index>(model.k());
    for (int epoch = 0; epoch < epochs; ++epoch) {
        const double rate = learning_rate(epoch, config);
        Rng rng(derive_seed(config.seed, kFinetuneShuffle, epoch));
        const auto batches = make_batches(shuffled_indices(train_set.rows(), rng), config.batch_size);
        double sum = 0.0;
        for (std::size_t b = 0; b < batches.size(); ++b) {
            const auto& rows = batches[b];
            const Matrix zb = gather_rows(z, rows);
            const Matrix qb = gather_rows(q, rows);
            const auto yb = gather_labels(train_set.labels, rows);
            const auto cohorts = draw_cohorts(qb, config, derive_seed(config.seed, kFinetuneCohort, epoch, b));
            if (hooks.on_cohorts) hooks.on_cohorts(qb, cohorts);
            const double m = static_cast<double>(rows.size());
            for (Eigen::Index j = 0; j < k; ++j) {
                const auto& members = cohorts.cohorts[static_cast<std::size_t>(j)];
                if (members.empty()) continue;
                auto pass = expert_pass(model.experts.experts[j], zb, members, yb, qb, j, m);
                require_finite(pass.loss, "supervised loss during fine-tuning");
                sum += pass.loss;
                nn::sgd_step(model.experts.experts[j], pass.grads, rate);
            }
        }
        history.push_back(sum / static_cast<double>(batches.size()));
    }
    return history;
}

Matrix encode(const TrainedModel& model, const Matrix& x) { return nn::infer(model.encoder, x); }

Matrix soft_assignments(const TrainedModel& model, const Matrix& x) {
    return clustering::soft_assign(encode(model, x), model.centroids);
}

std::vector<Matrix> expert_probabilities(const TrainedModel& model, const Matrix& latent) {
    std::vector<Matrix> out;
    out.reserve(model.k());
    for (const auto& e : model.experts.experts) out.push_back(nn::infer(e, latent));
    return out;
}

Matrix predict_proba(const TrainedModel& model, const Matrix& x, bool weighted) {
    if (static_cast<std::size_t>(x.cols()) != model.input_dim())
        throw ShapeError("input has " + std::to_string(x.cols()) + " features, model expects " +
                         std::to_string(model.input_dim()));
    const Matrix z = encode(model, x);
    const Matrix q = clustering::soft_assign(z, model.centroids);
    return experts::predict_batch(q, expert_probabilities(model, z), weighted);
}

metrics::MetricsReport evaluate(const TrainedModel& model, const data::Dataset& dataset, bool weighted) {
    if (!dataset.labeled) throw InvalidArgument("evaluation needs labels");
    metrics::MetricsReport r;
    r.rows = dataset.rows();
    r.k = static_cast<int>(model.k());
    r.hard_predict = !weighted;

    const Matrix z = encode(model, dataset.features);
    const Matrix q = clustering::soft_assign(z, model.centroids);
    const Matrix probs = experts::predict_batch(q, expert_probabilities(model, z), weighted);
    r.auc = metrics::auc(dataset.labels, probs);
    r.f1 = metrics::f1(dataset.labels, metrics::argmax_rows(probs), static_cast<int>(dataset.class_count()));

    const auto assign = clustering::hard_assignments(q);
    if (r.k >= 2) {
        try {
            r.silhouette = metrics::silhouette(z, assign, r.k);
        } catch (const UndefinedMetric&) {
        }
        try {
            auto h = metrics::htfd(dataset.features, assign, r.k);
            r.htfd_per_cluster = std::move(h.per_cluster);
            r.htfd_mean = h.mean;
        } catch (const UndefinedMetric&) {
        }
    }
    if (dataset.groups) r.adjusted_rand = metrics::adjusted_rand_index(assign, *dataset.groups);
    return r;
}

}  // namespace expertnet::trainer
