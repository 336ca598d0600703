#pragma once

#include "expertnet/data.hpp"
#include "expertnet/experts.hpp"
#include "expertnet/metrics.hpp"
#include "expertnet/nn.hpp"
#include "expertnet/types.hpp"

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

namespace expertnet::trainer {

struct TrainConfig {
    int k = 2;
    // weights of the clustering, supervised and balance terms; reconstruction has weight 1
    double beta = 0.5;
    double gamma = 1.5;
    double delta = 1.0;

    int batch_size = 256;
    int pretrain_epochs = 100;
    int max_epochs = 100;
    int finetune_epochs = 10;
    int patience = 5;

    // tau(e) = base_rate / (1 + rate_decay * e)
    double base_rate = 1e-2;
    double rate_decay = 1e-2;

    // sub-iterations per batch: start, +1 every growth_period epochs, capped at max
    int sub_iter_start = 1;
    int sub_iter_growth_period = 5;
    int sub_iter_max = 10;
    // draw fresh cohorts for every sub-iteration rather than once per batch
    bool resample_each_subiter = true;

    bool sampling_at_train = true;
    bool weighting_at_predict = true;

    std::vector<std::size_t> encoder_hidden{128, 64, 32};
    std::size_t latent_dim = 20;
    std::vector<std::size_t> expert_hidden{64, 32, 16, 8};
    int kmeans_max_iters = 100;

    std::uint64_t seed = 0;

    void validate() const;
};

struct EpochRecord {
    int epoch = 0;
    double l_r = 0.0;
    double l_c = 0.0;
    double l_s = 0.0;
    double l_bal = 0.0;
    double total = 0.0;
    double val_auc = 0.0;
    double val_f1 = 0.0;
    int sub_iters = 0;
    double rate = 0.0;
};

/// Parameters that the joint loop updates.
struct JointState {
    nn::MlpNetwork encoder;
    nn::MlpNetwork decoder;
    experts::ExpertEnsemble experts;
    Matrix centroids;  // k x latent_dim
};

struct TrainedModel {
    nn::MlpNetwork encoder;
    nn::MlpNetwork decoder;
    experts::ExpertEnsemble experts;
    Matrix centroids;
    TrainConfig config;

    std::vector<double> pretrain_history;  // mean batch L_r per pretraining epoch
    std::vector<EpochRecord> history;
    std::vector<double> finetune_history;  // mean batch L_s per fine-tuning epoch
    int best_epoch = -1;
    double best_val_auc = 0.0;

    std::size_t k() const noexcept { return experts.k(); }
    std::size_t input_dim() const { return encoder.input_dim(); }
    void validate() const;
};

struct BatchLosses {
    double l_r = 0.0;
    double l_c = 0.0;
    double l_s = 0.0;
    double l_bal = 0.0;
    double total = 0.0;
};

/// Observation points for tests and diagnostics.
struct TrainHooks {
    // before every joint step; target is the epoch-level P over the whole training set
    std::function<void(int epoch, int batch, const Matrix& target)> on_batch;
    // every cohort realization used for an expert update
    std::function<void(const Matrix& q, const experts::CohortRealization& cohorts)> on_cohorts;
};

double learning_rate(int epoch, const TrainConfig& config);
int sub_iterations(int epoch, const TrainConfig& config);

JointState initial_state(std::size_t input_dim, std::size_t class_count, const TrainConfig& config);

/// Autoencoder pretraining on the reconstruction loss only. Returns the mean
/// batch loss of each epoch (measured before each batch update).
std::vector<double> pretrain(nn::MlpNetwork& encoder, nn::MlpNetwork& decoder, const Matrix& x,
                             const TrainConfig& config);

/// Per-sample reconstruction loss |x - g(f(x))|^2 averaged over rows.
double reconstruction_loss(const nn::MlpNetwork& encoder, const nn::MlpNetwork& decoder, const Matrix& x);

/// One mini-batch of the joint loop: `sub_iters - 1` expert-only updates on
/// sampled cohorts, then one step on the combined loss that updates the
/// centroids, encoder, decoder and experts. `target` holds the rows of P for
/// this batch. Losses are reported before the final update.
BatchLosses joint_step(JointState& state, const Matrix& xb, std::span<const int> yb, const Matrix& target,
                       int sub_iters, double rate, const TrainConfig& config, std::uint64_t cohort_seed,
                       const TrainHooks& hooks = {});

/// The full pipeline: pretraining, k-means initialisation, the joint loop
/// with early stopping on validation AUC, then expert fine-tuning.
TrainedModel train(const data::Dataset& train_set, const data::Dataset& val_set, const TrainConfig& config,
                   const TrainHooks& hooks = {});

/// Encoder frozen; experts retrained on cohorts drawn from the fixed Q.
/// Returns the mean batch L_s of each epoch.
std::vector<double> finetune_experts(TrainedModel& model, const data::Dataset& train_set, int epochs,
                                     const TrainHooks& hooks = {});

Matrix encode(const TrainedModel& model, const Matrix& x);
Matrix soft_assignments(const TrainedModel& model, const Matrix& x);
std::vector<Matrix> expert_probabilities(const TrainedModel& model, const Matrix& latent);
Matrix predict_proba(const TrainedModel& model, const Matrix& x, bool weighted);

/// AUC and F1 of the predictions, silhouette (on the embeddings) and HTFD (on
/// the features) of the argmax clusters, and ARI when `dataset` carries
/// ground-truth groups. Clustering metrics outside their domain (k = 1, an
/// empty cluster) are left unset.
metrics::MetricsReport evaluate(const TrainedModel& model, const data::Dataset& dataset, bool weighted);

}  // namespace expertnet::trainer
