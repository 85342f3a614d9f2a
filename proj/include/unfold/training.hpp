#pragma once

#include <cstdint>
#include <functional>
#include <optional>

#include "unfold/adversarial.hpp"
#include "unfold/data_io.hpp"

namespace unfold {

/// Entries i.i.d. N(0, 2/(N+n)) from the "init" stream of `seed`.
Matrix xavier_init(Index N, Index n, std::uint64_t seed);

/// Nearest orthogonal matrix U Vᵀ from the SVD W = U Σ Vᵀ.
Matrix polar_factor(const Matrix& W);

struct AdamState {
    Matrix m;
    Matrix v;
    std::int64_t step = 0;
    double lr = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;

    static AdamState fresh(Index rows, Index cols, double lr);
};

/// One bias-corrected Adam update of W in place.
void adam_step(AdamState& state, const Matrix& grad, Matrix& W);

struct TrainConfig {
    int epochs = 40;
    Index batch_size = 128;
    double lr = 1e-4;
    double epsilon = 0.0;                  // train-time attack level
    std::optional<double> eval_epsilon;    // defaults to `epsilon`
    int patience = 5;
    /// Epochs trained before metrics are tracked for early stopping.
    int warmup_epochs = 1;
    std::uint64_t seed = 0;

    double test_epsilon() const { return eval_epsilon.value_or(epsilon); }
    void validate() const;
};

/// Everything needed to resume or evaluate a trained network.
struct TrainedModel {
    NetworkConfig net;
    AdamState adam;
    AdamState adam_theta;  // 1×1, baseline threshold
    TrainConfig train;
    int epoch = 0;
    double adv_train_mse = 0.0;

    Checkpoint to_checkpoint() const;
    static TrainedModel from_checkpoint(const Checkpoint& c);
};

struct TrainData {
    Matrix X_train, Y_train, X_test, Y_test;
};

struct TrainResult {
    TrainedModel best;          // checkpoint with minimal adversarial EGE
    MetricsRecord history;      // one row per evaluated epoch
    int epochs_run = 0;
    bool stopped_early = false;
};

/// Adversarial MSE of `net` on (Y, X) under fresh FGSM at `epsilon`,
/// evaluated in chunks of `chunk` columns.
double adversarial_mse(const Network& net, const Matrix& Y, const Matrix& X, double epsilon, Index chunk = 512);

/// Called after every evaluated epoch; useful for progress output.
using EpochObserver = std::function<void(const EpochMetrics&)>;

TrainResult train(const TrainData& data, const NetworkConfig& cfg, const TrainConfig& tcfg,
                  const EpochObserver& observer = {});

/// Clean and adversarial test MSE at each ε; the EGE uses the
/// checkpoint's stored adversarial train MSE.
MetricsRecord evaluate(const TrainedModel& model, const Matrix& X_test, const Matrix& Y_test,
                       const std::vector<double>& epsilons);

}  // namespace unfold
