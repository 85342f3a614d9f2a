#pragma once

#include <functional>
#include <iosfwd>
#include <string>

#include "unfold/data_io.hpp"
#include "unfold/run_config.hpp"
#include "unfold/training.hpp"

namespace unfold {

enum ExitCode : int {
    exit_ok = 0,
    exit_usage = 1,
    exit_config = 2,
    exit_diverged = 3,
    exit_io = 4,
    exit_gamma = 5,
    exit_gradcheck = 6,
};

/// Measurement setup, train split and test split described by a config.
struct Experiment {
    MeasurementSetup setup;
    Dataset train;
    Dataset test;
};

/// Builds the experiment. When `A` is given it replaces the generated matrix
/// (evaluation against a checkpoint).
Experiment build_experiment(const RunConfig& cfg, const Matrix* A = nullptr);

/// Network configuration with a freshly initialized sparsifier.
NetworkConfig build_network(const RunConfig& cfg, const MeasurementSetup& setup, ModelKind kind, Index N);

TrainConfig build_train_config(const RunConfig& cfg);

/// Worker count from UNFOLD_THREADS (default 1).
int worker_threads();
/// Runs fn(0..count-1) on up to worker_threads() threads; results are
/// written by index so the outcome does not depend on scheduling.
void parallel_for(std::size_t count, const std::function<void(std::size_t)>& fn);

int cmd_train(const RunConfig& cfg, std::ostream& out);
int cmd_eval(const RunConfig& cfg, std::ostream& out);
int cmd_attack_sweep(const RunConfig& cfg, std::ostream& out);
int cmd_bounds(const RunConfig& cfg, std::ostream& out);
int cmd_compare_baseline(const RunConfig& cfg, std::ostream& out);
int cmd_gradcheck(const RunConfig& cfg, std::ostream& out);

/// Parses argv, dispatches, and maps errors to exit codes.
int cli_main(int argc, char** argv, std::ostream& out, std::ostream& err);

}  // namespace unfold
