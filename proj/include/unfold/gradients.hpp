#pragma once

#include <functional>
#include <vector>

#include "unfold/unfolded_net.hpp"

namespace unfold {

/// Per-column, per-layer record of the forward pass.
struct TapeEntry {
    Vector pre_activation;                  // a^k = Θu^{k−1} + b
    Eigen::Array<bool, Eigen::Dynamic, 1> mask;  // 1 iff |a^k_i| > threshold
    Vector output;                          // u^k
};

/// Forward pass record for a batch, stored layer-major.
struct ForwardTape {
    ModelKind kind = ModelKind::admm_dad;
    double threshold = 0.0;
    Matrix xhat;
    std::vector<Matrix> pre_activations;  // one N×s (baseline: n×s) matrix per layer
    std::vector<Matrix> outputs;          // u^k (baseline: z^k)

    int layers() const { return static_cast<int>(pre_activations.size()); }
    TapeEntry entry(Index column, int layer) const;
    /// min over all layers, units and columns of ||a| − threshold|.
    double kink_margin() const;
    /// Same, restricted to one column.
    double kink_margin(Index column) const;
};

ForwardTape forward_with_tape(const Matrix& Y, const Network& net);

/// ∇_W of the batch mean of ‖h(y_i) − x_i‖² (plus ∂/∂θ for the baseline).
struct ParamGrad {
    Matrix dW;
    double dtheta = 0.0;
};

/// Per-column ∇_y ‖h(y_i) − x_i‖², m×s.
Matrix grad_input(const Matrix& Y, const Matrix& X, const Network& net);
Matrix grad_input(const ForwardTape& tape, const Matrix& X, const Network& net);

ParamGrad grad_param(const Matrix& Y, const Matrix& X, const Network& net);
ParamGrad grad_param(const ForwardTape& tape, const Matrix& Y, const Matrix& X, const Network& net);

struct FiniteDiffResult {
    double max_rel_error = 0.0;
    Index worst_coordinate = -1;
    bool excluded = false;  // point sits on a nondifferentiable kink
    Index coordinates_checked = 0;
};

/// Central differences of a scalar map compared coordinatewise with an
/// analytic gradient. The relative error of coordinate i is
/// |fd_i − g_i| / max(‖g‖_∞, floor). When kink_margin is given and reports a
/// distance below `band` at `point`, the check is skipped and flagged.
FiniteDiffResult finite_diff_check(const std::function<double(const Vector&)>& f, const Vector& point,
                                   const Vector& analytic, double h,
                                   const std::function<double(const Vector&)>& kink_margin = {},
                                   double band = 1e-7);

}  // namespace unfold
