#pragma once

#include "unfold/gradients.hpp"

namespace unfold {

enum class AttackFallback { zero_delta };

struct AttackSpec {
    double epsilon = 0.0;     // l2 budget per column
    double kappa_floor = 1e-12;
    AttackFallback fallback = AttackFallback::zero_delta;

    void validate() const;
};

/// Per-column l2 FGSM: δ_i = ε g_i/‖g_i‖ with g_i = ∇_y‖h(y_i) − x_i‖²,
/// δ_i = 0 when ‖g_i‖ < kappa_floor.
Matrix fgsm_l2(const Network& net, const Matrix& Y, const Matrix& X, const AttackSpec& spec);

/// Same, from a precomputed input gradient (m×s).
Matrix fgsm_from_gradient(const Matrix& G, const AttackSpec& spec);

/// (1/s) Σ ‖h(y_i + δ_i) − x_i‖² with δ from fgsm_l2.
double adversarial_loss(const Network& net, const Matrix& Y, const Matrix& X, const AttackSpec& spec);

/// Column-wise gradient norms of the final-decoder loss; used to estimate κ.
Vector input_gradient_norms(const Network& net, const Matrix& Y, const Matrix& X);

}  // namespace unfold
