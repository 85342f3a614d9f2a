#pragma once

#include <vector>

#include "unfold/core_model.hpp"

namespace unfold {

/// Iterate of the three-variable ADMM for the generalized LASSO
///   min ½‖Ax − y‖² + λ‖z‖₁  s.t.  Wx = z.
struct AdmmState {
    Vector x;
    Vector z;
    Vector v;
    double objective = 0.0;

    static AdmmState zeros(Index n, Index N);
    /// [v; z]
    Vector u() const;
};

/// ½‖Ax − y‖² + λ‖z‖₁.
double lasso_objective(const Vector& x, const Vector& z, const Vector& y, const MeasurementSetup& setup,
                       const Hyper& hyper);

/// One sweep of the x → z → v updates.
AdmmState admm_iterate(const AdmmState& state, const PrecomputedLayer& pre, const Vector& y, const Hyper& hyper);

/// u¹..u^K of u^{k+1} = I'(Θu^k + b) + I''S_{λ/ρ}(Θu^k + b), u⁰ = 0, b = Qy.
/// Uses the explicit Θ and Q matrices.
std::vector<Vector> admm_u_trajectory(const Vector& y, const PrecomputedLayer& pre, const Hyper& hyper, int K);

}  // namespace unfold
