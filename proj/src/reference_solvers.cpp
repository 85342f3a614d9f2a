#include "unfold/reference_solvers.hpp"

namespace unfold {

AdmmState AdmmState::zeros(Index n, Index N) {
    AdmmState s;
    s.x = Vector::Zero(n);
    s.z = Vector::Zero(N);
    s.v = Vector::Zero(N);
    return s;
}

Vector AdmmState::u() const {
    Vector out(v.size() + z.size());
    out << v, z;
    return out;
}

double lasso_objective(const Vector& x, const Vector& z, const Vector& y, const MeasurementSetup& setup,
                       const Hyper& hyper) {
    return 0.5 * (setup.A * x - y).squaredNorm() + hyper.lambda * z.lpNorm<1>();
}

AdmmState admm_iterate(const AdmmState& state, const PrecomputedLayer& pre, const Vector& y, const Hyper& hyper) {
    if (y.size() != pre.m() || state.z.size() != pre.N() || state.v.size() != pre.N()) {
        throw ShapeError("admm_iterate: state or observation has inconsistent dimensions");
    }
    const Matrix& A = pre.A();
    const Matrix& W = pre.W();
    AdmmState next;
    Vector rhs = A.transpose() * y + hyper.rho * (W.transpose() * (state.z - state.v));
    next.x = pre.solve(rhs);
    const Vector Wx_v = W * next.x + state.v;
    next.z = soft_threshold(Wx_v, hyper.lambda / hyper.rho);
    next.v = Wx_v - next.z;
    next.objective = 0.5 * (A * next.x - y).squaredNorm() + hyper.lambda * next.z.lpNorm<1>();
    return next;
}

std::vector<Vector> admm_u_trajectory(const Vector& y, const PrecomputedLayer& pre, const Hyper& hyper, int K) {
    if (K < 1) throw InvalidArgument("trajectory length must be at least 1");
    if (y.size() != pre.m()) throw ShapeError("admm_u_trajectory: observation has wrong dimension");
    const Index N = pre.N();
    const Matrix Theta = pre.theta();
    const Vector b = pre.Q() * y;
    const double tau = hyper.lambda / hyper.rho;

    std::vector<Vector> out;
    out.reserve(static_cast<std::size_t>(K));
    Vector u = Vector::Zero(2 * N);
    for (int k = 0; k < K; ++k) {
        const Vector a = Theta * u + b;
        const Vector s = soft_threshold(a, tau);
        // I' = [I; 0], I'' = [−I; I]
        Vector next(2 * N);
        next.head(N) = a - s;
        next.tail(N) = s;
        u = next;
        out.push_back(u);
    }
    return out;
}

}  // namespace unfold
