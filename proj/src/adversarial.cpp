#include "unfold/adversarial.hpp"

#include <cmath>

namespace unfold {

void AttackSpec::validate() const {
    if (!(epsilon >= 0.0) || !std::isfinite(epsilon)) throw InvalidArgument("attack level must be finite and >= 0");
    if (!(kappa_floor > 0.0)) throw InvalidArgument("kappa_floor must be positive");
}

Matrix fgsm_from_gradient(const Matrix& G, const AttackSpec& spec) {
    spec.validate();
    Matrix D = Matrix::Zero(G.rows(), G.cols());
    if (spec.epsilon == 0.0) return D;
    for (Index i = 0; i < G.cols(); ++i) {
        const double norm = G.col(i).norm();
        if (!(norm >= spec.kappa_floor) || !std::isfinite(norm)) continue;
        D.col(i) = G.col(i) / norm;
        // One rescale so that the stored column has norm ε to rounding.
        D.col(i) *= spec.epsilon / D.col(i).norm();
    }
    return D;
}

Matrix fgsm_l2(const Network& net, const Matrix& Y, const Matrix& X, const AttackSpec& spec) {
    spec.validate();
    if (spec.epsilon == 0.0) return Matrix::Zero(Y.rows(), Y.cols());
    return fgsm_from_gradient(grad_input(Y, X, net), spec);
}

double adversarial_loss(const Network& net, const Matrix& Y, const Matrix& X, const AttackSpec& spec) {
    const Matrix D = fgsm_l2(net, Y, X, spec);
    return mean_squared_error(net.decode(Y + D), X);
}

Vector input_gradient_norms(const Network& net, const Matrix& Y, const Matrix& X) {
    return grad_input(Y, X, net).colwise().norm().transpose();
}

}  // namespace unfold
