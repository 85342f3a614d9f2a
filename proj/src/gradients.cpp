#include "unfold/gradients.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace unfold {

TapeEntry ForwardTape::entry(Index column, int layer) const {
    if (layer < 1 || layer > layers()) throw InvalidArgument("tape layer index out of range");
    const Matrix& a = pre_activations[static_cast<std::size_t>(layer - 1)];
    if (column < 0 || column >= a.cols()) throw InvalidArgument("tape column index out of range");
    TapeEntry e;
    e.pre_activation = a.col(column);
    e.mask = e.pre_activation.array().abs() > threshold;
    e.output = outputs[static_cast<std::size_t>(layer - 1)].col(column);
    return e;
}

double ForwardTape::kink_margin() const {
    double best = std::numeric_limits<double>::infinity();
    for (const Matrix& a : pre_activations) {
        if (a.size() == 0) continue;
        best = std::min(best, (a.array().abs() - threshold).abs().minCoeff());
    }
    return best;
}

double ForwardTape::kink_margin(Index column) const {
    double best = std::numeric_limits<double>::infinity();
    for (const Matrix& a : pre_activations) {
        if (a.rows() == 0) continue;
        best = std::min(best, (a.col(column).array().abs() - threshold).abs().minCoeff());
    }
    return best;
}

ForwardTape forward_with_tape(const Matrix& Y, const Network& net) {
    ForwardTape tape;
    tape.kind = net.kind();
    if (net.kind() == ModelKind::admm_dad) {
        tape.threshold = net.admm().tau();
        tape.xhat = detail::admm_forward(Y, net.admm(), net.layers(), &tape.pre_activations, &tape.outputs);
    } else {
        tape.threshold = net.ista().theta;
        tape.xhat = detail::ista_forward(Y, net.ista(), net.layers(), &tape.pre_activations, &tape.outputs);
    }
    return tape;
}

namespace {

struct Adjoint {
    Matrix dY;
    Matrix dW;
    double dtheta = 0.0;
};

using Mask = Eigen::Array<double, Eigen::Dynamic, Eigen::Dynamic>;

Mask active(const Matrix& a, double tau) { return (a.array().abs() > tau).cast<double>(); }

// Reverse sweep of ADMM-DAD given Gx = ∂ℓ/∂x̂ (n×s). dW is summed over columns.
Adjoint admm_backward(const ForwardTape& tape, const Matrix& Y, const Matrix& Gx, const PrecomputedLayer& pre,
                      bool want_y, bool want_w) {
    const Matrix& A = pre.A();
    const Matrix& W = pre.W();
    const Matrix& P = pre.P();
    const double rho = pre.rho();
    const Index N = pre.N();
    const int L = tape.layers();

    Adjoint out;
    const Matrix q = P * Gx;
    if (want_y) out.dY = A * q;
    if (want_w) {
        const Matrix& UL = tape.outputs.back();
        const Matrix C = UL.bottomRows(N) - UL.topRows(N);
        out.dW = rho * (C * q.transpose() - (W * tape.xhat) * q.transpose() - (W * q) * tape.xhat.transpose());
    }

    Matrix Gz = rho * (W * q);
    Matrix Gv = -Gz;
    Matrix Bbar = Matrix::Zero(N, Y.cols());
    for (int k = L; k >= 1; --k) {
        const Mask d = active(tape.pre_activations[static_cast<std::size_t>(k - 1)], tape.threshold);
        const Matrix abar = Gv + (d * (Gz - Gv).array()).matrix();
        Bbar += abar;
        if (k == 1) break;  // u⁰ = 0: nothing upstream of the first layer
        const Matrix pa = P * (W.transpose() * abar);
        const Matrix w = rho * (W * pa);
        if (want_w) {
            const Matrix& Uprev = tape.outputs[static_cast<std::size_t>(k - 2)];
            const Matrix E = Uprev.bottomRows(N) - Uprev.topRows(N);
            const Matrix pe = P * (W.transpose() * E);
            out.dW += rho * (abar * pe.transpose() + E * pa.transpose() -
                             rho * ((W * pe) * pa.transpose() + (W * pa) * pe.transpose()));
        }
        Gv = abar - w;
        Gz = w;
    }

    const Matrix pb = P * (W.transpose() * Bbar);
    if (want_y) out.dY += A * pb;
    if (want_w) {
        const Matrix ry = pre.R() * Y;
        out.dW += Bbar * ry.transpose() - rho * ((W * ry) * pb.transpose() + (W * pb) * ry.transpose());
    }
    return out;
}

Adjoint ista_backward(const ForwardTape& tape, const Matrix& Y, const Matrix& Gx, const IstaPrecomputed& pre,
                      bool want_y, bool want_w) {
    const Matrix& W = pre.W;
    const Matrix& A = pre.A;
    const double tau = pre.step;
    const int L = tape.layers();

    Adjoint out;
    out.dY = Matrix::Zero(A.rows(), Y.cols());
    out.dW = Matrix::Zero(W.rows(), W.cols());
    if (L == 0) return out;

    if (want_w) out.dW = tape.outputs.back() * Gx.transpose();
    const Matrix AtY = want_w ? Matrix(A.transpose() * Y) : Matrix();
    Matrix zbar = W * Gx;
    for (int k = L; k >= 1; --k) {
        const Matrix& r = tape.pre_activations[static_cast<std::size_t>(k - 1)];
        const Mask d = active(r, tape.threshold);
        const Matrix rbar = (d * zbar.array()).matrix();
        out.dtheta -= (d * r.array().sign() * zbar.array()).sum();
        const Matrix Wtr = W.transpose() * rbar;
        if (want_y) out.dY += tau * (A * Wtr);
        const Matrix HWtr = pre.AtA * Wtr;
        if (want_w) {
            out.dW += tau * (rbar * AtY.transpose());
            if (k > 1) {
                const Matrix& Z = tape.outputs[static_cast<std::size_t>(k - 2)];
                const Matrix HWtz = pre.AtA * (W.transpose() * Z);
                out.dW -= tau * (rbar * HWtz.transpose() + Z * HWtr.transpose());
            }
        }
        if (k > 1) zbar = rbar - tau * (W * HWtr);
    }
    return out;
}

void check_targets(const ForwardTape& tape, const Matrix& X) {
    if (X.rows() != tape.xhat.rows() || X.cols() != tape.xhat.cols()) {
        throw ShapeError("targets have shape " + std::to_string(X.rows()) + "x" + std::to_string(X.cols()) +
                         ", decoder output is " + std::to_string(tape.xhat.rows()) + "x" +
                         std::to_string(tape.xhat.cols()));
    }
}

Adjoint backward(const ForwardTape& tape, const Matrix& Y, const Matrix& Gx, const Network& net, bool want_y,
                 bool want_w) {
    if (net.kind() == ModelKind::admm_dad) return admm_backward(tape, Y, Gx, net.admm(), want_y, want_w);
    return ista_backward(tape, Y, Gx, net.ista(), want_y, want_w);
}

}  // namespace

Matrix grad_input(const ForwardTape& tape, const Matrix& X, const Network& net) {
    check_targets(tape, X);
    // Y is only needed for the parameter adjoint.
    return backward(tape, Matrix(net.m(), X.cols()), 2.0 * (tape.xhat - X), net, true, false).dY;
}

Matrix grad_input(const Matrix& Y, const Matrix& X, const Network& net) {
    return grad_input(forward_with_tape(Y, net), X, net);
}

ParamGrad grad_param(const ForwardTape& tape, const Matrix& Y, const Matrix& X, const Network& net) {
    check_targets(tape, X);
    if (X.cols() == 0) return {Matrix::Zero(net.config().W.rows(), net.config().W.cols()), 0.0};
    const double scale = 2.0 / static_cast<double>(X.cols());
    Adjoint adj = backward(tape, Y, scale * (tape.xhat - X), net, false, true);
    return {std::move(adj.dW), adj.dtheta};
}

ParamGrad grad_param(const Matrix& Y, const Matrix& X, const Network& net) {
    return grad_param(forward_with_tape(Y, net), Y, X, net);
}

FiniteDiffResult finite_diff_check(const std::function<double(const Vector&)>& f, const Vector& point,
                                   const Vector& analytic, double h,
                                   const std::function<double(const Vector&)>& kink_margin, double band) {
    if (!(h > 0.0)) throw InvalidArgument("finite-difference step must be positive");
    if (analytic.size() != point.size()) throw ShapeError("analytic gradient and point differ in size");
    FiniteDiffResult res;
    if (kink_margin && kink_margin(point) < band) {
        res.excluded = true;
        return res;
    }
    Vector fd(point.size());
    Vector x = point;
    for (Index i = 0; i < point.size(); ++i) {
        const double xi = x[i];
        x[i] = xi + h;
        const double fp = f(x);
        x[i] = xi - h;
        const double fm = f(x);
        x[i] = xi;
        fd[i] = (fp - fm) / (2.0 * h);
    }
    const double scale =
        std::max({analytic.lpNorm<Eigen::Infinity>(), fd.lpNorm<Eigen::Infinity>(), std::numeric_limits<double>::min()});
    for (Index i = 0; i < point.size(); ++i) {
        const double err = std::abs(fd[i] - analytic[i]) / scale;
        if (err > res.max_rel_error || res.worst_coordinate < 0) {
            res.max_rel_error = std::max(res.max_rel_error, err);
            res.worst_coordinate = i;
        }
    }
    res.coordinates_checked = point.size();
    return res;
}

}  // namespace unfold
