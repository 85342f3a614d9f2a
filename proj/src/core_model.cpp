#include "unfold/core_model.hpp"

#include <cmath>
#include <sstream>

namespace unfold {

const char* to_string(Normalization n) {
    switch (n) {
        case Normalization::scale_inv_sqrt_m: return "scale_inv_sqrt_m";
        case Normalization::row_orthonormal: return "row_orthonormal";
        case Normalization::none: return "none";
    }
    return "none";
}

Normalization normalization_from_string(const std::string& s) {
    if (s == "scale_inv_sqrt_m") return Normalization::scale_inv_sqrt_m;
    if (s == "row_orthonormal") return Normalization::row_orthonormal;
    if (s == "none") return Normalization::none;
    throw InvalidArgument("unknown normalization '" + s + "'");
}

void MeasurementSetup::validate() const {
    if (m() >= n()) {
        throw InvalidArgument("measurement matrix must be compressive (m < n), got m=" +
                              std::to_string(m()) + ", n=" + std::to_string(n()));
    }
    if (eta < 0.0 || noise_std < 0.0) throw InvalidArgument("noise parameters must be non-negative");
    if (normalization == Normalization::row_orthonormal) {
        const double dev = (A * A.transpose() - Matrix::Identity(m(), m())).norm();
        if (dev > 1e-8) {
            throw InvalidArgument("row_orthonormal A has ||AA^T - I||_F = " + std::to_string(dev));
        }
    }
}

void Hyper::validate() const {
    if (!(rho > 0.0)) throw InvalidArgument("rho must be positive");
    if (!(lambda > 0.0)) throw InvalidArgument("lambda must be positive");
    if (layers < 1) throw InvalidArgument("layer count must be at least 1");
}

Vector soft_threshold(const Vector& x, double tau) {
    Vector out = x;
    soft_threshold_inplace(out, tau);
    return out;
}

void soft_threshold_inplace(Eigen::Ref<Matrix> x, double tau) {
    if (tau < 0.0) throw InvalidArgument("soft threshold requires tau >= 0");
    x = x.unaryExpr([tau](double v) { return v > tau ? v - tau : (v < -tau ? v + tau : 0.0); });
}

namespace {

Vector start_vector(Index k) {
    Vector v(k);
    for (Index i = 0; i < k; ++i) v(i) = 1.0 + 0.5 * std::sin(1.7 * static_cast<double>(i) + 0.3);
    return v.normalized();
}

// Largest eigenvalue of a symmetric PSD operator given as a callable.
template <class Apply>
double power_iteration(Apply&& apply, Index dim, int iters, double tol) {
    Vector v = start_vector(dim);
    double lambda = 0.0;
    for (int it = 0; it < iters; ++it) {
        Vector w = apply(v);
        const double next = v.dot(w);
        const double wn = w.norm();
        if (wn == 0.0) return 0.0;
        v = w / wn;
        if (it > 2 && std::abs(next - lambda) <= tol * std::abs(next)) {
            lambda = next;
            break;
        }
        lambda = next;
    }
    return lambda;
}

}  // namespace

double spectral_norm(const Matrix& M, int iters, double tol) {
    if (M.size() == 0) throw InvalidArgument("spectral_norm of an empty matrix");
    if (M.isZero(0.0)) return 0.0;
    // iterate on the smaller Gram matrix; eigenvalue tolerance is twice the
    // singular value tolerance
    double lam = 0.0;
    const double t = 0.1 * tol;
    if (M.cols() <= M.rows()) {
        lam = power_iteration([&](const Vector& v) -> Vector { return M.transpose() * (M * v); },
                              M.cols(), iters, t);
    } else {
        lam = power_iteration([&](const Vector& v) -> Vector { return M * (M.transpose() * v); },
                              M.rows(), iters, t);
    }
    return std::sqrt(std::max(lam, 0.0));
}

FrameBounds frame_bounds(const Matrix& W) {
    if (W.rows() < W.cols()) {
        throw InvalidArgument("sparsifier must be overcomplete (N >= n)");
    }
    const Matrix S = W.transpose() * W;
    FrameBounds fb;
    if (S.rows() <= 256) {
        Eigen::SelfAdjointEigenSolver<Matrix> es(S, Eigen::EigenvaluesOnly);
        fb.alpha = es.eigenvalues()(0);
        fb.beta = es.eigenvalues()(S.rows() - 1);
    } else {
        fb.beta = power_iteration([&](const Vector& v) -> Vector { return S * v; }, S.rows(), 20000, 1e-13);
        Eigen::LDLT<Matrix> ldlt(S);
        const double dmin = ldlt.vectorD().minCoeff();
        if (ldlt.info() != Eigen::Success || dmin <= 1e-14 * fb.beta) {
            fb.alpha = std::max(dmin, 0.0);
        } else {
            const double inv = power_iteration([&](const Vector& v) -> Vector { return ldlt.solve(v); },
                                               S.rows(), 20000, 1e-13);
            fb.alpha = inv > 0.0 ? 1.0 / inv : 0.0;
        }
    }
    fb.near_singular = fb.alpha <= 1e-12;
    return fb;
}

Sparsifier Sparsifier::from_matrix(Matrix W) {
    Sparsifier s;
    s.bounds = frame_bounds(W);
    s.W = std::move(W);
    return s;
}

PrecomputedLayer PrecomputedLayer::build(const MeasurementSetup& setup, const Matrix& W, const Hyper& hyper) {
    if (W.cols() != setup.n()) {
        throw ShapeError("sparsifier has " + std::to_string(W.cols()) + " columns, signal dim is " +
                         std::to_string(setup.n()));
    }
    if (!(hyper.rho > 0.0)) throw InvalidArgument("rho must be positive");
    if (hyper.lambda < 0.0) throw InvalidArgument("lambda must be non-negative");

    PrecomputedLayer pre;
    pre.A_ = setup.A;
    pre.W_ = W;
    pre.rho_ = hyper.rho;
    pre.tau_ = hyper.lambda / hyper.rho;

    const Index n = W.cols();
    Matrix K = setup.A.transpose() * setup.A;
    K.noalias() += hyper.rho * (W.transpose() * W);
    pre.ldlt_.compute(K);
    const auto& d = pre.ldlt_.vectorD();
    pre.smallest_pivot_ = d.minCoeff();
    const double largest = d.cwiseAbs().maxCoeff();
    if (pre.ldlt_.info() != Eigen::Success || !(pre.smallest_pivot_ > 1e-12 * std::max(largest, 1e-300))) {
        std::ostringstream os;
        os << "A^T A + rho W^T W is not positive definite: smallest pivot " << pre.smallest_pivot_;
        throw SingularSystem(os.str(), pre.smallest_pivot_);
    }

    pre.P_ = pre.ldlt_.solve(Matrix::Identity(n, n));
    pre.P_ = 0.5 * (pre.P_ + pre.P_.transpose()).eval();
    const Matrix PWt = pre.P_ * W.transpose();
    pre.rho_PWt_ = hyper.rho * PWt;
    pre.M_ = W * pre.rho_PWt_;
    pre.M_ = 0.5 * (pre.M_ + pre.M_.transpose()).eval();
    pre.R_ = pre.P_ * setup.A.transpose();
    pre.Q_ = W * pre.R_;
    return pre;
}

Matrix PrecomputedLayer::theta() const {
    const Index N = M_.rows();
    Matrix T(N, 2 * N);
    T.leftCols(N) = Matrix::Identity(N, N) - M_;
    T.rightCols(N) = M_;
    return T;
}

Matrix PrecomputedLayer::lambda_map() const {
    const Index N = M_.rows();
    Matrix L(rho_PWt_.rows(), 2 * N);
    L.leftCols(N) = -rho_PWt_;
    L.rightCols(N) = rho_PWt_;
    return L;
}

Matrix PrecomputedLayer::solve(const Matrix& rhs) const { return ldlt_.solve(rhs); }

void colwise_product(const Matrix& A, const Matrix& B, Matrix& out, bool transpose_a) {
    const Index rows = transpose_a ? A.cols() : A.rows();
    const Index inner = transpose_a ? A.rows() : A.cols();
    if (inner != B.rows()) throw ShapeError("colwise_product: inner dimensions differ");
    out.resize(rows, B.cols());
    if (transpose_a) {
        for (Index j = 0; j < B.cols(); ++j) out.col(j).noalias() = A.transpose() * B.col(j);
    } else {
        for (Index j = 0; j < B.cols(); ++j) out.col(j).noalias() = A * B.col(j);
    }
}

}  // namespace unfold
