#pragma once

#include <Eigen/Dense>

#include "unfold/errors.hpp"

namespace unfold {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

enum class Normalization { scale_inv_sqrt_m, row_orthonormal, none };

const char* to_string(Normalization n);
Normalization normalization_from_string(const std::string& s);

/// CS forward model y = Ax + e.
struct MeasurementSetup {
    Matrix A;
    double eta = 0.0;
    double noise_std = 0.0;
    Normalization normalization = Normalization::none;

    Index m() const { return A.rows(); }
    Index n() const { return A.cols(); }

    /// Throws InvalidArgument if m >= n or a row-orthonormal A is not.
    void validate() const;
};

struct FrameBounds {
    double alpha = 0.0;  // λ_min(WᵀW)
    double beta = 0.0;   // λ_max(WᵀW)
    bool near_singular = false;
};

/// Extreme eigenvalues of S = WᵀW. Dense symmetric eigensolver for n <= 256,
/// power / inverse iteration above.
FrameBounds frame_bounds(const Matrix& W);

/// Overcomplete sparsifier W (N×n) with its frame bounds.
struct Sparsifier {
    Matrix W;
    FrameBounds bounds;

    static Sparsifier from_matrix(Matrix W);
    Index N() const { return W.rows(); }
    Index n() const { return W.cols(); }
};

struct Hyper {
    double rho = 1.0;
    double lambda = 1e-4;
    int layers = 5;

    double threshold() const { return lambda / rho; }
    void validate() const;
};

/// Componentwise sign(x)·max(0, |x| − τ).
Vector soft_threshold(const Vector& x, double tau);
void soft_threshold_inplace(Eigen::Ref<Matrix> x, double tau);

/// Largest singular value by power iteration on MᵀM. Zero matrix gives 0.
double spectral_norm(const Matrix& M, int iters = 5000, double tol = 1e-12);

/// Quantities shared by every layer for a fixed W:
///   P = (AᵀA + ρWᵀW)⁻¹ (held as an LDLᵀ factorization plus its dense form),
///   M = ρ W P Wᵀ, Θ = [I − M | M], Q = W P Aᵀ, R = P Aᵀ, Λ = [−ρPWᵀ | ρPWᵀ].
class PrecomputedLayer {
public:
    static PrecomputedLayer build(const MeasurementSetup& setup, const Matrix& W, const Hyper& hyper);

    Index n() const { return W_.cols(); }
    Index N() const { return W_.rows(); }
    Index m() const { return A_.rows(); }
    double rho() const { return rho_; }
    double tau() const { return tau_; }

    const Matrix& A() const { return A_; }
    const Matrix& W() const { return W_; }
    /// Dense resolvent, symmetric.
    const Matrix& P() const { return P_; }
    const Matrix& M() const { return M_; }
    const Matrix& Q() const { return Q_; }
    const Matrix& R() const { return R_; }
    /// ρ P Wᵀ (n×N); Λ = [−ρPWᵀ | ρPWᵀ].
    const Matrix& rho_PWt() const { return rho_PWt_; }

    Matrix theta() const;
    Matrix lambda_map() const;

    /// P·rhs through the factorization.
    Matrix solve(const Matrix& rhs) const;
    double smallest_pivot() const { return smallest_pivot_; }

private:
    Matrix A_, W_;
    double rho_ = 1.0;
    double tau_ = 0.0;
    Eigen::LDLT<Matrix> ldlt_;
    Matrix P_, M_, Q_, R_, rho_PWt_;
    double smallest_pivot_ = 0.0;
};

/// Column-by-column product out = op(A)·B. Every column of the result is
/// computed by the same matrix-vector kernel regardless of how many columns
/// B has, so batched and single-column evaluation agree bit for bit.
void colwise_product(const Matrix& A, const Matrix& B, Matrix& out, bool transpose_a = false);

}  // namespace unfold
