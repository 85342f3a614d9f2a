#pragma once

#include <optional>
#include <vector>

#include "unfold/core_model.hpp"

namespace unfold {

enum class ModelKind { admm_dad, ista_baseline };

const char* to_string(ModelKind k);
ModelKind model_kind_from_string(const std::string& s);

struct NetworkConfig {
    MeasurementSetup setup;
    Hyper hyper;
    /// N×n sparsifier (ADMM-DAD) or n×n orthogonal transform (baseline).
    Matrix W;
    ModelKind kind = ModelKind::admm_dad;
    /// Baseline only: learnable threshold θ > 0 and gradient step τ_step.
    double ista_theta = 0.0;
    double ista_step = 0.0;

    void validate() const;
};

/// Baseline step defaults to 1/‖AᵀA‖ and threshold to λ·τ_step.
NetworkConfig make_ista_baseline(const MeasurementSetup& setup, const Hyper& hyper, Matrix W);

/// Dense pieces of the ISTA baseline z ↦ S_θ(G z + B y), x̂ = Wᵀz.
struct IstaPrecomputed {
    Matrix W;
    Matrix A;
    Matrix AtA;
    Matrix G;     // I − τ W AᵀA Wᵀ
    Matrix Bmap;  // τ W Aᵀ
    double step = 0.0;
    double theta = 0.0;

    static IstaPrecomputed build(const NetworkConfig& cfg);
};

/// One ADMM-DAD layer on a batch: I'(Θu + b) + I''S_{λ/ρ}(Θu + b), columnwise.
Matrix layer_forward(const Matrix& U, const PrecomputedLayer& pre, const Matrix& B);

/// f^L∘…∘f¹(y) per column, 2N×s.
Matrix intermediate_decode(const Matrix& Y, const PrecomputedLayer& pre, int L);
Matrix intermediate_decode(const Matrix& Y, const NetworkConfig& cfg, int L);

/// T_W(f^L(y)) = Λ_W u^L + P Aᵀ y per column, n×s.
Matrix final_decode(const Matrix& Y, const PrecomputedLayer& pre, int L);
Matrix final_decode(const Matrix& Y, const NetworkConfig& cfg, int L);

/// Weight-tied ISTA unfolding with an orthogonal sparsifier; L = 0 gives 0.
Matrix ista_baseline_forward(const Matrix& Y, const IstaPrecomputed& pre, int L);
Matrix ista_baseline_forward(const Matrix& Y, const NetworkConfig& cfg, int L);

/// A network of either kind with its per-W precomputation cached.
class Network {
public:
    explicit Network(NetworkConfig cfg);

    const NetworkConfig& config() const { return cfg_; }
    ModelKind kind() const { return cfg_.kind; }
    int layers() const { return cfg_.hyper.layers; }
    Index n() const { return cfg_.setup.n(); }
    Index m() const { return cfg_.setup.m(); }

    /// Replaces W (and θ for the baseline) and refreshes the cache.
    void set_parameters(Matrix W, double theta = 0.0);

    Matrix decode(const Matrix& Y) const;

    const PrecomputedLayer& admm() const;
    const IstaPrecomputed& ista() const;

private:
    void refresh();

    NetworkConfig cfg_;
    std::optional<PrecomputedLayer> admm_;
    std::optional<IstaPrecomputed> ista_;
};

/// Mean over columns of ‖x̂_i − x_i‖².
double mean_squared_error(const Matrix& Xhat, const Matrix& X);

namespace detail {

/// Forward pass of ADMM-DAD recording a^k and u^k when the vectors are given.
Matrix admm_forward(const Matrix& Y, const PrecomputedLayer& pre, int L, std::vector<Matrix>* pre_activations,
                    std::vector<Matrix>* outputs);

/// Forward pass of the baseline recording r^k and z^k when requested.
Matrix ista_forward(const Matrix& Y, const IstaPrecomputed& pre, int L, std::vector<Matrix>* pre_activations,
                    std::vector<Matrix>* outputs);

}  // namespace detail

}  // namespace unfold
