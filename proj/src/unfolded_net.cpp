#include "unfold/unfolded_net.hpp"

#include <cmath>

namespace unfold {

const char* to_string(ModelKind k) { return k == ModelKind::admm_dad ? "admm_dad" : "ista_baseline"; }

ModelKind model_kind_from_string(const std::string& s) {
    if (s == "admm_dad") return ModelKind::admm_dad;
    if (s == "ista_baseline") return ModelKind::ista_baseline;
    throw InvalidArgument("unknown model kind '" + s + "'");
}

namespace {

double ata_norm(const Matrix& A) {
    if (A.size() == 0 || A.isZero(0.0)) return 0.0;
    const double s = spectral_norm(A);
    return s * s;
}

void check_ista_step(double step, const Matrix& A) {
    const double lip = ata_norm(A);
    if (!(step > 0.0) || (lip > 0.0 && step > (1.0 + 1e-9) / lip)) {
        throw InvalidArgument("ISTA step " + std::to_string(step) + " outside (0, 1/||A^T A||] with ||A^T A|| = " +
                              std::to_string(lip));
    }
}

}  // namespace

void NetworkConfig::validate() const {
    hyper.validate();
    if (W.cols() != setup.n()) throw ShapeError("W has the wrong number of columns");
    if (kind == ModelKind::admm_dad) {
        if (W.rows() < W.cols()) throw InvalidArgument("ADMM-DAD needs an overcomplete sparsifier (N >= n)");
    } else {
        if (W.rows() != W.cols()) throw InvalidArgument("baseline sparsifier must be square");
        const double dev = (W.transpose() * W - Matrix::Identity(W.cols(), W.cols())).norm();
        if (dev > 1e-6) throw InvalidArgument("baseline sparsifier is not orthogonal: ||W^T W - I||_F = " +
                                              std::to_string(dev));
        if (!(ista_theta > 0.0)) throw InvalidArgument("baseline threshold must be positive");
        check_ista_step(ista_step, setup.A);
    }
}

NetworkConfig make_ista_baseline(const MeasurementSetup& setup, const Hyper& hyper, Matrix W) {
    if (W.rows() != W.cols() || W.cols() != setup.n()) throw ShapeError("baseline sparsifier must be n x n");
    NetworkConfig cfg;
    cfg.setup = setup;
    cfg.hyper = hyper;
    cfg.W = std::move(W);
    cfg.kind = ModelKind::ista_baseline;
    const double lip = ata_norm(setup.A);
    cfg.ista_step = lip > 0.0 ? 1.0 / lip : 1.0;
    cfg.ista_theta = hyper.lambda * cfg.ista_step;
    return cfg;
}

IstaPrecomputed IstaPrecomputed::build(const NetworkConfig& cfg) {
    if (cfg.W.rows() != cfg.W.cols() || cfg.W.cols() != cfg.setup.n()) {
        throw ShapeError("baseline sparsifier must be n x n");
    }
    check_ista_step(cfg.ista_step, cfg.setup.A);
    if (!(cfg.ista_theta > 0.0)) throw InvalidArgument("baseline threshold must be positive");
    IstaPrecomputed p;
    p.W = cfg.W;
    p.A = cfg.setup.A;
    p.AtA = p.A.transpose() * p.A;
    p.step = cfg.ista_step;
    p.theta = cfg.ista_theta;
    const Index n = p.W.rows();
    p.G = Matrix::Identity(n, n) - p.step * (p.W * p.AtA * p.W.transpose());
    p.Bmap = p.step * (p.W * p.A.transpose());
    return p;
}

namespace {

Matrix layer_forward_impl(const Matrix& U, const PrecomputedLayer& pre, const Matrix& B, Matrix* pre_activation) {
    const Index N = pre.N();
    if (U.rows() != 2 * N || B.rows() != N || U.cols() != B.cols()) {
        throw InvalidArgument("layer_forward: expected u of dim 2N and b of dim N with matching batch size");
    }
    Matrix E = U.bottomRows(N) - U.topRows(N);
    Matrix t, ME;
    colwise_product(pre.rho_PWt(), E, t);
    colwise_product(pre.W(), t, ME);
    // Θu + b = v + M(z − v) + b
    Matrix a = U.topRows(N) + ME + B;
    Matrix out(2 * N, U.cols());
    out.bottomRows(N) = a;
    soft_threshold_inplace(out.bottomRows(N), pre.tau());
    out.topRows(N) = a - out.bottomRows(N);
    if (pre_activation) *pre_activation = std::move(a);
    return out;
}

}  // namespace

Matrix layer_forward(const Matrix& U, const PrecomputedLayer& pre, const Matrix& B) {
    return layer_forward_impl(U, pre, B, nullptr);
}

namespace detail {

Matrix admm_forward(const Matrix& Y, const PrecomputedLayer& pre, int L, std::vector<Matrix>* pre_activations,
                    std::vector<Matrix>* outputs) {
    if (L < 1) throw InvalidArgument("ADMM-DAD needs at least one layer");
    if (Y.rows() != pre.m()) throw ShapeError("observations have " + std::to_string(Y.rows()) +
                                              " rows, expected m=" + std::to_string(pre.m()));
    const Index N = pre.N();
    const Index s = Y.cols();
    Matrix B;
    colwise_product(pre.Q(), Y, B);

    Matrix U = Matrix::Zero(2 * N, s);
    if (pre_activations) pre_activations->clear();
    if (outputs) outputs->clear();
    for (int k = 0; k < L; ++k) {
        Matrix a;
        U = layer_forward_impl(U, pre, B, pre_activations ? &a : nullptr);
        if (pre_activations) pre_activations->push_back(std::move(a));
        if (outputs) outputs->push_back(U);
    }
    Matrix C = U.bottomRows(N) - U.topRows(N);
    Matrix x1, x2;
    colwise_product(pre.rho_PWt(), C, x1);
    colwise_product(pre.R(), Y, x2);
    return x1 + x2;
}

Matrix ista_forward(const Matrix& Y, const IstaPrecomputed& pre, int L, std::vector<Matrix>* pre_activations,
                    std::vector<Matrix>* outputs) {
    if (L < 0) throw InvalidArgument("layer count must be non-negative");
    if (Y.rows() != pre.A.rows()) throw ShapeError("observations have the wrong dimension");
    const Index n = pre.W.rows();
    Matrix Z = Matrix::Zero(n, Y.cols());
    if (pre_activations) pre_activations->clear();
    if (outputs) outputs->clear();
    if (L == 0) return Matrix::Zero(n, Y.cols());
    Matrix By;
    colwise_product(pre.Bmap, Y, By);
    for (int k = 0; k < L; ++k) {
        Matrix GZ;
        colwise_product(pre.G, Z, GZ);
        Matrix r = GZ + By;
        if (pre_activations) pre_activations->push_back(r);
        soft_threshold_inplace(r, pre.theta);
        Z = std::move(r);
        if (outputs) outputs->push_back(Z);
    }
    Matrix X;
    colwise_product(pre.W, Z, X, /*transpose_a=*/true);
    return X;
}

}  // namespace detail

Matrix intermediate_decode(const Matrix& Y, const PrecomputedLayer& pre, int L) {
    if (L < 1) throw InvalidArgument("intermediate decoder needs at least one layer");
    if (Y.rows() != pre.m()) throw ShapeError("observations have the wrong dimension");
    Matrix B;
    colwise_product(pre.Q(), Y, B);
    Matrix U = Matrix::Zero(2 * pre.N(), Y.cols());
    for (int k = 0; k < L; ++k) U = layer_forward(U, pre, B);
    return U;
}

Matrix intermediate_decode(const Matrix& Y, const NetworkConfig& cfg, int L) {
    return intermediate_decode(Y, PrecomputedLayer::build(cfg.setup, cfg.W, cfg.hyper), L);
}

Matrix final_decode(const Matrix& Y, const PrecomputedLayer& pre, int L) {
    return detail::admm_forward(Y, pre, L, nullptr, nullptr);
}

Matrix final_decode(const Matrix& Y, const NetworkConfig& cfg, int L) {
    return final_decode(Y, PrecomputedLayer::build(cfg.setup, cfg.W, cfg.hyper), L);
}

Matrix ista_baseline_forward(const Matrix& Y, const IstaPrecomputed& pre, int L) {
    return detail::ista_forward(Y, pre, L, nullptr, nullptr);
}

Matrix ista_baseline_forward(const Matrix& Y, const NetworkConfig& cfg, int L) {
    if (cfg.kind != ModelKind::ista_baseline) throw InvalidArgument("config is not an ISTA baseline");
    return ista_baseline_forward(Y, IstaPrecomputed::build(cfg), L);
}

Network::Network(NetworkConfig cfg) : cfg_(std::move(cfg)) {
    // Shapes only: finite-difference probes legitimately perturb an orthogonal W.
    if (cfg_.W.cols() != cfg_.setup.n()) throw ShapeError("W has the wrong number of columns");
    if (cfg_.kind == ModelKind::admm_dad && cfg_.W.rows() < cfg_.W.cols())
        throw InvalidArgument("ADMM-DAD needs an overcomplete sparsifier (N >= n)");
    refresh();
}

void Network::set_parameters(Matrix W, double theta) {
    cfg_.W = std::move(W);
    if (cfg_.kind == ModelKind::ista_baseline) cfg_.ista_theta = theta;
    refresh();
}

void Network::refresh() {
    if (cfg_.kind == ModelKind::admm_dad) {
        admm_ = PrecomputedLayer::build(cfg_.setup, cfg_.W, cfg_.hyper);
        ista_.reset();
    } else {
        ista_ = IstaPrecomputed::build(cfg_);
        admm_.reset();
    }
}

Matrix Network::decode(const Matrix& Y) const {
    if (cfg_.kind == ModelKind::admm_dad) return final_decode(Y, *admm_, cfg_.hyper.layers);
    return ista_baseline_forward(Y, *ista_, cfg_.hyper.layers);
}

const PrecomputedLayer& Network::admm() const {
    if (!admm_) throw InvalidArgument("network is not an ADMM-DAD model");
    return *admm_;
}

const IstaPrecomputed& Network::ista() const {
    if (!ista_) throw InvalidArgument("network is not an ISTA baseline");
    return *ista_;
}

double mean_squared_error(const Matrix& Xhat, const Matrix& X) {
    if (Xhat.rows() != X.rows() || Xhat.cols() != X.cols()) throw ShapeError("MSE: shape mismatch");
    if (X.cols() == 0) return 0.0;
    return (Xhat - X).colwise().squaredNorm().sum() / static_cast<double>(X.cols());
}

}  // namespace unfold
