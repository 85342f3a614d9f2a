#include <doctest.h>

#include <random>

#include "oracles.hpp"
#include "unfold/reference_solvers.hpp"
#include "unfold/theory_bounds.hpp"
#include "unfold/training.hpp"
#include "unfold/unfolded_net.hpp"

using namespace unfold;

namespace {

MeasurementSetup setup_from(Matrix A) {
    MeasurementSetup s;
    s.A = std::move(A);
    return s;
}

NetworkConfig random_config(std::mt19937_64& rng, Index m, Index n, Index N, double lambda, int L) {
    NetworkConfig c;
    c.setup = setup_from(oracle::gaussian(m, n, rng) / std::sqrt(static_cast<double>(m)));
    c.W = oracle::frame_with_singular_values(N, n, 0.7, 1.5, rng);
    c.hyper.lambda = lambda;
    c.hyper.layers = L;
    return c;
}

}  // namespace

TEST_CASE("layer forward") {
    std::mt19937_64 rng(1);
    const auto cfg = random_config(rng, 4, 16, 32, 0.05, 3);
    const auto pre = PrecomputedLayer::build(cfg.setup, cfg.W, cfg.hyper);
    const Matrix Y = oracle::gaussian(4, 3, rng);
    const Matrix B = pre.Q() * Y;

    const Matrix u1 = layer_forward(Matrix::Zero(64, 3), pre, B);
    for (Index j = 0; j < 3; ++j) {
        const Vector s = soft_threshold(B.col(j), pre.tau());
        CHECK(u1.col(j).head(32) == B.col(j) - s);
        CHECK(u1.col(j).tail(32) == s);
    }
    CHECK(layer_forward(Matrix::Zero(64, 2), pre, Matrix::Zero(32, 2)).norm() == 0.0);

    const Matrix U = oracle::gaussian(64, 3, rng);
    const Matrix next = layer_forward(U, pre, B);
    const Matrix Th = pre.theta();
    for (Index j = 0; j < 3; ++j) {
        const Vector a = Th * U.col(j) + B.col(j);
        const Vector s = soft_threshold(a, pre.tau());
        CHECK((next.col(j).head(32) - (a - s)).lpNorm<Eigen::Infinity>() <= 1e-12);
        CHECK((next.col(j).tail(32) - s).lpNorm<Eigen::Infinity>() <= 1e-12);
    }
    CHECK_THROWS_AS(layer_forward(Matrix::Zero(63, 3), pre, B), InvalidArgument);
}

TEST_CASE("intermediate decoder equals the ADMM recursion") {
    std::mt19937_64 rng(2);
    for (int t = 0; t < 100; ++t) {
        const auto cfg = random_config(rng, 4, 16, 32, 0.03, 10);
        const auto pre = PrecomputedLayer::build(cfg.setup, cfg.W, cfg.hyper);
        const Vector y = oracle::gaussian(4, 1, rng).col(0);
        const auto traj = admm_u_trajectory(y, pre, cfg.hyper, 10);
        for (int L : {1, 4, 10}) {
            const Matrix u = intermediate_decode(y, pre, L);
            CHECK((u.col(0) - traj[L - 1]).lpNorm<Eigen::Infinity>() <= 1e-12);
        }
    }
}

TEST_CASE("batched decoding is bit-identical to per-column decoding") {
    std::mt19937_64 rng(3);
    const auto cfg = random_config(rng, 4, 16, 32, 0.05, 5);
    const Matrix Y = oracle::gaussian(4, 7, rng);
    const Matrix U = intermediate_decode(Y, cfg, 5);
    const Matrix X = final_decode(Y, cfg, 5);
    for (Index j = 0; j < Y.cols(); ++j) {
        CHECK(intermediate_decode(Y.col(j), cfg, 5).col(0) == U.col(j));
        CHECK(final_decode(Y.col(j), cfg, 5).col(0) == X.col(j));
    }
    CHECK(intermediate_decode(Matrix::Zero(4, 2), cfg, 5).norm() == 0.0);
    CHECK(final_decode(Matrix::Zero(4, 2), cfg, 5).norm() == 0.0);
    CHECK_THROWS_AS(final_decode(Matrix::Zero(5, 2), cfg, 5), ShapeError);
    CHECK_THROWS_AS(final_decode(Y, cfg, 0), InvalidArgument);
}

TEST_CASE("final decoder is the output map of the last layer") {
    std::mt19937_64 rng(4);
    const auto cfg = random_config(rng, 4, 12, 24, 0.05, 3);
    const auto pre = PrecomputedLayer::build(cfg.setup, cfg.W, cfg.hyper);
    const Matrix Y = oracle::gaussian(4, 5, rng);
    const Matrix U = intermediate_decode(Y, pre, 3);
    const Matrix ref = pre.lambda_map() * U + pre.R() * Y;
    CHECK((final_decode(Y, pre, 3) - ref).lpNorm<Eigen::Infinity>() <= 1e-12);

    // The decoder output is the x-update of the next ADMM iteration.
    const Vector y = Y.col(0);
    AdmmState st = AdmmState::zeros(12, 24);
    for (int k = 0; k < 4; ++k) st = admm_iterate(st, pre, y, cfg.hyper);
    CHECK((final_decode(y, pre, 3).col(0) - st.x).lpNorm<Eigen::Infinity>() <= 1e-12);
}

TEST_CASE("affine decoder at lambda = 0 and one layer") {
    std::mt19937_64 rng(5);
    auto cfg = random_config(rng, 4, 12, 24, 0.0, 1);
    for (double rho : {0.5, 1.0, 3.0}) {
        cfg.hyper.rho = rho;
        const Matrix J = oracle::affine_decoder_jacobian(cfg.setup.A, cfg.W, rho);
        const Matrix Y = oracle::gaussian(4, 6, rng);
        const Matrix X = final_decode(Y, cfg, 1);
        CHECK((X - J * Y).lpNorm<Eigen::Infinity>() <= 1e-11);
    }
}

TEST_CASE("deeper decoders approach the converged solution") {
    std::mt19937_64 rng(6);
    const auto cfg = random_config(rng, 8, 16, 32, 0.05, 40);
    const auto pre = PrecomputedLayer::build(cfg.setup, cfg.W, cfg.hyper);
    const Matrix Y = oracle::gaussian(8, 10, rng);
    Matrix Xstar(16, 10);
    for (Index j = 0; j < 10; ++j) {
        AdmmState st = AdmmState::zeros(16, 32);
        for (int k = 0; k < 5000; ++k) st = admm_iterate(st, pre, Y.col(j), cfg.hyper);
        Xstar.col(j) = st.x;
    }
    double prev = std::numeric_limits<double>::infinity();
    for (int L : {5, 10, 20, 40}) {
        const double e = mean_squared_error(final_decode(Y, pre, L), Xstar);
        CHECK(e < prev);
        prev = e;
    }
}

TEST_CASE("ISTA baseline") {
    std::mt19937_64 rng(7);
    const Index m = 6, n = 16;
    const auto setup = setup_from(oracle::gaussian(m, n, rng) / std::sqrt(6.0));
    Hyper h;
    h.lambda = 0.05;
    h.layers = 3000;
    const NetworkConfig cfg = make_ista_baseline(setup, h, Matrix::Identity(n, n));
    const double lip = spectral_norm(setup.A.transpose() * setup.A);
    CHECK(cfg.ista_step == doctest::Approx(1.0 / lip).epsilon(1e-9));
    CHECK(cfg.ista_theta == doctest::Approx(h.lambda * cfg.ista_step).epsilon(1e-12));

    CHECK(ista_baseline_forward(Matrix::Zero(m, 3), cfg, 20).norm() == 0.0);
    const Matrix Y = oracle::gaussian(m, 4, rng);
    CHECK(ista_baseline_forward(Y, cfg, 0).norm() == 0.0);

    const Matrix X = ista_baseline_forward(Y, cfg, 3000);
    for (Index j = 0; j < 4; ++j) {
        const Vector xo = oracle::fista_lasso(setup.A, Y.col(j), h.lambda, 20000);
        const double fo = 0.5 * (setup.A * xo - Y.col(j)).squaredNorm() + h.lambda * xo.lpNorm<1>();
        const Vector x = X.col(j);
        const double f = 0.5 * (setup.A * x - Y.col(j)).squaredNorm() + h.lambda * x.lpNorm<1>();
        CHECK(std::abs(f - fo) <= 1e-4);
    }

    NetworkConfig bad = cfg;
    bad.ista_step = 2.5 / lip;
    CHECK_THROWS_AS(bad.validate(), InvalidArgument);
    NetworkConfig notorth = cfg;
    notorth.W(0, 1) = 0.3;
    CHECK_THROWS_AS(notorth.validate(), InvalidArgument);
    CHECK_THROWS_AS(make_ista_baseline(setup, h, Matrix::Identity(n + 1, n)), ShapeError);
}

TEST_CASE("Network dispatch and parameter refresh") {
    std::mt19937_64 rng(8);
    const auto cfg = random_config(rng, 4, 12, 24, 0.05, 3);
    Network net(cfg);
    const Matrix Y = oracle::gaussian(4, 3, rng);
    CHECK(net.decode(Y) == final_decode(Y, cfg, 3));
    CHECK_THROWS_AS(net.ista(), InvalidArgument);
    const Matrix W2 = oracle::frame_with_singular_values(24, 12, 0.8, 1.2, rng);
    net.set_parameters(W2);
    NetworkConfig c2 = cfg;
    c2.W = W2;
    CHECK(net.decode(Y) == final_decode(Y, c2, 3));

    Hyper h;
    h.layers = 4;
    Network base(make_ista_baseline(cfg.setup, h, Matrix::Identity(12, 12)));
    CHECK(base.kind() == ModelKind::ista_baseline);
    CHECK_THROWS_AS(base.admm(), InvalidArgument);
    base.set_parameters(Matrix::Identity(12, 12), 1e-3);
    CHECK(base.config().ista_theta == 1e-3);
    CHECK(base.decode(Y) == ista_baseline_forward(Y, base.config(), 4));
}

TEST_CASE("mean squared error") {
    Matrix a(2, 2), b(2, 2);
    a << 1, 2, 3, 4;
    b << 1, 0, 0, 4;
    CHECK(mean_squared_error(a, b) == doctest::Approx((4.0 + 9.0) / 2.0));
    CHECK_THROWS_AS(mean_squared_error(a, Matrix::Zero(3, 2)), ShapeError);
    CHECK(model_kind_from_string("ista_baseline") == ModelKind::ista_baseline);
    CHECK(std::string(to_string(ModelKind::admm_dad)) == "admm_dad");
    CHECK_THROWS_AS(model_kind_from_string("lista"), InvalidArgument);
}

TEST_CASE("perturbed intermediate decoder stays within the output bound") {
    std::mt19937_64 rng(9);
    const Index m = 4, n = 10, N = 20, s = 6;
    int checked = 0;
    for (int t = 0; t < 100; ++t) {
        std::uniform_real_distribution<double> uni(0.0, 1.0);
        NetworkConfig cfg;
        cfg.hyper.rho = 1.0;
        cfg.hyper.lambda = 0.01 + 0.2 * uni(rng);
        cfg.W = oracle::frame_with_singular_values(N, n, 1.0, 1.6, rng);
        const auto fb = frame_bounds(cfg.W);
        Matrix A = oracle::gaussian(m, n, rng);
        A *= std::sqrt(0.6 * fb.alpha / spectral_norm(A.transpose() * A));
        cfg.setup = setup_from(A);
        const Matrix Y = oracle::gaussian(m, s, rng);
        const double eps = std::vector<double>{0.0, 0.1, 1.0}[t % 3];
        Matrix D = oracle::gaussian(m, s, rng);
        D *= uni(rng) * std::sqrt(static_cast<double>(s)) * eps / std::max(D.norm(), 1e-300);

        TheoryInputs in;
        in.alpha = fb.alpha;
        in.beta = fb.beta;
        in.rho = 1.0;
        in.normA = spectral_norm(A);
        in.normAtA = spectral_norm(A.transpose() * A);
        in.normYF = Y.norm();
        in.s = static_cast<double>(s);
        in.epsilon = eps;
        const auto pre = PrecomputedLayer::build(cfg.setup, cfg.W, cfg.hyper);
        for (int k = 1; k <= 8; ++k) {
            const double out = intermediate_decode(Y + D, pre, k).norm();
            CHECK(out <= output_bound(in, k).value());
            ++checked;
        }
    }
    CHECK(checked == 800);
}
