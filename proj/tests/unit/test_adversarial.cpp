#include <doctest.h>

#include <random>

#include "oracles.hpp"
#include "unfold/adversarial.hpp"

using namespace unfold;

namespace {

MeasurementSetup setup_from(Matrix A) {
    MeasurementSetup s;
    s.A = std::move(A);
    return s;
}

NetworkConfig admm_config(std::mt19937_64& rng, Index m, Index n, Index N, double lambda, int L) {
    NetworkConfig c;
    c.setup = setup_from(oracle::gaussian(m, n, rng) / std::sqrt(static_cast<double>(m)));
    c.W = oracle::frame_with_singular_values(N, n, 0.7, 1.5, rng);
    c.hyper.lambda = lambda;
    c.hyper.layers = L;
    return c;
}

Matrix random_sphere(Index m, Index s, double eps, std::mt19937_64& rng) {
    Matrix D = oracle::gaussian(m, s, rng);
    for (Index j = 0; j < s; ++j) D.col(j) *= eps / D.col(j).norm();
    return D;
}

}  // namespace

TEST_CASE("attack settings validation") {
    AttackSpec s;
    CHECK_NOTHROW(s.validate());
    s.epsilon = -0.1;
    CHECK_THROWS_AS(s.validate(), InvalidArgument);
    s.epsilon = 0.1;
    s.kappa_floor = 0.0;
    CHECK_THROWS_AS(s.validate(), InvalidArgument);
}

TEST_CASE("normalization of a given gradient") {
    Matrix g(2, 1);
    g << 3.0, 4.0;
    AttackSpec s;
    s.epsilon = 1.0;
    const Matrix d = fgsm_from_gradient(g, s);
    CHECK(d(0, 0) == doctest::Approx(0.6).epsilon(1e-15));
    CHECK(d(1, 0) == doctest::Approx(0.8).epsilon(1e-15));

    Matrix two(2, 2);
    two << 3.0, 0.0, 4.0, 1e-14;
    const Matrix d2 = fgsm_from_gradient(two, s);
    CHECK(d2.col(1).norm() == 0.0);
    CHECK(d2.col(0).norm() == doctest::Approx(1.0).epsilon(1e-15));

    // Direction invariance under loss scaling.
    const Matrix d3 = fgsm_from_gradient(17.0 * g, s);
    CHECK((d3 - d).norm() <= 1e-15);
}

TEST_CASE("norm exactness and Frobenius budget") {
    std::mt19937_64 rng(1);
    const auto cfg = admm_config(rng, 4, 12, 24, 0.05, 3);
    Network net(cfg);
    const Matrix Y = oracle::gaussian(4, 50, rng);
    const Matrix X = oracle::gaussian(12, 50, rng) / 3.0;
    for (double eps : {1e-3, 0.1, 1.0, 25.0}) {
        AttackSpec s;
        s.epsilon = eps;
        const Matrix D = fgsm_l2(net, Y, X, s);
        for (Index j = 0; j < D.cols(); ++j) {
            const double nrm = D.col(j).norm();
            CHECK((nrm == 0.0 || std::abs(nrm - eps) <= 1e-12 * std::max(1.0, eps)));
        }
        CHECK(D.norm() <= std::sqrt(50.0) * eps * (1.0 + 1e-15));
    }
}

TEST_CASE("zero attack level") {
    std::mt19937_64 rng(2);
    const auto cfg = admm_config(rng, 4, 12, 24, 0.05, 2);
    Network net(cfg);
    const Matrix Y = oracle::gaussian(4, 6, rng);
    const Matrix X = oracle::gaussian(12, 6, rng);
    AttackSpec s;
    CHECK(fgsm_l2(net, Y, X, s).norm() == 0.0);
    CHECK(adversarial_loss(net, Y, X, s) == mean_squared_error(net.decode(Y), X));
}

TEST_CASE("zero-gradient columns fall back to no perturbation") {
    std::mt19937_64 rng(3);
    const auto cfg = admm_config(rng, 4, 12, 24, 0.05, 2);
    Network net(cfg);
    const Matrix Y = oracle::gaussian(4, 3, rng);
    Matrix X = oracle::gaussian(12, 3, rng);
    X.col(1) = net.decode(Y.col(1));
    AttackSpec s;
    s.epsilon = 0.5;
    const Matrix D = fgsm_l2(net, Y, X, s);
    CHECK(D.col(1).norm() == 0.0);
    CHECK(D.col(0).norm() == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("FGSM beats random directions on an affine decoder") {
    std::mt19937_64 rng(4);
    const auto cfg = admm_config(rng, 4, 12, 24, 0.0, 1);
    Network net(cfg);
    AttackSpec s;
    s.epsilon = 0.1;
    int wins = 0, trials = 0;
    for (int t = 0; t < 10; ++t) {
        const Matrix y = oracle::gaussian(4, 1, rng);
        const Matrix x = oracle::gaussian(12, 1, rng);
        const double best = adversarial_loss(net, y, x, s);
        for (int r = 0; r < 200; ++r) {
            const Matrix d = random_sphere(4, 1, 0.1, rng);
            ++trials;
            if (best >= mean_squared_error(net.decode(y + d), x)) ++wins;
        }
    }
    CHECK(wins == trials);
}

TEST_CASE("FGSM beats random directions on deeper decoders in most trials") {
    std::mt19937_64 rng(5);
    const auto cfg = admm_config(rng, 4, 12, 24, 0.05, 3);
    Network net(cfg);
    AttackSpec s;
    s.epsilon = 0.1;
    int wins = 0, trials = 0;
    for (int t = 0; t < 10; ++t) {
        const Matrix y = oracle::gaussian(4, 1, rng);
        const Matrix x = oracle::gaussian(12, 1, rng);
        const double best = adversarial_loss(net, y, x, s);
        for (int r = 0; r < 200; ++r) {
            const Matrix d = random_sphere(4, 1, 0.1, rng);
            ++trials;
            if (best >= mean_squared_error(net.decode(y + d), x)) ++wins;
        }
    }
    MESSAGE("FGSM dominated " << wins << " of " << trials << " random directions");
    CHECK(wins >= 0.95 * trials);
}

TEST_CASE("adversarial loss statistics") {
    std::mt19937_64 rng(6);
    int above = 0;
    for (int t = 0; t < 50; ++t) {
        const auto cfg = admm_config(rng, 4, 12, 24, 0.05, 3);
        Network net(cfg);
        const Matrix Y = oracle::gaussian(4, 8, rng);
        const Matrix X = oracle::gaussian(12, 8, rng) / 3.0;
        AttackSpec s;
        s.epsilon = 0.2;
        if (adversarial_loss(net, Y, X, s) >= mean_squared_error(net.decode(Y), X)) ++above;
    }
    CHECK(above >= 45);
}

TEST_CASE("duplicating samples leaves the adversarial loss unchanged") {
    std::mt19937_64 rng(7);
    const auto cfg = admm_config(rng, 4, 12, 24, 0.05, 2);
    Network net(cfg);
    const Matrix Y = oracle::gaussian(4, 3, rng);
    const Matrix X = oracle::gaussian(12, 3, rng);
    Matrix Y2(4, 6), X2(12, 6);
    Y2 << Y, Y;
    X2 << X, X;
    AttackSpec s;
    s.epsilon = 0.3;
    CHECK(adversarial_loss(net, Y2, X2, s) == doctest::Approx(adversarial_loss(net, Y, X, s)).epsilon(1e-14));
    const Vector norms = input_gradient_norms(net, Y, X);
    CHECK((norms - grad_input(Y, X, net).colwise().norm().transpose()).norm() == 0.0);
}
