#include <doctest.h>

#include <random>

#include "oracles.hpp"
#include "unfold/theory_bounds.hpp"
#include "unfold/training.hpp"

using namespace unfold;

namespace {

TheoryInputs random_inputs(std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    TheoryInputs in;
    in.rho = 1.0 + u(rng);
    in.alpha = 0.5 + 1.5 * u(rng);
    in.beta = in.alpha * (1.0 + 3.0 * u(rng));
    in.normAtA = (0.1 + 0.8 * u(rng)) * in.alpha / in.rho;
    in.normA = std::sqrt(in.normAtA);
    in.normYF = 0.5 + 10.0 * u(rng);
    in.s = std::floor(10.0 + 500.0 * u(rng));
    in.B_in = 0.2 + u(rng);
    in.B_out = 0.2 + 2.0 * u(rng);
    in.kappa = 0.05 + u(rng);
    in.n = std::floor(8.0 + 50.0 * u(rng));
    in.N = std::floor(in.n * (1.0 + 9.0 * u(rng)));
    in.m = std::floor(in.n / 4.0);
    in.L = 2 + static_cast<int>(6.0 * u(rng));
    in.epsilon = std::vector<double>{0.0, 0.01, 0.1, 1.0}[static_cast<std::size_t>(4.0 * u(rng)) % 4];
    return in;
}

double rel(double a, double b) { return std::abs(a - b) / std::max(std::abs(b), 1e-300); }

}  // namespace

TEST_CASE("gamma") {
    TheoryInputs in;
    in.alpha = 2.0;
    in.rho = 0.5;
    in.normAtA = 1.0;
    CHECK(gamma(in) == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
    in.normAtA = 0.0;
    CHECK(gamma(in) == doctest::Approx(0.25).epsilon(1e-15));
    in.normAtA = 4.0;
    CHECK_THROWS_AS(gamma(in), GammaUndefined);
    in.normAtA = 5.0;
    CHECK_THROWS_AS(gamma(in), GammaUndefined);
}

TEST_CASE("input validation") {
    TheoryInputs in;
    CHECK_NOTHROW(in.validate());
    in.zeta = 1.0;
    CHECK_THROWS_AS(in.validate(), InvalidArgument);
    in.zeta = 0.05;
    in.kappa = 0.0;
    CHECK_THROWS_AS(in.validate(), InvalidArgument);
    in.kappa = 1.0;
    in.B_in = -1.0;
    CHECK_THROWS_AS(in.validate(), InvalidArgument);
    CHECK(in.describe().find("alpha") != std::string::npos);
}

TEST_CASE("output bounds") {
    std::mt19937_64 rng(1);
    for (int t = 0; t < 50; ++t) {
        const TheoryInputs in = random_inputs(rng);
        const oracle::NaiveTheory nv(in);
        CHECK(rel(output_bound(in, 1).value(),
                  (in.normYF + in.E()) * in.normA * nv.nu * nv.gamma * std::sqrt(in.beta)) <= 1e-12);
        CHECK(rel(grad_output_bound(in, 1).value(), in.normA * nv.nu * nv.gamma * std::sqrt(in.beta)) <= 1e-12);
        for (int k = 1; k <= 8; ++k) {
            CHECK(rel(output_bound(in, k).value(), nv.output_bound(k)) <= 1e-12);
            CHECK(rel(output_bound(in, k).value() / grad_output_bound(in, k).value(), in.normYF + in.E()) <= 1e-12);
        }
        TheoryInputs clean = in;
        clean.epsilon = 0.0;
        TheoryInputs noy = clean;
        CHECK(rel(output_bound(clean, 3).value(),
                  in.normYF * grad_output_bound(noy, 3).value()) <= 1e-12);
    }
    TheoryInputs bad;
    bad.alpha = 0.5;
    bad.normAtA = 1.0;
    CHECK_THROWS_AS(output_bound(bad, 2), GammaUndefined);
    CHECK_THROWS_AS(output_bound(TheoryInputs{}, 0), InvalidArgument);
}

TEST_CASE("clean decoder Lipschitz constant") {
    std::mt19937_64 rng(2);
    for (int t = 0; t < 50; ++t) {
        const TheoryInputs in = random_inputs(rng);
        const oracle::NaiveTheory nv(in);
        for (int L = 1; L <= 6; ++L) {
            CHECK(rel(sigma_clean(in, L).value(), nv.Sigma(L)) <= 1e-12);
            CHECK(sigma_clean(in, L) < sigma_clean(in, L + 1));
        }
        CHECK(rel(nv.K(1), nv.gamma * nv.G) <= 1e-15);
    }
}

TEST_CASE("recurrence tables match the naive evaluator") {
    std::mt19937_64 rng(3);
    for (int t = 0; t < 50; ++t) {
        TheoryInputs in = random_inputs(rng);
        in.L = 5;
        const oracle::NaiveTheory nv(in);
        const TheoryConstants c = recurrence_tables(in, 5);
        CHECK(rel(c.gamma, nv.gamma) <= 1e-15);
        CHECK(rel(c.G, nv.G) <= 1e-15);
        CHECK(c.D[0].is_zero());
        CHECK(rel(c.D[3].value(), 1.0 + nv.G + nv.G * nv.G) <= 1e-12);
        CHECK(rel(c.Z[1].value(), nv.gamma * in.normA) <= 1e-12);
        CHECK(rel(c.C[1].value(), c.Z[1].value()) <= 1e-12);
        for (int k = 1; k <= 5; ++k) {
            CHECK(rel(c.D[k].value(), nv.D(k)) <= 1e-12);
            CHECK(rel(c.Z[k].value(), nv.Z(k)) <= 1e-12);
            CHECK(rel(c.C[k].value(), nv.C(k)) <= 1e-12);
            CHECK(rel(c.Sigma[k].value(), nv.Sigma(k)) <= 1e-12);
            CHECK(rel(c.H[k].value(), nv.H(k)) <= 1e-12);
            if (k > 1) {
                CHECK(c.D[k - 1] < c.D[k]);
                CHECK(c.C[k - 1] < c.C[k]);
                CHECK(c.H[k - 1] < c.H[k]);
                CHECK(c.Sigma[k - 1] < c.Sigma[k]);
            }
        }
        CHECK(rel(c.Kprime.value(), nv.Kprime(5)) <= 1e-12);
        CHECK(rel(c.Lip.value(), nv.Lip(5)) <= 1e-12);
        CHECK(rel(c.Lip_inline.value(), nv.LipInline(5)) <= 1e-12);
    }
}

TEST_CASE("Lipschitz constant of the attacked decoder") {
    std::mt19937_64 rng(4);
    for (int t = 0; t < 50; ++t) {
        TheoryInputs in = random_inputs(rng);
        const oracle::NaiveTheory nv(in);
        CHECK(rel(lipschitz_constant(in).value(), nv.Lip(in.L)) <= 1e-12);
        CHECK(rel(lipschitz_constant_inline(in).value(), nv.LipInline(in.L)) <= 1e-12);

        // Affine in E: second difference over E ∈ {0, 1, 2} vanishes.
        double v[3];
        for (int e = 0; e < 3; ++e) {
            in.epsilon = static_cast<double>(e) / std::sqrt(in.s);
            v[e] = lipschitz_constant(in).value();
        }
        CHECK(std::abs(v[2] - 2.0 * v[1] + v[0]) <= 1e-9 * v[2]);
        CHECK(v[0] < v[1]);
    }
    TheoryInputs one;
    one.L = 1;
    CHECK_THROWS_AS(lipschitz_constant(one), InvalidArgument);
}

TEST_CASE("Lipschitz constant at epsilon = 0 reduces to the E-free formula") {
    std::mt19937_64 rng(5);
    TheoryInputs in = random_inputs(rng);
    in.epsilon = 0.0;
    in.L = 3;
    const oracle::NaiveTheory nv(in);
    // With E = 0 the attack terms vanish, H_k = γ‖A‖(4rν²βγρD_{k−1} + r‖Y‖).
    const double g = nv.gamma, r = nv.r, nu = nv.nu;
    auto H = [&](int k) { return g * in.normA * (4.0 * r * nu * nu * in.beta * g * in.rho * nv.D(k - 1) + r * in.normYF); };
    const double rn = r * nu;
    const double value = 2.0 * g * in.rho * std::sqrt(in.beta) *
                         (rn * rn * g * in.normA * r * in.normYF + rn * H(2) + H(3) +
                          nu * nu * g * in.normA * in.normYF * (1.0 + rn + rn * rn));
    CHECK(rel(lipschitz_constant(in).value(), value) <= 1e-12);
}

TEST_CASE("log-domain arithmetic survives deep networks") {
    TheoryInputs in;
    in.alpha = 1.0;
    in.beta = 50.0;
    in.normAtA = 0.5;
    in.normA = std::sqrt(0.5);
    in.normYF = 30.0;
    in.L = 400;
    const LogReal lip = lipschitz_constant(in);
    CHECK(lip.overflow());
    CHECK(std::isfinite(lip.log()));
    const auto gb = generalization_bound(in);
    CHECK(std::isfinite(gb.bound));

    LogReal a = LogReal::from_value(3.0), b = LogReal::from_value(4.0);
    CHECK((a + b).value() == doctest::Approx(7.0).epsilon(1e-15));
    CHECK((a * b).value() == doctest::Approx(12.0).epsilon(1e-15));
    CHECK((b / a).value() == doctest::Approx(4.0 / 3.0).epsilon(1e-15));
    CHECK(a.pow(3).value() == doctest::Approx(27.0).epsilon(1e-14));
    CHECK((LogReal::zero() + a).value() == doctest::Approx(3.0).epsilon(1e-15));
    CHECK(LogReal::zero().pow(2).is_zero());
}

TEST_CASE("covering numbers") {
    TheoryInputs in;
    in.beta = 2.25;
    in.N = 30;
    in.n = 10;
    const LogReal lip = LogReal::from_value(4.0);
    const double b = 2.0 * 1.5 * 4.0;
    CHECK(covering_bound_log(b, in, lip) == doctest::Approx(300.0 * std::log(2.0)).epsilon(1e-14));
    CHECK(covering_bound_log(1e300, in, lip) <= 1e-290);
    CHECK(covering_bound_log(0.3, in, lip) == doctest::Approx(300.0 * std::log1p(b / 0.3)).epsilon(1e-14));
    CHECK(covering_bound_log(0.3, in, LogReal::one()) == doctest::Approx(300.0 * std::log1p(3.0 / 0.3)).epsilon(1e-14));
    CHECK_THROWS_AS(covering_bound_log(0.0, in, lip), InvalidArgument);
}

TEST_CASE("Dudley integral") {
    std::mt19937_64 rng(6);
    for (int t = 0; t < 10; ++t) {
        TheoryInputs in = random_inputs(rng);
        const LogReal lip = lipschitz_constant(in);
        const double q = arc_dudley(in, lip);
        const double trap = oracle::arc_trapezoid(in, lip.value(), 1000001);
        CHECK(rel(q, trap) <= 1e-5);
        TheoryInputs twice = in;
        twice.N *= 2.0;
        CHECK(rel(arc_dudley(twice, lip), std::sqrt(2.0) * q) <= 1e-12);
        CHECK(arc_closed_form(in, lip) >= q);
    }
    TheoryInputs in = random_inputs(rng);
    CHECK(arc_dudley(in, LogReal::zero()) == 0.0);
    const double a = std::sqrt(in.s) * in.B_out / 2.0;
    CHECK(rel(arc_closed_form(in, LogReal::zero()), 4.0 * std::sqrt(2.0) / in.s * a * std::sqrt(in.N * in.n)) <=
          1e-14);
}

TEST_CASE("closed form dominates quadrature") {
    std::mt19937_64 rng(7);
    for (int t = 0; t < 100; ++t) {
        const TheoryInputs in = random_inputs(rng);
        const LogReal lip = lipschitz_constant(in);
        CHECK(arc_closed_form(in, lip) >= arc_dudley(in, lip));
        const double a = std::sqrt(in.s) * in.B_out / 2.0;
        const double b = 2.0 * std::sqrt(in.beta) * lip.value();
        const double direct = 4.0 * std::sqrt(2.0) / in.s * a * std::sqrt(in.N * in.n * (1.0 + std::log1p(b / a)));
        CHECK(rel(arc_closed_form(in, lip), direct) <= 1e-10);
    }
}

TEST_CASE("generalization bound") {
    std::mt19937_64 rng(8);
    const TheoryInputs in = random_inputs(rng);
    const auto gb = generalization_bound(in);
    const double c = (in.B_in + in.B_out) * (in.B_in + in.B_out);
    CHECK(rel(gb.arc, arc_closed_form(in, lipschitz_constant(in))) <= 1e-14);
    CHECK(rel(gb.tail, 4.0 * c * std::sqrt(2.0 * std::log(4.0 / in.zeta) / in.s)) <= 1e-14);
    CHECK(rel(gb.bound, 2.0 * std::sqrt(2.0) * (2.0 * in.B_in + 2.0 * in.B_out) * gb.arc + gb.tail) <= 1e-14);

    TheoryInputs z = in;
    z.zeta = 1.0 - 1e-12;
    CHECK(rel(generalization_bound(z).tail, 4.0 * c * std::sqrt(2.0 * std::log(4.0) / in.s)) <= 1e-9);

    TheoryInputs big = in;
    big.s *= 4.0;
    CHECK(generalization_bound(big).bound < gb.bound);
}

TEST_CASE("bounds are increasing in depth, attack level, beta and data norm") {
    std::mt19937_64 rng(9);
    for (int t = 0; t < 30; ++t) {
        TheoryInputs in = random_inputs(rng);
        in.epsilon = 0.05;
        auto check_up = [&](TheoryInputs lo, TheoryInputs hi) {
            CHECK(lipschitz_constant(lo) < lipschitz_constant(hi));
            CHECK(generalization_bound(lo).bound < generalization_bound(hi).bound);
        };
        TheoryInputs hi = in;
        hi.L += 1;
        check_up(in, hi);
        hi = in;
        hi.epsilon *= 2.0;
        check_up(in, hi);
        hi = in;
        hi.beta *= 1.5;
        check_up(in, hi);
        hi = in;
        hi.normYF *= 1.5;
        check_up(in, hi);
    }
}

TEST_CASE("growth curve") {
    std::mt19937_64 rng(10);
    TheoryInputs base = random_inputs(rng);
    base.epsilon = 0.1;
    const auto rows = growth_curve(base, {2, 3}, {100.0, 200.0}, {0.1});
    REQUIRE(rows.size() == 4);
    for (const auto& r : rows) {
        CHECK(std::isfinite(r.bound));
        CHECK(r.growth_ratio == doctest::Approx(r.bound * r.bound * base.s / (r.N * r.L * std::abs(std::log(0.1)))));
    }
    // Doubling N scales the ARC term by √2.
    CHECK(rel(rows[1].arc, std::sqrt(2.0) * rows[0].arc) <= 1e-12);
    const std::string csv = growth_csv(rows);
    CHECK(csv.rfind("L,N,epsilon,Lip_log,ARC,bound,tail,growth_ratio\n", 0) == 0);

    std::vector<int> Ls;
    for (int L = 2; L <= 12; ++L) Ls.push_back(L);
    const auto sweep = growth_curve(base, Ls, {}, {});
    std::vector<double> x, y;
    for (std::size_t i = sweep.size() / 2; i < sweep.size(); ++i) {
        x.push_back(sweep[i].L);
        y.push_back(sweep[i].arc * sweep[i].arc);
    }
    CHECK(oracle::r_squared(x, y) >= 0.95);

    std::vector<double> eps;
    for (int k = 0; k <= 12; ++k) eps.push_back(std::pow(10.0, -1.0 + 0.25 * k));
    const auto es = growth_curve(base, {}, {}, eps);
    x.clear();
    y.clear();
    for (std::size_t i = es.size() / 2; i < es.size(); ++i) {
        x.push_back(std::log(es[i].epsilon));
        y.push_back(es[i].arc * es[i].arc);
    }
    CHECK(oracle::r_squared(x, y) >= 0.95);
}

TEST_CASE("estimated inputs from a network") {
    const MeasurementSetup setup = gaussian_measurement(4, 16, 1, Normalization::scale_inv_sqrt_m);
    NetworkConfig cfg;
    cfg.setup = setup;
    cfg.hyper.layers = 3;
    cfg.W = xavier_init(32, 16, 1) * 4.0;
    Network net(cfg);
    SynthParams p;
    p.n = 16;
    p.s = 40;
    const Dataset d = synth_sparse_dataset(p, setup);

    AttackSpec clean;
    const auto est = estimate_theory_inputs(net, d.X, d.Y, clean);
    const auto& in = est.inputs;
    CHECK(in.B_in == doctest::Approx(d.X.colwise().norm().maxCoeff()));
    CHECK(in.B_out == doctest::Approx(net.decode(d.Y).colwise().norm().maxCoeff()));
    CHECK(in.normYF == doctest::Approx(d.Y.norm()));
    CHECK(in.normA == doctest::Approx(spectral_norm(setup.A)).epsilon(1e-9));
    const auto fb = frame_bounds(cfg.W);
    CHECK(in.alpha == doctest::Approx(fb.alpha).epsilon(1e-9));
    CHECK(in.beta == doctest::Approx(fb.beta).epsilon(1e-9));
    CHECK(in.kappa == doctest::Approx(input_gradient_norms(net, d.Y, d.X).minCoeff()));
    CHECK(in.s == 40.0);
    CHECK(in.L == 3);
    if (est.valid) CHECK(std::isfinite(generalization_bound(in).bound));

    AttackSpec atk;
    atk.epsilon = 0.1;
    const auto est2 = estimate_theory_inputs(net, d.X, d.Y, atk);
    CHECK(est2.inputs.epsilon == 0.1);
    CHECK(est2.inputs.B_out >= 0.0);

    const auto zero = estimate_theory_inputs(net, Matrix::Zero(16, 1), Matrix::Zero(4, 1), clean);
    CHECK_FALSE(zero.valid);
    CHECK_FALSE(zero.issues.empty());
}

TEST_CASE("resolvent perturbation inequalities") {
    std::mt19937_64 rng(11);
    int b1 = 0, b2 = 0;
    for (int t = 0; t < 100; ++t) {
        const Index n = 6;
        const Matrix G = oracle::gaussian(n, n, rng);
        const Matrix A = G * G.transpose() + Matrix::Identity(n, n);
        const Matrix Ainv = A.inverse();
        const double na = spectral_norm(Ainv);
        Matrix B = oracle::gaussian(n, n, rng);
        B = 0.5 * (B + B.transpose());
        B *= 0.9 / (na * spectral_norm(B));
        const double nb = spectral_norm(B);
        REQUIRE(na * nb < 1.0);
        if (spectral_norm((A + B).inverse()) <= na / (1.0 - na * nb) * (1.0 + 1e-12)) ++b1;
        const Matrix C = A + B;
        const double lhs = spectral_norm(C.inverse() - Ainv);
        if (lhs <= spectral_norm(C.inverse()) * na * spectral_norm(A - C) * (1.0 + 1e-12)) ++b2;
    }
    CHECK(b1 == 100);
    CHECK(b2 == 100);
}
