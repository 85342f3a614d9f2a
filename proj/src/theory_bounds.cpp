#include "unfold/theory_bounds.hpp"

#include <algorithm>
#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <sstream>

#include "unfold/data_io.hpp"

namespace unfold {

LogReal LogReal::from_value(double v) {
    if (!(v >= 0.0)) throw InvalidArgument("LogReal holds non-negative values only");
    return from_log(std::log(v));
}

LogReal operator+(LogReal a, LogReal b) {
    if (a.is_zero()) return b;
    if (b.is_zero()) return a;
    const double hi = std::max(a.log_, b.log_);
    const double lo = std::min(a.log_, b.log_);
    return LogReal::from_log(hi + std::log1p(std::exp(lo - hi)));
}

void TheoryInputs::validate() const {
    auto bad = [](const std::string& what) { throw InvalidArgument("theory inputs: " + what); };
    if (!(alpha > 0.0) || !(beta >= alpha)) bad("need 0 < alpha <= beta");
    if (!(normA >= 0.0) || !(normAtA >= 0.0) || !(normYF >= 0.0)) bad("norms must be non-negative");
    if (!(s >= 1.0)) bad("sample count s must be >= 1");
    if (!(B_in > 0.0) || !(B_out > 0.0)) bad("B_in and B_out must be positive");
    if (!(kappa > 0.0)) bad("kappa must be positive");
    if (!(rho > 0.0)) bad("rho must be positive");
    if (!(zeta > 0.0 && zeta < 1.0)) bad("zeta must lie in (0, 1)");
    if (!(N >= n) || !(n >= 1.0)) bad("need N >= n >= 1");
    if (L < 1) bad("L must be >= 1");
    if (!(epsilon >= 0.0)) bad("epsilon must be >= 0");
}

std::string TheoryInputs::describe() const {
    std::ostringstream o;
    o << "alpha=" << alpha << " beta=" << beta << " |A|=" << normA << " |AtA|=" << normAtA << " |Y|_F=" << normYF
      << " s=" << s << " B_in=" << B_in << " B_out=" << B_out << " kappa=" << kappa << " rho=" << rho << " N=" << N
      << " n=" << n << " L=" << L << " epsilon=" << epsilon;
    return o.str();
}

double gamma(const TheoryInputs& in) {
    const double denom = in.alpha - in.rho * in.normAtA;
    if (!(denom > 0.0)) {
        std::ostringstream o;
        o << "gamma is undefined: alpha=" << in.alpha << " <= rho*||A^T A||=" << in.rho * in.normAtA
          << "; reduce rho or rescale A";
        throw GammaUndefined(o.str());
    }
    return in.rho / denom;
}

namespace {

constexpr double kNu = 1.0 + 1.4142135623730951;

LogReal lr(double v) { return LogReal::from_value(v); }

struct Scalars {
    double g, nu, r, G;
    LogReal lg, lG, lA, lY, lE, lsb, lrho;
};

Scalars scalars(const TheoryInputs& in) {
    in.validate();
    Scalars c;
    c.g = gamma(in);
    c.nu = kNu;
    c.r = 1.0 + 2.0 * in.beta * c.g * in.rho;
    c.G = c.nu * c.r;
    c.lg = lr(c.g);
    c.lG = lr(c.G);
    c.lA = lr(in.normA);
    c.lY = lr(in.normYF);
    c.lE = lr(in.E());
    c.lsb = lr(std::sqrt(in.beta));
    c.lrho = lr(in.rho);
    return c;
}

// D_0..D_L with D_k = Σ_{i<k} G^i.
std::vector<LogReal> d_table(const Scalars& c, int L) {
    std::vector<LogReal> D(static_cast<std::size_t>(L) + 1);
    for (int k = 1; k <= L; ++k) D[k] = c.lG * D[k - 1] + LogReal::one();
    return D;
}

// K_1..K_L of the clean-decoder constant.
std::vector<LogReal> k_table(const TheoryInputs& in, const Scalars& c, const std::vector<LogReal>& D, int L) {
    std::vector<LogReal> K(static_cast<std::size_t>(L) + 1);
    const LogReal coef = lr(4.0 * c.G * in.beta * c.g * c.g * in.rho) * c.lA * c.lY;
    K[1] = c.lg * c.lG;
    for (int k = 2; k <= L; ++k) K[k] = c.lG * K[k - 1] + (c.lg * c.lG + coef * D[k - 1]);
    return K;
}

LogReal sigma_from(const TheoryInputs& in, const Scalars& c, LogReal K, LogReal D) {
    const LogReal pre = lr(2.0 * c.g * in.rho) * c.lsb;
    return pre * (K + lr(c.nu * c.g * c.r) * c.lA * c.lY * D);
}

}  // namespace

LogReal output_bound(const TheoryInputs& in, int k) {
    if (k < 1) throw InvalidArgument("output_bound needs k >= 1");
    const Scalars c = scalars(in);
    return (c.lY + c.lE) * grad_output_bound(in, k);
}

LogReal grad_output_bound(const TheoryInputs& in, int k) {
    if (k < 1) throw InvalidArgument("grad_output_bound needs k >= 1");
    const Scalars c = scalars(in);
    return c.lA * lr(c.nu * c.g) * c.lsb * d_table(c, k)[k];
}

LogReal sigma_clean(const TheoryInputs& in, int L) {
    if (L < 1) throw InvalidArgument("sigma_clean needs L >= 1");
    const Scalars c = scalars(in);
    const auto D = d_table(c, L);
    return sigma_from(in, c, k_table(in, c, D, L)[L], D[L]);
}

TheoryConstants recurrence_tables(const TheoryInputs& in, int L) {
    if (L < 1) throw InvalidArgument("recurrence tables need L >= 1");
    const Scalars c = scalars(in);
    TheoryConstants t;
    t.gamma = c.g;
    t.nu = c.nu;
    t.r = c.r;
    t.G = c.G;
    const std::size_t sz = static_cast<std::size_t>(L) + 1;
    t.D = d_table(c, L);
    const auto K = k_table(in, c, t.D, L);
    t.Z.assign(sz, LogReal());
    t.C.assign(sz, LogReal());
    t.Sigma.assign(sz, LogReal());
    t.H.assign(sz, LogReal());

    const LogReal gA = c.lg * c.lA;
    const LogReal z_coef = c.lG * lr(8.0 * c.nu * c.g * c.g * in.rho * in.beta) * c.lA;
    const LogReal bsum = lr(in.B_in + in.B_out);
    const LogReal ang = c.lA * lr(c.nu * c.g) * c.lsb;  // ‖A‖νγ√β
    const LogReal h_lead = lr(4.0 * c.r * c.nu * c.nu * in.beta * c.g * in.rho);
    const LogReal h_att = lr(2.0) * c.lsb * c.lE * bsum / lr(in.kappa * in.kappa) * ang;
    const LogReal rYE = lr(c.r) * (c.lY + c.lE);
    for (int k = 1; k <= L; ++k) {
        t.Z[k] = z_coef * t.D[k - 1] + gA;
        t.C[k] = c.lG * t.C[k - 1] + t.Z[k];
        t.Sigma[k] = sigma_from(in, c, K[k], t.D[k]);
        const LogReal bracket = rYE + h_att * t.D[k] * (ang * t.Sigma[k] * t.D[k - 1] + bsum * t.C[k]);
        t.H[k] = gA * (h_lead * t.D[k - 1] + bracket);
        t.Kprime = c.lG * t.Kprime + t.H[k];
    }

    const LogReal pre = lr(2.0 * c.g * in.rho) * c.lsb;
    const LogReal tail = lr(c.nu * c.nu * c.g) * c.lA * (c.lY + c.lE) * t.D[L];
    t.Lip_inline = pre * (t.Kprime + tail);
    if (L >= 2) {
        const LogReal first_inner =
            rYE + lr(2.0 * in.beta) * bsum * bsum * c.lE / lr(in.kappa * in.kappa) * lr(c.nu * c.g * c.g) * c.lA * c.lA;
        LogReal sum = c.lG.pow(L - 1) * gA * first_inner;
        for (int k = 2; k <= L; ++k) sum += c.lG.pow(L - k) * t.H[k];
        t.Lip = pre * (sum + tail);
    }
    return t;
}

LogReal lipschitz_constant(const TheoryInputs& in) {
    if (in.L < 2) throw InvalidArgument("the attacked-decoder Lipschitz constant needs L >= 2");
    return recurrence_tables(in, in.L).Lip;
}

LogReal lipschitz_constant_inline(const TheoryInputs& in) { return recurrence_tables(in, in.L).Lip_inline; }

namespace {

// log(1 + exp(x)) without overflow.
double softplus(double x) { return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

struct ArcScale {
    double a;      // √s B_out / 2
    double log_b;  // log(2√β Lip)
    double pre;    // 4√2 / s
    double sqrt_nn;
};

ArcScale arc_scale(const TheoryInputs& in, LogReal lip) {
    in.validate();
    ArcScale sc;
    sc.a = std::sqrt(in.s) * in.B_out / 2.0;
    sc.log_b = std::log(2.0) + 0.5 * std::log(in.beta) + lip.log();
    sc.pre = 4.0 * std::sqrt(2.0) / in.s;
    sc.sqrt_nn = std::sqrt(in.N * in.n);
    return sc;
}

}  // namespace

double covering_bound_log(double t, const TheoryInputs& in, LogReal lip) {
    if (!(t > 0.0)) throw InvalidArgument("covering radius must be positive");
    const double lb = std::log(2.0) + 0.5 * std::log(in.beta) + lip.log();
    return in.N * in.n * softplus(lb - std::log(t));
}

double arc_dudley(const TheoryInputs& in, LogReal lip, int max_depth) {
    const ArcScale sc = arc_scale(in, lip);
    if (lip.is_zero()) return 0.0;
    const double shift = sc.log_b - std::log(sc.a);
    // ∫₀^a √log(1 + b/t) dt = 2a ∫₀¹ u √log(1 + b/(a u²)) du
    auto f = [shift](double u) {
        if (u <= 0.0) return 0.0;
        return u * std::sqrt(softplus(shift - 2.0 * std::log(u)));
    };
    double err = 0.0;
    const double I = boost::math::quadrature::gauss_kronrod<double, 31>::integrate(
        f, 0.0, 1.0, static_cast<unsigned>(max_depth), 1e-12, &err);
    if (!std::isfinite(I) || err > 1e-6 * std::abs(I)) {
        std::ostringstream o;
        o << "Dudley quadrature did not converge: estimate " << I << ", error estimate " << err;
        throw QuadratureError(o.str());
    }
    return sc.pre * 2.0 * sc.a * sc.sqrt_nn * I;
}

double arc_closed_form(const TheoryInputs& in, LogReal lip) {
    const ArcScale sc = arc_scale(in, lip);
    const double log1p_ba = lip.is_zero() ? 0.0 : softplus(sc.log_b - std::log(sc.a));
    return sc.pre * sc.a * sc.sqrt_nn * std::sqrt(1.0 + log1p_ba);
}

GeneralizationBound generalization_bound(const TheoryInputs& in) {
    GeneralizationBound g;
    g.lip = lipschitz_constant(in);
    g.arc = arc_closed_form(in, g.lip);
    const double c = (in.B_in + in.B_out) * (in.B_in + in.B_out);
    g.tail = 4.0 * c * std::sqrt(2.0 * std::log(4.0 / in.zeta) / in.s);
    g.bound = 2.0 * std::sqrt(2.0) * (2.0 * in.B_in + 2.0 * in.B_out) * g.arc + g.tail;
    return g;
}

EstimatedInputs estimate_theory_inputs(const Network& net, const Matrix& X, const Matrix& Y, const AttackSpec& spec) {
    if (X.cols() != Y.cols()) throw ShapeError("estimate_theory_inputs: X and Y differ in sample count");
    EstimatedInputs est;
    TheoryInputs& in = est.inputs;
    const NetworkConfig& cfg = net.config();
    if (cfg.kind != ModelKind::admm_dad) {
        est.valid = false;
        est.issues.push_back("the bounds are stated for ADMM-DAD only");
    }
    const FrameBounds fb = frame_bounds(cfg.W);
    in.alpha = fb.alpha;
    in.beta = fb.beta;
    if (fb.near_singular) {
        est.valid = false;
        est.issues.push_back("W^T W is numerically singular");
    }
    in.normA = spectral_norm(cfg.setup.A);
    in.normAtA = spectral_norm(cfg.setup.A.transpose() * cfg.setup.A);
    in.normYF = Y.norm();
    in.s = static_cast<double>(X.cols());
    in.rho = cfg.hyper.rho;
    in.lambda_l1 = cfg.hyper.lambda;
    in.N = static_cast<double>(cfg.W.rows());
    in.n = static_cast<double>(cfg.W.cols());
    in.m = static_cast<double>(cfg.setup.m());
    in.L = cfg.hyper.layers;
    in.epsilon = spec.epsilon;

    in.B_in = X.cols() ? X.colwise().norm().maxCoeff() : 0.0;
    if (!(in.B_in > 0.0)) {
        est.valid = false;
        est.issues.push_back("B_in = max ||x_i|| is zero");
    }
    if (X.cols() > 0) {
        const Matrix G = grad_input(Y, X, net);
        const Matrix D = fgsm_from_gradient(G, spec);
        in.B_out = net.decode(Y + D).colwise().norm().maxCoeff();
        in.kappa = std::max(spec.kappa_floor, G.colwise().norm().minCoeff());
    }
    if (!(in.B_out > 0.0)) {
        est.valid = false;
        est.issues.push_back("B_out = max ||h(y_i + delta_i)|| is zero");
    }
    if (!(in.alpha > in.rho * in.normAtA)) {
        est.valid = false;
        std::ostringstream o;
        o << "gamma undefined: alpha=" << in.alpha << " <= rho*||A^T A||=" << in.rho * in.normAtA;
        est.issues.push_back(o.str());
    }
    if (in.L < 2) {
        est.valid = false;
        est.issues.push_back("the attacked-decoder Lipschitz constant needs L >= 2");
    }
    return est;
}

std::vector<GrowthRow> growth_curve(const TheoryInputs& base, const std::vector<int>& Ls, const std::vector<double>& Ns,
                                    const std::vector<double>& epsilons) {
    const std::vector<int> ls = Ls.empty() ? std::vector<int>{base.L} : Ls;
    const std::vector<double> ns = Ns.empty() ? std::vector<double>{base.N} : Ns;
    const std::vector<double> es = epsilons.empty() ? std::vector<double>{base.epsilon} : epsilons;
    std::vector<GrowthRow> rows;
    for (int L : ls)
        for (double N : ns)
            for (double eps : es) {
                TheoryInputs in = base;
                in.L = L;
                in.N = N;
                in.epsilon = eps;
                const GeneralizationBound g = generalization_bound(in);
                GrowthRow r;
                r.L = L;
                r.N = N;
                r.epsilon = eps;
                r.lip_log = g.lip.log();
                r.arc = g.arc;
                r.bound = g.bound;
                r.tail = g.tail;
                const double le = std::abs(std::log(eps));
                r.growth_ratio = (eps > 0.0 && le > 0.0) ? g.bound * g.bound * in.s / (N * L * le)
                                                         : std::numeric_limits<double>::quiet_NaN();
                rows.push_back(r);
            }
    return rows;
}

std::string growth_csv(const std::vector<GrowthRow>& rows) {
    std::string out = "L,N,epsilon,Lip_log,ARC,bound,tail,growth_ratio\n";
    for (const auto& r : rows) {
        out += std::to_string(r.L) + "," + format_double(r.N) + "," + format_double(r.epsilon) + "," +
               format_double(r.lip_log) + "," + format_double(r.arc) + "," + format_double(r.bound) + "," +
               format_double(r.tail) + "," + format_double(r.growth_ratio) + "\n";
    }
    return out;
}

}  // namespace unfold
