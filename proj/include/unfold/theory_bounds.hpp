#pragma once

#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "unfold/adversarial.hpp"
#include "unfold/core_model.hpp"

namespace unfold {

/// Non-negative real held as its natural logarithm, so products and sums of
/// quantities exponential in the depth never overflow.
class LogReal {
public:
    LogReal() = default;  // zero
    static LogReal from_value(double v);
    static LogReal from_log(double l) {
        LogReal r;
        r.log_ = l;
        return r;
    }
    static LogReal zero() { return {}; }
    static LogReal one() { return from_log(0.0); }

    double log() const { return log_; }
    /// exp(log); +inf when it does not fit in a double.
    double value() const { return std::exp(log_); }
    bool overflow() const { return log_ > std::log(std::numeric_limits<double>::max()); }
    bool is_zero() const { return log_ == -std::numeric_limits<double>::infinity(); }

    friend LogReal operator+(LogReal a, LogReal b);
    friend LogReal operator*(LogReal a, LogReal b) { return from_log(a.log_ + b.log_); }
    friend LogReal operator/(LogReal a, LogReal b) { return from_log(a.log_ - b.log_); }
    LogReal& operator+=(LogReal o) { return *this = *this + o; }
    LogReal& operator*=(LogReal o) { return *this = *this * o; }
    LogReal pow(double k) const { return is_zero() && k > 0 ? zero() : from_log(k * log_); }
    friend bool operator<(LogReal a, LogReal b) { return a.log_ < b.log_; }

private:
    double log_ = -std::numeric_limits<double>::infinity();
};

struct TheoryInputs {
    double alpha = 1.0, beta = 1.0;
    double normA = 0.0, normAtA = 0.0;
    double normYF = 0.0;
    double s = 1.0;
    double B_in = 1.0, B_out = 1.0;
    double kappa = 1.0;
    double rho = 1.0, lambda_l1 = 1e-4;
    double N = 1.0, n = 1.0, m = 1.0;
    int L = 2;
    double epsilon = 0.0;
    double zeta = 0.05;

    double E() const { return std::sqrt(s) * epsilon; }
    /// Checks signs and ranges; γ validity is checked by gamma().
    void validate() const;
    std::string describe() const;
};

struct TheoryConstants {
    double gamma = 0.0;
    double nu = 0.0;
    double r = 0.0;
    double G = 0.0;
    // Index k holds the layer-k value; index 0 is D_0 = 0 or unused.
    std::vector<LogReal> D, Z, C, Sigma, H;
    LogReal Kprime;
    LogReal Lip;         // authoritative closed form with the explicit first layer term
    LogReal Lip_inline;  // 2γρ√β K'_L + 2ν²γ²ρ‖A‖(‖Y‖+E)√β D_L
};

/// ρ / (α − ρ‖AᵀA‖); throws GammaUndefined when the denominator is not positive.
double gamma(const TheoryInputs& in);

/// Bound on ‖f^k(Y + Δ)‖_F for ‖Δ‖_F ≤ √s ε.
LogReal output_bound(const TheoryInputs& in, int k);
/// Same series without the data factor.
LogReal grad_output_bound(const TheoryInputs& in, int k);
/// Lipschitz constant in W of the clean final decoder at depth L.
LogReal sigma_clean(const TheoryInputs& in, int L);

/// D_0..D_L, Z, C, Σ, H (tables sized L+1), K'_L and both Lipschitz forms.
TheoryConstants recurrence_tables(const TheoryInputs& in, int L);

/// Lipschitz constant in W of the attacked final decoder; needs L >= 2.
LogReal lipschitz_constant(const TheoryInputs& in);
LogReal lipschitz_constant_inline(const TheoryInputs& in);

/// log of the covering number bound N n log(1 + 2√β Lip / t).
double covering_bound_log(double t, const TheoryInputs& in, LogReal lip);

/// Dudley integral for the adversarial Rademacher complexity by adaptive
/// Gauss-Kronrod quadrature after t = a u².
double arc_dudley(const TheoryInputs& in, LogReal lip, int max_depth = 20);
/// Closed-form upper bound of the same integral.
double arc_closed_form(const TheoryInputs& in, LogReal lip);

struct GeneralizationBound {
    LogReal lip;
    double arc = 0.0;
    double tail = 0.0;
    double bound = 0.0;
};
GeneralizationBound generalization_bound(const TheoryInputs& in);

/// Frame bounds, operator norms, data norms and κ estimated from a network
/// and a dataset under the given attack.
struct EstimatedInputs {
    TheoryInputs inputs;
    bool valid = true;
    std::vector<std::string> issues;  // why the bound pipeline is unavailable
};
EstimatedInputs estimate_theory_inputs(const Network& net, const Matrix& X, const Matrix& Y, const AttackSpec& spec);

struct GrowthRow {
    int L = 0;
    double N = 0.0;
    double epsilon = 0.0;
    double lip_log = 0.0;
    double arc = 0.0;
    double bound = 0.0;
    double tail = 0.0;
    double growth_ratio = 0.0;  // bound² s / (N L |log ε|)
};

/// Evaluates the bound over the grid L × N × ε (empty lists keep the base value).
std::vector<GrowthRow> growth_curve(const TheoryInputs& base, const std::vector<int>& Ls, const std::vector<double>& Ns,
                                    const std::vector<double>& epsilons);
std::string growth_csv(const std::vector<GrowthRow>& rows);

}  // namespace unfold
