#include "unfold/training.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace unfold {

Matrix xavier_init(Index N, Index n, std::uint64_t seed) {
    if (N < 1 || n < 1) throw InvalidArgument("xavier_init: dimensions must be positive");
    auto rng = RandomStreams(seed).stream("init");
    return gaussian_matrix(N, n, rng) * std::sqrt(2.0 / static_cast<double>(N + n));
}

Matrix polar_factor(const Matrix& W) {
    Eigen::JacobiSVD<Matrix> svd(W, Eigen::ComputeThinU | Eigen::ComputeThinV);
    return svd.matrixU() * svd.matrixV().transpose();
}

AdamState AdamState::fresh(Index rows, Index cols, double lr) {
    AdamState s;
    s.m = Matrix::Zero(rows, cols);
    s.v = Matrix::Zero(rows, cols);
    s.lr = lr;
    return s;
}

void adam_step(AdamState& s, const Matrix& grad, Matrix& W) {
    if (grad.rows() != W.rows() || grad.cols() != W.cols() || s.m.rows() != W.rows() || s.m.cols() != W.cols()) {
        throw ShapeError("adam_step: gradient, moments and parameter must share a shape");
    }
    ++s.step;
    s.m = s.beta1 * s.m + (1.0 - s.beta1) * grad;
    s.v = s.beta2 * s.v + (1.0 - s.beta2) * grad.cwiseProduct(grad);
    const double c1 = 1.0 - std::pow(s.beta1, static_cast<double>(s.step));
    const double c2 = 1.0 - std::pow(s.beta2, static_cast<double>(s.step));
    W.array() -= s.lr * (s.m.array() / c1) / ((s.v.array() / c2).sqrt() + s.eps);
}

void TrainConfig::validate() const {
    if (epochs < 0) throw InvalidArgument("epochs must be >= 0");
    if (batch_size < 1) throw InvalidArgument("batch_size must be >= 1");
    if (patience < 1) throw InvalidArgument("patience must be >= 1");
    if (warmup_epochs < 0) throw InvalidArgument("warmup_epochs must be >= 0");
    if (!(lr > 0.0)) throw InvalidArgument("learning rate must be positive");
    if (!(epsilon >= 0.0) || !(test_epsilon() >= 0.0)) throw InvalidArgument("attack levels must be >= 0");
}

// ---------------------------------------------------------------------------
// Checkpoint mapping

namespace {

void put_adam(Checkpoint& c, const std::string& prefix, const AdamState& a) {
    c.tensors[prefix + ".m"] = a.m;
    c.tensors[prefix + ".v"] = a.v;
    c.set(prefix + ".step", static_cast<std::int64_t>(a.step));
    c.set(prefix + ".lr", a.lr);
    c.set(prefix + ".beta1", a.beta1);
    c.set(prefix + ".beta2", a.beta2);
    c.set(prefix + ".eps", a.eps);
}

AdamState get_adam(const Checkpoint& c, const std::string& prefix) {
    AdamState a;
    a.m = c.tensor(prefix + ".m");
    a.v = c.tensor(prefix + ".v");
    a.step = c.get_int(prefix + ".step");
    a.lr = c.get_double(prefix + ".lr");
    a.beta1 = c.get_double(prefix + ".beta1");
    a.beta2 = c.get_double(prefix + ".beta2");
    a.eps = c.get_double(prefix + ".eps");
    return a;
}

}  // namespace

Checkpoint TrainedModel::to_checkpoint() const {
    Checkpoint c;
    c.set("model.kind", to_string(net.kind));
    c.set("model.rho", net.hyper.rho);
    c.set("model.lambda", net.hyper.lambda);
    c.set("model.layers", static_cast<std::int64_t>(net.hyper.layers));
    c.set("model.ista_theta", net.ista_theta);
    c.set("model.ista_step", net.ista_step);
    c.set("setup.eta", net.setup.eta);
    c.set("setup.noise_std", net.setup.noise_std);
    c.set("setup.normalization", to_string(net.setup.normalization));
    c.set("train.epochs", static_cast<std::int64_t>(train.epochs));
    c.set("train.batch_size", static_cast<std::int64_t>(train.batch_size));
    c.set("train.lr", train.lr);
    c.set("train.epsilon", train.epsilon);
    c.set("train.eval_epsilon", train.test_epsilon());
    c.set("train.patience", static_cast<std::int64_t>(train.patience));
    c.set("train.warmup_epochs", static_cast<std::int64_t>(train.warmup_epochs));
    c.set("seed", train.seed);
    c.set("epoch", static_cast<std::int64_t>(epoch));
    c.set("adv_train_mse", adv_train_mse);
    c.tensors["A"] = net.setup.A;
    c.tensors["W"] = net.W;
    put_adam(c, "adam", adam);
    put_adam(c, "adam_theta", adam_theta);
    return c;
}

TrainedModel TrainedModel::from_checkpoint(const Checkpoint& c) {
    TrainedModel t;
    t.net.kind = model_kind_from_string(c.get("model.kind"));
    t.net.hyper.rho = c.get_double("model.rho");
    t.net.hyper.lambda = c.get_double("model.lambda");
    t.net.hyper.layers = static_cast<int>(c.get_int("model.layers"));
    t.net.ista_theta = c.get_double("model.ista_theta");
    t.net.ista_step = c.get_double("model.ista_step");
    t.net.setup.eta = c.get_double("setup.eta");
    t.net.setup.noise_std = c.get_double("setup.noise_std");
    t.net.setup.normalization = normalization_from_string(c.get("setup.normalization"));
    t.net.setup.A = c.tensor("A");
    t.net.W = c.tensor("W");
    t.train.epochs = static_cast<int>(c.get_int("train.epochs"));
    t.train.batch_size = c.get_int("train.batch_size");
    t.train.lr = c.get_double("train.lr");
    t.train.epsilon = c.get_double("train.epsilon");
    t.train.eval_epsilon = c.get_double("train.eval_epsilon");
    t.train.patience = static_cast<int>(c.get_int("train.patience"));
    t.train.warmup_epochs = static_cast<int>(c.get_int("train.warmup_epochs"));
    t.train.seed = c.get_uint("seed");
    t.epoch = static_cast<int>(c.get_int("epoch"));
    t.adv_train_mse = c.get_double("adv_train_mse");
    t.adam = get_adam(c, "adam");
    t.adam_theta = get_adam(c, "adam_theta");
    if (t.adam.m.rows() != t.net.W.rows() || t.adam.m.cols() != t.net.W.cols()) {
        throw FormatError("checkpoint optimizer state does not match W", 0);
    }
    return t;
}

// ---------------------------------------------------------------------------

double adversarial_mse(const Network& net, const Matrix& Y, const Matrix& X, double epsilon, Index chunk) {
    if (Y.cols() != X.cols()) throw ShapeError("observations and signals differ in sample count");
    const Index s = X.cols();
    if (s == 0) return 0.0;
    AttackSpec spec;
    spec.epsilon = epsilon;
    Matrix Xhat(X.rows(), s);
    for (Index start = 0; start < s; start += chunk) {
        const Index len = std::min(chunk, s - start);
        const Matrix Yc = Y.middleCols(start, len);
        const Matrix D = fgsm_l2(net, Yc, X.middleCols(start, len), spec);
        Xhat.middleCols(start, len) = net.decode(Yc + D);
    }
    return mean_squared_error(Xhat, X);
}

namespace {

Matrix gather(const Matrix& M, const std::vector<Index>& idx, std::size_t begin, std::size_t end) {
    Matrix out(M.rows(), static_cast<Index>(end - begin));
    for (std::size_t j = begin; j < end; ++j) out.col(static_cast<Index>(j - begin)) = M.col(idx[j]);
    return out;
}

bool finite(const Matrix& M) { return M.allFinite(); }

}  // namespace

TrainResult train(const TrainData& data, const NetworkConfig& cfg, const TrainConfig& tcfg,
                  const EpochObserver& observer) {
    tcfg.validate();
    cfg.validate();
    const Index n = cfg.setup.n();
    const Index m = cfg.setup.m();
    if (data.X_train.rows() != n || data.Y_train.rows() != m || data.X_test.rows() != n || data.Y_test.rows() != m ||
        data.X_train.cols() != data.Y_train.cols() || data.X_test.cols() != data.Y_test.cols()) {
        throw ShapeError("training data shapes do not match the network configuration");
    }
    const Index s = data.X_train.cols();
    if (s == 0) throw InvalidArgument("training set is empty");

    TrainedModel state;
    state.net = cfg;
    state.train = tcfg;
    state.adam = AdamState::fresh(cfg.W.rows(), cfg.W.cols(), tcfg.lr);
    state.adam_theta = AdamState::fresh(1, 1, tcfg.lr);

    Network net(cfg);
    const bool baseline = cfg.kind == ModelKind::ista_baseline;
    const RandomStreams rs(tcfg.seed);
    AttackSpec train_attack;
    train_attack.epsilon = tcfg.epsilon;
    const double eval_eps = tcfg.test_epsilon();

    TrainResult result;
    std::optional<double> best_ege;
    int since_best = 0;
    int last_finite = 0;
    std::vector<Index> order(static_cast<std::size_t>(s));

    for (int epoch = 1; epoch <= tcfg.epochs; ++epoch) {
        std::iota(order.begin(), order.end(), Index{0});
        auto rng = rs.stream("shuffle", static_cast<std::uint64_t>(epoch));
        std::shuffle(order.begin(), order.end(), rng);

        for (std::size_t b = 0; b < order.size(); b += static_cast<std::size_t>(tcfg.batch_size)) {
            const std::size_t e = std::min(order.size(), b + static_cast<std::size_t>(tcfg.batch_size));
            const Matrix Xb = gather(data.X_train, order, b, e);
            Matrix Yb = gather(data.Y_train, order, b, e);
            // The attack is a constant with respect to W.
            if (train_attack.epsilon > 0.0) Yb += fgsm_l2(net, Yb, Xb, train_attack);
            const ForwardTape tape = forward_with_tape(Yb, net);
            const double loss = mean_squared_error(tape.xhat, Xb);
            if (!std::isfinite(loss)) {
                throw TrainingDiverged("training loss became non-finite in epoch " + std::to_string(epoch),
                                       last_finite);
            }
            const ParamGrad g = grad_param(tape, Yb, Xb, net);
            Matrix W = net.config().W;
            adam_step(state.adam, g.dW, W);
            double theta = net.config().ista_theta;
            if (baseline) {
                W = polar_factor(W);
                Matrix th(1, 1), gth(1, 1);
                th(0, 0) = theta;
                gth(0, 0) = g.dtheta;
                adam_step(state.adam_theta, gth, th);
                theta = std::max(th(0, 0), 1e-12);
            }
            if (!finite(W)) {
                throw TrainingDiverged("parameters became non-finite in epoch " + std::to_string(epoch), last_finite);
            }
            try {
                net.set_parameters(std::move(W), theta);
            } catch (const SingularSystem& err) {
                throw TrainingDiverged(std::string("sparsifier became singular: ") + err.what(), last_finite);
            }
        }
        last_finite = epoch;
        result.epochs_run = epoch;
        if (epoch < tcfg.warmup_epochs) continue;

        EpochMetrics row;
        row.epoch = epoch;
        row.epsilon = eval_eps;
        row.clean_test_mse = mean_squared_error(net.decode(data.Y_test), data.X_test);
        row.adv_test_mse = adversarial_mse(net, data.Y_test, data.X_test, eval_eps);
        row.adv_train_mse = adversarial_mse(net, data.Y_train, data.X_train, eval_eps);
        row.adv_ege = std::abs(row.adv_test_mse - row.adv_train_mse);
        if (!std::isfinite(row.adv_ege) || !std::isfinite(row.clean_test_mse)) {
            throw TrainingDiverged("evaluation produced non-finite metrics in epoch " + std::to_string(epoch),
                                   epoch - 1);
        }
        result.history.rows.push_back(row);
        if (observer) observer(row);

        if (!best_ege || row.adv_ege < *best_ege) {
            best_ege = row.adv_ege;
            since_best = 0;
            state.net = net.config();
            state.epoch = epoch;
            state.adv_train_mse = row.adv_train_mse;
            result.best = state;
        } else if (++since_best >= tcfg.patience) {
            result.stopped_early = true;
            break;
        }
    }
    if (!best_ege) {
        // Nothing was evaluated: hand back the final parameters.
        state.net = net.config();
        state.epoch = result.epochs_run;
        state.adv_train_mse = adversarial_mse(net, data.Y_train, data.X_train, eval_eps);
        result.best = state;
    }
    return result;
}

MetricsRecord evaluate(const TrainedModel& model, const Matrix& X_test, const Matrix& Y_test,
                       const std::vector<double>& epsilons) {
    if (X_test.rows() != model.net.setup.n() || Y_test.rows() != model.net.setup.m() ||
        X_test.cols() != Y_test.cols()) {
        throw ShapeError("test data shape (" + std::to_string(X_test.rows()) + ", " + std::to_string(Y_test.rows()) +
                         ") does not match the checkpoint (n=" + std::to_string(model.net.setup.n()) +
                         ", m=" + std::to_string(model.net.setup.m()) + ")");
    }
    const Network net(model.net);
    const double clean = mean_squared_error(net.decode(Y_test), X_test);
    MetricsRecord rec;
    for (double eps : epsilons) {
        EpochMetrics row;
        row.epoch = model.epoch;
        row.epsilon = eps;
        row.clean_test_mse = clean;
        row.adv_test_mse = eps == 0.0 ? clean : adversarial_mse(net, Y_test, X_test, eps);
        row.adv_train_mse = model.adv_train_mse;
        row.adv_ege = std::abs(row.adv_test_mse - row.adv_train_mse);
        rec.rows.push_back(row);
    }
    return rec;
}

}  // namespace unfold
