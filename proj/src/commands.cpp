#include "unfold/commands.hpp"

#include <CLI11.hpp>
#include <atomic>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <json.hpp>
#include <sstream>
#include <thread>

#include "unfold/theory_bounds.hpp"

namespace unfold {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

// ---------------------------------------------------------------------------
// Experiment assembly

namespace {

Index positive_index(const RunConfig& cfg, const std::string& key) {
    const auto v = cfg.integer(key);
    if (v < 1) throw ConfigError("key '" + key + "' must be >= 1");
    return static_cast<Index>(v);
}

Hyper build_hyper(const RunConfig& cfg) {
    Hyper h;
    h.rho = cfg.real("rho");
    h.lambda = cfg.real("lambda");
    h.layers = static_cast<int>(cfg.integer("layers"));
    try {
        h.validate();
    } catch (const InvalidArgument& e) {
        throw ConfigError(e.what());
    }
    return h;
}

Matrix select_columns(const Matrix& M, Index begin, Index count) { return M.middleCols(begin, count); }

}  // namespace

Experiment build_experiment(const RunConfig& cfg, const Matrix* A) {
    const Index n = positive_index(cfg, "n");
    const Index m = positive_index(cfg, "m");
    const std::uint64_t seed = cfg.uint("seed");
    Normalization norm;
    try {
        norm = normalization_from_string(cfg.str("normalization"));
    } catch (const InvalidArgument& e) {
        throw ConfigError(std::string("normalization: ") + e.what());
    }
    Experiment ex;
    if (A) {
        if (A->rows() != m || A->cols() != n) {
            throw ConfigError("config dimensions (m=" + std::to_string(m) + ", n=" + std::to_string(n) +
                              ") do not match the checkpoint's measurement matrix (" + std::to_string(A->rows()) + "x" +
                              std::to_string(A->cols()) + ")");
        }
        ex.setup.A = *A;
        ex.setup.normalization = norm;
    } else {
        if (m >= n) throw ConfigError("need m < n (got m=" + std::to_string(m) + ", n=" + std::to_string(n) + ")");
        ex.setup = gaussian_measurement(m, n, seed, norm);
    }
    ex.setup.noise_std = cfg.real("noise_std");
    ex.setup.eta = cfg.real("eta");
    const double noise = ex.setup.noise_std;
    if (!(noise >= 0.0)) throw ConfigError("noise_std must be >= 0");

    const std::string source = cfg.str("data.source");
    if (source == "synthetic") {
        SynthParams p;
        p.n = n;
        p.k = positive_index(cfg, "data.sparsity");
        if (p.k > n) throw ConfigError("data.sparsity must not exceed n");
        p.noise_std = noise;
        p.seed = seed;
        try {
            p.model = signal_model_from_string(cfg.str("data.signal_model"));
        } catch (const InvalidArgument& e) {
            throw ConfigError(std::string("data.signal_model: ") + e.what());
        }
        p.s = positive_index(cfg, "data.train_size");
        p.split = "train";
        ex.train = synth_sparse_dataset(p, ex.setup);
        p.s = positive_index(cfg, "data.test_size");
        p.split = "test";
        ex.test = synth_sparse_dataset(p, ex.setup);
    } else if (source == "images") {
        const std::string path = cfg.str("data.path");
        if (path.empty()) throw ConfigError("data.path: required when data.source = images");
        if (!fs::exists(path)) throw ConfigError("data.path: '" + path + "' does not exist");
        const std::string test_path = cfg.str("data.test_path");
        if (!test_path.empty()) {
            if (!fs::exists(test_path)) throw ConfigError("data.test_path: '" + test_path + "' does not exist");
            ex.train = image_ingest(path, cfg.integer("data.limit"), seed, ex.setup, noise, "train");
            ex.test = image_ingest(test_path, cfg.integer("data.test_limit"), seed, ex.setup, noise, "test");
        } else {
            const Dataset all = image_ingest(path, cfg.integer("data.limit"), seed, ex.setup, noise, "all");
            const Index test = positive_index(cfg, "data.test_size");
            if (test >= all.size()) {
                throw ConfigError("data.test_size: " + std::to_string(test) + " leaves no training images out of " +
                                  std::to_string(all.size()));
            }
            const Index tr = all.size() - test;
            ex.train.X = select_columns(all.X, 0, tr);
            ex.test.X = select_columns(all.X, tr, test);
            ex.train.Y = form_observations(ex.train.X, ex.setup, noise, seed, "train");
            ex.test.Y = form_observations(ex.test.X, ex.setup, noise, seed, "test");
            ex.train.provenance = ex.test.provenance = all.provenance;
            ex.train.split = "train";
            ex.test.split = "test";
        }
    } else {
        throw ConfigError("data.source: expected 'synthetic' or 'images', got '" + source + "'");
    }
    return ex;
}

NetworkConfig build_network(const RunConfig& cfg, const MeasurementSetup& setup, ModelKind kind, Index N) {
    const Hyper hyper = build_hyper(cfg);
    const std::uint64_t seed = cfg.uint("seed");
    const Index n = setup.n();
    if (kind == ModelKind::admm_dad) {
        if (N < n) throw ConfigError("N must be >= n for ADMM-DAD (got N=" + std::to_string(N) + ")");
        NetworkConfig nc;
        nc.setup = setup;
        nc.hyper = hyper;
        nc.W = xavier_init(N, n, seed);
        nc.kind = kind;
        return nc;
    }
    return make_ista_baseline(setup, hyper, polar_factor(xavier_init(n, n, seed)));
}

TrainConfig build_train_config(const RunConfig& cfg) {
    TrainConfig t;
    t.epochs = static_cast<int>(cfg.integer("train.epochs"));
    t.batch_size = cfg.integer("train.batch_size");
    t.lr = cfg.real("train.lr");
    t.epsilon = cfg.real("train.epsilon");
    if (!cfg.str("train.eval_epsilon").empty()) t.eval_epsilon = cfg.real("train.eval_epsilon");
    t.patience = static_cast<int>(cfg.integer("train.patience"));
    t.warmup_epochs = static_cast<int>(cfg.integer("train.warmup_epochs"));
    t.seed = cfg.uint("seed");
    try {
        t.validate();
    } catch (const InvalidArgument& e) {
        throw ConfigError(e.what());
    }
    return t;
}

int worker_threads() {
    const char* env = std::getenv("UNFOLD_THREADS");
    if (!env || !*env) return 1;
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (*end != '\0' || v < 1) throw ConfigError("UNFOLD_THREADS must be a positive integer");
    return static_cast<int>(std::min<long>(v, 256));
}

void parallel_for(std::size_t count, const std::function<void(std::size_t)>& fn) {
    const std::size_t workers = std::min<std::size_t>(static_cast<std::size_t>(worker_threads()), count);
    if (workers <= 1) {
        for (std::size_t i = 0; i < count; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::vector<std::exception_ptr> errors(count);
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) {
        pool.emplace_back([&] {
            for (std::size_t i = next++; i < count; i = next++) {
                try {
                    fn(i);
                } catch (...) {
                    errors[i] = std::current_exception();
                }
            }
        });
    }
    for (auto& t : pool) t.join();
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
}

// ---------------------------------------------------------------------------
// Output helpers

namespace {

fs::path out_dir(const RunConfig& cfg) {
    fs::path dir(cfg.str("out"));
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw IoError("cannot create output directory '" + dir.string() + "': " + ec.message());
    return dir;
}

void write_outputs(const fs::path& dir, const RunConfig& cfg, const json& summary, const std::string& name) {
    write_text_file((dir / "config.resolved").string(), cfg.echo());
    write_text_file((dir / (name + ".json")).string(), summary.dump(2) + "\n");
}

json metrics_json(const EpochMetrics& e) {
    return json{{"epoch", e.epoch},
                {"epsilon", e.epsilon},
                {"clean_test_mse", e.clean_test_mse},
                {"adv_test_mse", e.adv_test_mse},
                {"adv_train_mse", e.adv_train_mse},
                {"adv_ege", e.adv_ege}};
}

ModelKind model_kind(const RunConfig& cfg) {
    try {
        return model_kind_from_string(cfg.str("model"));
    } catch (const InvalidArgument& e) {
        throw ConfigError(std::string("model: ") + e.what());
    }
}

std::string checkpoint_path(const RunConfig& cfg) {
    const std::string p = cfg.str("checkpoint");
    if (!p.empty()) return p;
    return (fs::path(cfg.str("out")) / "checkpoint.unfd").string();
}

TrainedModel load_model(const RunConfig& cfg) {
    const std::string path = checkpoint_path(cfg);
    try {
        return TrainedModel::from_checkpoint(load_checkpoint(path));
    } catch (const FormatError& e) {
        throw IoError("checkpoint '" + path + "': " + e.what());
    }
}

std::vector<double> epsilon_list(const RunConfig& cfg) {
    auto eps = cfg.real_list("epsilons");
    for (double e : eps)
        if (!(e >= 0.0)) throw ConfigError("epsilons: attack levels must be >= 0");
    return eps;
}

int sweep_eval(const RunConfig& cfg, std::ostream& out, const std::vector<double>& eps, const std::string& name) {
    const TrainedModel model = load_model(cfg);
    const Experiment ex = build_experiment(cfg, &model.net.setup.A);
    const MetricsRecord rec = evaluate(model, ex.test.X, ex.test.Y, eps);
    const fs::path dir = out_dir(cfg);
    write_metrics((dir / (name + ".csv")).string(), rec);
    json summary{{"command", name}, {"checkpoint", checkpoint_path(cfg)}, {"epoch", model.epoch}};
    summary["rows"] = json::array();
    for (const auto& r : rec.rows) summary["rows"].push_back(metrics_json(r));
    write_outputs(dir, cfg, summary, name + "_summary");
    out << metrics_csv(rec);
    return exit_ok;
}

}  // namespace

// ---------------------------------------------------------------------------
// Subcommands

int cmd_train(const RunConfig& cfg, std::ostream& out) {
    const ModelKind kind = model_kind(cfg);
    const Experiment ex = build_experiment(cfg);
    const NetworkConfig nc = build_network(cfg, ex.setup, kind, positive_index(cfg, "N"));
    const TrainConfig tc = build_train_config(cfg);
    const fs::path dir = out_dir(cfg);

    const Network untrained(nc);
    const double init_mse = mean_squared_error(untrained.decode(ex.test.Y), ex.test.X);
    const TrainResult res = train({ex.train.X, ex.train.Y, ex.test.X, ex.test.Y}, nc, tc, [&](const EpochMetrics& e) {
        out << "epoch " << e.epoch << "  clean_test " << format_double(e.clean_test_mse) << "  adv_test "
            << format_double(e.adv_test_mse) << "  adv_train " << format_double(e.adv_train_mse) << "  ege "
            << format_double(e.adv_ege) << "\n";
    });

    save_checkpoint((dir / "checkpoint.unfd").string(), res.best.to_checkpoint());
    write_metrics((dir / "metrics.csv").string(), res.history);
    json summary{{"command", "train"},
                 {"model", to_string(kind)},
                 {"seed", tc.seed},
                 {"epochs_run", res.epochs_run},
                 {"stopped_early", res.stopped_early},
                 {"best_epoch", res.best.epoch},
                 {"untrained_clean_test_mse", init_mse},
                 {"train_epsilon", tc.epsilon},
                 {"eval_epsilon", tc.test_epsilon()}};
    for (const auto& r : res.history.rows)
        if (r.epoch == res.best.epoch) summary["best"] = metrics_json(r);
    summary["files"] = {"checkpoint.unfd", "metrics.csv", "config.resolved", "summary.json"};
    write_outputs(dir, cfg, summary, "summary");
    out << "best epoch " << res.best.epoch << " written to " << (dir / "checkpoint.unfd").string() << "\n";
    return exit_ok;
}

int cmd_eval(const RunConfig& cfg, std::ostream& out) {
    const TrainedModel model = load_model(cfg);
    return sweep_eval(cfg, out, {model.train.test_epsilon()}, "eval");
}

int cmd_attack_sweep(const RunConfig& cfg, std::ostream& out) { return sweep_eval(cfg, out, epsilon_list(cfg), "attack_sweep"); }

int cmd_bounds(const RunConfig& cfg, std::ostream& out) {
    TheoryInputs in;
    std::string mode;
    if (cfg.is_set("theory.alpha")) {
        mode = "explicit";
        const char* required[] = {"theory.beta", "theory.normA", "theory.normYF", "theory.s",
                                  "theory.B_in", "theory.B_out", "theory.kappa"};
        for (const char* k : required)
            if (cfg.str(k).empty()) throw ConfigError(std::string(k) + ": required with explicit theory inputs");
        in.alpha = cfg.real("theory.alpha");
        in.beta = cfg.real("theory.beta");
        in.normA = cfg.real("theory.normA");
        in.normAtA = cfg.str("theory.normAtA").empty() ? in.normA * in.normA : cfg.real("theory.normAtA");
        in.normYF = cfg.real("theory.normYF");
        in.s = cfg.real("theory.s");
        in.B_in = cfg.real("theory.B_in");
        in.B_out = cfg.real("theory.B_out");
        in.kappa = cfg.real("theory.kappa");
        in.rho = cfg.real("rho");
        in.lambda_l1 = cfg.real("lambda");
        in.N = cfg.real("N");
        in.n = cfg.real("n");
        in.m = cfg.real("m");
        in.L = static_cast<int>(cfg.integer("layers"));
        in.epsilon = cfg.str("theory.epsilon").empty() ? cfg.real("train.epsilon") : cfg.real("theory.epsilon");
    } else {
        mode = "estimated";
        const TrainedModel model = load_model(cfg);
        const Experiment ex = build_experiment(cfg, &model.net.setup.A);
        AttackSpec spec;
        spec.epsilon = cfg.str("theory.epsilon").empty() ? model.train.test_epsilon() : cfg.real("theory.epsilon");
        spec.kappa_floor = cfg.real("attack.kappa_floor");
        const EstimatedInputs est = estimate_theory_inputs(Network(model.net), ex.test.X, ex.test.Y, spec);
        in = est.inputs;
        if (!est.valid) {
            for (const auto& issue : est.issues) {
                if (issue.rfind("gamma undefined", 0) == 0) throw GammaUndefined(issue);
            }
            throw ConfigError("bounds unavailable for this checkpoint: " + est.issues.front());
        }
    }
    in.zeta = cfg.real("theory.zeta");
    try {
        in.validate();
    } catch (const InvalidArgument& e) {
        throw ConfigError(e.what());
    }

    std::vector<int> Ls;
    for (auto v : cfg.int_list("sweep.layers")) Ls.push_back(static_cast<int>(v));
    std::vector<double> Ns;
    for (auto v : cfg.int_list("sweep.redundancy")) Ns.push_back(static_cast<double>(v));
    const std::vector<double> eps = cfg.is_set("epsilons") ? epsilon_list(cfg) : std::vector<double>{};

    const GeneralizationBound point = generalization_bound(in);
    const LogReal lip_inline = lipschitz_constant_inline(in);
    const auto rows = growth_curve(in, Ls, Ns, eps);
    const fs::path dir = out_dir(cfg);
    write_text_file((dir / "bounds.csv").string(), growth_csv(rows));
    json summary{{"command", "bounds"},
                 {"inputs", mode},
                 {"L", in.L},
                 {"N", in.N},
                 {"epsilon", in.epsilon},
                 {"gamma", gamma(in)},
                 {"Lip_log", point.lip.log()},
                 {"Lip_inline_log", lip_inline.log()},
                 {"Lip_over_inline", std::exp(point.lip.log() - lip_inline.log())},
                 {"ARC", point.arc},
                 {"tail", point.tail},
                 {"bound", point.bound},
                 {"rows", rows.size()}};
    write_outputs(dir, cfg, summary, "bounds_summary");
    out << "generalization bound " << format_double(point.bound) << " (log Lip " << format_double(point.lip.log())
        << ", ARC " << format_double(point.arc) << ", tail " << format_double(point.tail) << ")\n"
        << "Lip / inline K' form " << format_double(std::exp(point.lip.log() - lip_inline.log())) << "\n";
    return exit_ok;
}

int cmd_compare_baseline(const RunConfig& cfg, std::ostream& out) {
    const Experiment ex = build_experiment(cfg);
    const std::vector<double> eps = epsilon_list(cfg);
    if (eps.empty()) throw ConfigError("epsilons: at least one attack level is required");
    const ModelKind kinds[] = {ModelKind::admm_dad, ModelKind::ista_baseline};
    const Index N = positive_index(cfg, "N");
    TrainConfig base = build_train_config(cfg);

    struct Job {
        ModelKind kind;
        double eps;
        EpochMetrics metrics;
        int best_epoch = 0;
    };
    std::vector<Job> jobs;
    for (ModelKind k : kinds)
        for (double e : eps) jobs.push_back({k, e, {}, 0});

    const TrainData data{ex.train.X, ex.train.Y, ex.test.X, ex.test.Y};
    parallel_for(jobs.size(), [&](std::size_t i) {
        Job& job = jobs[i];
        TrainConfig tc = base;
        tc.epsilon = job.eps;
        tc.eval_epsilon = job.eps;
        const NetworkConfig nc = build_network(cfg, ex.setup, job.kind, N);
        const TrainResult res = train(data, nc, tc);
        job.metrics = evaluate(res.best, ex.test.X, ex.test.Y, {job.eps}).rows.front();
        job.best_epoch = res.best.epoch;
    });

    std::string csv = "model,epsilon,clean_test_mse,adv_test_mse,adv_train_mse,adv_ege,best_epoch\n";
    json summary{{"command", "compare-baseline"}, {"rows", json::array()}};
    for (const Job& j : jobs) {
        csv += std::string(to_string(j.kind)) + "," + format_double(j.eps) + "," +
               format_double(j.metrics.clean_test_mse) + "," + format_double(j.metrics.adv_test_mse) + "," +
               format_double(j.metrics.adv_train_mse) + "," + format_double(j.metrics.adv_ege) + "," +
               std::to_string(j.best_epoch) + "\n";
        json row = metrics_json(j.metrics);
        row["model"] = to_string(j.kind);
        summary["rows"].push_back(row);
    }
    const fs::path dir = out_dir(cfg);
    write_text_file((dir / "compare.csv").string(), csv);
    write_outputs(dir, cfg, summary, "compare_summary");
    out << csv;
    return exit_ok;
}

namespace {

struct CheckOutcome {
    double max_error = 0.0;
    std::string worst;
    int excluded = 0;
    int checked = 0;
};

void merge(CheckOutcome& into, const FiniteDiffResult& r, const std::string& label) {
    if (r.excluded) {
        ++into.excluded;
        return;
    }
    ++into.checked;
    if (r.max_rel_error >= into.max_error) {
        into.max_error = r.max_rel_error;
        into.worst = label + "[" + std::to_string(r.worst_coordinate) + "]";
    }
}

double column_loss(const Network& net, const Vector& y, const Vector& x) {
    return (net.decode(y) - x).squaredNorm();
}

Network rebuild(const NetworkConfig& base, const Matrix& W, double theta) {
    NetworkConfig c = base;
    c.W = W;
    if (c.kind == ModelKind::ista_baseline) c.ista_theta = theta;
    return Network(c);
}

}  // namespace

int cmd_gradcheck(const RunConfig& cfg, std::ostream& out) {
    const Index n = positive_index(cfg, "gradcheck.n");
    const Index m = positive_index(cfg, "gradcheck.m");
    const Index N = positive_index(cfg, "gradcheck.N");
    const int L = static_cast<int>(positive_index(cfg, "gradcheck.layers"));
    const Index s = positive_index(cfg, "gradcheck.samples");
    const double h = cfg.real("gradcheck.h");
    const double tol_in = cfg.real("gradcheck.tol_input");
    const double tol_par = cfg.real("gradcheck.tol_param");
    const bool corrupt = cfg.flag("gradcheck.corrupt");
    const std::uint64_t seed = cfg.uint("seed");
    const double band = 1e-7;
    if (m >= n) throw ConfigError("gradcheck.m must be < gradcheck.n");

    const MeasurementSetup setup = gaussian_measurement(m, n, seed, Normalization::scale_inv_sqrt_m);
    RandomStreams rs(seed);
    auto rng = rs.stream("gradcheck");
    const Matrix X = gaussian_matrix(n, s, rng) / std::sqrt(static_cast<double>(n));
    const Matrix Y = setup.A * X + 0.1 * gaussian_matrix(m, s, rng);
    Hyper hyper;
    hyper.rho = cfg.real("rho");
    hyper.lambda = cfg.real("gradcheck.lambda");
    hyper.layers = L;

    std::vector<NetworkConfig> nets;
    NetworkConfig admm;
    admm.setup = setup;
    admm.hyper = hyper;
    admm.W = xavier_init(N, n, seed) + Matrix::Identity(N, n);
    nets.push_back(admm);
    nets.push_back(make_ista_baseline(setup, hyper, polar_factor(xavier_init(n, n, seed + 1))));
    nets.back().ista_theta = hyper.lambda * nets.back().ista_step;

    bool ok = true;
    for (const NetworkConfig& nc : nets) {
        const Network net(nc);
        const std::string kind = to_string(nc.kind);
        const ForwardTape tape = forward_with_tape(Y, net);
        Matrix gin = grad_input(tape, X, net);
        ParamGrad gp = grad_param(tape, Y, X, net);
        if (corrupt) {
            gin(0, 0) += 1e-2 * std::max(1.0, gin.cwiseAbs().maxCoeff());
            gp.dW(0, 0) += 1e-2 * std::max(1.0, gp.dW.cwiseAbs().maxCoeff());
        }

        CheckOutcome in_res;
        for (Index i = 0; i < s; ++i) {
            const Vector x = X.col(i);
            auto f = [&](const Vector& y) { return column_loss(net, y, x); };
            auto margin = [&](const Vector& y) { return forward_with_tape(Matrix(y), net).kink_margin(); };
            merge(in_res, finite_diff_check(f, Y.col(i), gin.col(i), h, margin, band), "dY col " + std::to_string(i));
        }

        CheckOutcome par_res;
        const Matrix W0 = nc.W;
        const double theta0 = nc.ista_theta;
        Vector w0 = Eigen::Map<const Vector>(W0.data(), W0.size());
        auto fW = [&](const Vector& w) {
            const Network nn = rebuild(nc, Eigen::Map<const Matrix>(w.data(), W0.rows(), W0.cols()), theta0);
            return mean_squared_error(nn.decode(Y), X);
        };
        auto mW = [&](const Vector& w) {
            const Network nn = rebuild(nc, Eigen::Map<const Matrix>(w.data(), W0.rows(), W0.cols()), theta0);
            return forward_with_tape(Y, nn).kink_margin();
        };
        merge(par_res, finite_diff_check(fW, w0, Eigen::Map<const Vector>(gp.dW.data(), gp.dW.size()), h, mW, band), "dW");
        if (nc.kind == ModelKind::ista_baseline) {
            Vector t0(1);
            t0[0] = theta0;
            Vector gt(1);
            gt[0] = gp.dtheta;
            auto ft = [&](const Vector& t) { return mean_squared_error(rebuild(nc, W0, t[0]).decode(Y), X); };
            auto mt = [&](const Vector& t) { return forward_with_tape(Y, rebuild(nc, W0, t[0])).kink_margin(); };
            merge(par_res, finite_diff_check(ft, t0, gt, h * 1e-3, mt, band), "dtheta");
        }

        const bool in_ok = in_res.max_error <= tol_in;
        const bool par_ok = par_res.max_error <= tol_par;
        out << kind << " grad_input max_rel_error " << format_double(in_res.max_error) << " (worst " << in_res.worst
            << ", excluded " << in_res.excluded << "/" << s << ") " << (in_ok ? "ok" : "FAIL") << "\n";
        out << kind << " grad_param max_rel_error " << format_double(par_res.max_error) << " (worst " << par_res.worst
            << ", excluded " << par_res.excluded << ") " << (par_ok ? "ok" : "FAIL") << "\n";
        ok = ok && in_ok && par_ok;
    }
    return ok ? exit_ok : exit_gradcheck;
}

// ---------------------------------------------------------------------------

int cli_main(int argc, char** argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"Deep-unfolded ADMM decoder: adversarial training, attacks and generalization bounds", "unfold"};
    app.require_subcommand(1);
    std::string config_path, out_path, checkpoint, epsilons, layers, redundancy;
    std::uint64_t seed = 0;
    std::vector<std::string> overrides;
    app.add_option("--config", config_path, "flat key = value config file");
    auto* seed_opt = app.add_option("--seed", seed, "master seed");
    app.add_option("--out", out_path, "output directory");
    app.add_option("--checkpoint", checkpoint, "checkpoint file for eval, attack-sweep and bounds");
    app.add_option("--epsilons", epsilons, "comma-separated attack levels");
    app.add_option("--layers", layers, "comma-separated layer counts (bounds sweep)");
    app.add_option("--redundancy", redundancy, "comma-separated N values (bounds sweep)");
    app.add_option("--set", overrides, "key=value override, repeatable");

    const std::pair<const char*, const char*> subs[] = {
        {"train", "adversarially train a network"},
        {"eval", "evaluate a checkpoint at its training attack level"},
        {"attack-sweep", "evaluate a checkpoint over a list of attack levels"},
        {"bounds", "evaluate the generalization bound and its growth curve"},
        {"compare-baseline", "train ADMM-DAD and the ISTA baseline side by side"},
        {"gradcheck", "finite-difference check of the hand-derived gradients"},
    };
    app.fallthrough();
    for (const auto& [name, help] : subs) app.add_subcommand(name, help);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e, out, err);
        return rc == 0 ? exit_ok : exit_usage;
    }
    const std::string sub = app.get_subcommands().front()->get_name();

    try {
        RunConfig cfg = config_path.empty() ? RunConfig() : RunConfig::load(config_path);
        for (const auto& kv : overrides) {
            const auto eq = kv.find('=');
            if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + kv + "'");
            cfg.set(kv.substr(0, eq), kv.substr(eq + 1));
        }
        if (*seed_opt) cfg.set("seed", std::to_string(seed));
        if (!out_path.empty()) cfg.set("out", out_path);
        if (!checkpoint.empty()) cfg.set("checkpoint", checkpoint);
        if (!epsilons.empty()) cfg.set("epsilons", epsilons);
        if (!layers.empty()) cfg.set("sweep.layers", layers);
        if (!redundancy.empty()) cfg.set("sweep.redundancy", redundancy);
        cfg.resolve_paths(fs::current_path().string());
        worker_threads();  // validate the environment early

        if (sub == "train") return cmd_train(cfg, out);
        if (sub == "eval") return cmd_eval(cfg, out);
        if (sub == "attack-sweep") return cmd_attack_sweep(cfg, out);
        if (sub == "bounds") return cmd_bounds(cfg, out);
        if (sub == "compare-baseline") return cmd_compare_baseline(cfg, out);
        return cmd_gradcheck(cfg, out);
    } catch (const ConfigError& e) {
        err << "config error: " << e.what() << "\n";
        return exit_config;
    } catch (const TrainingDiverged& e) {
        err << "training diverged: " << e.what() << " (last finite epoch " << e.last_finite_epoch() << ")\n";
        return exit_diverged;
    } catch (const GammaUndefined& e) {
        err << "bounds unavailable: " << e.what() << "\n"
            << "hint: the resolvent constant needs alpha > rho*||A^T A||; lower rho or use a better conditioned W\n";
        return exit_gamma;
    } catch (const IoError& e) {
        err << "io error: " << e.what() << "\n";
        return exit_io;
    } catch (const FormatError& e) {
        err << "io error: " << e.what() << "\n";
        return exit_io;
    } catch (const InvalidArgument& e) {
        err << "config error: " << e.what() << "\n";
        return exit_config;
    } catch (const Error& e) {
        err << "error: " << e.what() << "\n";
        return exit_usage;
    }
}

}  // namespace unfold
