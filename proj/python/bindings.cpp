#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <sstream>

#include "unfold/commands.hpp"
#include "unfold/reference_solvers.hpp"
#include "unfold/theory_bounds.hpp"

namespace py = pybind11;
using namespace unfold;

namespace {

MeasurementSetup make_setup(const Matrix& A, double noise_std) {
    MeasurementSetup s;
    s.A = A;
    s.noise_std = noise_std;
    return s;
}

}  // namespace

PYBIND11_MODULE(_core, mod) {
    mod.doc() = "Unfolded ADMM decoder with adversarial training and generalization bounds";

    auto base = py::register_exception<Error>(mod, "UnfoldError");
    py::register_exception<InvalidArgument>(mod, "InvalidArgument", base.ptr());
    py::register_exception<ShapeError>(mod, "ShapeError", base.ptr());
    py::register_exception<SingularSystem>(mod, "SingularSystem", base.ptr());
    py::register_exception<GammaUndefined>(mod, "GammaUndefined", base.ptr());
    py::register_exception<QuadratureError>(mod, "QuadratureError", base.ptr());
    py::register_exception<IoError>(mod, "IoError", base.ptr());
    auto fmt = py::register_exception<FormatError>(mod, "FormatError", base.ptr());
    py::register_exception<UnsupportedVersion>(mod, "UnsupportedVersion", fmt.ptr());
    py::register_exception<TrainingDiverged>(mod, "TrainingDiverged", base.ptr());
    py::register_exception<ConfigError>(mod, "ConfigError", base.ptr());

    py::enum_<Normalization>(mod, "Normalization")
        .value("scale_inv_sqrt_m", Normalization::scale_inv_sqrt_m)
        .value("row_orthonormal", Normalization::row_orthonormal)
        .value("none", Normalization::none);
    py::enum_<ModelKind>(mod, "ModelKind")
        .value("admm_dad", ModelKind::admm_dad)
        .value("ista_baseline", ModelKind::ista_baseline);
    py::enum_<SignalModel>(mod, "SignalModel")
        .value("piecewise_constant", SignalModel::piecewise_constant)
        .value("k_sparse", SignalModel::k_sparse);

    py::class_<MeasurementSetup>(mod, "MeasurementSetup")
        .def(py::init(&make_setup), py::arg("A"), py::arg("noise_std") = 0.0)
        .def_readwrite("A", &MeasurementSetup::A)
        .def_readwrite("noise_std", &MeasurementSetup::noise_std)
        .def_readwrite("normalization", &MeasurementSetup::normalization)
        .def_property_readonly("m", &MeasurementSetup::m)
        .def_property_readonly("n", &MeasurementSetup::n)
        .def("validate", &MeasurementSetup::validate);

    py::class_<FrameBounds>(mod, "FrameBounds")
        .def_readonly("alpha", &FrameBounds::alpha)
        .def_readonly("beta", &FrameBounds::beta)
        .def_readonly("near_singular", &FrameBounds::near_singular);

    py::class_<Hyper>(mod, "Hyper")
        .def(py::init([](double rho, double lambda, int layers) {
                 Hyper h;
                 h.rho = rho;
                 h.lambda = lambda;
                 h.layers = layers;
                 return h;
             }),
             py::arg("rho") = 1.0, py::arg("lambda_") = 1e-4, py::arg("layers") = 5)
        .def_readwrite("rho", &Hyper::rho)
        .def_readwrite("lambda_", &Hyper::lambda)
        .def_readwrite("layers", &Hyper::layers)
        .def_property_readonly("threshold", &Hyper::threshold);

    mod.def("soft_threshold", &soft_threshold, py::arg("x"), py::arg("tau"));
    mod.def("spectral_norm", &spectral_norm, py::arg("M"), py::arg("iters") = 5000, py::arg("tol") = 1e-12);
    mod.def("frame_bounds", &frame_bounds, py::arg("W"));

    py::class_<NetworkConfig>(mod, "NetworkConfig")
        .def(py::init([](const MeasurementSetup& setup, const Matrix& W, const Hyper& hyper) {
                 NetworkConfig c;
                 c.setup = setup;
                 c.W = W;
                 c.hyper = hyper;
                 return c;
             }),
             py::arg("setup"), py::arg("W"), py::arg("hyper") = Hyper{})
        .def_readwrite("setup", &NetworkConfig::setup)
        .def_readwrite("hyper", &NetworkConfig::hyper)
        .def_readwrite("W", &NetworkConfig::W)
        .def_readwrite("kind", &NetworkConfig::kind)
        .def_readwrite("ista_theta", &NetworkConfig::ista_theta)
        .def_readwrite("ista_step", &NetworkConfig::ista_step)
        .def("validate", &NetworkConfig::validate);
    mod.def("make_ista_baseline", &make_ista_baseline, py::arg("setup"), py::arg("hyper"), py::arg("W"));

    py::class_<Network>(mod, "Network")
        .def(py::init<NetworkConfig>(), py::arg("config"))
        .def_property_readonly("config", &Network::config)
        .def_property_readonly("layers", &Network::layers)
        .def("decode", &Network::decode, py::arg("Y"))
        .def("set_parameters", &Network::set_parameters, py::arg("W"), py::arg("theta") = 0.0);

    mod.def(
        "intermediate_decode", [](const Matrix& Y, const NetworkConfig& c, int L) { return intermediate_decode(Y, c, L); },
        py::arg("Y"), py::arg("config"), py::arg("layers"));
    mod.def(
        "final_decode", [](const Matrix& Y, const NetworkConfig& c, int L) { return final_decode(Y, c, L); },
        py::arg("Y"), py::arg("config"), py::arg("layers"));
    mod.def(
        "admm_u_trajectory",
        [](const Vector& y, const NetworkConfig& c, int K) {
            return admm_u_trajectory(y, PrecomputedLayer::build(c.setup, c.W, c.hyper), c.hyper, K);
        },
        py::arg("y"), py::arg("config"), py::arg("iterations"));
    mod.def("mean_squared_error", &mean_squared_error, py::arg("Xhat"), py::arg("X"));

    mod.def(
        "grad_input", [](const Matrix& Y, const Matrix& X, const Network& net) { return grad_input(Y, X, net); },
        py::arg("Y"), py::arg("X"), py::arg("net"));
    mod.def(
        "grad_param",
        [](const Matrix& Y, const Matrix& X, const Network& net) {
            const ParamGrad g = grad_param(Y, X, net);
            return py::make_tuple(g.dW, g.dtheta);
        },
        py::arg("Y"), py::arg("X"), py::arg("net"));
    mod.def(
        "fgsm_l2",
        [](const Network& net, const Matrix& Y, const Matrix& X, double eps, double kappa_floor) {
            AttackSpec spec;
            spec.epsilon = eps;
            spec.kappa_floor = kappa_floor;
            return fgsm_l2(net, Y, X, spec);
        },
        py::arg("net"), py::arg("Y"), py::arg("X"), py::arg("epsilon"), py::arg("kappa_floor") = 1e-12);
    mod.def("adversarial_mse", &adversarial_mse, py::arg("net"), py::arg("Y"), py::arg("X"), py::arg("epsilon"),
            py::arg("chunk") = 512);

    mod.def("gaussian_measurement", &gaussian_measurement, py::arg("m"), py::arg("n"), py::arg("seed"),
            py::arg("normalization") = Normalization::scale_inv_sqrt_m);
    py::class_<Dataset>(mod, "Dataset")
        .def_readonly("X", &Dataset::X)
        .def_readonly("Y", &Dataset::Y)
        .def_readonly("split", &Dataset::split)
        .def_readonly("provenance", &Dataset::provenance);
    mod.def(
        "synth_sparse_dataset",
        [](const MeasurementSetup& setup, Index s, Index k, double noise_std, SignalModel model, std::uint64_t seed,
           const std::string& split) {
            SynthParams p;
            p.n = setup.n();
            p.s = s;
            p.k = k;
            p.noise_std = noise_std;
            p.model = model;
            p.seed = seed;
            p.split = split;
            return synth_sparse_dataset(p, setup);
        },
        py::arg("setup"), py::arg("s"), py::arg("k") = 8, py::arg("noise_std") = 1e-2,
        py::arg("model") = SignalModel::piecewise_constant, py::arg("seed") = 0, py::arg("split") = "train");
    mod.def("xavier_init", &xavier_init, py::arg("N"), py::arg("n"), py::arg("seed"));

    py::class_<TrainConfig>(mod, "TrainConfig")
        .def(py::init<>())
        .def_readwrite("epochs", &TrainConfig::epochs)
        .def_readwrite("batch_size", &TrainConfig::batch_size)
        .def_readwrite("lr", &TrainConfig::lr)
        .def_readwrite("epsilon", &TrainConfig::epsilon)
        .def_readwrite("eval_epsilon", &TrainConfig::eval_epsilon)
        .def_readwrite("patience", &TrainConfig::patience)
        .def_readwrite("warmup_epochs", &TrainConfig::warmup_epochs)
        .def_readwrite("seed", &TrainConfig::seed);

    py::class_<EpochMetrics>(mod, "EpochMetrics")
        .def_readonly("epoch", &EpochMetrics::epoch)
        .def_readonly("epsilon", &EpochMetrics::epsilon)
        .def_readonly("clean_test_mse", &EpochMetrics::clean_test_mse)
        .def_readonly("adv_test_mse", &EpochMetrics::adv_test_mse)
        .def_readonly("adv_train_mse", &EpochMetrics::adv_train_mse)
        .def_readonly("adv_ege", &EpochMetrics::adv_ege);

    py::class_<TrainedModel>(mod, "TrainedModel")
        .def_readonly("config", &TrainedModel::net)
        .def_readonly("epoch", &TrainedModel::epoch)
        .def_readonly("adv_train_mse", &TrainedModel::adv_train_mse)
        .def("save", [](const TrainedModel& m, const std::string& path) { save_checkpoint(path, m.to_checkpoint()); })
        .def_static("load", [](const std::string& path) { return TrainedModel::from_checkpoint(load_checkpoint(path)); });

    mod.def(
        "train",
        [](const Matrix& X_train, const Matrix& Y_train, const Matrix& X_test, const Matrix& Y_test,
           const NetworkConfig& cfg, const TrainConfig& tcfg) {
            TrainResult r;
            {
                py::gil_scoped_release release;
                r = train({X_train, Y_train, X_test, Y_test}, cfg, tcfg);
            }
            return py::make_tuple(r.best, r.history.rows, r.stopped_early);
        },
        py::arg("X_train"), py::arg("Y_train"), py::arg("X_test"), py::arg("Y_test"), py::arg("config"),
        py::arg("train_config"));
    mod.def(
        "evaluate",
        [](const TrainedModel& m, const Matrix& X, const Matrix& Y, const std::vector<double>& eps) {
            return evaluate(m, X, Y, eps).rows;
        },
        py::arg("model"), py::arg("X_test"), py::arg("Y_test"), py::arg("epsilons"));

    py::class_<TheoryInputs>(mod, "TheoryInputs")
        .def(py::init<>())
        .def_readwrite("alpha", &TheoryInputs::alpha)
        .def_readwrite("beta", &TheoryInputs::beta)
        .def_readwrite("normA", &TheoryInputs::normA)
        .def_readwrite("normAtA", &TheoryInputs::normAtA)
        .def_readwrite("normYF", &TheoryInputs::normYF)
        .def_readwrite("s", &TheoryInputs::s)
        .def_readwrite("B_in", &TheoryInputs::B_in)
        .def_readwrite("B_out", &TheoryInputs::B_out)
        .def_readwrite("kappa", &TheoryInputs::kappa)
        .def_readwrite("rho", &TheoryInputs::rho)
        .def_readwrite("lambda_l1", &TheoryInputs::lambda_l1)
        .def_readwrite("N", &TheoryInputs::N)
        .def_readwrite("n", &TheoryInputs::n)
        .def_readwrite("m", &TheoryInputs::m)
        .def_readwrite("L", &TheoryInputs::L)
        .def_readwrite("epsilon", &TheoryInputs::epsilon)
        .def_readwrite("zeta", &TheoryInputs::zeta)
        .def("validate", &TheoryInputs::validate)
        .def("__repr__", &TheoryInputs::describe);

    mod.def("gamma", [](const TheoryInputs& in) { return unfold::gamma(in); }, py::arg("inputs"));
    mod.def(
        "output_bound_log", [](const TheoryInputs& in, int k) { return output_bound(in, k).log(); }, py::arg("inputs"),
        py::arg("k"));
    mod.def(
        "lipschitz_log", [](const TheoryInputs& in) { return lipschitz_constant(in).log(); }, py::arg("inputs"));
    mod.def(
        "generalization_bound",
        [](const TheoryInputs& in) {
            const GeneralizationBound b = generalization_bound(in);
            py::dict d;
            d["lip_log"] = b.lip.log();
            d["arc"] = b.arc;
            d["tail"] = b.tail;
            d["bound"] = b.bound;
            return d;
        },
        py::arg("inputs"));
    mod.def(
        "estimate_theory_inputs",
        [](const Network& net, const Matrix& X, const Matrix& Y, double eps) {
            AttackSpec spec;
            spec.epsilon = eps;
            const EstimatedInputs e = estimate_theory_inputs(net, X, Y, spec);
            return py::make_tuple(e.inputs, e.valid, e.issues);
        },
        py::arg("net"), py::arg("X"), py::arg("Y"), py::arg("epsilon"));
    mod.def(
        "growth_csv",
        [](const TheoryInputs& base, const std::vector<int>& Ls, const std::vector<double>& Ns,
           const std::vector<double>& eps) { return growth_csv(growth_curve(base, Ls, Ns, eps)); },
        py::arg("base"), py::arg("layers") = std::vector<int>{}, py::arg("N") = std::vector<double>{},
        py::arg("epsilons") = std::vector<double>{});

    mod.def(
        "cli",
        [](std::vector<std::string> args) {
            args.insert(args.begin(), "unfold");
            std::vector<char*> argv;
            for (auto& a : args) argv.push_back(a.data());
            std::ostringstream out, err;
            int rc;
            {
                py::gil_scoped_release release;
                rc = cli_main(static_cast<int>(argv.size()), argv.data(), out, err);
            }
            return py::make_tuple(rc, out.str(), err.str());
        },
        py::arg("args"), "Runs a command line in process; returns (exit code, stdout, stderr).");
}
