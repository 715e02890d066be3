// Python bindings for the split fine-tuning core: model construction, SVD
// decomposition, local / split-loopback training, the wire volume and the
// analytic time model.
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "sft/checkpoint.hpp"
#include "sft/decompose.hpp"
#include "sft/perfmodel.hpp"
#include "sft/splitnet.hpp"

namespace py = pybind11;
using namespace sft;

namespace {

Matrix matrix_from_numpy(const py::array_t<float, py::array::c_style | py::array::forcecast>& a) {
    if (a.ndim() != 2) throw std::invalid_argument("expected a 2-D float array");
    Matrix m(static_cast<int>(a.shape(0)), static_cast<int>(a.shape(1)));
    std::memcpy(m.data.data(), a.data(), m.size() * sizeof(float));
    return m;
}

py::array_t<float> matrix_to_numpy(const Matrix& m) {
    py::array_t<float> out({m.rows, m.cols});
    std::memcpy(out.mutable_data(), m.data.data(), m.size() * sizeof(float));
    return out;
}

struct PyModel {
    LayerStack stack;
};

PerfParams params_from_kwargs(double t_edge_layer_ms, double t_cloud_layer_ms, int n_edge_layers,
                              int n_cloud_layers, uint64_t volume_bytes, double bandwidth_bps,
                              std::optional<double> t_comm_override_ms) {
    PerfParams p;
    p.t_edge_layer_ms = t_edge_layer_ms;
    p.t_cloud_layer_ms = t_cloud_layer_ms;
    p.n_edge_layers = n_edge_layers;
    p.n_cloud_layers = n_cloud_layers;
    p.volume_bytes = volume_bytes;
    p.bandwidth_bps = bandwidth_bps;
    p.t_comm_override_ms = t_comm_override_ms;
    return p;
}

PerfMode mode_from_name(const std::string& name) {
    if (name == "naive") return PerfMode::naive;
    if (name == "sl") return PerfMode::sl;
    if (name == "sft") return PerfMode::sft;
    throw std::invalid_argument("mode must be naive, sl or sft");
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Split fine-tuning: SVD-decomposed FFN split across edge and cloud";

    py::class_<ModelConfig>(m, "ModelConfig")
        .def(py::init([](int vocab_size, int seq_len, int d_model, int ffn_dim, int n_blocks,
                         int n_heads, int n_classes) {
                 ModelConfig cfg{vocab_size, seq_len, d_model, ffn_dim, n_blocks, n_heads,
                                 n_classes};
                 cfg.validate();
                 return cfg;
             }),
             py::arg("vocab_size") = 64, py::arg("seq_len") = 16, py::arg("d_model") = 32,
             py::arg("ffn_dim") = 128, py::arg("n_blocks") = 4, py::arg("n_heads") = 2,
             py::arg("n_classes") = 2)
        .def_readonly("vocab_size", &ModelConfig::vocab_size)
        .def_readonly("seq_len", &ModelConfig::seq_len)
        .def_readonly("d_model", &ModelConfig::d_model)
        .def_readonly("ffn_dim", &ModelConfig::ffn_dim)
        .def_readonly("n_blocks", &ModelConfig::n_blocks)
        .def_readonly("n_heads", &ModelConfig::n_heads)
        .def_readonly("n_classes", &ModelConfig::n_classes)
        .def("__repr__", [](const ModelConfig& c) {
            return "ModelConfig(vocab_size=" + std::to_string(c.vocab_size) +
                   ", seq_len=" + std::to_string(c.seq_len) +
                   ", d_model=" + std::to_string(c.d_model) +
                   ", ffn_dim=" + std::to_string(c.ffn_dim) +
                   ", n_blocks=" + std::to_string(c.n_blocks) +
                   ", n_heads=" + std::to_string(c.n_heads) +
                   ", n_classes=" + std::to_string(c.n_classes) + ")";
        });

    py::class_<SplitPlan>(m, "SplitPlan")
        .def(py::init([](int split_layer, int rank, const std::string& residual) {
                 return SplitPlan{split_layer, rank, residual_mode_from_name(residual)};
             }),
             py::arg("split_layer"), py::arg("rank"), py::arg("residual") = "eliminated")
        .def_readonly("split_layer", &SplitPlan::split_layer)
        .def_readonly("rank", &SplitPlan::rank)
        .def_property_readonly(
            "residual", [](const SplitPlan& p) { return residual_mode_name(p.residual_mode); });

    py::class_<OptimConfig>(m, "OptimConfig")
        .def(py::init([](const std::string& algo, float lr, float beta1, float beta2, float eps,
                         float momentum) {
                 OptimConfig o;
                 if (algo == "adam")
                     o.algo = OptimConfig::Algo::adam;
                 else if (algo == "sgd")
                     o.algo = OptimConfig::Algo::sgd;
                 else
                     throw std::invalid_argument("algo must be adam or sgd");
                 o.lr = lr;
                 o.beta1 = beta1;
                 o.beta2 = beta2;
                 o.eps = eps;
                 o.momentum = momentum;
                 return o;
             }),
             py::arg("algo") = "adam", py::arg("lr") = 3e-4f, py::arg("beta1") = 0.9f,
             py::arg("beta2") = 0.999f, py::arg("eps") = 1e-8f, py::arg("momentum") = 0.0f);

    py::class_<TrainMetrics>(m, "TrainMetrics")
        .def_readonly("iteration", &TrainMetrics::iteration)
        .def_readonly("loss", &TrainMetrics::loss)
        .def_readonly("batch_accuracy", &TrainMetrics::batch_accuracy)
        .def_readonly("bytes_up", &TrainMetrics::bytes_up)
        .def_readonly("bytes_down", &TrainMetrics::bytes_down)
        .def_readonly("t_edge_ms", &TrainMetrics::t_edge_ms)
        .def_readonly("t_cloud_ms", &TrainMetrics::t_cloud_ms)
        .def_readonly("t_comm_ms", &TrainMetrics::t_comm_ms)
        .def("__repr__", [](const TrainMetrics& t) {
            return "TrainMetrics(iteration=" + std::to_string(t.iteration) +
                   ", loss=" + std::to_string(t.loss) +
                   ", batch_accuracy=" + std::to_string(t.batch_accuracy) + ")";
        });

    py::class_<Dataset>(m, "Dataset")
        .def_property_readonly("size", [](const Dataset& d) { return d.size(); })
        .def_readonly("seq_len", &Dataset::seq_len)
        .def_readonly("labels", &Dataset::labels)
        .def_readonly("sequences", &Dataset::sequences);

    py::class_<PyModel>(m, "Model")
        .def("clone", [](const PyModel& model) { return PyModel{model.stack}; })
        .def_property_readonly("config", [](const PyModel& model) { return model.stack.cfg; })
        .def_property_readonly("layer_names",
                               [](const PyModel& model) {
                                   std::vector<std::string> names;
                                   for (const auto& layer : model.stack.layers)
                                       names.push_back(layer.name);
                                   return names;
                               })
        .def("parameter", [](PyModel& model, const std::string& full_name) {
            for (auto& [name, p] : model.stack.named_params())
                if (name == full_name) return matrix_to_numpy(p->value);
            throw std::invalid_argument("no parameter named " + full_name);
        })
        .def("forward",
             [](PyModel& model, const py::array_t<float, py::array::c_style |
                                                             py::array::forcecast>& x) {
                 return matrix_to_numpy(model.stack.forward(matrix_from_numpy(x)));
             })
        .def("save", [](const PyModel& model, const std::string& path) {
            save_checkpoint(model.stack, path);
        })
        .def("load", [](PyModel& model, const std::string& path) {
            load_checkpoint(model.stack, path);
        });

    m.def(
        "build_model",
        [](const ModelConfig& cfg, uint64_t seed) {
            Rng rng(seed);
            return PyModel{build_model(cfg, rng)};
        },
        py::arg("config"), py::arg("seed") = 1);

    m.def(
        "decompose_ffn",
        [](const PyModel& model, const SplitPlan& plan) {
            return PyModel{decompose_ffn(model.stack, plan)};
        },
        py::arg("model"), py::arg("plan"),
        "SVD-rewrite of the split block's down-projection into ffn1/ffn2/ffn3");

    m.def(
        "svd",
        [](const py::array_t<float, py::array::c_style | py::array::forcecast>& w) {
            const SvdResult s = svd(matrix_from_numpy(w));
            py::array_t<double> sigma(static_cast<py::ssize_t>(s.sigma.size()));
            std::memcpy(sigma.mutable_data(), s.sigma.data(), s.sigma.size() * sizeof(double));
            return py::make_tuple(matrix_to_numpy(s.u), sigma, matrix_to_numpy(s.v));
        },
        py::arg("w"), "Full SVD (one-sided Jacobi, 64-bit): returns (u, sigma, v)");

    m.def(
        "reconstruction_error",
        [](const py::array_t<float, py::array::c_style | py::array::forcecast>& w, int rank) {
            return reconstruction_error(matrix_from_numpy(w), rank);
        },
        py::arg("w"), py::arg("rank"));

    m.def(
        "gen_majority_task",
        [](int size, const ModelConfig& cfg, uint64_t seed) {
            return gen_majority_task(size, cfg, seed);
        },
        py::arg("size"), py::arg("config"), py::arg("seed") = 1);

    m.def(
        "run_local",
        [](PyModel& model, const Dataset& ds, int iters, const OptimConfig& opt_cfg, int batch,
           uint64_t batch_seed) {
            py::gil_scoped_release release;
            OptimState opt(opt_cfg);
            return run_local(model.stack, ds, iters, opt, batch, batch_seed);
        },
        py::arg("model"), py::arg("dataset"), py::arg("iters"),
        py::arg("opt") = OptimConfig{}, py::arg("batch") = 32, py::arg("batch_seed") = 1);

    m.def(
        "run_split_loopback",
        [](const PyModel& decomposed, const SplitPlan& plan, const Dataset& ds, int iters,
           const OptimConfig& opt_cfg, int batch, uint64_t batch_seed,
           std::optional<double> bandwidth_bps) {
            SplitRunResult res = [&] {
                py::gil_scoped_release release;
                return run_split_loopback(decomposed.stack, plan, ds, iters, opt_cfg, batch,
                                          batch_seed, bandwidth_bps);
            }();
            return py::make_tuple(res.edge, res.cloud);
        },
        py::arg("model"), py::arg("plan"), py::arg("dataset"), py::arg("iters"),
        py::arg("opt") = OptimConfig{}, py::arg("batch") = 32, py::arg("batch_seed") = 1,
        py::arg("bandwidth_bps") = std::nullopt,
        "Algorithm-1 split training over an in-memory transport; returns (edge, cloud) metrics");

    m.def("comm_volume", &comm_volume, py::arg("batch"), py::arg("seq"), py::arg("width"),
          py::arg("bytes_per_elem") = 4);

    m.def(
        "estimate_iter_ms",
        [](const std::string& mode, double t_edge_layer_ms, double t_cloud_layer_ms,
           int n_edge_layers, int n_cloud_layers, uint64_t volume_bytes, double bandwidth_bps,
           std::optional<double> t_comm_override_ms) {
            return estimate_iter_ms(mode_from_name(mode),
                                    params_from_kwargs(t_edge_layer_ms, t_cloud_layer_ms,
                                                       n_edge_layers, n_cloud_layers, volume_bytes,
                                                       bandwidth_bps, t_comm_override_ms));
        },
        py::arg("mode"), py::arg("t_edge_layer_ms"), py::arg("t_cloud_layer_ms") = 0.0,
        py::arg("n_edge_layers") = 0, py::arg("n_cloud_layers") = 0, py::arg("volume_bytes") = 0,
        py::arg("bandwidth_bps") = 0.0, py::arg("t_comm_override_ms") = std::nullopt);

    m.def(
        "breakeven_bandwidth_bps",
        [](double t_naive_ms, double t_edge_layer_ms, double t_cloud_layer_ms, int n_edge_layers,
           int n_cloud_layers, uint64_t volume_bytes) -> std::optional<double> {
            const BreakevenResult r = breakeven_bandwidth(
                params_from_kwargs(t_edge_layer_ms, t_cloud_layer_ms, n_edge_layers,
                                   n_cloud_layers, volume_bytes, 0.0, std::nullopt),
                t_naive_ms);
            if (!r.beneficial) return std::nullopt;
            return r.bandwidth_bps;
        },
        py::arg("t_naive_ms"), py::arg("t_edge_layer_ms"), py::arg("t_cloud_layer_ms"),
        py::arg("n_edge_layers"), py::arg("n_cloud_layers"), py::arg("volume_bytes"),
        "Minimal bandwidth making the split run match local training; None if never beneficial");
}
