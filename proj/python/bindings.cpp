// Python bindings for the core operations: tensors in and out as numpy
// float32 arrays of shape (t, c, h, w).

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "spikeir/checkpoint.hpp"
#include "spikeir/config.hpp"
#include "spikeir/data.hpp"
#include "spikeir/distill.hpp"
#include "spikeir/energy.hpp"
#include "spikeir/model.hpp"
#include "spikeir/optim.hpp"

namespace py = pybind11;
using namespace spikeir;

namespace {

using Array = py::array_t<float, py::array::c_style | py::array::forcecast>;

Tensor to_tensor(const Array& a) {
    if (a.ndim() != 4) throw DimensionError("expected a rank-4 array (t, c, h, w)");
    Tensor t({static_cast<int>(a.shape(0)), static_cast<int>(a.shape(1)), static_cast<int>(a.shape(2)),
              static_cast<int>(a.shape(3))});
    std::copy(a.data(), a.data() + t.size(), t.data());
    return t;
}

Array to_array(const Tensor& t) {
    Array a({t.dim(0), t.dim(1), t.dim(2), t.dim(3)});
    std::copy(t.data(), t.data() + t.size(), a.mutable_data());
    return a;
}

// value-level op wrapper: run on a gradient-free tape
template <class Fn>
Array run_op(Fn&& fn) {
    Tape tape(false);
    TensorId out = fn(tape);
    return to_array(tape.val(out));
}

ImageBuffer buffer_from(const Array& a) {
    Tensor t = to_tensor(a);
    if (t.dim(0) != 1) throw DimensionError("expected a single image [1,c,h,w]");
    return tensor_to_image(t);
}

std::vector<ImageBuffer> buffers_from(const std::vector<Array>& arrays) {
    std::vector<ImageBuffer> out;
    out.reserve(arrays.size());
    for (const auto& a : arrays) out.push_back(buffer_from(a));
    return out;
}

StudentConfig student_config_from(const RunConfig& cfg, int image_channels) {
    return cfg.student_config(image_channels);
}

py::dict run_record(const TrainRun& run) {
    py::list epochs;
    for (const auto& e : run.epochs) {
        py::dict d;
        d["epoch"] = e.epoch;
        d["loss_restore"] = e.loss_restore;
        d["loss_kd"] = e.loss_kd;
        d["val_psnr"] = e.val_psnr;
        d["val_ssim"] = e.val_ssim;
        d["mean_fr"] = e.mean_fr;
        d["volt_density"] = e.volt_density;
        epochs.append(d);
    }
    py::dict out;
    out["epochs"] = epochs;
    return out;
}

py::dict report_dict(const EnergyReport& r) {
    py::list rows;
    for (const auto& row : r.rows) {
        py::dict d;
        d["block"] = row.block;
        d["kind"] = row.kind;
        d["op_ac"] = row.op_ac;
        d["op_mac"] = row.op_mac;
        d["fr"] = row.fr;
        d["energy_pj"] = row.energy_pj;
        rows.append(d);
    }
    py::dict out;
    out["rows"] = rows;
    out["total_pj"] = r.total_pj;
    out["T"] = r.time_steps;
    return out;
}

} // namespace

PYBIND11_MODULE(_spikeir, m) {
    m.doc() = "Spiking image restoration: tensor kernels, LIF dynamics, the distillation "
              "trainer and the firing-rate energy model.";

    py::register_exception<DimensionError>(m, "DimensionError", PyExc_ValueError);
    py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
    py::register_exception<ContractError>(m, "ContractError", PyExc_RuntimeError);
    py::register_exception<NumericError>(m, "NumericError", PyExc_ArithmeticError);
    py::register_exception<ParseError>(m, "ParseError", PyExc_ValueError);

    // --- tensor kernels ------------------------------------------------
    m.def("conv2d", [](const Array& x, const Array& k, const Array& b, int stride) {
        return run_op([&](Tape& t) {
            return conv2d(t, t.value(to_tensor(x)), t.value(to_tensor(k)), t.value(to_tensor(b)), stride);
        });
    }, py::arg("x"), py::arg("kernel"), py::arg("bias"), py::arg("stride") = 1);
    m.def("relu", [](const Array& x) {
        return run_op([&](Tape& t) { return relu(t, t.value(to_tensor(x))); });
    });
    m.def("bilinear_resize", [](const Array& x, int h, int w) {
        return run_op([&](Tape& t) { return bilinear_resize(t, t.value(to_tensor(x)), h, w); });
    });
    m.def("channel_avg_pool", [](const Array& x, int out_c) {
        return run_op([&](Tape& t) { return channel_avg_pool(t, t.value(to_tensor(x)), out_c); });
    });
    m.def("encode_direct", [](const Array& x, int t_steps) {
        return run_op([&](Tape& t) { return encode_direct(t, t.value(to_tensor(x)), t_steps); });
    });
    m.def("rdft2", [](const Array& x) {
        Tape tape(false);
        auto [re, im] = rdft2(tape, tape.value(to_tensor(x)));
        return py::make_tuple(to_array(tape.val(re)), to_array(tape.val(im)));
    });

    // --- neuron ----------------------------------------------------------
    py::class_<LifParams>(m, "LifParams")
        .def(py::init<>())
        .def_readwrite("beta", &LifParams::beta)
        .def_readwrite("v_th", &LifParams::v_th)
        .def_readwrite("surrogate_alpha", &LifParams::surrogate_alpha);
    m.def("lif_sequence", [](const Array& currents, const LifParams& p) {
        LifSeqStats stats;
        Tensor spikes = lif_sequence(to_tensor(currents), p, &stats);
        return py::make_tuple(to_array(spikes), stats.firing_rate);
    }, py::arg("currents"), py::arg("params") = LifParams{});
    m.def("surrogate_grad", [](float v, const LifParams& p) { return surrogate_grad(v, p); },
          py::arg("v_pre"), py::arg("params") = LifParams{});

    // --- metrics and data -------------------------------------------------
    m.def("psnr", [](const Array& a, const Array& b) { return psnr(to_tensor(a), to_tensor(b)); });
    m.def("ssim", [](const Array& a, const Array& b) { return ssim(to_tensor(a), to_tensor(b)); });
    m.def("add_gaussian_noise", [](const Array& img, double sigma, std::uint64_t seed) {
        return to_array(image_to_tensor(add_gaussian_noise(buffer_from(img), {sigma, seed})));
    }, py::arg("image"), py::arg("sigma"), py::arg("seed"));
    m.def("load_image", [](const std::string& path) { return to_array(image_to_tensor(load_image(path))); });
    m.def("save_image", [](const std::string& path, const Array& img) {
        save_image(path, buffer_from(img));
    });

    // --- model, training, energy ------------------------------------------
    py::class_<RunConfig>(m, "RunConfig")
        .def(py::init<>())
        .def_readwrite("sigma", &RunConfig::sigma)
        .def_readwrite("epochs", &RunConfig::epochs)
        .def_readwrite("seed", &RunConfig::seed)
        .def_readwrite("levels", &RunConfig::levels)
        .def_readwrite("channels", &RunConfig::channels)
        .def_readwrite("blocks", &RunConfig::blocks)
        .def_readwrite("timesteps", &RunConfig::timesteps)
        .def_readwrite("attention", &RunConfig::attention)
        .def_readwrite("gamma", &RunConfig::gamma)
        .def_readwrite("lambda_freq", &RunConfig::lambda)
        .def_readwrite("kd", &RunConfig::kd)
        .def_readwrite("patch", &RunConfig::patch)
        .def_readwrite("patches_per_image", &RunConfig::patches_per_image)
        .def_readwrite("batch", &RunConfig::batch);
    m.def("parse_config", &parse_config);

    py::class_<ModelGraph>(m, "ModelGraph")
        .def_property_readonly("spiking", [](const ModelGraph& g) { return g.spiking; })
        .def("param_count", &ModelGraph::param_count)
        .def("summary", &ModelGraph::summary, py::arg("h"), py::arg("w"));

    m.def("build_student", [](const RunConfig& cfg, int image_channels, std::uint64_t seed) {
        return build_student(student_config_from(cfg, image_channels), seed);
    }, py::arg("config"), py::arg("image_channels"), py::arg("seed"));
    m.def("build_teacher", [](const RunConfig& cfg, int image_channels, std::uint64_t seed) {
        return build_teacher(cfg.teacher_config(image_channels), seed);
    }, py::arg("config"), py::arg("image_channels"), py::arg("seed"));

    m.def("forward", [](const ModelGraph& g, const Array& image) {
        InferenceResult r = run_model(g, to_tensor(image));
        py::dict taps;
        for (const auto& [stage, t] : r.taps) taps[py::int_(stage)] = to_array(t);
        return py::make_tuple(to_array(r.restored), taps, r.mean_firing_rate);
    }, py::arg("graph"), py::arg("image"));

    m.def("train_student",
          [](ModelGraph& student, ModelGraph* teacher, const RunConfig& cfg,
             const std::vector<Array>& train, const std::vector<Array>& val) {
              if (teacher) teacher->set_requires_grad(false);
              TrainRun run = train_student(student, teacher, cfg.kd_config(), buffers_from(train),
                                           buffers_from(val), cfg.train_options());
              return run_record(run);
          },
          py::arg("student"), py::arg("teacher").none(true), py::arg("config"), py::arg("train"),
          py::arg("val"));
    m.def("train_teacher",
          [](ModelGraph& teacher, const RunConfig& cfg, const std::vector<Array>& train,
             const std::vector<Array>& val) {
              TrainRun run =
                  train_teacher(teacher, buffers_from(train), buffers_from(val), cfg.train_options());
              return run_record(run);
          });

    m.def("save_checkpoint", [](const ModelGraph& g, const std::string& path) {
        save_checkpoint(g, path, "");
    });
    m.def("load_checkpoint", [](ModelGraph& g, const std::string& path) { load_checkpoint(g, path); });

    m.def("block_energy", [](long long op_ac, long long op_mac, double fr, int t_steps) {
        LayerCount c;
        c.op_ac = op_ac;
        c.op_mac = op_mac;
        return block_energy(c, fr, t_steps);
    }, py::arg("op_ac"), py::arg("op_mac"), py::arg("fr"), py::arg("timesteps"));
    m.def("profile_snn", [](const ModelGraph& g, const std::vector<Array>& samples) {
        std::vector<Tensor> tensors;
        for (const auto& a : samples) tensors.push_back(to_tensor(a));
        return report_dict(profile_snn(g, tensors));
    });
    m.def("profile_ann", [](const ModelGraph& g, const Array& sample) {
        return report_dict(profile_ann(g, to_tensor(sample)));
    });

    m.attr("__version__") = "0.1.0";
}
