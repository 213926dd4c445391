// Python bindings: the core operations (byte tokenization, model init /
// forward / checkpoints, loss arithmetic, schedule, improvement metrics,
// per-token analysis helpers, and whole training runs driven by config JSON).
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "distforge/checkpoint.hpp"
#include "distforge/mechanism.hpp"
#include "distforge/sweep.hpp"

namespace py = pybind11;
using namespace distforge;

namespace {

// Translate library errors to ValueError with the category prefix kept.
void translate_error(const Error& e) { throw py::value_error(e.what()); }

struct PyModel {
    ParamSet<float> params;

    py::array_t<float> forward(
        py::array_t<TokenId, py::array::c_style | py::array::forcecast> tokens) {
        if (tokens.ndim() != 2) throw py::value_error("tokens must be [batch, time]");
        const int B = int(tokens.shape(0));
        const int T = int(tokens.shape(1));
        const int V = params.config.vocab_size;
        py::array_t<float> out({B, T, V});
        AlignedVec<float> logits;
        forward_logits(params, tokens.data(), B, T, logits,
                       static_cast<ForwardCache<float>*>(nullptr));
        std::copy(logits.begin(), logits.end(), out.mutable_data());
        return out;
    }
};

double py_lm_loss(py::array_t<double, py::array::c_style | py::array::forcecast> logits,
                  py::array_t<TokenId, py::array::c_style | py::array::forcecast> targets) {
    if (logits.ndim() != 2 || targets.ndim() != 1 || logits.shape(0) != targets.shape(0))
        throw py::value_error("expected logits [rows, vocab] and targets [rows]");
    return lm_loss(logits.data(), targets.data(), logits.shape(0), int(logits.shape(1)));
}

double py_kd_loss(py::array_t<double, py::array::c_style | py::array::forcecast> teacher,
                  py::array_t<double, py::array::c_style | py::array::forcecast> student,
                  double tau) {
    if (teacher.ndim() != 2 || student.ndim() != 2 || teacher.shape(0) != student.shape(0) ||
        teacher.shape(1) != student.shape(1))
        throw py::value_error("expected matching [rows, vocab] logit arrays");
    return kd_loss(teacher.data(), student.data(), teacher.shape(0), int(teacher.shape(1)), tau);
}

py::dict py_train_run(const std::string& config_json, py::bytes corpus,
                      const std::string& checkpoint_out, const std::string& log_out,
                      double held_out_fraction) {
    RunConfig run = run_config_from_json(config_json);
    PoolSet pools = build_pools(std::string(corpus), held_out_fraction, run.data_seed,
                                run.model.context_len);
    ParamSet<float> teacher;
    const ParamSet<float>* teacher_ptr = nullptr;
    if (run.role == Role::distill) {
        teacher = load_checkpoint(run.teacher_checkpoint);
        teacher_ptr = &teacher;
    }
    TrainResult result = train_run(run, pools.train, teacher_ptr);
    if (!checkpoint_out.empty()) save_checkpoint(checkpoint_out, result.params);
    if (!log_out.empty()) write_training_log_csv(log_out, result.log);
    py::dict out;
    out["steps"] = result.steps;
    out["tokens_seen"] = result.tokens_seen;
    out["lm_loss"] = result.log.back().lm_loss;
    out["kd_loss"] = result.log.back().kd_loss;
    out["mixed_loss"] = result.log.back().mixed_loss;
    return out;
}

}  // namespace

PYBIND11_MODULE(_distforge, m) {
    m.doc() = "desk-scale distillation-pretraining lab (C++ core)";
    py::register_exception_translator([](std::exception_ptr p) {
        try {
            if (p) std::rethrow_exception(p);
        } catch (const Error& e) {
            translate_error(e);
        }
    });

    m.def("tokenize", [](py::bytes b) { return tokenize_bytes(std::string(b)); },
          "Byte-level tokenization: token id == byte value");
    m.def("detokenize", [](const std::vector<TokenId>& ids) { return py::bytes(detokenize(ids)); });

    py::class_<ModelConfig>(m, "ModelConfig")
        .def(py::init<>())
        .def_readwrite("hidden_dim", &ModelConfig::hidden_dim)
        .def_readwrite("num_layers", &ModelConfig::num_layers)
        .def_readwrite("mlp_dim", &ModelConfig::mlp_dim)
        .def_readwrite("query_heads", &ModelConfig::query_heads)
        .def_readwrite("kv_heads", &ModelConfig::kv_heads)
        .def_readwrite("head_dim", &ModelConfig::head_dim)
        .def_readwrite("vocab_size", &ModelConfig::vocab_size)
        .def_readwrite("context_len", &ModelConfig::context_len)
        .def_readwrite("rope_base", &ModelConfig::rope_base)
        .def_readwrite("norm_eps", &ModelConfig::norm_eps)
        .def("validate", &ModelConfig::validate)
        .def("param_count", &ModelConfig::param_count)
        .def("to_json", [](const ModelConfig& c) { return model_config_to_json(c); })
        .def_static("from_json", &model_config_from_json);

    py::class_<PyModel>(m, "Model")
        .def_static("init",
                    [](const ModelConfig& cfg, uint64_t seed) {
                        return PyModel{init_params<float>(cfg, seed)};
                    },
                    py::arg("config"), py::arg("seed"))
        .def_static("load", [](const std::string& path) { return PyModel{load_checkpoint(path)}; })
        .def("save", [](const PyModel& mdl, const std::string& path) {
            save_checkpoint(path, mdl.params);
        })
        .def_property_readonly("config", [](const PyModel& mdl) { return mdl.params.config; })
        .def_property_readonly("num_params",
                               [](const PyModel& mdl) { return mdl.params.num_params(); })
        .def("forward", &PyModel::forward, py::arg("tokens"),
             "Causal logits [batch, time, vocab] for int32 tokens [batch, time]");

    m.def("lm_loss", &py_lm_loss, py::arg("logits"), py::arg("targets"));
    m.def("kd_loss", &py_kd_loss, py::arg("teacher_logits"), py::arg("student_logits"),
          py::arg("tau") = 1.0);
    m.def("mixed_loss_value", &mixed_loss_value, py::arg("lm"), py::arg("kd"), py::arg("alpha"));

    m.def("lr_at_step",
          [](int64_t step, int64_t total, double peak, double warmup_frac, double final_frac) {
              return lr_at_step(step, total, LrSchedule{peak, warmup_frac, final_frac});
          },
          py::arg("step"), py::arg("total_steps"), py::arg("peak") = 3e-4,
          py::arg("warmup_frac") = 0.05, py::arg("final_frac") = 0.10);

    m.def("pct_improvement",
          [](double baseline, double value, const std::string& kind) {
              return pct_improvement(baseline, value, metric_kind_from_name(kind));
          },
          py::arg("baseline"), py::arg("value"), py::arg("kind"));
    m.def("aggregate_improvements", &aggregate_improvements);
    m.def("minmax_normalize", &minmax_normalize);

    m.def("desk_edges", [](int vocab_size) {
        const DifficultyEdges e = DifficultyEdges::desk(vocab_size);
        return py::make_tuple(e.e1, e.e2, e.e3);
    });
    m.def("difficulty_bin",
          [](double h, std::tuple<double, double, double> edges) {
              DifficultyEdges e{std::get<0>(edges), std::get<1>(edges), std::get<2>(edges)};
              return std::string(kDifficultyLabels[size_t(difficulty_bin(h, e))]);
          },
          py::arg("entropy"), py::arg("edges"));
    m.def("ls_benefit", &ls_benefit, py::arg("entropy"), py::arg("vocab_size"));
    m.def("categorize_token",
          [](TokenId gt, const std::vector<TokenId>& topk_base,
             const std::vector<TokenId>& topk_teacher) {
              return std::string(
                  kCategoryLabels[size_t(categorize_token(gt, topk_base, topk_teacher))]);
          },
          py::arg("gt"), py::arg("topk_base"), py::arg("topk_teacher"));

    m.def("train_run", &py_train_run, py::arg("config_json"), py::arg("corpus"),
          py::arg("checkpoint_out") = std::string(), py::arg("log_out") = std::string(),
          py::arg("held_out_fraction") = 0.1,
          "Run one full training recipe; returns final step stats");
}
