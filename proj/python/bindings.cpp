#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <sstream>

#include "mixpo/checkpoint.hpp"
#include "mixpo/config.hpp"
#include "mixpo/errors.hpp"
#include "mixpo/trainer.hpp"
#include "mixpo/verification.hpp"

namespace py = pybind11;
using namespace mixpo;

namespace {

py::array_t<double> logits_array(const PolicyParams& p) {
  const Table& t = p.table();
  py::array_t<double> out({t.rows(), t.cols()});
  auto view = out.mutable_unchecked<2>();
  for (std::size_t r = 0; r < t.rows(); ++r)
    for (std::size_t c = 0; c < t.cols(); ++c) view(r, c) = t(r, c);
  return out;
}

PolicyParams params_from_array(std::uint32_t vocab, std::uint32_t num_queries, std::uint32_t window,
                               const py::array_t<double, py::array::c_style | py::array::forcecast>& logits) {
  if (logits.ndim() != 2) throw std::invalid_argument("logits must be a 2-d array");
  Table t(static_cast<std::size_t>(logits.shape(0)), static_cast<std::size_t>(logits.shape(1)));
  std::copy(logits.data(), logits.data() + logits.size(), t.flat().begin());
  return PolicyParams(Vocab(vocab), num_queries, window, std::move(t));
}

py::dict record_dict(const IterationRecord& r) {
  py::dict d;
  d["k"] = r.k;
  d["objective"] = r.objective;
  d["j_on"] = r.j_on;
  d["j_off"] = r.j_off;
  d["j_zero"] = r.j_zero;
  d["grad_norm_sq"] = r.grad_norm_sq;
  d["min_grad_norm_sq"] = r.min_grad_norm_sq;
  d["mean_reward"] = r.mean_reward;
  d["l1"] = r.l1;
  d["l2"] = r.l2;
  d["clamp_frac"] = r.clamp_frac;
  d["degenerate_groups"] = r.degenerate_groups;
  return d;
}

}  // namespace

PYBIND11_MODULE(_mixpo, m) {
  m.doc() = "Mixed-policy DAPO on tabular sequence tasks";

  py::register_exception<ParseError>(m, "ParseError", PyExc_ValueError);
  py::register_exception<CapacityError>(m, "CapacityError", PyExc_RuntimeError);
  py::register_exception<NumericalError>(m, "NumericalError", PyExc_ArithmeticError);
  py::register_exception<GuideTrainingError>(m, "GuideTrainingError", PyExc_RuntimeError);

  py::enum_<Mode>(m, "Mode")
      .value("Method1", Mode::Method1)
      .value("Method2", Mode::Method2)
      .value("DapoBaseline", Mode::DapoBaseline);

  py::class_<TaskSpec>(m, "TaskSpec")
      .def_property_readonly("vocab_size", [](const TaskSpec& s) { return s.vocab.size(); })
      .def_readonly("max_len", &TaskSpec::max_len)
      .def_property_readonly("num_queries", [](const TaskSpec& s) { return s.queries.size(); })
      .def_property_readonly("accepted",
                             [](const TaskSpec& s) {
                               std::map<std::uint32_t, std::vector<std::vector<TokenId>>> out;
                               for (const auto& [q, seqs] : s.target_map) out[q].assign(seqs.begin(), seqs.end());
                               return out;
                             })
      .def("to_yaml", &format_task);

  m.def("default_task", &default_task);
  m.def("parse_task", &parse_task, py::arg("text"));
  m.def("load_task", &load_task, py::arg("path"));

  py::class_<PolicyParams>(m, "Policy")
      .def(py::init(&params_from_array), py::arg("vocab_size"), py::arg("num_queries"), py::arg("context_window"),
           py::arg("logits"))
      .def_property_readonly("vocab_size", [](const PolicyParams& p) { return p.vocab().size(); })
      .def_property_readonly("num_queries", &PolicyParams::num_queries)
      .def_property_readonly("context_window", &PolicyParams::context_window)
      .def_property_readonly("logits", &logits_array)
      .def("context_index",
           [](const PolicyParams& p, std::uint32_t query, const std::vector<TokenId>& history) {
             return p.context_index(Query{query, {}}, history);
           },
           py::arg("query"), py::arg("history"))
      .def("__eq__", [](const PolicyParams& a, const PolicyParams& b) { return a == b; });

  m.def("uniform_policy", &uniform_policy, py::arg("task"), py::arg("context_window") = 2);
  m.def("save_checkpoint", &save_checkpoint, py::arg("policy"), py::arg("path"));
  m.def("load_checkpoint", &load_checkpoint, py::arg("path"));
  m.def("expected_reward", &expected_reward, py::arg("task"), py::arg("policy"));
  m.def(
      "monte_carlo_reward",
      [](const TaskSpec& t, const PolicyParams& p, std::size_t n, std::uint64_t seed) {
        const auto e = monte_carlo_reward(t, p, n, seed);
        return py::make_tuple(e.mean, e.standard_error);
      },
      py::arg("task"), py::arg("policy"), py::arg("samples"), py::arg("seed"));
  m.def("pretrain_guide", &pretrain_guide, py::arg("task"), py::arg("target_success") = 0.9,
        py::arg("budget") = 10000, py::arg("seed") = 0, py::arg("context_window") = 2);

  m.def("scale_f", &scale_f, py::arg("x"), py::arg("gamma"));
  m.def("scale_f_prime", &scale_f_prime, py::arg("x"), py::arg("gamma"));
  m.def("on_policy_advantages", [](const std::vector<double>& r) { return on_policy_advantages(r).values; });
  m.def("shared_baseline_advantages", [](const std::vector<double>& off, const std::vector<double>& zero) {
    auto [b, c] = shared_baseline_advantages(off, zero);
    return py::make_tuple(b.values, c.values);
  });
  m.def("theorem1_learning_rate", &theorem1_learning_rate, py::arg("j_opt"), py::arg("j_init"),
        py::arg("lipschitz"), py::arg("sigma"), py::arg("w_upper"), py::arg("iterations"));

  m.def(
      "gradient_check",
      [](const std::string& objective, std::uint64_t seed) {
        for (ObjectiveKind k : kAllObjectiveKinds) {
          if (objective_kind_name(k) != objective) continue;
          const auto inst = make_random_instance({}, MixConfig{}, seed);
          const auto r = check_objective_gradient(k, inst);
          py::dict d;
          d["max_rel_error"] = r.max_rel_error;
          d["max_abs_error"] = r.max_abs_error;
          d["worst_context"] = r.worst_context;
          d["worst_token"] = r.worst_token;
          d["boundary_exclusions"] = inst.boundary_exclusions;
          return d;
        }
        throw std::invalid_argument("unknown objective '" + objective + "'");
      },
      py::arg("objective"), py::arg("seed") = 0,
      "Analytic vs finite-difference gradient on a random instance (J_on, J_off, J_mix1, J_mix, J_mix2).");

  m.def(
      "train",
      [](const std::string& config_yaml, const TaskSpec& task, const PolicyParams* guide, py::object seed,
         py::object iterations) {
        TrainConfig c = parse_config(config_yaml).config;
        if (!seed.is_none()) c.seed = seed.cast<std::uint64_t>();
        if (!iterations.is_none()) c.iterations = iterations.cast<std::size_t>();
        TrainResult r = [&] {
          py::gil_scoped_release release;
          return train(c, task, guide);
        }();
        std::ostringstream csv;
        write_metrics_csv(csv, r.metrics);
        py::list records;
        for (const auto& rec : r.metrics.records) records.append(record_dict(rec));
        py::dict out;
        out["policy"] = r.params;
        out["records"] = records;
        out["final_reward"] = r.metrics.final_reward;
        out["alpha"] = r.metrics.schedule.alpha;
        out["metrics_csv"] = csv.str();
        return out;
      },
      py::arg("config_yaml"), py::arg("task"), py::arg("guide") = nullptr, py::arg("seed") = py::none(),
      py::arg("iterations") = py::none(),
      "Train from the uniform policy; config_yaml uses the run config file schema.");
}
