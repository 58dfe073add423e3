#include <pybind11/eigen.h>
#include <pybind11/functional.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "milpevo/evalkit.hpp"
#include "milpevo/pipeline.hpp"

namespace py = pybind11;
using namespace milpevo;

namespace {

ParamMap params_from_dict(const py::dict& d) {
  ParamMap out;
  for (const auto& [k, v] : d) {
    const std::string key = py::cast<std::string>(k);
    if (py::isinstance<py::bool_>(v)) out[key] = py::cast<bool>(v);
    else if (py::isinstance<py::int_>(v)) out[key] = py::cast<std::int64_t>(v);
    else if (py::isinstance<py::float_>(v)) out[key] = py::cast<double>(v);
    else if (py::isinstance<py::str>(v)) out[key] = py::cast<std::string>(v);
    else throw Error("config", "unsupported parameter type for '" + key + "'");
  }
  return out;
}

py::dict params_to_dict(const ParamMap& p) {
  py::dict d;
  for (const auto& [k, v] : p) {
    std::visit([&](const auto& x) { d[py::str(k)] = x; }, v);
  }
  return d;
}

PipelineConfig config_from(const py::object& cfg) {
  if (cfg.is_none()) return PipelineConfig{};
  const auto json = py::module_::import("json");
  return PipelineConfig::from_json(py::cast<std::string>(json.attr("dumps")(cfg)));
}

py::dict report_dict(const StageReport& r) {
  py::dict d;
  d["stage"] = r.stage;
  d["manifest_path"] = r.manifest_path;
  d["manifest_hash"] = r.manifest_hash;
  d["summary"] = py::module_::import("json").attr("loads")(r.summary);
  return d;
}

}  // namespace

PYBIND11_MODULE(_milpevo, m) {
  m.doc() = "MILP class generation, solving and learning";

  static py::exception<Error> error(m, "MilpevoError");
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const Error& e) {
      py::object exc = error;
      PyErr_SetObject(exc.ptr(), py::make_tuple(e.code(), e.what()).ptr());
    }
  });

  py::class_<MilpInstance>(m, "MilpInstance")
      .def_property_readonly("n_vars", &MilpInstance::n_vars)
      .def_property_readonly("n_cons", &MilpInstance::n_cons)
      .def_readonly("name", &MilpInstance::name)
      .def("to_mps", [](const MilpInstance& i) { return write_mps(i); });

  m.def("read_mps", [](const std::string& text) { return parse_mps(text); }, py::arg("text"));
  m.def("seed_classes", [] {
    std::vector<std::string> ids;
    for (SeedClass c : kAllSeedClasses) ids.emplace_back(to_string(c));
    return ids;
  });
  m.def("default_params",
        [](const std::string& cls) { return params_to_dict(default_params(parse_seed_class(cls)).params); },
        py::arg("cls"));
  m.def(
      "generate",
      [](const std::string& cls, const py::dict& overrides, std::uint64_t seed) {
        SeedParams sp = default_params(parse_seed_class(cls));
        for (const auto& [k, v] : params_from_dict(overrides)) sp.params[k] = v;
        sp.seed = seed;
        return generate_instance(sp);
      },
      py::arg("cls"), py::arg("params") = py::dict(), py::arg("seed") = 0);

  m.def(
      "solve_lp",
      [](const MilpInstance& inst) {
        const LpSolution s = solve_lp(inst);
        py::dict d;
        d["status"] = std::string(to_string(s.status));
        d["objective"] = s.objective;
        d["primal"] = s.primal;
        d["duals"] = s.duals;
        return d;
      },
      py::arg("instance"));
  m.def(
      "solve_milp",
      [](const MilpInstance& inst, const std::string& rule, double time_limit) {
        SolveOptions o;
        o.rule = parse_branch_rule(rule);
        o.limits.time_seconds = time_limit;
        o.limits.deterministic_time = true;
        const MilpResult r = solve_milp(inst, o);
        py::dict d;
        d["status"] = std::string(to_string(r.status));
        d["objective"] = r.objective ? py::cast(*r.objective) : py::none();
        d["root_lp_objective"] = r.root_lp_objective;
        d["nodes"] = r.nodes_processed;
        d["deterministic_seconds"] = r.deterministic_seconds;
        return d;
      },
      py::arg("instance"), py::arg("rule") = "pseudocost", py::arg("time_limit") = 20.0);
  m.def("integrality_gap", &integrality_gap, py::arg("root"), py::arg("objective"),
        py::arg("clip") = 1.0);

  m.def(
      "param_search_space",
      [](const py::dict& params) {
        py::dict out;
        for (const auto& [k, values] : param_search_space(params_from_dict(params))) {
          py::list l;
          for (const auto& v : values) std::visit([&](const auto& x) { l.append(x); }, v);
          out[py::str(k)] = l;
        }
        return out;
      },
      py::arg("params"));
  m.def(
      "accept",
      [](const py::dict& stats, const std::string& profile) {
        SolveStats s;
        s.solve_time = py::cast<double>(stats["solve_time"]);
        s.presolve_time = py::cast<double>(stats["presolve_time"]);
        s.n_vars = py::cast<double>(stats["n_vars"]);
        s.n_bin_int = py::cast<double>(stats["n_bin_int"]);
        s.n_cons = py::cast<double>(stats["n_cons"]);
        s.n_nodes = py::cast<double>(stats["n_nodes"]);
        s.gap = py::cast<double>(stats["gap"]);
        const AcceptResult r = accept(s, FilterCriteria::profile(profile));
        return py::make_tuple(r.ok, r.reasons);
      },
      py::arg("stats"), py::arg("profile") = "paper");

  m.def("huber_loss", [](double p, double y) { return huber_loss(p, y); });
  m.def("branch_ce_loss", [](const Vec& logits, int expert) { return branch_ce_loss(logits, expert); });
  m.def("contrastive_loss", [](const Mat& a, const Mat& b) { return contrastive_loss(a, b); });
  m.def("text_embed", &text_embed, py::arg("text"), py::arg("dim") = 64);

  m.def("pearson", &pearson);
  m.def("deviation", &deviation);
  m.def("time_improvement", &time_improvement, py::arg("default_times"), py::arg("method_times"),
        py::arg("shift") = 1.0);
  m.def(
      "histogram_similarity",
      [](const std::vector<double>& a, const std::vector<double>& b) {
        const auto s = histogram_similarity(a, b);
        return py::make_tuple(s.correlation, s.intersection, s.chi_square, s.bhattacharyya);
      });

  m.def("default_config", [](const std::string& profile) {
    return py::module_::import("json").attr("loads")(PipelineConfig::defaults(profile).to_json());
  }, py::arg("profile") = "desk");
  m.def("seed_gen", [](const py::object& cfg) { return report_dict(run_seed_gen(config_from(cfg))); },
        py::arg("config") = py::none());
  m.def(
      "evolve",
      [](const py::object& cfg, bool resume) {
        const PipelineConfig c = config_from(cfg);
        auto llm = make_llm(c);
        return report_dict(run_evolve(c, *llm, resume));
      },
      py::arg("config") = py::none(), py::arg("resume") = false);
  m.def("collect", [](const py::object& cfg, const std::string& task) {
    return report_dict(run_collect(config_from(cfg), parse_task(task)));
  }, py::arg("config"), py::arg("task"));
  m.def("train", [](const py::object& cfg, const std::string& task) {
    return report_dict(run_train(config_from(cfg), parse_task(task)));
  }, py::arg("config"), py::arg("task"));
  m.def("evaluate", [](const py::object& cfg, const std::string& task) {
    return report_dict(run_eval(config_from(cfg), parse_task(task)));
  }, py::arg("config"), py::arg("task"));
}
