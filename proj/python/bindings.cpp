#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <json.hpp>

#include "rwl/agents/agents.hpp"
#include "rwl/classifier/classifier.hpp"
#include "rwl/demos/dataset.hpp"
#include "rwl/demos/expert.hpp"
#include "rwl/envs/envs.hpp"
#include "rwl/experiments/report.hpp"
#include "rwl/experiments/run.hpp"
#include "rwl/experiments/stats.hpp"
#include "rwl/render/render.hpp"
#include "rwl/rewards/rewards.hpp"

namespace py = pybind11;
using namespace rwl;

namespace {

py::array_t<std::uint8_t> image_to_array(const render::Image& img) {
  py::array_t<std::uint8_t> out({img.height, img.width, 3});
  std::copy(img.pixels.begin(), img.pixels.end(), out.mutable_data());
  return out;
}

render::Image array_to_image(py::array_t<std::uint8_t, py::array::c_style | py::array::forcecast> a) {
  if (a.ndim() != 3 || a.shape(2) != 3) throw std::invalid_argument("image must have shape (H, W, 3)");
  render::Image img(static_cast<int>(a.shape(1)), static_cast<int>(a.shape(0)));
  std::copy(a.data(), a.data() + a.size(), img.pixels.begin());
  return img;
}

std::vector<double> state_vector(const envs::EnvState& s) { return envs::to_vector(s); }

envs::EnvState state_from(envs::TaskId task, const std::vector<double>& v) { return envs::from_vector(task, v); }

render::RenderConfig render_config(int resolution, bool occlude) {
  render::RenderConfig cfg;
  cfg.resolution = resolution;
  cfg.occlude_target = occlude;
  return cfg;
}

py::dict metrics_dict(const clf::ClassifierMetrics& m) {
  py::dict d;
  d["accuracy"] = m.accuracy;
  d["precision"] = m.precision;
  d["recall"] = m.recall;
  d["f1"] = m.f1;
  d["auc"] = m.auc;
  return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Bindings for the rwl reward-learning library";

  py::register_exception<exp::ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<exp::RunDirectoryError>(m, "RunDirectoryError", PyExc_RuntimeError);
  py::register_exception<exp::StatsError>(m, "StatsError", PyExc_ValueError);

  py::enum_<envs::TaskId>(m, "Task")
      .value("Pendulum", envs::TaskId::Pendulum)
      .value("Reacher", envs::TaskId::Reacher)
      .value("Pusher", envs::TaskId::Pusher)
      .value("FetchReach", envs::TaskId::FetchReach);
  m.def("parse_task", [](const std::string& s) { return envs::parse_task(s); });
  m.def("task_name", [](envs::TaskId t) { return std::string(envs::task_name(t)); });
  m.def("action_dim", &envs::action_dim);
  m.def("observation_dim", &envs::observation_dim);

  m.def("reset", [](envs::TaskId task, std::uint64_t seed) { return state_vector(envs::reset(task, seed)); },
        py::arg("task"), py::arg("seed"), "Initial state as a flat vector.");
  m.def(
      "transition",
      [](envs::TaskId task, const std::vector<double>& state, const std::vector<double>& action) {
        return state_vector(envs::transition(state_from(task, state), action));
      },
      py::arg("task"), py::arg("state"), py::arg("action"));
  m.def("observe", [](envs::TaskId t, const std::vector<double>& s) { return envs::observe(state_from(t, s)); });
  m.def("is_success", [](envs::TaskId t, const std::vector<double>& s) { return envs::is_success(state_from(t, s)); });
  m.def("goal_distance",
        [](envs::TaskId t, const std::vector<double>& s) { return envs::goal_distance(state_from(t, s)); });
  m.def("oracle_dense",
        [](envs::TaskId t, const std::vector<double>& s) { return envs::oracle_dense(state_from(t, s)); });
  m.def("oracle_sparse",
        [](envs::TaskId t, const std::vector<double>& s) { return envs::oracle_sparse(state_from(t, s)); });
  m.def("expert_action",
        [](envs::TaskId t, const std::vector<double>& s) { return demos::scripted_expert(state_from(t, s)); });

  py::class_<envs::Environment>(m, "Environment")
      .def(py::init<envs::TaskId, std::uint64_t>(), py::arg("task"), py::arg("seed"))
      .def_property_readonly("task", &envs::Environment::task)
      .def_property_readonly("done", &envs::Environment::done)
      .def_property_readonly("state", [](const envs::Environment& e) { return state_vector(e.state()); })
      .def_property_readonly("observation", [](const envs::Environment& e) { return envs::observe(e.state()); })
      .def(
          "step",
          [](envs::Environment& e, const std::vector<double>& action) {
            const envs::StepResult r = e.step(action);
            py::dict d;
            d["state"] = state_vector(r.state);
            d["terminated"] = r.terminated;
            d["truncated"] = r.truncated;
            d["success_hold"] = r.success_hold;
            d["steps"] = r.steps_elapsed;
            return d;
          },
          py::arg("action"));

  m.def(
      "render",
      [](envs::TaskId t, const std::vector<double>& s, int resolution, bool occlude) {
        return image_to_array(render::render(state_from(t, s), render_config(resolution, occlude)));
      },
      py::arg("task"), py::arg("state"), py::arg("resolution") = 64, py::arg("occlude_target") = false,
      "RGB frame as a uint8 array of shape (R, R, 3).");

  m.def("visual_dense", &rewards::visual_dense);
  m.def("visual_sparse", &rewards::visual_sparse);

  m.def(
      "collect",
      [](envs::TaskId task, int n, std::uint64_t seed, const std::string& split, const std::filesystem::path& out,
         int resolution, bool occlude) {
        demos::DemoSet d =
            demos::collect_labeled(task, n, seed, demos::parse_split(split), render_config(resolution, occlude));
        demos::save(d, out);
        return d.episodes.size();
      },
      py::arg("task"), py::arg("n"), py::arg("seed"), py::arg("split"), py::arg("out"), py::arg("resolution") = 64,
      py::arg("occlude_target") = false, "Collects and auto-labels expert demonstrations into a dataset directory.");

  m.def(
      "train_classifier",
      [](const std::filesystem::path& train_dir, const std::string& arch, int epochs, std::uint64_t seed,
         const std::filesystem::path& out) {
        const demos::DemoSet train = demos::load(train_dir);
        clf::TrainHyper hyper;
        hyper.epochs = epochs;
        hyper.seed = seed;
        clf::Architecture a;
        a.kind = clf::parse_arch(arch);
        a.resolution = train.render.resolution;
        clf::ClassifierModel model;
        {
          py::gil_scoped_release release;
          model = clf::train(clf::ClassifierModel::build(a, seed), train, hyper);
        }
        clf::save_model(model, out);
      },
      py::arg("train"), py::arg("arch"), py::arg("epochs"), py::arg("seed"), py::arg("out"));
  m.def(
      "eval_classifier",
      [](const std::filesystem::path& model, const std::filesystem::path& test_dir) {
        return metrics_dict(clf::evaluate(clf::load_model(model), demos::load(test_dir)));
      },
      py::arg("model"), py::arg("test"));
  m.def(
      "predict",
      [](const std::filesystem::path& model, py::array_t<std::uint8_t> image) {
        return clf::load_model(model).predict(array_to_image(image)).p_success;
      },
      py::arg("model"), py::arg("image"), "Success probability of one frame.");
  m.def("auc", [](const std::vector<double>& s, const std::vector<int>& y) { return clf::auc(s, y); });
  m.def("metrics", [](const std::vector<double>& s, const std::vector<int>& y) {
    return metrics_dict(clf::metrics_from_scores(s, y));
  });

  m.def(
      "gae",
      [](const std::vector<double>& r, const std::vector<double>& v, const std::vector<double>& d, double gamma,
         double lambda, double last_value) {
        const agents::GaeResult g = agents::gae(r, v, d, gamma, lambda, last_value);
        return py::make_tuple(g.advantages, g.returns);
      },
      py::arg("rewards"), py::arg("values"), py::arg("dones"), py::arg("gamma"), py::arg("lam"),
      py::arg("last_value") = 0.0, "Returns (advantages, returns).");

  m.def(
      "wilcoxon",
      [](const std::vector<double>& a, const std::vector<double>& b, const std::string& alternative) {
        if (a.size() != b.size()) throw exp::StatsError("samples differ in length");
        std::vector<std::pair<double, double>> pairs;
        for (std::size_t i = 0; i < a.size(); ++i) pairs.emplace_back(a[i], b[i]);
        const exp::WilcoxonResult w = exp::wilcoxon_signed_rank(pairs, exp::parse_alternative(alternative));
        py::dict d;
        d["statistic"] = w.statistic;
        d["p"] = w.p;
        d["n"] = w.n;
        d["exact"] = w.exact;
        return d;
      },
      py::arg("a"), py::arg("b"), py::arg("alternative") = "greater");

  m.def(
      "train_agent",
      [](const std::string& config_json, const std::filesystem::path& out, bool force) {
        const exp::RunConfig cfg = exp::run_config_from_json(nlohmann::json::parse(config_json), {});
        exp::RunOptions opts;
        opts.force = force;
        exp::RunResult r;
        {
          py::gil_scoped_release release;
          r = exp::run_training(cfg, out, opts);
        }
        py::dict d;
        d["success_rate"] = r.eval.success_rate;
        d["avg_length"] = r.eval.avg_length;
        d["return_mean"] = r.eval.return_mean;
        return d;
      },
      py::arg("config_json"), py::arg("out"), py::arg("force") = false,
      "Trains and evaluates one run from a JSON run config.");
  m.def(
      "evaluate_run",
      [](const std::filesystem::path& run, int episodes, std::uint64_t seed) {
        exp::RunConfig cfg = exp::load_run_config(run / "config.json");
        cfg.seed = seed;
        const exp::EvalReport rep = exp::evaluate_checkpoint(run / "agent.bin", cfg, episodes);
        return py::make_tuple(rep.success_rate, rep.avg_length);
      },
      py::arg("run"), py::arg("episodes"), py::arg("seed"), "Returns (success_rate, avg_length).");
}
