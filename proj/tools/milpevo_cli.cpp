#include <CLI11.hpp>

#include <iostream>
#include <optional>

#include "json.hpp"
#include "milpevo/pipeline.hpp"

using namespace milpevo;

namespace {

struct Flags {
  std::string config;
  std::string workspace;
  std::optional<std::uint64_t> seed;
  std::string profile;
  std::string llm;
  std::optional<int> levels;
  std::optional<int> k;
  std::optional<double> time_limit;
  std::string task;
  bool resume = false;
  bool quiet = false;
};

PipelineConfig build_config(const Flags& f) {
  nlohmann::json j = nlohmann::json::object();
  if (!f.config.empty()) {
    try {
      j = nlohmann::json::parse(read_file(f.config));
    } catch (const std::exception&) {
      throw Error("config", "cannot read config file " + f.config);
    }
  }
  if (!f.profile.empty()) j["profile"] = f.profile;
  PipelineConfig c = PipelineConfig::from_json(j.dump());
  if (!f.workspace.empty()) c.workspace = f.workspace;
  if (f.seed) c.seed = *f.seed;
  if (!f.llm.empty()) c.llm = f.llm;
  if (f.levels) c.levels = *f.levels;
  if (f.k) c.k = *f.k;
  if (f.time_limit) c.time_limit = *f.time_limit;
  c.validate();
  return c;
}

void print(const StageReport& r) {
  std::cout << r.stage << " manifest " << r.manifest_path << " hash " << r.manifest_hash << "\n"
            << r.summary << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Evolutionary MILP class generation, data collection and learning"};
  app.require_subcommand(1);
  Flags f;
  auto common = [&](CLI::App* sub) {
    sub->add_option("--config", f.config, "JSON config file");
    sub->add_option("--workspace", f.workspace, "Workspace directory (must exist)");
    sub->add_option("--seed", f.seed, "Base random seed");
    sub->add_option("--profile", f.profile, "Filter and training profile")
        ->check(CLI::IsMember({"paper", "desk"}));
    sub->add_option("--time-limit", f.time_limit, "Solver time limit in seconds");
    sub->add_flag("--quiet", f.quiet, "Suppress progress lines");
  };
  auto* seed_gen = app.add_subcommand("seed-gen", "Write seed class records and MPS instances");
  common(seed_gen);
  auto* evolve = app.add_subcommand("evolve", "Generate and filter new classes");
  common(evolve);
  evolve->add_option("--llm", f.llm, "LLM client")->check(CLI::IsMember({"mock", "live"}));
  evolve->add_option("--levels", f.levels, "Total number of levels");
  evolve->add_option("--k", f.k, "Candidates per level");
  evolve->add_flag("--resume", f.resume, "Continue after the levels already in the manifest");
  const std::vector<std::string> tasks = {"gap", "branch", "align"};
  auto* collect = app.add_subcommand("collect", "Solve instances and write a dataset");
  auto* train = app.add_subcommand("train", "Train a model on a dataset");
  auto* eval = app.add_subcommand("eval", "Evaluate a trained model");
  for (auto* sub : {collect, train, eval}) {
    common(sub);
    sub->add_option("--task", f.task, "Learning task")->required()->check(CLI::IsMember(tasks));
  }
  collect->add_option("--llm", f.llm, "LLM client for descriptions")
      ->check(CLI::IsMember({"mock", "live"}));

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  const Logger log = [&](const std::string& line) {
    if (!f.quiet) std::cerr << line << "\n";
  };
  try {
    const PipelineConfig config = build_config(f);
    if (seed_gen->parsed()) {
      print(run_seed_gen(config, log));
    } else if (evolve->parsed()) {
      auto llm = make_llm(config);
      print(run_evolve(config, *llm, f.resume, log));
    } else {
      const Task task = parse_task(f.task);
      if (collect->parsed()) print(run_collect(config, task, log));
      if (train->parsed()) print(run_train(config, task, log));
      if (eval->parsed()) print(run_eval(config, task, log));
    }
  } catch (const Error& e) {
    std::cerr << "error (" << e.code() << "): " << e.what() << "\n";
    return e.code() == "config" ? 2 : 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
