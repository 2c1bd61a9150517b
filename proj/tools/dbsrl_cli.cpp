#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"

#include "dbsrl/harness.hpp"
#include "dbsrl/sim.hpp"

using namespace dbsrl;
namespace fs = std::filesystem;

namespace {

struct Options {
  std::string spec = "paper-tiny";
  std::vector<std::string> overrides;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::optional<int> jobs;
  std::vector<std::string> algos;
  std::string figure;
  std::vector<std::string> external;
};

harness::ExperimentSpec resolve(const Options& o) {
  auto j = harness::load_spec_json(o.spec);
  for (const auto& a : o.overrides) harness::apply_override(j, a);
  if (o.seed) j["seeds"] = {*o.seed};
  if (o.out) j["out"] = *o.out;
  if (o.jobs) j["jobs"] = *o.jobs;
  return harness::spec_from_json(j);
}

std::ofstream open_out(const fs::path& path) {
  fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write '" + path.string() + "'");
  return out;
}

void write_json(const fs::path& path, const nlohmann::json& j) { open_out(path) << j.dump(2) << '\n'; }

std::string path_text(const std::vector<int>& path) {
  std::string s;
  for (int c : path) s += (s.empty() ? "" : " ") + (c == sim::kOrigin ? std::string("O") : std::to_string(c));
  return s;
}

int cmd_gen_world(const harness::ExperimentSpec& spec) {
  const fs::path dir = spec.out_dir;
  write_json(dir / "world.json", world::to_json(spec.world));
  write_json(dir / "task.json", world::to_json(spec.task));
  write_json(dir / "realization.json", world::to_json(harness::realization(spec)));
  write_json(dir / "spec.json", spec.resolved);
  std::cout << "wrote world, task, realization and spec to " << dir.string() << '\n';
  return 0;
}

int cmd_train(const harness::ExperimentSpec& spec, const Options& o) {
  std::vector<std::string> algos = o.algos;
  if (algos.empty()) algos = {spec.algorithm};
  for (const auto& a : algos)
    if (a != "vdrl" && a != "iac") throw ConfigError("train runs vdrl or iac, not '" + a + "'");
  const auto runs = harness::run_many(spec, algos);
  for (const auto& r : runs) {
    std::cout << r.algo << " seed " << r.seed << ": final G " << r.final_utility << ", greedy G "
              << r.greedy_utility << ", returned home " << r.episodes_home << '/' << r.episodes
              << '\n';
  }
  return 0;
}

int cmd_meta_train(const harness::ExperimentSpec& spec) {
  for (auto seed : spec.seeds) {
    const auto run = harness::run_meta(spec, seed);
    const fs::path dir = fs::path(spec.out_dir) / "meta" / ("seed-" + std::to_string(seed));
    auto out = open_out(dir / "meta_history.csv");
    harness::write_preamble(out, spec);
    meta::write_history_header(out);
    meta::write_history(out, spec.name, seed, run.meta.history);
    approx::save_checkpoint((dir / "meta_init.ckpt").string(), run.meta.params);
    approx::save_checkpoint((dir / "random_init.ckpt").string(), run.random_init);
    std::cout << "meta seed " << seed << ": " << run.meta.history.size() << " iterations -> "
              << dir.string() << '\n';
  }
  return 0;
}

int cmd_eval_adaptation(const harness::ExperimentSpec& spec) {
  const auto records = harness::eval_adaptation(spec);
  auto out = open_out(fs::path(spec.out_dir) / "adaptation.csv");
  harness::write_preamble(out, spec);
  out << "init,seed,task,g_star,iterations\n";
  for (const auto& r : records)
    out << r.init << ',' << r.seed << ',' << r.task << ',' << r.g_star << ',' << r.iterations << '\n';
  const long budget = spec.eval.max_iterations;
  for (const char* init : {"meta", "pretrain", "random"}) {
    std::cout << init << " median iterations to " << spec.eval.threshold
              << " G*: " << harness::median_iterations(records, init, budget) << '\n';
  }
  return 0;
}

int cmd_oracle(const harness::ExperimentSpec& spec) {
  const auto z = harness::realization(spec);
  sim::EnumerateOptions opts;
  opts.cap = spec.oracle_cap;
  opts.jobs = spec.jobs;
  const auto best = sim::enumerate_optimal(spec.world, z, opts);
  std::cout << "G* " << best.best_utility << " (" << best.best_served << " of " << z.active_count()
            << " active users, " << best.maximizers.size() << " optimal trajectories, "
            << best.evaluated << " evaluated)\n";
  const auto& traj = best.maximizers.front();
  for (std::size_t n = 0; n < traj.paths.size(); ++n)
    std::cout << "DBS " << n << ": O " << path_text(traj.paths[n]) << '\n';
  return 0;
}

int cmd_compare(const harness::ExperimentSpec& spec, const Options& o) {
  std::vector<std::string> algos = o.algos;
  if (algos.empty()) algos = {"vdrl", "iac"};
  auto runs = harness::run_many(spec, algos);
  for (const auto& path : o.external) {
    auto more = harness::load_external_runs(path, static_cast<std::size_t>(spec.train.window));
    runs.insert(runs.end(), more.begin(), more.end());
  }
  std::ostringstream table;
  harness::write_compare_table(table, runs);
  auto out = open_out(fs::path(spec.out_dir) / "compare.txt");
  harness::write_preamble(out, spec);
  out << table.str();
  std::cout << table.str();
  return 0;
}

int cmd_plot_data(const harness::ExperimentSpec& spec, const Options& o) {
  if (o.figure.empty()) throw ConfigError("plot-data needs --figure");
  std::vector<std::string> warnings;
  const auto files =
      harness::emit_plot_data(spec, o.figure, (fs::path(spec.out_dir) / "plots").string(), &warnings);
  for (const auto& f : files) std::cout << f << '\n';
  for (const auto& w : warnings) std::cerr << "warning: " << w << '\n';
  return warnings.empty() ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multi-DBS coverage simulator and learners"};
  app.require_subcommand(1);
  Options o;
  auto common = [&](CLI::App* sub) {
    sub->add_option("--spec", o.spec, "spec file or preset name")->capture_default_str();
    sub->add_option("--override", o.overrides, "dotted key=value override (repeatable)");
    sub->add_option("--seed", o.seed, "run only this seed");
    sub->add_option("--out", o.out, "output directory");
    sub->add_option("--jobs", o.jobs, "worker threads");
    return sub;
  };
  auto* gen = common(app.add_subcommand("gen-world", "write the resolved world and realization"));
  auto* tr = common(app.add_subcommand("train", "train vdrl or iac"));
  tr->add_option("--algo", o.algos, "algorithms (default: spec algorithm)");
  auto* mt = common(app.add_subcommand("meta-train", "meta-train an initialization"));
  auto* ev = common(app.add_subcommand("eval-adaptation", "adaptation speed on held-out tasks"));
  auto* orc = common(app.add_subcommand("oracle", "exhaustive optimum of the realization"));
  auto* cmp = common(app.add_subcommand("compare", "summary table across algorithms"));
  cmp->add_option("--algo", o.algos, "algorithms (default: vdrl iac)");
  cmp->add_option("--external", o.external, "extra metrics CSV from another implementation");
  auto* plot = common(app.add_subcommand("plot-data", "CSV series for one figure"));
  plot->add_option("--figure", o.figure, "fig4 | fig5 | fig7 | fig9 | fig10")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    const auto spec = resolve(o);
    if (gen->parsed()) return cmd_gen_world(spec);
    if (tr->parsed()) return cmd_train(spec, o);
    if (mt->parsed()) return cmd_meta_train(spec);
    if (ev->parsed()) return cmd_eval_adaptation(spec);
    if (orc->parsed()) return cmd_oracle(spec);
    if (cmp->parsed()) return cmd_compare(spec, o);
    if (plot->parsed()) return cmd_plot_data(spec, o);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const NumericError& e) {
    std::cerr << "numeric error: " << e.what() << '\n';
    return 3;
  } catch (const CapExceededError& e) {
    std::cerr << "oracle cap exceeded: " << e.what() << '\n';
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 2;
}
