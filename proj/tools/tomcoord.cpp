#include <cstdio>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "tomcoord/runner/pipeline.hpp"

using namespace tomcoord;
using namespace tomcoord::runner;
using nlohmann::json;

namespace {

constexpr int kOk = 0;
constexpr int kIoError = 1;
constexpr int kVerifyFailed = 2;

struct Common {
  std::string config;
  std::string env;
  std::string scale;
  std::string name;
  std::vector<std::string> sets;
  std::int64_t seed = -1;
  bool single_thread = false;
  bool quiet = false;
};

RunConfig resolve(const Common& c) {
  json j = json::object();
  if (!c.config.empty()) {
    j = json::parse(read_file(c.config), nullptr, false);
    if (j.is_discarded()) throw ConfigError("config " + c.config + " is not valid JSON");
  }
  if (!c.env.empty()) j["env"] = c.env == "ref" ? "referential" : c.env == "nav" ? "navigation" : c.env;
  if (!c.scale.empty()) j["scale"] = c.scale;
  if (!c.name.empty()) j["name"] = c.name;
  if (c.seed >= 0) j["seed"] = c.seed;
  if (c.single_thread) j["single_thread"] = true;
  for (const auto& s : c.sets) apply_override(j, s);
  return config_from_json(j);
}

RunContext context(const Common& c) {
  const RunConfig cfg = resolve(c);
  const bool quiet = c.quiet;
  auto ctx = make_context(cfg, [quiet](const std::string& msg) {
    if (!quiet) std::cerr << msg << std::endl;
  });
  json body = to_json(cfg);
  body["config_hash"] = config_hash(cfg);
  write_file(ctx.dir / "config.json", body.dump(1) + "\n");
  return ctx;
}

void print_rows(const std::vector<SummaryRow>& rows) {
  std::printf("%-8s %6s %8s %9s %8s %9s %8s\n", "speaker", "kappa", "sessions", "success", "points", "accuracy",
              "length");
  for (const auto& r : rows) {
    std::printf("%-8s %6g %8zu %9.4f %8.3f %9.4f %8.3f\n", r.speaker.c_str(), r.kappa, r.sessions, r.success, r.points,
                r.accuracy, r.instruction_length);
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Few-shot language coordination experiments"};
  app.require_subcommand(1);
  Common common;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("-c,--config", common.config, "JSON config file");
    sub->add_option("--env", common.env, "referential|navigation (ref|nav)");
    sub->add_option("--scale", common.scale, "desk|paper");
    sub->add_option("--name", common.name, "run name (directory under $TOMCOORD_OUT)");
    sub->add_option("--seed", common.seed, "root seed");
    sub->add_option("--set", common.sets, "override, e.g. --set tom.n_outer=5");
    sub->add_flag("--single-thread", common.single_thread, "run on one thread (bit-reproducible)");
    sub->add_flag("-q,--quiet", common.quiet, "no progress output");
  };

  auto* gen = app.add_subcommand("gen-population", "sample the listener population and its datasets");
  add_common(gen);
  auto* train = app.add_subcommand("train", "train listeners, the speaker or the ToM model");
  add_common(train);
  std::string stage;
  int stop_after = -1;
  train->add_option("stage", stage, "listeners|speaker|tom")
      ->required()
      ->check(CLI::IsMember({"listeners", "speaker", "tom"}));
  train->add_option("--stop-after", stop_after, "tom: stop after this many epochs (resume later)");
  auto* eval = app.add_subcommand("eval", "evaluate speaker kinds on the test listeners");
  add_common(eval);
  auto* ver = app.add_subcommand("verify", "check the mimicry bound and gradients");
  add_common(ver);
  bool sabotage = false;
  ver->add_flag("--sabotage", sabotage, "use freshly initialised ToM parameters");
  auto* plt = app.add_subcommand("plot", "write SVG plots and CSV tables from evaluation results");
  add_common(plt);
  auto* run = app.add_subcommand("run", "every stage in order");
  add_common(run);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kIoError;
  }

  try {
    const RunContext ctx = context(common);
    if (gen->parsed()) {
      gen_population(ctx);
    } else if (train->parsed()) {
      if (stage == "speaker") train_speaker(ctx);
      if (stage == "listeners") train_listeners(ctx);
      if (stage == "tom") train_tom(ctx, stop_after);
    } else if (eval->parsed()) {
      print_rows(evaluate(ctx).rows);
    } else if (ver->parsed()) {
      const auto v = verify(ctx, sabotage);
      for (std::size_t r = 0; r < v.bounds.size(); ++r) {
        const auto& b = v.bounds[r];
        std::printf("rep %zu: eps %.6g delta %.6g (p5 %.6g) lhs %.6g rhs %.6g %s; pinsker %zu/%zu ok\n", r, b.epsilon,
                    b.delta, b.delta_p5, b.lhs, b.rhs, b.holds ? "holds" : "FAILS",
                    v.pinsker[r].pairs - v.pinsker[r].violations, v.pinsker[r].pairs);
      }
      std::printf("grad check: %zu programs, max rel err %.3g\n", v.grad.programs, v.grad.max_rel_err);
      if (!v.passed()) return kVerifyFailed;
    } else if (plt->parsed()) {
      for (const auto& p : plot(ctx)) std::printf("%s\n", p.string().c_str());
    } else if (run->parsed()) {
      gen_population(ctx);
      train_speaker(ctx);
      train_listeners(ctx);
      train_tom(ctx);
      print_rows(evaluate(ctx).rows);
      const auto v = verify(ctx);
      plot(ctx);
      if (!v.passed()) return kVerifyFailed;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << std::endl;
    return kIoError;
  }
  return kOk;
}
