#include "tomcoord/runner/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <sstream>
#include <thread>

#include "tomcoord/analysis/report.hpp"
#include "tomcoord/util/parallel.hpp"

namespace tomcoord::runner {

using nlohmann::json;
using coordination::SessionResult;
using coordination::SpeakerKind;

RunContext make_context(const RunConfig& cfg, std::function<void(const std::string&)> log) {
  RunContext ctx;
  ctx.cfg = cfg;
  ctx.dir = run_dir(cfg);
  if (log) ctx.log = std::move(log);
  const unsigned hw = std::max(1u, std::thread::hardware_concurrency());
  set_thread_count(cfg.single_thread ? 1 : static_cast<int>(hw));
  return ctx;
}

namespace {

population::RefCorpora corpora_for(const RunConfig& cfg) {
  return population::make_ref_corpora(static_cast<std::size_t>(cfg.population.captions_per_language),
                                      cfg.population.corpus_seed);
}

bool needs_speaker(const RunConfig& cfg) {
  return cfg.env == EnvKind::referential && (cfg.listener.self_play > 0.0 || cfg.speaker.trained_pool);
}

std::vector<agents::Interaction> training_set(const RunConfig& cfg, const population::ListenerSpec& spec,
                                              const population::RefCorpora* corpora) {
  return cfg.env == EnvKind::referential ? population::build_ref_training_set(spec, *corpora)
                                         : population::build_nav_training_set(spec, cfg.population.games_per_task);
}

std::string fingerprint(std::span<const agents::Interaction> data) {
  std::uint64_t h = fnv1a("");
  auto mix = [&](const void* p, std::size_t n) { h = fnv1a(std::string_view(static_cast<const char*>(p), n), h); };
  for (const auto& r : data) {
    mix(r.obs->cand.data(), r.obs->cand.size() * sizeof(double));
    mix(r.obs->global.data(), r.obs->global.size() * sizeof(double));
    for (bool b : r.obs->legal) mix(&b, 1);
    mix(r.message.tokens.data(), r.message.tokens.size() * sizeof(int));
    mix(&r.message.tag, sizeof(int));
    mix(&r.action, sizeof(int));
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

fs::path listener_path(const RunContext& ctx, int id) {
  return ctx.dir / "listeners" / ("listener_" + std::to_string(id) + ".ckpt");
}

fs::path rep_dir(const RunContext& ctx, int rep) { return ctx.dir / "tom" / ("rep" + std::to_string(rep)); }

agents::NetConfig tom_net(const RunConfig& cfg) {
  return cfg.env == EnvKind::referential ? agents::referential_config(cfg.tom.d)
                                         : agents::navigation_config(cfg.tom.d);
}

std::string kappa_tag(double k) {
  std::ostringstream ss;
  ss << k;
  return ss.str();
}

fs::path results_path(const RunContext& ctx, const ResultKey& k) {
  return ctx.dir / "eval" / (k.speaker + "_k" + kappa_tag(k.kappa) + "_r" + std::to_string(k.rep) + ".jsonl");
}

json message_json(const worlds::Message& m) {
  return {{"t", m.tokens}, {"g", m.tag}, {"k", static_cast<int>(m.kind)}};
}

worlds::Message message_from(const json& j) {
  worlds::Message m;
  j.at("t").get_to(m.tokens);
  m.tag = j.at("g").get<int>();
  m.kind = static_cast<worlds::MessageKind>(j.at("k").get<int>());
  return m;
}

}  // namespace

nlohmann::json session_to_json(const SessionResult& s) {
  json steps = json::array();
  for (const auto& r : s.steps) {
    steps.push_back({{"step", r.step},
                     {"game", r.game},
                     {"message", message_json(r.message)},
                     {"index", r.message_index},
                     {"cost", r.cost},
                     {"action", r.action},
                     {"planned", r.planned},
                     {"prediction", r.prediction},
                     {"correct", r.prediction_correct},
                     {"success", r.success},
                     {"done", r.game_done}});
  }
  return {{"points", s.points}, {"games", s.games}, {"steps", steps}};
}

SessionResult session_from_json(const nlohmann::json& j) {
  SessionResult s;
  s.points = j.at("points").get<int>();
  s.games = j.at("games").get<int>();
  for (const auto& r : j.at("steps")) {
    coordination::StepRecord rec;
    rec.step = r.at("step").get<int>();
    rec.game = r.at("game").get<int>();
    rec.message = message_from(r.at("message"));
    rec.message_index = r.at("index").get<int>();
    rec.cost = r.at("cost").get<double>();
    rec.action = r.at("action").get<int>();
    rec.planned = r.at("planned").get<int>();
    rec.prediction = r.at("prediction").get<int>();
    rec.prediction_correct = r.at("correct").get<bool>();
    rec.success = r.at("success").get<bool>();
    rec.game_done = r.at("done").get<bool>();
    s.steps.push_back(std::move(rec));
  }
  return s;
}

void gen_population(const RunContext& ctx) {
  const auto& cfg = ctx.cfg;
  const Stamp stamp = stamp_for(cfg, Stage::population);
  if (has_artifact(ctx.dir / "population" / "datasets.json", stamp)) {
    ctx.log("population: up to date");
    return;
  }
  std::optional<population::RefCorpora> corpora;
  if (cfg.env == EnvKind::referential) corpora = corpora_for(cfg);
  population::PopulationOptions opt;
  opt.ratio = cfg.population.ratio;
  opt.vocab_budget = cfg.population.vocab_budget;
  const auto manifest =
      population::sample_population(cfg.env, cfg.population.n, cfg.population.alpha,
                                    substream_seed(cfg.seed, "population"), opt, corpora ? &*corpora : nullptr);
  write_json(ctx.dir / "population" / "manifest.json", json::parse(population::manifest_to_json(manifest)), stamp);

  std::vector<json> sets(manifest.specs.size());
  parallel_for(manifest.specs.size(), [&](std::size_t i) {
    const auto data = training_set(cfg, manifest.specs[i], corpora ? &*corpora : nullptr);
    sets[i] = {{"id", manifest.specs[i].id}, {"records", data.size()}, {"fingerprint", fingerprint(data)}};
  });
  write_json(ctx.dir / "population" / "datasets.json", {{"datasets", sets}}, stamp);
  ctx.log("population: " + std::to_string(manifest.specs.size()) + " listeners (" +
          std::to_string(manifest.split.train.size()) + "/" + std::to_string(manifest.split.val.size()) + "/" +
          std::to_string(manifest.split.test.size()) + ")");
}

void train_speaker(const RunContext& ctx) {
  const auto& cfg = ctx.cfg;
  read_json(ctx.dir / "population" / "datasets.json", stamp_for(cfg, Stage::population));
  const Stamp stamp = stamp_for(cfg, Stage::speaker);
  const fs::path log_path = ctx.dir / "speaker" / "log.json";
  if (has_artifact(log_path, stamp)) {
    ctx.log("speaker: up to date");
    return;
  }
  if (cfg.env == EnvKind::navigation) {
    write_json(log_path, {{"kind", "expert"}, {"note", "navigation instructions come from the planner"}}, stamp);
    ctx.log("speaker: navigation uses the planner, nothing to train");
    return;
  }
  const auto corpora = corpora_for(cfg);
  Rng rng = substream(cfg.seed, "speaker-init");
  auto speaker = agents::init_rnn_speaker({}, rng);
  agents::SpeakerFitOptions opt;
  opt.epochs = cfg.speaker.epochs;
  opt.seed = substream_seed(cfg.seed, "speaker-fit");
  const auto rep = agents::trained_speaker_fit(speaker, corpora.captions, opt);
  write_checkpoint(ctx.dir / "speaker" / "speaker.ckpt", speaker.params, stamp);
  write_json(log_path, {{"kind", "rnn"}, {"epoch_loss", rep.epoch_loss}}, stamp);
  ctx.log("speaker: final loss " + std::to_string(rep.epoch_loss.back()));
}

void train_listeners(const RunContext& ctx) {
  const auto& cfg = ctx.cfg;
  const json sets = read_json(ctx.dir / "population" / "datasets.json", stamp_for(cfg, Stage::population));
  const auto manifest = population::manifest_from_json(
      read_json(ctx.dir / "population" / "manifest.json", stamp_for(cfg, Stage::population)).dump());
  std::optional<agents::RnnSpeaker> companion;
  if (needs_speaker(cfg)) {
    companion = agents::RnnSpeaker{};
    companion->params = read_checkpoint(ctx.dir / "speaker" / "speaker.ckpt", stamp_for(cfg, Stage::speaker));
  }
  const Stamp stamp = stamp_for(cfg, Stage::listeners);
  const fs::path log_path = ctx.dir / "listeners" / "log.json";
  if (has_artifact(log_path, stamp)) {
    ctx.log("listeners: up to date");
    return;
  }
  std::optional<population::RefCorpora> corpora;
  if (cfg.env == EnvKind::referential) corpora = corpora_for(cfg);
  auto opt = population::default_train_options(cfg.env);
  opt.epochs = cfg.listener.epochs;
  opt.lr = cfg.listener.lr;
  opt.batch = static_cast<std::size_t>(cfg.listener.batch);
  opt.self_play = cfg.listener.self_play;

  const auto& specs = manifest.specs;
  std::vector<json> logs(specs.size());
  parallel_for(specs.size(), [&](std::size_t i) {
    const auto& spec = specs[i];
    const auto data = training_set(cfg, spec, corpora ? &*corpora : nullptr);
    const auto& expected = sets.at("datasets").at(i);
    if (expected.at("fingerprint").get<std::string>() != fingerprint(data)) {
      throw IoError("dataset of listener " + std::to_string(spec.id) + " differs from the population stage");
    }
    const fs::path path = listener_path(ctx, spec.id);
    population::ListenerTrainReport rep;
    if (has_artifact(path, stamp)) {
      auto model = population::listener_shell(spec);
      model.params = read_checkpoint(path, stamp);
      rep.train_accuracy = population::accuracy(model, data);
    } else {
      const auto model = population::train_listener(spec, data, opt, companion ? &*companion : nullptr, &rep);
      write_checkpoint(path, model.params, stamp);
    }
    logs[i] = {{"id", spec.id}, {"records", data.size()}, {"epoch_loss", rep.epoch_loss},
               {"train_accuracy", rep.train_accuracy}};
  });
  double acc = 0.0;
  for (const auto& l : logs) acc += l.at("train_accuracy").get<double>();
  write_json(log_path, {{"listeners", logs}, {"mean_train_accuracy", acc / logs.size()}}, stamp);
  ctx.log("listeners: mean train accuracy " + std::to_string(acc / logs.size()));
}

Population load_population(const RunContext& ctx) {
  const auto& cfg = ctx.cfg;
  Population p;
  p.manifest = population::manifest_from_json(
      read_json(ctx.dir / "population" / "manifest.json", stamp_for(cfg, Stage::population)).dump());
  read_json(ctx.dir / "listeners" / "log.json", stamp_for(cfg, Stage::listeners));
  const Stamp stamp = stamp_for(cfg, Stage::listeners);
  for (const auto& spec : p.manifest.specs) {
    auto model = population::listener_shell(spec);
    model.params = read_checkpoint(listener_path(ctx, spec.id), stamp);
    p.listeners.push_back(std::move(model));
  }
  auto pick = [&](const std::vector<int>& ids) {
    std::vector<agents::ListenerModel> out;
    for (int id : ids) out.push_back(p.listeners.at(static_cast<std::size_t>(id)));
    return out;
  };
  p.train = pick(p.manifest.split.train);
  p.val = pick(p.manifest.split.val);
  p.test = pick(p.manifest.split.test);
  p.env.kind = cfg.env;
  p.env.native_language = cfg.speaker.native_language;
  if (cfg.env == EnvKind::referential) {
    p.env.lexicons = corpora_for(cfg).lexicons;
    if (cfg.speaker.trained_pool) {
      p.speaker = std::make_unique<agents::RnnSpeaker>();
      p.speaker->params = read_checkpoint(ctx.dir / "speaker" / "speaker.ckpt", stamp_for(cfg, Stage::speaker));
      p.env.trained_speaker = p.speaker.get();
    }
  }
  return p;
}

namespace {

json state_json(const coordination::TrainingState& s) {
  json log = json::array();
  for (const auto& e : s.log) {
    log.push_back({{"epoch", e.epoch},
                   {"eps_nll", e.eps_nll},
                   {"eps_kl", e.eps_kl},
                   {"val_nll", e.val_nll},
                   {"val_accuracy", e.val_accuracy},
                   {"records", e.records}});
  }
  return {{"best_score", s.best_score},   {"best_epoch", s.best_epoch},
          {"next_epoch", s.next_epoch},   {"stale", s.stale},
          {"finished", s.finished},       {"current_lrs", s.current.inner_lrs},
          {"best_lrs", s.best.inner_lrs}, {"n_inner", s.current.n_inner},
          {"log", log}};
}

void save_state(const RunContext& ctx, int rep, const coordination::TrainingState& s) {
  const Stamp stamp = stamp_for(ctx.cfg, Stage::tom);
  const fs::path d = rep_dir(ctx, rep);
  write_checkpoint(d / "current.ckpt", s.current.theta, stamp);
  write_checkpoint(d / "best.ckpt", s.best.theta, stamp);
  // The state file goes last: it marks the checkpoint complete.
  write_json(d / "state.json", state_json(s), stamp);
}

coordination::TrainingConfig training_config(const RunConfig& cfg, int rep) {
  const auto& t = cfg.tom;
  coordination::TrainingConfig tc;
  tc.aggregate.K = t.K;
  tc.aggregate.kappa = t.kappa;
  tc.aggregate.sigma = t.sigma;
  tc.aggregate.sessions_per_listener = t.sessions_per_listener;
  tc.meta.eta_outer = t.eta_outer;
  tc.meta.updates = t.updates;
  tc.meta.batch = static_cast<std::size_t>(t.batch);
  tc.meta.max_support = t.K - 1;
  tc.meta.mode = t.first_order ? agents::MetaMode::first_order : agents::MetaMode::exact;
  tc.meta.lr_min = t.lr_min;
  tc.meta.lr_max = t.lr_max;
  tc.meta.clip_norm = t.clip_norm;
  tc.n_outer = t.n_outer;
  tc.patience = t.patience;
  tc.val_sessions = t.val_sessions;
  tc.seed = substream_seed(cfg.seed, "tom-train", static_cast<std::uint64_t>(rep));
  return tc;
}

}  // namespace

coordination::TrainingState load_training_state(const RunContext& ctx, int rep) {
  const Stamp stamp = stamp_for(ctx.cfg, Stage::tom);
  const fs::path d = rep_dir(ctx, rep);
  const json j = read_json(d / "state.json", stamp);
  coordination::TrainingState s;
  s.current.cfg = s.best.cfg = tom_net(ctx.cfg);
  s.current.n_inner = s.best.n_inner = j.at("n_inner").get<int>();
  s.current.theta = read_checkpoint(d / "current.ckpt", stamp);
  s.best.theta = read_checkpoint(d / "best.ckpt", stamp);
  j.at("current_lrs").get_to(s.current.inner_lrs);
  j.at("best_lrs").get_to(s.best.inner_lrs);
  s.best_score = j.at("best_score").get<double>();
  s.best_epoch = j.at("best_epoch").get<int>();
  s.next_epoch = j.at("next_epoch").get<int>();
  s.stale = j.at("stale").get<int>();
  s.finished = j.at("finished").get<bool>();
  for (const auto& e : j.at("log")) {
    s.log.push_back({e.at("epoch").get<int>(), e.at("eps_nll").get<double>(), e.at("eps_kl").get<double>(),
                     e.at("val_nll").get<double>(), e.at("val_accuracy").get<double>(),
                     e.at("records").get<std::size_t>()});
  }
  return s;
}

agents::ToMState load_tom(const RunContext& ctx, int rep) {
  const auto s = load_training_state(ctx, rep);
  if (!s.finished) {
    throw StageMissing(Stage::tom, "repetition " + std::to_string(rep) + " has not finished training");
  }
  return s.best;
}

void train_tom(const RunContext& ctx, int stop_after) {
  const auto& cfg = ctx.cfg;
  const auto pop = load_population(ctx);
  const Stamp stamp = stamp_for(cfg, Stage::tom);
  for (int rep = 0; rep < cfg.tom.repetitions; ++rep) {
    const fs::path d = rep_dir(ctx, rep);
    coordination::TrainingState state;
    if (has_artifact(d / "state.json", stamp)) {
      state = load_training_state(ctx, rep);
      if (state.finished) {
        ctx.log("tom rep " + std::to_string(rep) + ": up to date");
        continue;
      }
      ctx.log("tom rep " + std::to_string(rep) + ": resuming at epoch " + std::to_string(state.next_epoch));
    } else {
      Rng rng = substream(cfg.seed, "tom-init", static_cast<std::uint64_t>(rep));
      state.current = agents::init_tom(tom_net(cfg), rng, cfg.tom.other_lr, cfg.tom.n_inner);
      if (cfg.tom.pretrain_sessions > 0 && cfg.tom.pretrain_epochs > 0) {
        coordination::AggregateConfig ac;
        ac.K = cfg.tom.K;
        ac.sigma = 0.0;
        ac.sessions_per_listener = cfg.tom.pretrain_sessions;
        ac.seed = substream_seed(cfg.seed, "tom-pretrain-data", static_cast<std::uint64_t>(rep));
        const auto data = coordination::aggregate_dataset(state.current, pop.train, pop.env, ac);
        agents::PretrainOptions po;
        po.epochs = cfg.tom.pretrain_epochs;
        po.lr = cfg.tom.pretrain_lr;
        po.seed = substream_seed(cfg.seed, "tom-pretrain", static_cast<std::uint64_t>(rep));
        const auto curve = agents::pretrain_tom(state.current, data, po);
        write_json(d / "pretrain.json", {{"epoch_nll", curve}}, stamp);
        ctx.log("tom rep " + std::to_string(rep) + ": warm start nll " + std::to_string(curve.front()) + " -> " +
                std::to_string(curve.back()));
      }
      agents::set_inner_lrs(state.current, cfg.tom.gate_lr, cfg.tom.other_lr);
      state.best = state.current;
    }
    int ran = 0;
    state = coordination::run_training(
        std::move(state), pop.train, pop.val, pop.env, training_config(cfg, rep),
        [&](const coordination::TrainingState& s) {
          save_state(ctx, rep, s);
          const auto& e = s.log.back();
          ctx.log("tom rep " + std::to_string(rep) + " epoch " + std::to_string(e.epoch) + ": loss " +
                  std::to_string(e.eps_nll) + " val nll " + std::to_string(e.val_nll) + " val kl " +
                  std::to_string(e.eps_kl) + " val acc " + std::to_string(e.val_accuracy));
          ++ran;
          return stop_after < 0 || ran < stop_after;
        });
    save_state(ctx, rep, state);
    if (!state.finished) {
      ctx.log("tom rep " + std::to_string(rep) + ": stopped at epoch " + std::to_string(state.next_epoch));
      return;
    }
    ctx.log("tom rep " + std::to_string(rep) + ": best epoch " + std::to_string(state.best_epoch));
  }
}

namespace {

// Random and non-ToM speakers ignore the cost penalty; they run at the first κ only.
bool uses_kappa(const std::string& speaker) { return speaker == "tom" || speaker == "gold" || speaker == "rsa"; }

}  // namespace

std::vector<SummaryRow> summarize(const RunConfig& cfg, const EvalResults& results) {
  std::vector<SummaryRow> rows;
  for (const auto& speaker : cfg.eval.speakers) {
    for (double kappa : cfg.eval.kappas) {
      std::vector<SessionResult> all;
      for (int rep = 0; rep < cfg.tom.repetitions; ++rep) {
        const auto it = results.find({speaker, kappa, rep});
        if (it != results.end()) all.insert(all.end(), it->second.begin(), it->second.end());
      }
      if (all.empty()) continue;
      SummaryRow r;
      r.speaker = speaker;
      r.kappa = kappa;
      r.sessions = all.size();
      r.success = analysis::mean_success(all);
      r.points = analysis::mean_points(all);
      double hits = 0.0, n = 0.0;
      for (const auto& s : all) {
        for (const auto& st : s.steps) {
          hits += st.prediction_correct ? 1.0 : 0.0;
          n += 1.0;
        }
      }
      r.accuracy = speaker == "tom" && n > 0.0 ? hits / n : 0.0;
      if (cfg.env == EnvKind::navigation) {
        const auto cp = analysis::cost_points_row(speaker, kappa, all);
        r.instruction_length = cp.instruction_length;
        r.step_cost = cp.step_cost;
      } else {
        double c = 0.0;
        for (const auto& s : all)
          for (const auto& st : s.steps) c += st.cost;
        r.step_cost = n > 0.0 ? c / n : 0.0;
      }
      rows.push_back(r);
    }
  }
  return rows;
}

namespace {

std::string rows_csv(const std::vector<SummaryRow>& rows, const Stamp& stamp) {
  std::ostringstream o;
  o << "# config_hash=" << stamp.hash << " seed=" << stamp.seed << "\n";
  o << "speaker,kappa,split,sessions,success,points,accuracy,instruction_length,step_cost\n";
  o.precision(6);
  for (const auto& r : rows) {
    o << r.speaker << ',' << r.kappa << ',' << r.split << ',' << r.sessions << ',' << r.success << ',' << r.points
      << ',' << r.accuracy << ',' << r.instruction_length << ',' << r.step_cost << '\n';
  }
  return o.str();
}

std::vector<SessionResult> read_results_file(const fs::path& path, const Stamp& stamp) {
  if (!fs::exists(path)) throw StageMissing(Stage::eval, path.string() + " not found");
  std::istringstream in(read_file(path));
  std::string line;
  std::getline(in, line);
  const json head = json::parse(line, nullptr, false);
  if (head.is_discarded() || head.value("config_hash", "") != stamp.hash ||
      head.value("seed", std::uint64_t{0}) != stamp.seed) {
    throw StageMissing(Stage::eval, path.string() + " was produced under another config");
  }
  std::vector<SessionResult> out;
  while (std::getline(in, line)) {
    if (!line.empty()) out.push_back(session_from_json(json::parse(line)));
  }
  if (out.size() != head.value("sessions", std::size_t{0})) throw IoError(path.string() + " is truncated");
  return out;
}

}  // namespace

EvalResults load_results(const RunContext& ctx) {
  const Stamp stamp = stamp_for(ctx.cfg, Stage::eval);
  EvalResults out;
  for (int rep = 0; rep < ctx.cfg.tom.repetitions; ++rep) {
    for (const auto& speaker : ctx.cfg.eval.speakers) {
      for (double kappa : ctx.cfg.eval.kappas) {
        const ResultKey key{speaker, kappa, rep};
        out[key] = read_results_file(results_path(ctx, key), stamp);
      }
    }
  }
  return out;
}

EvalSummary evaluate(const RunContext& ctx) {
  const auto& cfg = ctx.cfg;
  const auto pop = load_population(ctx);
  const Stamp stamp = stamp_for(cfg, Stage::eval);
  const bool wants_tom = std::find(cfg.eval.speakers.begin(), cfg.eval.speakers.end(), "tom") != cfg.eval.speakers.end();
  EvalSummary summary;
  for (int rep = 0; rep < cfg.tom.repetitions; ++rep) {
    std::optional<agents::ToMState> tom;
    if (wants_tom) tom = load_tom(ctx, rep);
    coordination::Speakers speakers;
    if (tom) speakers.tom = &*tom;
    for (const auto& l : pop.train) speakers.rsa_base.push_back(&l);
    speakers.rsa_level = cfg.eval.rsa_level;
    speakers.random_concentration = cfg.eval.random_concentration;
    for (const auto& speaker : cfg.eval.speakers) {
      for (double kappa : cfg.eval.kappas) {
        if (!uses_kappa(speaker) && kappa != cfg.eval.kappas.front()) continue;
        const ResultKey key{speaker, kappa, rep};
        const fs::path path = results_path(ctx, key);
        if (fs::exists(path)) {
          try {
            summary.results[key] = read_results_file(path, stamp);
            continue;
          } catch (const std::exception&) {
            // stale or partial; recompute below
          }
        }
        const auto per = static_cast<std::size_t>(cfg.eval.sessions_per_listener);
        std::vector<SessionResult> res(pop.test.size() * per);
        parallel_for(res.size(), [&](std::size_t j) {
          coordination::SessionConfig sc;
          sc.K = cfg.eval.K;
          sc.kappa = kappa;
          sc.kind = coordination::speaker_kind_from_string(speaker);
          sc.seed = substream_seed(cfg.seed, "eval", static_cast<std::uint64_t>(rep) * 1000003u + j / per, j % per);
          res[j] = coordination::evaluate_session(pop.test[j / per], speakers, pop.env, sc);
        });
        std::string text = json{{"config_hash", stamp.hash}, {"seed", stamp.seed}, {"speaker", speaker},
                                {"kappa", kappa}, {"rep", rep}, {"sessions", res.size()}}
                               .dump() +
                           "\n";
        for (const auto& s : res) text += session_to_json(s).dump() + "\n";
        write_file(path, text);
        ctx.log("eval rep " + std::to_string(rep) + " " + speaker + " kappa " + kappa_tag(kappa) + ": points " +
                std::to_string(analysis::mean_points(res)));
        summary.results[key] = std::move(res);
      }
    }
  }
  summary.rows = summarize(cfg, summary.results);
  json rows = json::array();
  for (const auto& r : summary.rows) {
    rows.push_back({{"speaker", r.speaker}, {"kappa", r.kappa}, {"split", r.split}, {"sessions", r.sessions},
                    {"success", r.success}, {"points", r.points}, {"accuracy", r.accuracy},
                    {"instruction_length", r.instruction_length}, {"step_cost", r.step_cost}});
  }
  write_json(ctx.dir / "eval" / "summary.json", {{"rows", rows}}, stamp);
  write_file(ctx.dir / "eval" / "summary.csv", rows_csv(summary.rows, stamp));
  return summary;
}

bool VerifySummary::passed() const {
  if (!grad.passed) return false;
  for (const auto& b : bounds)
    if (!b.holds) return false;
  for (const auto& p : pinsker)
    if (!p.passed()) return false;
  return true;
}

VerifySummary verify(const RunContext& ctx, bool sabotage) {
  const auto& cfg = ctx.cfg;
  const auto pop = load_population(ctx);
  VerifySummary out;
  out.grad = ad::grad_check_suite(static_cast<std::size_t>(cfg.verify.grad_programs),
                                  substream_seed(cfg.seed, "grad-check"));
  json reps = json::array();
  for (int rep = 0; rep < cfg.tom.repetitions; ++rep) {
    agents::ToMState tom;
    if (sabotage) {
      Rng rng = substream(cfg.seed, "sabotage", static_cast<std::uint64_t>(rep));
      tom = agents::init_tom(tom_net(cfg), rng, cfg.tom.other_lr, cfg.tom.n_inner);
      agents::set_inner_lrs(tom, cfg.tom.gate_lr, cfg.tom.other_lr);
    } else {
      tom = load_tom(ctx, rep);
    }
    coordination::AggregateConfig ac;
    ac.K = cfg.tom.K;
    ac.kappa = cfg.tom.kappa;
    ac.sigma = cfg.verify.sigma;
    ac.seed = substream_seed(cfg.seed, "verify-states", static_cast<std::uint64_t>(rep));
    auto states = analysis::sample_states(tom, pop.train, pop.env, ac, static_cast<std::size_t>(cfg.verify.states));
    const auto bound = analysis::verify_bound(states, cfg.verify.sigma, cfg.verify.n_m);
    std::size_t pairs = 0;
    for (const auto& s : states) pairs += s.p_tom.size();
    const auto want = static_cast<std::size_t>(cfg.verify.pinsker_pairs);
    if (pairs < want) {
      ac.seed = substream_seed(cfg.seed, "verify-pinsker", static_cast<std::uint64_t>(rep));
      const std::size_t per_state = std::max<std::size_t>(1, pairs / states.size());
      const std::size_t more = (want - pairs) / per_state + static_cast<std::size_t>(ac.K);
      auto extra = analysis::sample_states(tom, pop.train, pop.env, ac, more);
      for (auto& s : extra) states.push_back(std::move(s));
    }
    const auto pinsker = analysis::pinsker_check(states, want);
    out.bounds.push_back(bound);
    out.pinsker.push_back(pinsker);
    reps.push_back({{"rep", rep},
                    {"epsilon", bound.epsilon},
                    {"epsilon_nll", bound.epsilon_nll},
                    {"delta", bound.delta},
                    {"delta_p5", bound.delta_p5},
                    {"n_m", bound.n_m},
                    {"sigma", bound.sigma},
                    {"lhs", bound.lhs},
                    {"rhs", std::isfinite(bound.rhs) ? json(bound.rhs) : json("inf")},
                    {"holds", bound.holds},
                    {"vacuous", bound.vacuous},
                    {"states", bound.states},
                    {"pinsker_pairs", pinsker.pairs},
                    {"pinsker_violations", pinsker.violations},
                    {"pinsker_max_ratio", pinsker.max_ratio}});
    ctx.log("verify rep " + std::to_string(rep) + ": eps " + std::to_string(bound.epsilon) + " delta " +
            std::to_string(bound.delta) + " lhs " + std::to_string(bound.lhs) + " rhs " + std::to_string(bound.rhs) +
            (bound.holds ? " holds" : " FAILS"));
  }
  const json body = {{"sabotaged", sabotage},
                     {"bounds", reps},
                     {"grad_check",
                      {{"programs", out.grad.programs},
                       {"second_order", out.grad.second_order},
                       {"max_rel_err", out.grad.max_rel_err},
                       {"worst", out.grad.worst},
                       {"passed", out.grad.passed}}},
                     {"passed", out.passed()}};
  write_json(ctx.dir / "verify" / (sabotage ? "bound_sabotaged.json" : "bound.json"), body,
             stamp_for(cfg, Stage::verify));
  return out;
}

std::vector<fs::path> plot(const RunContext& ctx) {
  const auto& cfg = ctx.cfg;
  const auto results = load_results(ctx);
  const fs::path d = ctx.dir / "plots";
  std::vector<fs::path> written;
  auto emit = [&](const std::string& name, const std::string& text) {
    write_file(d / name, text);
    written.push_back(d / name);
  };
  Rng rng = substream(cfg.seed, "plot-bootstrap");
  auto pooled = [&](const std::string& speaker, double kappa) {
    std::vector<SessionResult> all;
    for (int rep = 0; rep < cfg.tom.repetitions; ++rep) {
      const auto& v = results.at({speaker, kappa, rep});
      all.insert(all.end(), v.begin(), v.end());
    }
    return all;
  };
  const auto has = [&](const std::string& s) {
    return std::find(cfg.eval.speakers.begin(), cfg.eval.speakers.end(), s) != cfg.eval.speakers.end();
  };
  const double k0 = cfg.eval.kappas.front();
  if (has("tom")) {
    const auto all = pooled("tom", k0);
    if (all.size() >= 30) {
      const std::vector<analysis::Series> acc{{"tom", analysis::adaptation_curve(all, rng)}};
      emit("adaptation.svg", analysis::curve_svg(acc, "ToM prediction accuracy per step", "accuracy"));
      emit("adaptation.csv", analysis::curves_csv(acc));
    }
  }
  if (cfg.env == EnvKind::referential) {
    std::vector<analysis::Series> succ;
    for (const auto& s : cfg.eval.speakers) {
      const auto all = pooled(s, k0);
      if (all.size() >= 30) succ.push_back({s, analysis::step_curve(all, analysis::StepField::success, rng)});
    }
    emit("success.svg", analysis::curve_svg(succ, "success per step", "success"));
    emit("success.csv", analysis::curves_csv(succ));
  } else {
    std::vector<analysis::CostPointsRow> rows;
    std::vector<analysis::ScatterPoint> pts;
    for (const auto& s : cfg.eval.speakers) {
      for (double k : cfg.eval.kappas) {
        if (!uses_kappa(s) && k != k0) continue;
        rows.push_back(analysis::cost_points_row(s, k, pooled(s, k)));
        const std::string label = uses_kappa(s) ? s + " k=" + kappa_tag(k) : s;
        pts.push_back({label, rows.back().instruction_length, rows.back().points});
      }
    }
    emit("cost_points.svg", analysis::scatter_svg(pts, "instruction length vs points", "instruction length per game",
                                                  "points per session"));
    emit("cost_points.csv", analysis::cost_points_csv(rows));
  }
  return written;
}

}  // namespace tomcoord::runner
