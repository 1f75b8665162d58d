#include "tomcoord/runner/config.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include "tomcoord/util/random.hpp"

namespace tomcoord::runner {

using nlohmann::json;

RunConfig default_config(EnvKind env, const std::string& scale) {
  if (scale != "desk" && scale != "paper") throw ConfigError("scale must be desk or paper, got '" + scale + "'");
  RunConfig c;
  c.env = env;
  c.scale = scale;
  if (env == EnvKind::referential) {
    c.name = "referential-" + scale;
    c.population.alpha.assign(worlds::kNumLanguages, 0.5);
    c.population.n = scale == "paper" ? 120 : 24;
  } else {
    c.name = "navigation-" + scale;
    c.population.n = scale == "paper" ? 50 : 12;
    c.population.alpha = {0.6, 0.4, 0.3, 0.2};
    c.population.ratio = {3, 1, 1};
    c.listener.epochs = 40;
    c.listener.lr = 0.01;
    c.listener.self_play = 0.0;
    c.tom.K = coordination::kNavSessionLength;
    c.tom.pretrain_sessions = 10;
    c.tom.pretrain_epochs = 10;
    c.tom.other_lr = 0.1;
    c.tom.n_outer = 0;
    c.tom.repetitions = 1;
    c.eval.sessions_per_listener = 50;
    c.eval.K = coordination::kNavSessionLength;
    c.eval.speakers = {"tom", "random"};
    c.eval.kappas = {0.0, 1.0, 2.0, 10.0};
    c.verify.n_m = worlds::kNumLevels + 1;
  }
  if (scale == "paper") {
    c.tom.gate_lr = 0.01;
    c.tom.other_lr = 0.01;
    c.tom.eta_outer = 1e-4;
    c.tom.n_outer = 500;
    c.tom.pretrain_sessions = 0;
  }
  return c;
}

json to_json(const RunConfig& c) {
  json j;
  j["name"] = c.name;
  j["env"] = population::to_string(c.env);
  j["scale"] = c.scale;
  j["seed"] = c.seed;
  j["single_thread"] = c.single_thread;
  const auto& p = c.population;
  j["population"] = {{"n", p.n},
                     {"alpha", p.alpha},
                     {"ratio", p.ratio},
                     {"vocab_budget", p.vocab_budget},
                     {"captions_per_language", p.captions_per_language},
                     {"corpus_seed", p.corpus_seed},
                     {"games_per_task", p.games_per_task}};
  const auto& l = c.listener;
  j["listener"] = {{"epochs", l.epochs}, {"lr", l.lr}, {"batch", l.batch}, {"self_play", l.self_play}};
  const auto& s = c.speaker;
  j["speaker"] = {{"epochs", s.epochs}, {"trained_pool", s.trained_pool}, {"native_language", s.native_language}};
  const auto& t = c.tom;
  j["tom"] = {{"d", t.d},
              {"pretrain_sessions", t.pretrain_sessions},
              {"pretrain_epochs", t.pretrain_epochs},
              {"pretrain_lr", t.pretrain_lr},
              {"gate_lr", t.gate_lr},
              {"other_lr", t.other_lr},
              {"n_inner", t.n_inner},
              {"eta_outer", t.eta_outer},
              {"n_outer", t.n_outer},
              {"updates", t.updates},
              {"batch", t.batch},
              {"patience", t.patience},
              {"K", t.K},
              {"kappa", t.kappa},
              {"sigma", t.sigma},
              {"sessions_per_listener", t.sessions_per_listener},
              {"val_sessions", t.val_sessions},
              {"clip_norm", t.clip_norm},
              {"first_order", t.first_order},
              {"lr_min", t.lr_min},
              {"lr_max", t.lr_max},
              {"repetitions", t.repetitions}};
  const auto& e = c.eval;
  j["eval"] = {{"sessions_per_listener", e.sessions_per_listener},
               {"K", e.K},
               {"speakers", e.speakers},
               {"kappas", e.kappas},
               {"rsa_level", e.rsa_level},
               {"random_concentration", e.random_concentration}};
  const auto& v = c.verify;
  j["verify"] = {{"states", v.states},
                 {"sigma", v.sigma},
                 {"n_m", v.n_m},
                 {"pinsker_pairs", v.pinsker_pairs},
                 {"grad_programs", v.grad_programs}};
  return j;
}

namespace {

void check_known(const json& user, const json& known, const std::string& path) {
  for (auto it = user.begin(); it != user.end(); ++it) {
    const std::string key = path.empty() ? it.key() : path + "." + it.key();
    if (!known.contains(it.key())) throw ConfigError("unknown config key '" + key + "'");
    if (it->is_object()) {
      if (!known[it.key()].is_object()) throw ConfigError("config key '" + key + "' is not a section");
      check_known(*it, known[it.key()], key);
    }
  }
}

template <typename T>
void get(const json& j, const char* section, const char* key, T& out) {
  try {
    j.at(section).at(key).get_to(out);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("bad value for ") + section + "." + key + ": " + e.what());
  }
}

void require(bool ok, const std::string& what) {
  if (!ok) throw ConfigError("config: " + what);
}

}  // namespace

void validate(const RunConfig& c) {
  const auto& p = c.population;
  require(p.n >= 3, "population.n must be at least 3");
  const std::size_t dims = c.env == EnvKind::referential ? worlds::kNumLanguages : worlds::kNumLevels;
  require(p.alpha.size() == dims, "population.alpha needs " + std::to_string(dims) + " entries");
  for (double a : p.alpha) require(a > 0.0, "population.alpha entries must be positive");
  for (int r : p.ratio) require(r > 0, "population.ratio entries must be positive");
  require(p.vocab_budget >= 0 && p.vocab_budget <= worlds::kRefWords, "population.vocab_budget out of range");
  require(p.captions_per_language > 0 && p.games_per_task > 0, "dataset sizes must be positive");
  require(c.listener.epochs > 0 && c.listener.lr > 0.0 && c.listener.batch > 0, "listener settings must be positive");
  require(c.listener.self_play >= 0.0 && c.listener.self_play <= 1.0, "listener.self_play must be in [0, 1]");
  require(c.speaker.epochs > 0, "speaker.epochs must be positive");
  require(c.speaker.native_language >= 0 && c.speaker.native_language < worlds::kNumLanguages,
          "speaker.native_language out of range");
  const auto& t = c.tom;
  require(t.d > 0 && t.n_inner >= 0 && t.batch > 0 && t.updates >= 0 && t.n_outer >= 0, "tom sizes out of range");
  require(t.pretrain_sessions >= 0 && t.pretrain_epochs >= 0 && t.pretrain_lr > 0.0, "tom pretraining out of range");
  require(t.gate_lr >= 0.0 && t.other_lr >= 0.0 && t.eta_outer >= 0.0, "tom learning rates must be non-negative");
  require(t.lr_min >= 0.0 && t.lr_max >= t.lr_min, "tom.lr_min / lr_max out of order");
  require(t.K >= 2, "tom.K must be at least 2");
  require(t.kappa >= 0.0, "tom.kappa must be non-negative");
  require(t.sigma >= 0.0 && t.sigma <= 1.0, "tom.sigma must be in [0, 1]");
  require(t.sessions_per_listener > 0 && t.val_sessions > 0 && t.patience > 0, "tom session counts must be positive");
  require(t.repetitions >= 1, "tom.repetitions must be at least 1");
  const auto& e = c.eval;
  require(e.sessions_per_listener > 0 && e.K >= 1, "eval sizes must be positive");
  require(!e.speakers.empty() && !e.kappas.empty(), "eval needs speakers and kappas");
  for (const auto& s : e.speakers) {
    try {
      coordination::speaker_kind_from_string(s);
    } catch (const std::exception&) {
      throw ConfigError("unknown speaker kind '" + s + "'");
    }
  }
  for (double k : e.kappas) require(k >= 0.0, "eval.kappas must be non-negative");
  require(e.rsa_level >= 1, "eval.rsa_level must be at least 1");
  require(e.random_concentration > 0.0, "eval.random_concentration must be positive");
  const auto& v = c.verify;
  require(v.states > 0 && v.pinsker_pairs > 0 && v.grad_programs > 0, "verify sizes must be positive");
  require(v.sigma >= 0.0 && v.sigma < 1.0, "verify.sigma must be in [0, 1)");
  require(v.n_m >= 1.0, "verify.n_m must be at least 1");
}

RunConfig config_from_json(const json& user) {
  if (!user.is_object()) throw ConfigError("config must be a JSON object");
  EnvKind env = EnvKind::referential;
  std::string scale = "desk";
  try {
    if (user.contains("env")) env = population::env_kind_from_string(user.at("env").get<std::string>());
    if (user.contains("scale")) scale = user.at("scale").get<std::string>();
  } catch (const std::exception& e) {
    throw ConfigError(std::string("bad env or scale: ") + e.what());
  }
  json j = to_json(default_config(env, scale));
  check_known(user, j, "");
  j.merge_patch(user);

  RunConfig c;
  try {
    c.name = j.at("name").get<std::string>();
    c.env = env;
    c.scale = scale;
    c.seed = j.at("seed").get<std::uint64_t>();
    c.single_thread = j.at("single_thread").get<bool>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("bad top-level value: ") + e.what());
  }
  get(j, "population", "n", c.population.n);
  get(j, "population", "alpha", c.population.alpha);
  get(j, "population", "ratio", c.population.ratio);
  get(j, "population", "vocab_budget", c.population.vocab_budget);
  get(j, "population", "captions_per_language", c.population.captions_per_language);
  get(j, "population", "corpus_seed", c.population.corpus_seed);
  get(j, "population", "games_per_task", c.population.games_per_task);
  get(j, "listener", "epochs", c.listener.epochs);
  get(j, "listener", "lr", c.listener.lr);
  get(j, "listener", "batch", c.listener.batch);
  get(j, "listener", "self_play", c.listener.self_play);
  get(j, "speaker", "epochs", c.speaker.epochs);
  get(j, "speaker", "trained_pool", c.speaker.trained_pool);
  get(j, "speaker", "native_language", c.speaker.native_language);
  auto& t = c.tom;
  get(j, "tom", "d", t.d);
  get(j, "tom", "pretrain_sessions", t.pretrain_sessions);
  get(j, "tom", "pretrain_epochs", t.pretrain_epochs);
  get(j, "tom", "pretrain_lr", t.pretrain_lr);
  get(j, "tom", "gate_lr", t.gate_lr);
  get(j, "tom", "other_lr", t.other_lr);
  get(j, "tom", "n_inner", t.n_inner);
  get(j, "tom", "eta_outer", t.eta_outer);
  get(j, "tom", "n_outer", t.n_outer);
  get(j, "tom", "updates", t.updates);
  get(j, "tom", "batch", t.batch);
  get(j, "tom", "patience", t.patience);
  get(j, "tom", "K", t.K);
  get(j, "tom", "kappa", t.kappa);
  get(j, "tom", "sigma", t.sigma);
  get(j, "tom", "sessions_per_listener", t.sessions_per_listener);
  get(j, "tom", "val_sessions", t.val_sessions);
  get(j, "tom", "clip_norm", t.clip_norm);
  get(j, "tom", "first_order", t.first_order);
  get(j, "tom", "lr_min", t.lr_min);
  get(j, "tom", "lr_max", t.lr_max);
  get(j, "tom", "repetitions", t.repetitions);
  get(j, "eval", "sessions_per_listener", c.eval.sessions_per_listener);
  get(j, "eval", "K", c.eval.K);
  get(j, "eval", "speakers", c.eval.speakers);
  get(j, "eval", "kappas", c.eval.kappas);
  get(j, "eval", "rsa_level", c.eval.rsa_level);
  get(j, "eval", "random_concentration", c.eval.random_concentration);
  get(j, "verify", "states", c.verify.states);
  get(j, "verify", "sigma", c.verify.sigma);
  get(j, "verify", "n_m", c.verify.n_m);
  get(j, "verify", "pinsker_pairs", c.verify.pinsker_pairs);
  get(j, "verify", "grad_programs", c.verify.grad_programs);
  validate(c);
  return c;
}

RunConfig load_config(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot read config " + path);
  json j;
  try {
    j = json::parse(f);
  } catch (const json::exception& e) {
    throw ConfigError("config " + path + " is not valid JSON: " + e.what());
  }
  return config_from_json(j);
}

void apply_override(json& j, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) throw ConfigError("override must look like key=value: " + assignment);
  const std::string path = assignment.substr(0, eq), text = assignment.substr(eq + 1);
  json value = json::parse(text, nullptr, false);
  if (value.is_discarded()) value = text;
  json* node = &j;
  std::stringstream ss(path);
  std::string part;
  std::vector<std::string> parts;
  while (std::getline(ss, part, '.')) parts.push_back(part);
  for (std::size_t i = 0; i + 1 < parts.size(); ++i) node = &(*node)[parts[i]];
  (*node)[parts.back()] = value;
}

std::string to_string(Stage s) {
  switch (s) {
    case Stage::population: return "population";
    case Stage::speaker: return "speaker";
    case Stage::listeners: return "listeners";
    case Stage::tom: return "tom";
    case Stage::eval: return "eval";
    case Stage::verify: return "verify";
  }
  return "?";
}

namespace {

std::string hex(std::uint64_t h) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace

std::string stage_hash(const RunConfig& cfg, Stage s) {
  const json full = to_json(cfg);
  json part;
  part["env"] = full["env"];
  part["seed"] = full["seed"];
  part["population"] = full["population"];
  if (s >= Stage::speaker) part["speaker"] = full["speaker"];
  if (s >= Stage::listeners) part["listener"] = full["listener"];
  if (s >= Stage::tom) part["tom"] = full["tom"];
  if (s == Stage::eval) part["eval"] = full["eval"];
  if (s == Stage::verify) part["verify"] = full["verify"];
  return hex(fnv1a(part.dump()));
}

std::string config_hash(const RunConfig& cfg) {
  json j = to_json(cfg);
  j.erase("name");
  j.erase("single_thread");
  return hex(fnv1a(j.dump()));
}

}  // namespace tomcoord::runner
