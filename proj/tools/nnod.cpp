// Command-line front end: dataset generation, training, bifurcation analysis,
// single races, randomized trials and the endurance mode.
//
// Settings come from built-in defaults, overridden by an optional JSON config
// file, overridden by flags. The merged settings are embedded in every JSON
// output and hashed into every output header.

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "nnod/nnod.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace nnod;

namespace {

constexpr const char* kVersion = "0.1.0";

// Bad flags, unreadable inputs or invalid settings: exit code 2.
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::string read_text(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw UsageError("cannot read '" + path + "'");
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

json read_json(const std::string& path) {
  try {
    return json::parse(read_text(path));
  } catch (const json::parse_error& e) {
    throw UsageError("'" + path + "' is not valid JSON: " + e.what());
  }
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
  out << text;
  if (!out) throw std::runtime_error("failed writing '" + path.string() + "'");
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

// ------------------------------------------------------------------ settings

json train_defaults() {
  json j = train_config_to_json(TrainConfig{});
  // Rollout budgets live in the shared "rollout" section; the seed is global.
  for (const char* k : {"cold_iterations", "warm_iterations", "solver_steps", "seed"}) j.erase(k);
  j["kind"] = "neural-nod";
  return j;
}

json default_settings() {
  return {
      {"seed", 1},
      {"track", {{"kind", "oval"}, {"straight", 80.0}, {"radius", 30.0}, {"halfwidth", 6.0}, {"spacing", 2.0}}},
      {"game", racing_config_to_json(RacingConfig{})},
      {"rollout", {{"cold_iterations", 5}, {"warm_iterations", 2}, {"steps", {1.0}}}},
      {"planner", {{"adaptive_iterations", 20}}},
      {"architecture", {{"hidden", {16, 16}}, {"activation", "tanh"}, {"z_max", 5.0}, {"init_gain", 1.0}}},
      {"data",
       {{"episodes", 16},
        {"stages", 11},
        {"noise", 0.0},
        {"missing", 0.0},
        {"demonstrator", "scripted"},
        {"initial", initial_ranges_to_json(InitialConditionRanges{})}}},
      {"train", train_defaults()},
      {"rivals",
       {{"nominal", rival_spec_to_json(RivalSpec{})},
        {"aggressive", rival_spec_to_json(RivalSpec{{4.0, 16.0 / 3.0}, 0.0, 0.0, {0.0, 0.0, 0.0, 0.0}})}}},
      {"trials", {{"n", 20}, {"step_limit", 200}, {"rival", "nominal"}, {"initial", initial_ranges_to_json(InitialConditionRanges{})}}},
      {"race", {{"step_limit", 200}, {"rival", "nominal"}}},
      {"endurance",
       {{"step_limit", 1500},
        {"respawn_gap", 25.0},
        {"pass_margin", 8.0},
        {"ego_speed", 8.0},
        {"rival_speed", 6.0},
        {"rival_kind", "game"},
        {"rival", "nominal"}}},
      {"analyze", {{"perturbation", 1e-6}, {"bias_magnitudes", {1e-8, -1e-8, 1e-4, -1e-4, 1e-2, -1e-2}}}},
  };
}

// Deep merge: objects merge key by key, anything else is replaced.
void merge_into(json& base, const json& over) {
  if (!over.is_object() || !base.is_object()) {
    base = over;
    return;
  }
  for (auto it = over.begin(); it != over.end(); ++it) {
    if (base.contains(it.key()) && base[it.key()].is_object() && it.value().is_object())
      merge_into(base[it.key()], it.value());
    else
      base[it.key()] = it.value();
  }
}

struct Settings {
  json merged;
  json inputs = json::object();  // input name -> content hash
  std::string command;

  [[nodiscard]] std::uint64_t seed() const { return merged.at("seed").get<std::uint64_t>(); }

  [[nodiscard]] std::string hash() const {
    const json h{{"command", command}, {"settings", merged}, {"inputs", inputs}};
    return hex64(fnv1a(h.dump()));
  }

  [[nodiscard]] json meta() const {
    return {{"tool", "nnod"}, {"version", kVersion}, {"command", command}, {"config_hash", hash()}, {"seed", seed()},
            {"settings", merged}, {"inputs", inputs}};
  }

  [[nodiscard]] std::string csv_header() const {
    return "# nnod " + std::string(kVersion) + " command=" + command + " config_hash=" + hash() +
           " seed=" + std::to_string(seed()) + "\n";
  }

  void note_input(const std::string& name, const std::string& path) { inputs[name] = hex64(fnv1a(read_text(path))); }
};

// Options shared by every subcommand.
struct Common {
  std::string config;
  std::string out_dir;
  std::optional<std::uint64_t> seed;
};

void add_common(CLI::App* app, Common& c) {
  app->add_option("--config", c.config, "JSON settings file")->check(CLI::ExistingFile);
  app->add_option("--out-dir", c.out_dir, "Output directory (default: $NNOD_OUTPUT_DIR or .)");
  app->add_option("--seed", c.seed, "Random seed");
}

Settings load_settings(const std::string& command, const Common& c) {
  Settings s;
  s.command = command;
  s.merged = default_settings();
  if (!c.config.empty()) {
    const json file = read_json(c.config);
    if (!file.is_object()) throw UsageError("config file must hold a JSON object");
    merge_into(s.merged, file);
  }
  if (c.seed) s.merged["seed"] = *c.seed;
  return s;
}

fs::path output_dir(const Common& c) {
  fs::path dir = ".";
  if (const char* env = std::getenv("NNOD_OUTPUT_DIR"); env != nullptr && *env != '\0') dir = env;
  if (!c.out_dir.empty()) dir = c.out_dir;
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (!fs::is_directory(dir)) throw UsageError("output directory '" + dir.string() + "' is not usable");
  return dir;
}

template <class T>
void set_if(json& j, const char* key, const std::optional<T>& v) {
  if (v) j[key] = *v;
}

// Typed views of the merged settings. Invalid values are usage errors.
template <class F>
auto parse_setting(const char* what, F&& f) {
  try {
    return f();
  } catch (const UsageError&) {
    throw;
  } catch (const std::exception& e) {
    throw UsageError(std::string("invalid ") + what + " settings: " + e.what());
  }
}

std::shared_ptr<const Track> make_track(const json& j) {
  return parse_setting("track", [&] {
    const std::string kind = j.value("kind", "oval");
    const double spacing = j.value("spacing", 2.0);
    if (kind == "oval")
      return std::make_shared<const Track>(
          make_oval_track(j.value("straight", 80.0), j.value("radius", 30.0), j.value("halfwidth", 6.0), spacing));
    if (kind == "chicane")
      return std::make_shared<const Track>(make_chicane_track(j.value("straight", 120.0), j.value("radius", 30.0),
                                                              j.value("chicane_radius", 25.0), j.value("chicane_angle", 0.35),
                                                              j.value("halfwidth", 6.0), spacing));
    if (kind == "straight")
      return std::make_shared<const Track>(make_straight_track(j.value("length", 300.0), j.value("halfwidth", 6.0), spacing));
    if (kind == "csv") {
      const std::string path = j.at("path").get<std::string>();
      if (!fs::exists(path)) throw UsageError("track file '" + path + "' does not exist");
      return std::make_shared<const Track>(load_track_csv(path));
    }
    throw std::invalid_argument("unknown track kind '" + kind + "'");
  });
}

RacingGame make_game(const Settings& s) {
  auto track = make_track(s.merged.at("track"));
  return parse_setting("game", [&] { return RacingGame(track, racing_config_from_json(s.merged.at("game"))); });
}

RolloutConfig training_rollout(const Settings& s) {
  return parse_setting("rollout", [&] {
    const json& j = s.merged.at("rollout");
    RolloutConfig r;
    r.cold_iterations = j.value("cold_iterations", r.cold_iterations);
    r.warm_iterations = j.value("warm_iterations", r.warm_iterations);
    r.steps = j.value("steps", r.steps);
    if (r.cold_iterations < 1 || r.warm_iterations < 1 || r.steps.empty())
      throw std::invalid_argument("iteration budgets must be positive and steps nonempty");
    return r;
  });
}

// Racing policies plan with the adaptive solver unless it is disabled.
RolloutConfig planner_rollout(const Settings& s) {
  RolloutConfig r = training_rollout(s);
  r.adaptive_iterations = parse_setting("planner", [&] { return s.merged.at("planner").value("adaptive_iterations", 20); });
  if (r.adaptive_iterations < 0) throw UsageError("planner.adaptive_iterations must be nonnegative");
  return r;
}

ModelArchitecture architecture(const Settings& s) {
  return parse_setting("architecture", [&] {
    const json& j = s.merged.at("architecture");
    ModelArchitecture a;
    a.hidden = j.value("hidden", a.hidden);
    a.activation = activation_from_string(j.value("activation", std::string("tanh")));
    a.z_max = j.value("z_max", a.z_max);
    a.init_gain = j.value("init_gain", a.init_gain);
    if (!(a.z_max > 0.0)) throw std::invalid_argument("z_max must be positive");
    for (int h : a.hidden)
      if (h < 1) throw std::invalid_argument("hidden sizes must be positive");
    return a;
  });
}

// A rival preset name ("nominal", "aggressive") or an inline spec object.
RivalSpec rival_spec(const Settings& s, const json& ref) {
  return parse_setting("rival", [&] {
    if (ref.is_string()) {
      const auto& presets = s.merged.at("rivals");
      const std::string name = ref.get<std::string>();
      if (!presets.contains(name)) throw std::invalid_argument("unknown rival preset '" + name + "'");
      return rival_spec_from_json(presets.at(name));
    }
    return rival_spec_from_json(ref);
  });
}

// Ego specifications:
//   scripted                the built-in demonstrator
//   static:w0,...,w6        constant weights
//   static-mean:DATASET     constant weights = dataset's mean demonstrator weights
//   PATH                    a model file written by `train` or `gen-data`
struct EgoSpec {
  std::string label;
  WeightModel model;
};

EgoSpec load_ego(const std::string& spec, Settings& s, int index) {
  const double z_max = architecture(s).z_max;
  EgoSpec e;
  if (spec == "scripted") {
    e.label = "scripted";
    e.model = make_scripted_demonstrator(z_max);
  } else if (spec.rfind("static-mean:", 0) == 0) {
    const std::string path = spec.substr(12);
    s.note_input("ego" + std::to_string(index), path);
    const EpisodeDataset d = parse_setting("dataset", [&] { return dataset_from_json(read_json(path)); });
    e.label = "static-mean";
    e.model = parse_setting("dataset", [&] { return make_static_model(mean_demonstrator_weights(d), z_max); });
  } else if (spec.rfind("static:", 0) == 0) {
    std::vector<double> w;
    std::stringstream ss(spec.substr(7));
    for (std::string item; std::getline(ss, item, ',');) {
      try {
        w.push_back(std::stod(item));
      } catch (const std::exception&) {
        throw UsageError("bad static weight '" + item + "'");
      }
    }
    e.label = "static";
    e.model = parse_setting("ego", [&] { return make_static_model(w, z_max); });
  } else {
    if (!fs::exists(spec)) throw UsageError("ego model '" + spec + "' does not exist");
    s.note_input("ego" + std::to_string(index), spec);
    e.model = parse_setting("model", [&] { return weight_model_from_json(read_json(spec)); });
    e.label = fs::path(spec).stem().string();
  }
  return e;
}

PolicyFactory ego_factory(const WeightModel& m, const RacingGame& game, const RolloutConfig& rc) {
  return [m, &game, rc] { return std::make_unique<GamePolicy>(0, m, game, rc); };
}

std::string dump(const json& j) { return j.dump(2) + "\n"; }

// ------------------------------------------------------------------ commands

struct GenDataFlags {
  Common common;
  std::optional<int> episodes, stages;
  std::optional<double> noise, missing;
  std::optional<std::string> demonstrator;
};

int cmd_gen_data(GenDataFlags& f) {
  Settings s = load_settings("gen-data", f.common);
  json& d = s.merged["data"];
  set_if(d, "episodes", f.episodes);
  set_if(d, "stages", f.stages);
  set_if(d, "noise", f.noise);
  set_if(d, "missing", f.missing);
  set_if(d, "demonstrator", f.demonstrator);
  const fs::path dir = output_dir(f.common);
  const RacingGame game = make_game(s);
  SyntheticDataConfig c;
  c.episodes = d.value("episodes", c.episodes);
  c.stages = d.value("stages", c.stages);
  c.noise = d.value("noise", c.noise);
  c.missing = d.value("missing", c.missing);
  c.seed = s.seed();
  c.initial = parse_setting("data.initial", [&] { return initial_ranges_from_json(d.value("initial", json::object())); });
  c.rollout = training_rollout(s);
  if (c.episodes < 1 || c.stages < 1) throw UsageError("data.episodes and data.stages must be positive");
  if (!(c.noise >= 0.0)) throw UsageError("data.noise must be nonnegative");
  if (!(c.missing >= 0.0 && c.missing < 1.0)) throw UsageError("data.missing must lie in [0, 1)");

  // "scripted", "teacher" (random Neural NOD from the seed) or a model path.
  const std::string demo = d.value("demonstrator", std::string("scripted"));
  WeightModel model;
  if (demo == "scripted") {
    model = make_scripted_demonstrator(architecture(s).z_max);
  } else if (demo == "teacher") {
    model = make_weight_model(ModelKind::kNeuralNod, architecture(s), sub_seed(s.seed(), 0, "teacher"));
  } else {
    if (!fs::exists(demo)) throw UsageError("demonstrator model '" + demo + "' does not exist");
    s.note_input("demonstrator", demo);
    model = parse_setting("model", [&] { return weight_model_from_json(read_json(demo)); });
  }

  EpisodeDataset data = generate_synthetic_dataset(model, game, c);
  json out = dataset_to_json(data);
  out["meta"] = s.meta();
  write_text(dir / "dataset.json", dump(out));
  json jm = weight_model_to_json(model);
  jm["meta"] = s.meta();
  write_text(dir / "demonstrator.json", dump(jm));
  std::cout << "gen-data: " << c.episodes << " episodes x " << c.stages << " stages from the " << demo
            << " demonstrator -> " << (dir / "dataset.json").string() << " (config " << s.hash() << ")\n";
  return 0;
}

struct TrainFlags {
  Common common;
  std::string data;
  std::optional<std::string> kind, gradient_mode;
  std::optional<int> epochs, batch;
  std::optional<double> lr;
  int workers = 1;
};

int cmd_train(TrainFlags& f) {
  Settings s = load_settings("train", f.common);
  json& t = s.merged["train"];
  set_if(t, "kind", f.kind);
  set_if(t, "gradient_mode", f.gradient_mode);
  set_if(t, "epochs", f.epochs);
  set_if(t, "batch_size", f.batch);
  set_if(t, "learning_rate", f.lr);
  s.note_input("data", f.data);
  const fs::path dir = output_dir(f.common);
  const RacingGame game = make_game(s);
  const EpisodeDataset data = parse_setting("dataset", [&] { return dataset_from_json(read_json(f.data)); });
  TrainConfig c = parse_setting("train", [&] {
    json j = t;
    j.erase("kind");
    TrainConfig base;
    base.rollout = training_rollout(s);
    base.seed = s.seed();
    return train_config_from_json(j, base);
  });
  c.workers = f.workers;
  if (c.workers < 1) throw UsageError("--workers must be positive");
  const ModelKind kind = parse_setting("train", [&] { return model_kind_from_string(t.value("kind", std::string("neural-nod"))); });
  if (kind == ModelKind::kStatic) throw UsageError("train.kind must be neural-nod or mlp-ig");
  for (std::size_t i = 0; i < data.episodes.size(); ++i) parse_setting("dataset", [&] {
      require_full_first_stage(data.episodes[i], i);
      return 0;
    });

  const WeightModel init = make_weight_model(kind, architecture(s), sub_seed(s.seed(), 0, "init"));
  const double rmse0 = closed_loop_rmse(init, game, data, c);
  const TrainReport rep = train(init, game, data, c, [&](int epoch, double loss) {
    if (epoch % 10 == 0 || epoch + 1 == c.epochs) std::cout << "epoch " << epoch << " loss " << loss << "\n";
  });
  double rmse1 = rmse0;
  try {
    rmse1 = closed_loop_rmse(rep.model, game, data, c);
  } catch (const std::exception& e) {
    std::cerr << "train: final evaluation failed: " << e.what() << "\n";
  }
  json jm = weight_model_to_json(rep.model);
  jm["meta"] = s.meta();
  write_text(dir / "model.json", dump(jm));
  json jr{{"schema_version", 1},
          {"kind", to_string(kind)},
          {"gradient_mode", to_string(c.gradient_mode)},
          {"loss", rep.loss},
          {"gradient_norm", rep.gradient_norm},
          {"completed", rep.completed},
          {"error", rep.error},
          {"rmse_initial", rmse0},
          {"rmse_final", rmse1},
          {"meta", s.meta()}};
  write_text(dir / "train_report.json", dump(jr));
  std::cout << "train: " << rep.loss.size() << " epochs of " << to_string(kind) << ", rmse " << rmse0 << " -> " << rmse1
            << ", wall " << rep.wall_seconds << " s -> " << (dir / "model.json").string() << "\n";
  if (!rep.completed) {
    std::cerr << "train: stopped early: " << rep.error << "\n";
    return 1;
  }
  return 0;
}

struct AnalyzeFlags {
  Common common;
  std::string params, model, data;
  int episode = 0;
};

int cmd_analyze(AnalyzeFlags& f) {
  Settings s = load_settings("analyze", f.common);
  if (f.params.empty() == f.model.empty()) throw UsageError("analyze needs exactly one of --params or --model");
  const fs::path dir = output_dir(f.common);
  NODParams p;
  json source;
  if (!f.params.empty()) {
    s.note_input("params", f.params);
    p = parse_setting("params", [&] { return nod_params_from_json(read_json(f.params)); });
    source = {{"params", fs::path(f.params).filename().string()}};
  } else {
    s.note_input("model", f.model);
    const WeightModel m = parse_setting("model", [&] { return weight_model_from_json(read_json(f.model)); });
    if (m.kind != ModelKind::kNeuralNod) throw UsageError("analyze --model needs a neural-nod model");
    const RacingGame game = make_game(s);
    Vec<double> x;
    if (!f.data.empty()) {
      s.note_input("data", f.data);
      const EpisodeDataset d = parse_setting("dataset", [&] { return dataset_from_json(read_json(f.data)); });
      if (f.episode < 0 || f.episode >= static_cast<int>(d.episodes.size())) throw UsageError("--episode out of range");
      const Episode& e = d.episodes[static_cast<std::size_t>(f.episode)];
      parse_setting("dataset", [&] {
        require_full_first_stage(e, static_cast<std::size_t>(f.episode));
        return 0;
      });
      x = e.observations.front();
    } else {
      x = joint_state_on_track(game.track(), 0.0, 10.0, 0.0, 0.0, 10.0, 10.0);
    }
    p = predict_nod_params(m.net, m.decoder, game.track(), x);
    source = {{"model", fs::path(f.model).filename().string()}, {"state", x}};
  }
  const json& a = s.merged.at("analyze");
  const double scale = a.value("perturbation", 1e-6);
  const auto magnitudes = a.value("bias_magnitudes", std::vector<double>{});

  const BifurcationReport rep = analyze(p);
  json out = bifurcation_report_to_json(rep);
  out["source"] = source;
  out["params"] = nod_params_to_json(p);
  std::string sweep_csv = s.csv_header() + "bias";
  const auto n = static_cast<std::size_t>(p.topology.total_dim());
  for (std::size_t k = 0; k < n; ++k) sweep_csv += ",z" + std::to_string(k);
  sweep_csv += ",settled,steps\n";
  if (rep.critical_attention) {
    const double lc = *rep.critical_attention;
    NODParams unbiased = p;
    std::fill(unbiased.bias.begin(), unbiased.bias.end(), 0.0);
    json growth = json::array();
    for (double factor : {1.5, 0.5}) {
      const double att = factor * lc;
      const double sigma = spectral_abscissa(linearization_at_neutral(unbiased, att));
      const double horizon = std::clamp(25.0 / std::max(std::abs(sigma), 1e-6), 1.0, 2000.0);
      GrowthOptions go;
      go.seed = s.seed();
      const GrowthReport g = verify_instability(unbiased, att, scale, horizon, go);
      growth.push_back({{"attention_factor", factor},
                        {"attention", att},
                        {"fitted_exponent", g.fitted_exponent},
                        {"predicted_exponent", g.predicted_exponent},
                        {"positive", g.positive},
                        {"escaped", g.escaped},
                        {"samples", g.samples}});
    }
    out["growth"] = growth;
    const auto rows = bias_unfolding_sweep(unbiased, 1.5 * lc, magnitudes);
    for (const auto& r : rows) {
      sweep_csv += format_number(r.bias);
      for (double z : r.settled) sweep_csv += "," + format_number(z);
      sweep_csv += "," + std::to_string(r.settled_ok ? 1 : 0) + "," + std::to_string(r.steps) + "\n";
    }
  } else {
    out["growth"] = nullptr;
  }
  out["meta"] = s.meta();
  write_text(dir / "analysis.json", dump(out));
  write_text(dir / "sweep.csv", sweep_csv);
  std::cout << "analyze: critical attention "
            << (rep.critical_attention ? format_number(*rep.critical_attention) : std::string("none (no unstable mode)"))
            << " -> " << (dir / "analysis.json").string() << "\n";
  return 0;
}

struct RaceFlags {
  Common common;
  std::string ego = "scripted";
  std::optional<double> rival_block;
  std::optional<std::string> rival;
  std::optional<int> steps;
};

int cmd_race(RaceFlags& f) {
  Settings s = load_settings("race", f.common);
  json& r = s.merged["race"];
  set_if(r, "rival", f.rival);
  set_if(r, "step_limit", f.steps);
  set_if(r, "rival_block", f.rival_block);
  const fs::path dir = output_dir(f.common);
  const RacingGame game = make_game(s);
  const RolloutConfig rc = planner_rollout(s);
  const EgoSpec ego = load_ego(f.ego, s, 0);
  const RivalSpec rival = rival_spec(s, r.at("rival"));
  const int steps = r.value("step_limit", 200);
  if (steps < 0) throw UsageError("race.step_limit must be nonnegative");
  const double block = r.value("rival_block", 0.5 * (rival.block_range[0] + rival.block_range[1]));
  const auto initial = parse_setting("trials.initial", [&] {
    return initial_ranges_from_json(s.merged.at("trials").value("initial", json::object()));
  });
  Rng rng(sub_seed(s.seed(), 0, "initial"));
  const Vec<double> x0 = random_initial_state(game.track(), initial, rng);

  GamePolicy ego_policy(0, ego.model, game, rc);
  GamePolicy rival_policy(1, make_static_model(rival_weights(rival, block)), game, rc);
  const RaceLog log = run_race(ego_policy, rival_policy, game, x0, steps);
  write_text(dir / "race_log.csv", s.csv_header() + race_log_csv(log));
  json sum = race_log_summary(log);
  sum["ego"] = ego.label;
  sum["rival_block"] = block;
  sum["metrics"] = race_metrics_to_json(compute_metrics({log}));
  sum["meta"] = s.meta();
  write_text(dir / "race_summary.json", dump(sum));
  write_text(dir / "race.svg", render_svg(game.track(), race_traces(log)));
  std::cout << "race: " << to_string(log.reason) << " after " << log.steps() << " steps, final lead "
            << format_number(log.final_lead()) << " m\n";
  return 0;
}

struct TrialsFlags {
  Common common;
  std::vector<std::string> egos;
  std::optional<int> n, steps;
  std::optional<std::string> rival;
  std::vector<double> rival_range;
  int workers = 1;
};

int cmd_trials(TrialsFlags& f) {
  Settings s = load_settings("trials", f.common);
  json& t = s.merged["trials"];
  set_if(t, "n", f.n);
  set_if(t, "step_limit", f.steps);
  set_if(t, "rival", f.rival);
  if (!f.rival_range.empty()) {
    if (f.rival_range.size() != 2) throw UsageError("--rival-range takes two values");
    RivalSpec base = rival_spec(s, t.at("rival"));
    base.block_range = {f.rival_range[0], f.rival_range[1]};
    t["rival"] = rival_spec_to_json(base);
  }
  if (f.egos.empty()) f.egos.push_back("scripted");
  const fs::path dir = output_dir(f.common);
  const RacingGame game = make_game(s);
  const RolloutConfig rc = planner_rollout(s);
  TrialConfig c;
  c.n = t.value("n", c.n);
  c.step_limit = t.value("step_limit", c.step_limit);
  c.seed = s.seed();
  c.workers = f.workers;
  c.rival = rival_spec(s, t.at("rival"));
  c.initial = parse_setting("trials.initial", [&] { return initial_ranges_from_json(t.value("initial", json::object())); });
  if (c.n < 1) throw UsageError("trials.n must be positive");
  if (c.step_limit < 0) throw UsageError("trials.step_limit must be nonnegative");
  if (c.workers < 1) throw UsageError("--workers must be positive");

  std::vector<EgoSpec> egos;
  std::map<std::string, int> seen;
  for (std::size_t i = 0; i < f.egos.size(); ++i) {
    EgoSpec e = load_ego(f.egos[i], s, static_cast<int>(i));
    if (seen[e.label]++ > 0) e.label += "_" + std::to_string(seen[e.label] - 1);
    egos.push_back(std::move(e));
  }
  std::string table = s.csv_header() + "policy,n_trial,n_safe,n_overtake,sr,or,aeld_mean,aeld_std\n";
  json summary{{"rival", rival_spec_to_json(c.rival)}, {"policies", json::array()}};
  for (const auto& e : egos) {
    const TrialsResult res = randomized_trials(ego_factory(e.model, game, rc), game, rc, c);
    const RaceMetrics& m = res.metrics;
    table += e.label + "," + std::to_string(m.n_trial) + "," + std::to_string(m.n_safe) + "," + std::to_string(m.n_overtake) +
             "," + format_number(m.safe_rate) + "," + format_number(m.overtake_rate) + "," + format_number(m.lead_mean) +
             "," + format_number(m.lead_std) + "\n";
    write_text(dir / ("trials_" + e.label + ".csv"), s.csv_header() + trials_csv(res));
    summary["policies"].push_back({{"policy", e.label}, {"metrics", race_metrics_to_json(m)}});
    std::cout << e.label << ": SR " << format_number(m.safe_rate) << "% OR " << format_number(m.overtake_rate) << "% AELD "
              << format_number(m.lead_mean) << " +- " << format_number(m.lead_std) << " m\n";
  }
  summary["meta"] = s.meta();
  write_text(dir / "trials_table.csv", table);
  write_text(dir / "trials_summary.json", dump(summary));
  return 0;
}

struct EnduranceFlags {
  Common common;
  std::string ego = "scripted";
  std::optional<int> steps;
  std::optional<double> respawn_gap;
  std::optional<std::string> rival_kind;
};

int cmd_endurance(EnduranceFlags& f) {
  Settings s = load_settings("endurance", f.common);
  json& e = s.merged["endurance"];
  set_if(e, "step_limit", f.steps);
  set_if(e, "respawn_gap", f.respawn_gap);
  set_if(e, "rival_kind", f.rival_kind);
  const fs::path dir = output_dir(f.common);
  const RacingGame game = make_game(s);
  if (!game.track().closed()) throw UsageError("endurance needs a closed track");
  const RolloutConfig rc = planner_rollout(s);
  const EgoSpec ego = load_ego(f.ego, s, 0);
  EnduranceConfig c;
  c.step_limit = e.value("step_limit", c.step_limit);
  c.respawn_gap = e.value("respawn_gap", c.respawn_gap);
  c.pass_margin = e.value("pass_margin", c.pass_margin);
  c.ego_speed = e.value("ego_speed", c.ego_speed);
  c.rival_speed = e.value("rival_speed", c.rival_speed);
  const std::string kind = e.value("rival_kind", std::string("game"));
  if (kind != "game" && kind != "parked") throw UsageError("endurance.rival_kind must be 'game' or 'parked'");
  c.rival_kind = kind == "game" ? RivalKind::kGame : RivalKind::kParked;
  c.rival = rival_spec(s, e.at("rival"));
  c.seed = s.seed();
  if (c.step_limit < 0) throw UsageError("endurance.step_limit must be nonnegative");

  GamePolicy policy(0, ego.model, game, rc);
  const EnduranceResult res = endurance_race(policy, game, rc, c);
  json sum = endurance_summary(res);
  sum["ego"] = ego.label;
  sum["meta"] = s.meta();
  write_text(dir / "endurance_summary.json", dump(sum));
  write_text(dir / "endurance_log.csv", s.csv_header() + race_log_csv(res.log));
  write_text(dir / "endurance.svg", render_svg(game.track(), race_traces(res.log)));
  std::cout << "endurance: " << to_string(res.log.reason) << ", " << res.overtakes << " overtakes, " << res.collisions
            << " collisions" << (res.finished ? ", lap " + format_number(res.lap_time) + " s" : std::string()) << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Neural opinion dynamics for game cost tuning: data, training, analysis and racing"};
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);

  GenDataFlags gen;
  auto* g = app.add_subcommand("gen-data", "Generate a synthetic demonstration dataset");
  add_common(g, gen.common);
  g->add_option("--episodes", gen.episodes, "Number of episodes");
  g->add_option("--stages", gen.stages, "Observed stages per episode");
  g->add_option("--noise", gen.noise, "Observation noise standard deviation");
  g->add_option("--missing", gen.missing, "Fraction of masked entries, in [0, 1)");
  g->add_option("--demonstrator", gen.demonstrator, "scripted, teacher, or a model file");

  TrainFlags tr;
  auto* t = app.add_subcommand("train", "Fit a weight model to a dataset");
  add_common(t, tr.common);
  t->add_option("--data", tr.data, "Dataset file")->required()->check(CLI::ExistingFile);
  t->add_option("--kind", tr.kind, "neural-nod or mlp-ig");
  t->add_option("--epochs", tr.epochs, "Training epochs");
  t->add_option("--batch", tr.batch, "Episodes per batch");
  t->add_option("--lr", tr.lr, "Adam learning rate");
  t->add_option("--gradient-mode", tr.gradient_mode, "unrolled or finite-difference");
  t->add_option("--workers", tr.workers, "Parallel episode evaluations");

  AnalyzeFlags an;
  auto* a = app.add_subcommand("analyze", "Bifurcation analysis of NOD parameters");
  add_common(a, an.common);
  a->add_option("--params", an.params, "NOD parameter file")->check(CLI::ExistingFile);
  a->add_option("--model", an.model, "Neural NOD model; parameters are decoded at a state")->check(CLI::ExistingFile);
  a->add_option("--data", an.data, "Dataset whose episode supplies the state")->check(CLI::ExistingFile);
  a->add_option("--episode", an.episode, "Episode index in --data");

  RaceFlags ra;
  auto* r = app.add_subcommand("race", "Run one race and write its log");
  add_common(r, ra.common);
  r->add_option("--ego", ra.ego, "Ego policy (scripted, static:..., static-mean:DATA, or model file)");
  r->add_option("--rival", ra.rival, "Rival preset (nominal, aggressive)");
  r->add_option("--rival-block", ra.rival_block, "Rival blocking weight");
  r->add_option("--steps", ra.steps, "Step limit");

  TrialsFlags tf;
  auto* tt = app.add_subcommand("trials", "Randomized races and SR / OR / AELD table");
  add_common(tt, tf.common);
  tt->add_option("--ego", tf.egos, "Ego policy; repeat to compare several");
  tt->add_option("--n", tf.n, "Number of trials per policy");
  tt->add_option("--steps", tf.steps, "Step limit per trial");
  tt->add_option("--rival", tf.rival, "Rival preset (nominal, aggressive)");
  tt->add_option("--rival-range", tf.rival_range, "Blocking weight range LO HI")->expected(2);
  tt->add_option("--workers", tf.workers, "Parallel races");

  EnduranceFlags en;
  auto* e = app.add_subcommand("endurance", "One lap with respawning rivals");
  add_common(e, en.common);
  e->add_option("--ego", en.ego, "Ego policy");
  e->add_option("--steps", en.steps, "Step limit");
  e->add_option("--respawn-gap", en.respawn_gap, "Spawn distance ahead of the ego; 0 disables rivals");
  e->add_option("--rival-kind", en.rival_kind, "game or parked");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    std::cout << app.help();
    return 0;
  } catch (const CLI::CallForVersion&) {
    std::cout << kVersion << "\n";
    return 0;
  } catch (const CLI::ParseError& err) {
    std::cerr << "nnod: " << err.what() << "\n" << app.help();
    return 2;
  }

  try {
    if (g->parsed()) return cmd_gen_data(gen);
    if (t->parsed()) return cmd_train(tr);
    if (a->parsed()) return cmd_analyze(an);
    if (r->parsed()) return cmd_race(ra);
    if (tt->parsed()) return cmd_trials(tf);
    if (e->parsed()) return cmd_endurance(en);
  } catch (const UsageError& err) {
    std::cerr << "nnod: " << err.what() << "\n";
    return 2;
  } catch (const std::exception& err) {
    std::cerr << "nnod: " << err.what() << "\n";
    return 1;
  }
  return 2;
}
