#include "maps/config.hpp"

#include <cstdlib>
#include <fstream>
#include <functional>
#include <map>

#include "maps/error.hpp"

namespace maps {
namespace {

using nlohmann::json;

struct Field {
  std::function<void(CliConfig&, const json&)> set;
  std::function<json(const CliConfig&)> get;
};

template <typename T>
Field field(T CliConfig::*member) {
  return {[member](CliConfig& c, const json& v) { c.*member = v.get<T>(); },
          [member](const CliConfig& c) { return json(c.*member); }};
}

const std::map<std::string, Field>& fields() {
  static const std::map<std::string, Field> table = [] {
    std::map<std::string, Field> t;
    t["output_dir"] = field(&CliConfig::output_dir);
    t["overwrite"] = field(&CliConfig::overwrite);
    t["seed"] = field(&CliConfig::seed);
    t["plots"] = field(&CliConfig::plots);
    t["overlay_count"] = field(&CliConfig::overlay_count);
    t["gap"] = field(&CliConfig::gap);
    t["geometry_gap"] = field(&CliConfig::geometry_gap);
    t["n_source"] = field(&CliConfig::n_source);
    t["n_target"] = field(&CliConfig::n_target);
    t["n_test"] = field(&CliConfig::n_test);
    t["image_size"] = field(&CliConfig::image_size);
    t["source_data"] = field(&CliConfig::source_data);
    t["target_data"] = field(&CliConfig::target_data);
    t["eval_data"] = field(&CliConfig::eval_data);
    t["source_checkpoint"] = field(&CliConfig::source_checkpoint);
    t["checkpoint"] = field(&CliConfig::checkpoint);
    t["steps"] = field(&CliConfig::steps);
    t["batch_size"] = field(&CliConfig::batch_size);
    t["learning_rate"] = field(&CliConfig::learning_rate);
    t["lr_drops"] = field(&CliConfig::lr_drops);
    t["heatmap_sigma"] = field(&CliConfig::heatmap_sigma);
    t["rotation_range"] = field(&CliConfig::rotation_range);
    t["translation_range"] = field(&CliConfig::translation_range);
    t["noise_range"] = field(&CliConfig::noise_range);
    t["blur_range"] = field(&CliConfig::blur_range);
    t["eval_every"] = field(&CliConfig::eval_every);
    t["method"] = field(&CliConfig::method);
    t["eta"] = field(&CliConfig::eta);
    t["alpha"] = field(&CliConfig::alpha);
    t["beta_m"] = field(&CliConfig::beta_m);
    t["beta_s"] = field(&CliConfig::beta_s);
    t["tau"] = field(&CliConfig::tau);
    t["selection_fractions"] = field(&CliConfig::selection_fractions);
    t["pseudo_from_teacher"] = field(&CliConfig::pseudo_from_teacher);
    t["evaluate_teacher"] = field(&CliConfig::evaluate_teacher);
    t["pck_fraction"] = field(&CliConfig::pck_fraction);
    return t;
  }();
  return table;
}

bool integral_key(const json& v) { return v.is_number_integer() || v.is_number_unsigned(); }

// Rejects the silent conversions nlohmann would otherwise allow (3.7 -> 3).
void check_type(const std::string& key, const json& current, const json& value) {
  bool ok = true;
  if (current.is_boolean()) ok = value.is_boolean();
  else if (current.is_string()) ok = value.is_string();
  else if (integral_key(current)) ok = integral_key(value);
  else if (current.is_number()) ok = value.is_number();
  else if (current.is_array()) ok = value.is_array();
  if (!ok) throw ConfigError("config key '" + key + "' has the wrong type: " + value.dump());
}

void require(bool ok, const std::string& message) {
  if (!ok) throw ConfigError(message);
}

void require_input(const std::string& path, const std::string& key) {
  if (path.empty()) throw ConfigError("config key '" + key + "' is required for this command");
  if (!std::filesystem::exists(path)) throw MissingArtifact(key + " not found: " + path);
}

}  // namespace

const char* command_name(Command command) {
  switch (command) {
    case Command::kGenerate: return "generate";
    case Command::kTrainSource: return "train-source";
    case Command::kAdapt: return "adapt";
    case Command::kEvaluate: return "evaluate";
  }
  return "generate";
}

Command command_from_name(const std::string& name) {
  for (Command c : {Command::kGenerate, Command::kTrainSource, Command::kAdapt, Command::kEvaluate}) {
    if (name == command_name(c)) return c;
  }
  throw ConfigError("unknown command '" + name + "'");
}

const std::vector<std::string>& config_keys() {
  static const std::vector<std::string> keys = [] {
    std::vector<std::string> k;
    for (const auto& [name, f] : fields()) k.push_back(name);
    return k;
  }();
  return keys;
}

CliConfig default_cli_config(Command command) {
  CliConfig c;
  if (command == Command::kAdapt) {
    c.steps = 1500;
    c.lr_drops = {{1.0 / 3.0, 1e-4}};
  }
  return c;
}

void apply_config_json(CliConfig& config, const json& values) {
  if (!values.is_object()) throw ConfigError("config must be a JSON object");
  const auto& table = fields();
  for (const auto& [key, value] : values.items()) {
    const auto it = table.find(key);
    if (it == table.end()) throw ConfigError("unknown config key '" + key + "'");
    check_type(key, it->second.get(config), value);
    try {
      it->second.set(config, value);
    } catch (const json::exception&) {
      throw ConfigError("config key '" + key + "' has an invalid value: " + value.dump());
    }
  }
}

json config_to_json(const CliConfig& config) {
  json out = json::object();
  for (const auto& [key, f] : fields()) out[key] = f.get(config);
  return out;
}

CliConfig resolve_config(Command command, const std::filesystem::path& file, const json& overrides) {
  CliConfig config = default_cli_config(command);
  if (!file.empty()) {
    std::ifstream in(file);
    if (!in) throw MissingArtifact("config file not found: " + file.string());
    json parsed;
    try {
      parsed = json::parse(in);
    } catch (const json::parse_error& e) {
      throw ConfigError("config file " + file.string() + " is not valid JSON: " + e.what());
    }
    apply_config_json(config, parsed);
  }
  if (!overrides.is_null()) apply_config_json(config, overrides);

  if (const char* root = std::getenv("MAPS_OUTPUT_ROOT"); root && *root && !config.output_dir.empty()) {
    const std::filesystem::path out(config.output_dir);
    if (out.is_relative()) config.output_dir = (std::filesystem::path(root) / out).string();
  }
  return config;
}

void validate_config(const CliConfig& c, Command command) {
  require(!c.output_dir.empty(), "config key 'output_dir' is required");
  require(c.overlay_count >= 0, "overlay_count must be non-negative");
  switch (command) {
    case Command::kGenerate:
      require(c.gap >= 0.0 && c.gap <= 1.0, "gap must lie in [0, 1]");
      require(c.geometry_gap >= 0.0, "geometry_gap must be non-negative");
      require(c.n_source > 0 && c.n_target > 0, "n_source and n_target must be positive");
      require(c.n_test >= 0, "n_test must be non-negative");
      require(c.image_size >= 16 && c.image_size % 16 == 0, "image_size must be a positive multiple of 16");
      return;
    case Command::kTrainSource:
      require_input(c.source_data, "source_data");
      if (!c.eval_data.empty()) require_input(c.eval_data, "eval_data");
      break;
    case Command::kAdapt:
      require(c.method == "mt" || c.method == "maps", "method must be 'mt' or 'maps', got '" + c.method + "'");
      require_input(c.source_checkpoint, "source_checkpoint");
      require_input(c.target_data, "target_data");
      if (!c.eval_data.empty()) require_input(c.eval_data, "eval_data");
      break;
    case Command::kEvaluate:
      require_input(c.checkpoint, "checkpoint");
      require_input(c.eval_data, "eval_data");
      require(c.pck_fraction > 0.0, "pck_fraction must be positive");
      return;
  }
  to_train_config(c, command).validate();
}

TrainConfig to_train_config(const CliConfig& c, Command command) {
  TrainConfig t;
  if (command == Command::kAdapt) {
    t.stage = c.method == "mt" ? Stage::kMeanTeacher : Stage::kMaps;
  } else {
    t.stage = Stage::kSource;
  }
  t.steps = c.steps;
  t.batch_size = c.batch_size;
  for (const auto& [fraction, rate] : c.lr_drops) {
    if (!(fraction > 0.0 && fraction < 1.0)) throw ConfigError("lr_drops fractions must lie in (0, 1)");
  }
  t.learning_rate = LrSchedule::step_decay(c.steps, c.learning_rate, c.lr_drops);
  t.weights = {c.beta_m, c.beta_s, c.tau};
  t.eta = c.eta;
  t.alpha = c.alpha;
  t.selection_fractions = c.selection_fractions;
  t.seed = c.seed;
  t.source_augmentation = {c.rotation_range, c.translation_range, c.noise_range, c.blur_range, true, true, true, true};
  t.target_augmentation = t.source_augmentation;
  t.heatmap_sigma = c.heatmap_sigma;
  t.eval_every = c.eval_every;
  t.pck_fraction = c.pck_fraction;
  t.evaluate_teacher = c.evaluate_teacher;
  t.pseudo_from_teacher = c.pseudo_from_teacher;
  return t;
}

}  // namespace maps
