#include "flowdistill/cli/config.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "json.hpp"

namespace flowdistill::cli {

namespace {

std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return std::string(s.substr(first, last - first + 1));
}

std::string unquote(std::string s) {
  if (s.size() >= 2 && ((s.front() == '"' && s.back() == '"') || (s.front() == '\'' && s.back() == '\'')))
    return s.substr(1, s.size() - 2);
  return s;
}

void flatten(const nlohmann::json& j, const std::string& prefix, Config& out) {
  if (j.is_object()) {
    for (auto it = j.begin(); it != j.end(); ++it)
      flatten(it.value(), prefix.empty() ? it.key() : prefix + "." + it.key(), out);
    return;
  }
  if (prefix.empty()) throw ConfigError("JSON config must be an object");
  if (j.is_string()) {
    out.set(prefix, j.get<std::string>());
  } else if (j.is_array()) {
    std::string joined;
    for (const auto& e : j) {
      if (e.is_object() || e.is_array()) throw ConfigError("nested arrays are not supported: " + prefix);
      if (!joined.empty()) joined += ",";
      joined += e.is_string() ? e.get<std::string>() : e.dump();
    }
    out.set(prefix, joined);
  } else if (j.is_null()) {
    out.set(prefix, "");
  } else {
    out.set(prefix, j.dump());
  }
}

}  // namespace

std::uint64_t fnv1a64(const void* data, std::size_t size, std::uint64_t h) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < size; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

Config Config::parse_text(const std::string& text) {
  Config cfg;
  std::istringstream in(text);
  std::string line;
  std::string section;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    const std::string t = trim(line);
    if (t.empty()) continue;
    if (t.front() == '[') {
      if (t.back() != ']') throw ConfigError("line " + std::to_string(lineno) + ": unterminated section header");
      section = trim(std::string_view(t).substr(1, t.size() - 2));
      continue;
    }
    const auto eq = t.find('=');
    if (eq == std::string::npos) throw ConfigError("line " + std::to_string(lineno) + ": expected key = value");
    std::string key = trim(std::string_view(t).substr(0, eq));
    if (key.empty()) throw ConfigError("line " + std::to_string(lineno) + ": empty key");
    if (!section.empty()) key = section + "." + key;
    cfg.set(key, unquote(trim(std::string_view(t).substr(eq + 1))));
  }
  return cfg;
}

Config Config::parse_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(std::string("invalid JSON: ") + e.what());
  }
  Config cfg;
  flatten(j, "", cfg);
  return cfg;
}

Config Config::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open config file '" + path.string() + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  const std::string text = buf.str();
  const auto first = text.find_first_not_of(" \t\r\n");
  const bool json = path.extension() == ".json" || (first != std::string::npos && text[first] == '{');
  return json ? parse_json(text) : parse_text(text);
}

Config Config::with_defaults(const Config& overrides) {
  Config cfg;
  for (const auto& e : config_schema()) cfg.set(e.key, e.value);
  for (const auto& [k, v] : overrides.values()) {
    if (!cfg.has(k)) throw ConfigError("unknown config key '" + k + "'");
    cfg.set(k, v);
  }
  return cfg;
}

std::string Config::str(const std::string& key) const {
  const auto it = values_.find(key);
  if (it == values_.end()) throw ConfigError("missing config key '" + key + "'");
  return it->second;
}

double Config::num(const std::string& key) const {
  const std::string s = str(key);
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size() || !std::isfinite(v)) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw ConfigError("config key '" + key + "': expected a number, got '" + s + "'");
  }
}

long long Config::integer(const std::string& key) const {
  const std::string s = str(key);
  long long v = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size())
    throw ConfigError("config key '" + key + "': expected an integer, got '" + s + "'");
  return v;
}

std::size_t Config::count(const std::string& key) const {
  const long long v = integer(key);
  if (v < 0) throw ConfigError("config key '" + key + "' must be non-negative");
  return static_cast<std::size_t>(v);
}

bool Config::flag(const std::string& key) const {
  const std::string s = str(key);
  if (s == "true" || s == "1" || s == "yes" || s == "on") return true;
  if (s == "false" || s == "0" || s == "no" || s == "off") return false;
  throw ConfigError("config key '" + key + "': expected a boolean, got '" + s + "'");
}

std::vector<std::string> Config::list(const std::string& key) const {
  std::vector<std::string> out;
  std::stringstream in(str(key));
  std::string item;
  while (std::getline(in, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

std::vector<double> Config::num_list(const std::string& key) const {
  std::vector<double> out;
  for (const auto& item : list(key)) {
    try {
      std::size_t used = 0;
      out.push_back(std::stod(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw ConfigError("config key '" + key + "': bad number '" + item + "'");
    }
  }
  return out;
}

std::string Config::to_text() const {
  std::string out;
  for (const auto& [k, v] : values_) out += k + " = " + v + "\n";
  return out;
}

// The output directory is excluded so reruns into different directories share a hash.
std::uint64_t Config::hash() const {
  std::string text;
  for (const auto& [k, v] : values_)
    if (k != "out") text += k + " = " + v + "\n";
  return fnv1a64(text.data(), text.size());
}

const std::vector<SchemaEntry>& config_schema() {
  static const std::vector<SchemaEntry> schema = {
      {"experiment", "run", "run name used in the summary"},
      {"seed", "0", "master seed; every random stream derives from it"},
      {"reproducible", "false", "write wall_ms as 0 so reruns are byte-identical"},
      {"out", "out", "output directory"},

      {"prior.preset", "benchmark", "gauss1d | gmm2d | benchmark | labels"},
      {"prior.scale", "auto", "component / view-prior scale s; auto is 0.5 for gauss1d and gmm2d, 0.1 otherwise"},
      {"prior.mean", "1.0", "gauss1d mean"},
      {"prior.separation", "2.0", "gmm2d distance between the two component means"},
      {"prior.labels", "10", "labels preset: number of labels"},

      {"generator.kind", "multiview", "multiview | identity | particle"},
      {"generator.height", "32", "grid height"},
      {"generator.width", "32", "grid width"},
      {"generator.views", "8", "camera azimuths, evenly spaced"},
      {"generator.particles", "16", "particle generator: number of particles"},

      {"method", "apfo", "sds | vsd | apfo"},
      {"distill.policy", "auto", "random | annealed | scheduled; auto picks scheduled for apfo, random otherwise"},
      {"distill.weighting", "edm", "lambda(t) for sds / vsd: unit | inverse_sigma2 | edm"},
      {"distill.guidance", "0", "classifier-free guidance scale"},
      {"distill.label", "", "conditioning label; empty for unconditional"},
      {"distill.aux", "analytic", "ideal | analytic | lora"},
      {"distill.aux_scale", "auto", "analytic aux spread; auto uses prior.scale"},
      {"distill.aux_training", "true", "lora: one adapter step per rendered view"},
      {"distill.pose_conditioned_aux", "false", "feed the camera azimuth to the aux model"},
      {"distill.aux_batch", "4", "lora: noise draws per adapter step"},
      {"distill.aux_pretrain_steps", "300", "lora: DSM steps for the base network"},
      {"distill.inner_steps", "3", "K, optimizer steps per apfo target"},
      {"distill.optimizer", "sgd", "sgd | adam"},
      {"distill.lr", "1.0", "parameter learning rate"},
      {"distill.t_min", "0.02", "sds / vsd timestep range"},
      {"distill.t_max", "0.98", ""},
      {"distill.total_updates", "0", "sds / vsd updates; 0 matches the apfo budget"},

      {"schedule.sigma_min", "0.002", ""},
      {"schedule.sigma_max", "80", ""},
      {"schedule.rho", "7", ""},
      {"schedule.n_steps", "800", "dense noise levels"},

      {"window.preset", "nerf", "nerf | geometry | texture | refine | full"},
      {"window.t_start", "auto", "override of the preset"},
      {"window.t_end", "auto", ""},
      {"window.views", "auto", "views per step"},
      {"window.spacing", "auto", ""},

      {"train.steps", "2000", "train-prior: Adam steps"},
      {"train.batch", "64", ""},
      {"train.lr", "0.001", ""},
      {"train.weighting", "edm", "unit | inverse_sigma2 | edm"},
      {"train.hidden", "64,64", "hidden layer widths"},
      {"train.frequencies", "6", "Fourier features of the noise level"},
      {"train.log_every", "50", "training CSV row interval"},
      {"train.eval_sigmas", "25", "log-spaced evaluation levels in [0.01, 10]"},
      {"train.eval_samples", "400", "evaluation points per level"},

      {"sample.mode", "ode", "ode | sde | sdedit"},
      {"sample.solver", "euler", "euler | heun"},
      {"sample.steps", "200", "noise levels of the sampling grid"},
      {"sample.sigmas", "", "explicit comma-separated grid; overrides sample.steps"},
      {"sample.count", "4096", ""},
      {"sample.eta", "1.0", "sde: 1 is the reverse SDE, 0 the PF ODE"},
      {"sample.t_start", "0.4", "sdedit: start time"},
      {"sample.source", "", "sdedit: comma-separated source point; empty uses the origin"},
      {"sample.checkpoint", "", "denoiser checkpoint; empty uses the analytic prior"},

      {"compare.methods", "sds,vsd,vsd-anneal,apfo", ""},
      {"compare.seeds", "5", "seeds 0 .. n-1 offset by the master seed"},
      {"compare.vsd_lr", "0.01", "learning rate for sds / vsd"},
      {"compare.vsd_optimizer", "adam", ""},

      {"pipeline.preset", "four-stage", "four-stage | single"},
      {"pipeline.coarse", "16", "coarse grid side for the first stage"},

      {"eval.trajectory", "", "trajectory CSV to summarize"},
      {"eval.checkpoint", "", "scene checkpoint to score against the benchmark truth"},

      {"metrics.projections", "128", "sliced-W2 projections"},

      {"emit.csv", "true", ""},
      {"emit.svg", "true", ""},
      {"emit.pgm", "true", ""},
      {"emit.checkpoints", "true", ""},
  };
  return schema;
}

std::string schema_text() {
  std::string out;
  std::string section = "\x01";
  for (const auto& e : config_schema()) {
    const std::string key = e.key;
    const auto dot = key.find('.');
    const std::string sec = dot == std::string::npos ? "" : key.substr(0, dot);
    if (sec != section) {
      if (section != "\x01") out += "\n";
      section = sec;
    }
    out += key + " = " + e.value;
    if (*e.help) out += "  # " + std::string(e.help);
    out += "\n";
  }
  return out;
}

}  // namespace flowdistill::cli
