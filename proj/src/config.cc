#include "recdiff/config.h"

#include <yaml-cpp/yaml.h>

#include <charconv>
#include <map>
#include <set>
#include <sstream>
#include <type_traits>

#include "recdiff/errors.h"
#include "recdiff/fusion.h"
#include "recdiff/losses.h"
#include "recdiff/nn.h"
#include "recdiff/util.h"

namespace recdiff {

namespace {

[[noreturn]] void type_error(const std::string& key, const char* expected, const std::string& text) {
  throw ConfigError("config key '" + key + "': expected " + expected + ", got '" + text + "'");
}

template <typename T>
void set_field(T& field, const std::string& key, const std::string& text) {
  if constexpr (std::is_same_v<T, std::string>) {
    field = text;
  } else if constexpr (std::is_same_v<T, bool>) {
    if (text == "true" || text == "True" || text == "TRUE") {
      field = true;
    } else if (text == "false" || text == "False" || text == "FALSE") {
      field = false;
    } else {
      type_error(key, "boolean", text);
    }
  } else {
    T value{};
    const char* first = text.data();
    const char* last = first + text.size();
    if (!text.empty() && *first == '+') ++first;
    auto [ptr, ec] = std::from_chars(first, last, value);
    if (ec != std::errc() || ptr != last || text.empty()) {
      type_error(key, std::is_floating_point_v<T> ? "number" : (std::is_signed_v<T> ? "integer" : "non-negative integer"),
                 text);
    }
    field = value;
  }
}

void flatten(const YAML::Node& node, const std::string& prefix, std::map<std::string, std::string>& out) {
  if (node.IsMap()) {
    for (const auto& kv : node) {
      const std::string name = kv.first.as<std::string>();
      flatten(kv.second, prefix.empty() ? name : prefix + "." + name, out);
    }
  } else if (node.IsScalar()) {
    out[prefix] = node.Scalar();
  } else if (node.IsNull()) {
    out[prefix] = "";
  } else {
    throw ConfigError("config key '" + prefix + "': expected a scalar value");
  }
}

std::string format_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  std::string s(buf, ptr);
  if (s.find_first_of(".eEn") == std::string::npos) s += ".0";
  return s;
}

std::string quote(const std::string& s) {
  std::string out = "\"";
  for (char c : s) {
    if (c == '"' || c == '\\') {
      out += '\\';
      out += c;
    } else if (c == '\n') {
      out += "\\n";
    } else {
      out += c;
    }
  }
  return out + "\"";
}

template <typename T>
std::string render(const T& v) {
  if constexpr (std::is_same_v<T, std::string>) {
    return quote(v);
  } else if constexpr (std::is_same_v<T, bool>) {
    return v ? "true" : "false";
  } else if constexpr (std::is_floating_point_v<T>) {
    return format_double(v);
  } else {
    return std::to_string(v);
  }
}

void require(bool ok, const std::string& message) {
  if (!ok) throw ConfigError(message);
}

}  // namespace

std::vector<std::string> config_keys() {
  std::vector<std::string> keys;
  ExperimentConfig c;
  visit_fields(c, [&](const char* key, auto&) { keys.emplace_back(key); });
  return keys;
}

ExperimentConfig parse_config(const std::string& yaml_text) {
  YAML::Node root;
  try {
    root = YAML::Load(yaml_text);
  } catch (const YAML::Exception& e) {
    throw ConfigError(std::string("invalid YAML: ") + e.what());
  }
  ExperimentConfig config;
  if (root.IsNull()) return config;
  if (!root.IsMap()) throw ConfigError("config root must be a mapping");
  std::map<std::string, std::string> flat;
  flatten(root, "", flat);
  std::set<std::string> seen;
  visit_fields(config, [&](const char* key, auto& field) {
    auto it = flat.find(key);
    if (it == flat.end()) return;
    set_field(field, key, it->second);
    seen.insert(key);
  });
  for (const auto& [key, value] : flat) {
    if (!seen.count(key)) throw ConfigError("unknown config key '" + key + "'");
  }
  return config;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw ConfigError("config file not found: " + path.string());
  ExperimentConfig config = parse_config(read_file(path));
  const auto base = path.parent_path();
  for (std::string* p : {&config.data.dataset, &config.data.semantic, &config.data.prompts}) {
    if (!p->empty() && std::filesystem::path(*p).is_relative()) *p = (base / *p).lexically_normal().string();
  }
  return config;
}

void apply_override(ExperimentConfig& config, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos) throw ConfigError("override '" + assignment + "' is not of the form key=value");
  const std::string key = trim(assignment.substr(0, eq));
  std::string value = trim(assignment.substr(eq + 1));
  if (value.size() >= 2 && (value.front() == '"' || value.front() == '\'') && value.back() == value.front()) {
    value = value.substr(1, value.size() - 2);
  }
  bool found = false;
  visit_fields(config, [&](const char* k, auto& field) {
    if (key == k) {
      set_field(field, key, value);
      found = true;
    }
  });
  if (!found) throw ConfigError("unknown config key '" + key + "'");
}

void validate_config(const ExperimentConfig& c) {
  require(c.data.pseudo_dim >= 1, "data.pseudo_dim must be >= 1");
  require(c.data.max_len >= 1, "data.max_len must be >= 1");
  require(c.data.tail_fraction > 0.0 && c.data.tail_fraction < 1.0, "data.tail_fraction must lie in (0, 1)");
  require(c.data.cold_threshold >= 1, "data.cold_threshold must be >= 1");

  require(c.model.dim >= 1, "model.dim must be >= 1");
  require(c.model.layers >= 0, "model.layers must be >= 0");
  require(c.model.heads >= 1 && c.model.dim % c.model.heads == 0, "model.heads must divide model.dim");
  require(c.model.dropout >= 0.0 && c.model.dropout < 1.0, "model.dropout must lie in [0, 1)");
  require(c.model.adapter_layers == 1 || c.model.adapter_layers == 2, "model.adapter_layers must be 1 or 2");
  try {
    parse_activation(c.model.adapter_activation);
  } catch (const ConfigError& e) {
    throw ConfigError(std::string("model.adapter_activation: ") + e.what());
  }

  parse_fusion_strategy(c.fusion.strategy);
  require(c.fusion.weighted_alpha >= 0.0 && c.fusion.weighted_alpha <= 1.0,
          "fusion.weighted_alpha must lie in [0, 1]");
  require(c.fusion.ca_heads >= 1 && c.model.dim % c.fusion.ca_heads == 0, "fusion.ca_heads must divide model.dim");

  require(c.intent.k >= 2, "intent.k must be >= 2");
  require(c.intent.min_prefix >= 1, "intent.min_prefix must be >= 1");
  require(c.intent.clustering_interval >= 1, "intent.clustering_interval must be >= 1");
  require(c.intent.max_fit_points >= c.intent.k, "intent.max_fit_points must be >= intent.k");
  require(c.intent.kmeans_iters >= 1, "intent.kmeans_iters must be >= 1");

  require(c.diffusion.steps >= 1, "diffusion.steps must be >= 1");
  require(c.diffusion.beta_start > 0.0 && c.diffusion.beta_start <= c.diffusion.beta_end && c.diffusion.beta_end < 1.0,
          "diffusion.beta_start/beta_end need 0 < beta_start <= beta_end < 1");
  require(c.diffusion.hidden_width >= 1, "diffusion.hidden_width must be >= 1");
  require(c.diffusion.time_embed_width >= 0, "diffusion.time_embed_width must be >= 0");

  LossWeights{c.loss.lambda_rec, c.loss.lambda_diff, c.loss.lambda_cl, c.loss.lambda_align}.validate();
  require(c.loss.temperature > 0.0, "loss.temperature must be > 0");

  require(c.train.lr > 0.0, "train.lr must be > 0");
  require(c.train.batch_size >= 2, "train.batch_size must be >= 2");
  require(c.train.epochs >= 1, "train.epochs must be >= 1");
  require(c.train.patience >= 1, "train.patience must be >= 1");
  require(c.train.augment_interval >= 1, "train.augment_interval must be >= 1");

  require(c.eval.silhouette_max_points >= 3, "eval.silhouette_max_points must be >= 3");
}

std::string to_yaml(const ExperimentConfig& config) {
  std::ostringstream out;
  std::string section;
  visit_fields(config, [&](const char* key, const auto& field) {
    const std::string k = key;
    const auto dot = k.find('.');
    const std::string head = k.substr(0, dot);
    if (head != section) {
      section = head;
      out << head << ":\n";
    }
    out << "  " << k.substr(dot + 1) << ": " << render(field) << "\n";
  });
  return out.str();
}

}  // namespace recdiff
