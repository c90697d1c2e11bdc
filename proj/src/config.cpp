#include "mixpo/config.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include "mixpo/errors.hpp"
#include "yaml_util.hpp"

namespace mixpo {

namespace {

std::size_t as_count(const YAML::Node& node, const std::string& key) {
  const auto v = yaml::as<long long>(node, key);
  if (v < 0) throw ParseError("'" + key + "' must be non-negative", yaml::line_of(node));
  return static_cast<std::size_t>(v);
}

void read_count(const YAML::Node& root, const std::string& key, std::size_t& out) {
  if (root[key]) out = as_count(root[key], key);
}

void read_double(const YAML::Node& map, const std::string& key, double& out) {
  if (map[key]) out = yaml::as<double>(map[key], key);
}

std::string shortest(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

}  // namespace

LoadedConfig parse_config(const std::string& text) {
  const YAML::Node root = yaml::parse_document(text);
  yaml::reject_unknown_keys(root, {"mode", "iterations", "group_size", "off_group_size", "max_retries", "seed",
                                   "context_window", "reward_threshold", "sigma_estimate_samples",
                                   "lipschitz_probe_count", "schedule", "mix"});
  LoadedConfig loaded;
  TrainConfig& c = loaded.config;
  if (root["mode"]) {
    try {
      c.mode = parse_mode(yaml::as<std::string>(root["mode"], "mode"));
    } catch (const std::invalid_argument& e) {
      throw ParseError(e.what(), yaml::line_of(root["mode"]));
    }
  }
  read_count(root, "iterations", c.iterations);
  read_count(root, "group_size", c.sampling.group_size);
  if (root["off_group_size"]) {
    c.sampling.off_group_size = as_count(root["off_group_size"], "off_group_size");
    loaded.off_group_size_set = true;
  }
  read_count(root, "max_retries", c.sampling.max_retries);
  if (root["seed"]) c.seed = yaml::as<std::uint64_t>(root["seed"], "seed");
  if (root["context_window"]) {
    const auto w = as_count(root["context_window"], "context_window");
    c.context_window = static_cast<std::uint32_t>(w);
  }
  read_double(root, "reward_threshold", c.reward_threshold);
  read_count(root, "sigma_estimate_samples", c.sigma_estimate_samples);
  read_count(root, "lipschitz_probe_count", c.lipschitz_probe_count);

  if (const auto s = root["schedule"]) {
    yaml::require_map(s, "schedule");
    yaml::reject_unknown_keys(s, {"kind", "alpha"});
    const auto kind = yaml::get_or<std::string>(s, "kind", "Theorem1");
    if (kind == "Theorem1") {
      c.schedule.kind = ScheduleKind::Theorem1;
      if (s["alpha"]) throw ParseError("'alpha' only applies to the Constant schedule", yaml::line_of(s["alpha"]));
    } else if (kind == "Constant") {
      c.schedule.kind = ScheduleKind::Constant;
      c.schedule.alpha = yaml::get<double>(s, "alpha");
    } else {
      throw ParseError("schedule kind must be Theorem1 or Constant", yaml::line_of(s["kind"]));
    }
  }
  if (const auto m = root["mix"]) {
    yaml::require_map(m, "mix");
    yaml::reject_unknown_keys(m, {"gamma", "epsilon", "w_lower", "w_upper", "on_weight", "mix_weight"});
    read_double(m, "gamma", c.mix.gamma);
    read_double(m, "epsilon", c.mix.epsilon);
    read_double(m, "w_lower", c.mix.w_lower);
    read_double(m, "w_upper", c.mix.w_upper);
    read_double(m, "on_weight", c.mix.on_weight);
    read_double(m, "mix_weight", c.mix.mix_weight);
  }
  try {
    c.validate();
  } catch (const std::invalid_argument& e) {
    throw ParseError(e.what(), 0);
  }
  return loaded;
}

LoadedConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open config file " + path.string(), 0);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

std::string format_config(const TrainConfig& c) {
  std::ostringstream out;
  out << "mode: " << mode_name(c.mode) << '\n'
      << "iterations: " << c.iterations << '\n'
      << "group_size: " << c.sampling.group_size << '\n';
  if (c.sampling.off_group_size != 0) out << "off_group_size: " << c.sampling.off_group_size << '\n';
  out << "max_retries: " << c.sampling.max_retries << '\n'
      << "seed: " << c.seed << '\n'
      << "context_window: " << c.context_window << '\n'
      << "reward_threshold: " << shortest(c.reward_threshold) << '\n'
      << "sigma_estimate_samples: " << c.sigma_estimate_samples << '\n'
      << "lipschitz_probe_count: " << c.lipschitz_probe_count << '\n';
  if (c.schedule.kind == ScheduleKind::Theorem1)
    out << "schedule: {kind: Theorem1}\n";
  else
    out << "schedule: {kind: Constant, alpha: " << shortest(c.schedule.alpha) << "}\n";
  out << "mix:\n"
      << "  gamma: " << shortest(c.mix.gamma) << '\n'
      << "  epsilon: " << shortest(c.mix.epsilon) << '\n'
      << "  w_lower: " << shortest(c.mix.w_lower) << '\n'
      << "  w_upper: " << shortest(c.mix.w_upper) << '\n'
      << "  on_weight: " << shortest(c.mix.on_weight) << '\n'
      << "  mix_weight: " << shortest(c.mix.mix_weight) << '\n';
  return out.str();
}

}  // namespace mixpo
