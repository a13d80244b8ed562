#include "ierd/config.hpp"

#include <charconv>
#include <cstdlib>
#include <fstream>
#include <istream>
#include <sstream>

namespace ierd {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::uint64_t parse_uint(const std::string& key, const std::string& v) {
  std::uint64_t out = 0;
  const auto s = trim(v);
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  if (ec != std::errc() || p != s.data() + s.size() || s.empty()) {
    throw ConfigError(key + ": expected a non-negative integer, got '" + v + "'");
  }
  return out;
}

double parse_double(const std::string& key, const std::string& v) {
  double out = 0;
  const auto s = trim(v);
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  if (ec != std::errc() || p != s.data() + s.size() || s.empty()) {
    throw ConfigError(key + ": expected a number, got '" + v + "'");
  }
  return out;
}

std::string fmt_double(double v) {
  char buf[64];
  auto [p, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, p);
}

std::string env_name(const std::string& key) {
  std::string n = "IERD_";
  for (char c : key) n += c == '.' ? '_' : static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  return n;
}

}  // namespace

const std::vector<std::string>& RunConfig::keys() {
  static const std::vector<std::string> k = {
      "network.modules",  "network.layers",     "network.channels",       "network.image_channels",
      "network.dilations", "train.steps",       "train.batch",            "train.patch",
      "train.lr",         "train.halving_period", "train.weight_decay",   "train.checkpoint_every",
      "train.seed",       "train.threads",      "noise.mode",             "noise.sigma",
      "noise.sigma_min",  "noise.sigma_max",    "paths.dataset",          "paths.out",
      "paths.checkpoint"};
  return k;
}

void RunConfig::set(const std::string& key, const std::string& raw) {
  const std::string value = trim(raw);
  if (key == "network.modules") {
    network.modules = parse_uint(key, value);
  } else if (key == "network.layers") {
    network.layers = parse_uint(key, value);
  } else if (key == "network.channels") {
    network.channels = parse_uint(key, value);
  } else if (key == "network.image_channels") {
    network.image_channels = parse_uint(key, value);
  } else if (key == "network.dilations") {
    network.dilations.clear();
    std::stringstream ss(value);
    std::string item;
    while (std::getline(ss, item, ',')) network.dilations.push_back(parse_uint(key, item));
    dilations_explicit_ = true;
  } else if (key == "train.steps") {
    train.total_steps = parse_uint(key, value);
  } else if (key == "train.batch") {
    train.batch = parse_uint(key, value);
  } else if (key == "train.patch") {
    train.patch = parse_uint(key, value);
  } else if (key == "train.lr") {
    train.adam.base_lr = parse_double(key, value);
  } else if (key == "train.halving_period") {
    train.adam.halving_period = parse_uint(key, value);
  } else if (key == "train.weight_decay") {
    train.adam.weight_decay = parse_double(key, value);
  } else if (key == "train.checkpoint_every") {
    train.checkpoint_every = parse_uint(key, value);
  } else if (key == "train.seed") {
    train.seed = parse_uint(key, value);
  } else if (key == "train.threads") {
    threads = static_cast<unsigned>(parse_uint(key, value));
  } else if (key == "noise.mode") {
    if (value == "specific") {
      train.noise.mode = NoiseModel::Mode::kSpecific;
    } else if (value == "agnostic") {
      train.noise.mode = NoiseModel::Mode::kAgnostic;
    } else {
      throw ConfigError(key + ": expected 'specific' or 'agnostic', got '" + value + "'");
    }
  } else if (key == "noise.sigma") {
    train.noise.sigma = parse_double(key, value);
  } else if (key == "noise.sigma_min") {
    train.noise.sigma_min = parse_double(key, value);
  } else if (key == "noise.sigma_max") {
    train.noise.sigma_max = parse_double(key, value);
  } else if (key == "paths.dataset") {
    dataset = value;
  } else if (key == "paths.out") {
    out = value;
  } else if (key == "paths.checkpoint") {
    checkpoint = value;
  } else {
    throw ConfigError(key + ": unknown configuration key");
  }
}

std::string RunConfig::get(const std::string& key) const {
  if (key == "network.modules") return std::to_string(network.modules);
  if (key == "network.layers") return std::to_string(network.layers);
  if (key == "network.channels") return std::to_string(network.channels);
  if (key == "network.image_channels") return std::to_string(network.image_channels);
  if (key == "network.dilations") {
    std::string s;
    for (std::size_t i = 0; i < network.dilations.size(); ++i) {
      if (i) s += ',';
      s += std::to_string(network.dilations[i]);
    }
    return s;
  }
  if (key == "train.steps") return std::to_string(train.total_steps);
  if (key == "train.batch") return std::to_string(train.batch);
  if (key == "train.patch") return std::to_string(train.patch);
  if (key == "train.lr") return fmt_double(train.adam.base_lr);
  if (key == "train.halving_period") return std::to_string(train.adam.halving_period);
  if (key == "train.weight_decay") return fmt_double(train.adam.weight_decay);
  if (key == "train.checkpoint_every") return std::to_string(train.checkpoint_every);
  if (key == "train.seed") return std::to_string(train.seed);
  if (key == "train.threads") return std::to_string(threads);
  if (key == "noise.mode") return train.noise.mode == NoiseModel::Mode::kSpecific ? "specific" : "agnostic";
  if (key == "noise.sigma") return fmt_double(train.noise.sigma);
  if (key == "noise.sigma_min") return fmt_double(train.noise.sigma_min);
  if (key == "noise.sigma_max") return fmt_double(train.noise.sigma_max);
  if (key == "paths.dataset") return dataset;
  if (key == "paths.out") return out;
  if (key == "paths.checkpoint") return checkpoint;
  throw ConfigError(key + ": unknown configuration key");
}

void RunConfig::merge_text(std::istream& in, const std::string& origin) {
  std::string section;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') {
        throw ConfigError(origin + ":" + std::to_string(lineno) + ": malformed section header");
      }
      section = trim(line.substr(1, line.size() - 2));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(origin + ":" + std::to_string(lineno) + ": expected key = value");
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string full = section.empty() ? key : section + "." + key;
    try {
      set(full, line.substr(eq + 1));
    } catch (const ConfigError& e) {
      throw ConfigError(origin + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
}

void RunConfig::merge_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot open '" + path + "'");
  merge_text(in, path);
}

void RunConfig::merge_env() {
  for (const auto& key : keys()) {
    const std::string name = env_name(key);
    if (const char* v = std::getenv(name.c_str())) {
      try {
        set(key, v);
      } catch (const ConfigError& e) {
        throw ConfigError(name + ": " + e.what());
      }
    }
  }
}

std::string RunConfig::to_text() const {
  std::ostringstream out;
  std::string section;
  for (const auto& key : keys()) {
    const auto dot = key.find('.');
    const std::string s = key.substr(0, dot);
    if (s != section) {
      if (!section.empty()) out << '\n';
      out << '[' << s << "]\n";
      section = s;
    }
    out << key.substr(dot + 1) << " = " << get(key) << '\n';
  }
  return out.str();
}

void RunConfig::finalize() {
  if (!dilations_explicit_ || network.dilations.size() != network.layers) {
    if (dilations_explicit_) {
      throw ConfigError("network.dilations: " + std::to_string(network.dilations.size()) +
                        " entries given for " + std::to_string(network.layers) + " layers");
    }
    network.dilations = NetworkConfig::default_dilations(network.layers);
  }
  try {
    network.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  try {
    train.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  if (threads == 0) throw ConfigError("train.threads: must be >= 1");
}

}  // namespace ierd
