#include "icl_cli/run_config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <type_traits>

#include "icl/errors.hpp"

namespace icl::cli {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <typename T>
T parse_number(const std::string& key, const std::string& text) {
  T value{};
  const char* end = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(text.data(), end, value);
  if (ec != std::errc{} || ptr != end) throw ConfigError("invalid value '" + text + "' for " + key);
  return value;
}

std::string format_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  (void)ec;
  return std::string(buf, ptr);
}

struct Field {
  std::function<std::string(const RunConfig&)> get;
  std::function<void(RunConfig&, const std::string&)> set;
};

// Ordered so the canonical text lists sections and keys in a fixed order.
const std::vector<std::pair<std::string, Field>>& fields() {
  static const std::vector<std::pair<std::string, Field>> table = [] {
    std::vector<std::pair<std::string, Field>> t;
    auto size_field = [&t](const std::string& key, auto access) {
      t.emplace_back(key, Field{[access](const RunConfig& c) {
                                  return std::to_string(access(const_cast<RunConfig&>(c)));
                                },
                                [access, key](RunConfig& c, const std::string& v) {
                                  access(c) = parse_number<std::remove_reference_t<decltype(access(c))>>(key, v);
                                }});
    };
    auto double_field = [&t](const std::string& key, auto access) {
      t.emplace_back(key, Field{[access](const RunConfig& c) { return format_double(access(const_cast<RunConfig&>(c))); },
                                [access, key](RunConfig& c, const std::string& v) {
                                  access(c) = parse_number<double>(key, v);
                                }});
    };
    size_field("model.height", [](RunConfig& c) -> std::size_t& { return c.model.height; });
    size_field("model.width", [](RunConfig& c) -> std::size_t& { return c.model.width; });
    size_field("model.classes", [](RunConfig& c) -> std::size_t& { return c.model.classes; });
    size_field("model.base_channels", [](RunConfig& c) -> std::size_t& { return c.model.base_channels; });
    size_field("model.heads", [](RunConfig& c) -> std::size_t& { return c.model.heads; });
    double_field("train.lr0", [](RunConfig& c) -> double& { return c.train.lr0; });
    double_field("train.momentum", [](RunConfig& c) -> double& { return c.train.momentum; });
    double_field("train.weight_decay", [](RunConfig& c) -> double& { return c.train.weight_decay; });
    size_field("train.max_iters", [](RunConfig& c) -> std::size_t& { return c.train.max_iters; });
    double_field("train.poly_power", [](RunConfig& c) -> double& { return c.train.poly_power; });
    size_field("train.batch_size", [](RunConfig& c) -> std::size_t& { return c.train.batch_size; });
    size_field("train.val_every", [](RunConfig& c) -> std::size_t& { return c.train.val_every; });
    double_field("train.alpha", [](RunConfig& c) -> double& { return c.train.weights.alpha; });
    double_field("train.beta", [](RunConfig& c) -> double& { return c.train.weights.beta; });
    size_field("train.master_seed", [](RunConfig& c) -> std::uint64_t& { return c.train.master_seed; });
    t.emplace_back("train.mode", Field{[](const RunConfig& c) { return std::string(to_string(c.train.mode)); },
                                       [](RunConfig& c, const std::string& v) { c.train.mode = parse_train_mode(v); }});
    size_field("data.n_labeled", [](RunConfig& c) -> std::size_t& { return c.n_labeled; });
    size_field("data.n_unlabeled", [](RunConfig& c) -> std::size_t& { return c.n_unlabeled; });
    size_field("data.n_val", [](RunConfig& c) -> std::size_t& { return c.n_val; });
    double_field("data.noise_sigma", [](RunConfig& c) -> double& { return c.noise_sigma; });
    t.emplace_back("data.dir", Field{[](const RunConfig& c) { return c.data_dir; },
                                     [](RunConfig& c, const std::string& v) { c.data_dir = v; }});
    t.emplace_back("run.out_dir", Field{[](const RunConfig& c) { return c.out_dir; },
                                        [](RunConfig& c, const std::string& v) { c.out_dir = v; }});
    return t;
  }();
  return table;
}

const Field* find_field(const std::string& key) {
  for (const auto& [k, f] : fields()) {
    if (k == key) return &f;
  }
  return nullptr;
}

}  // namespace

SplitConfig RunConfig::split_config() const { return {n_labeled, n_unlabeled, n_val, train.master_seed}; }

PhantomConfig RunConfig::phantom_config() const { return {model.height, model.width, model.classes, noise_sigma}; }

void RunConfig::validate() const {
  model.validate();
  train.validate();
  if (data_dir.empty() && (n_labeled == 0 || n_val == 0)) throw ConfigError("data.n_labeled and data.n_val must be positive");
  if (data_dir.empty() && train.mode == TrainMode::icl && n_unlabeled == 0) {
    throw ConfigError("data.n_unlabeled must be positive in icl mode");
  }
  if (noise_sigma < 0.0) throw ConfigError("data.noise_sigma must be non-negative");
}

std::vector<std::string> run_config_keys() {
  std::vector<std::string> keys;
  for (const auto& [k, f] : fields()) keys.push_back(k);
  return keys;
}

void set_run_config_value(RunConfig& config, const std::string& key, const std::string& value) {
  const Field* f = find_field(key);
  if (!f) throw ConfigError("unknown config key: " + key);
  f->set(config, value);
}

RunConfig parse_run_config(const std::string& text) {
  RunConfig config;
  std::istringstream in(text);
  std::string line, section;
  std::vector<std::string> unknown;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError("line " + std::to_string(line_no) + ": malformed section header");
      section = trim(line.substr(1, line.size() - 2));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("line " + std::to_string(line_no) + ": expected key = value");
    const std::string key = (section.empty() ? "" : section + ".") + trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (const Field* f = find_field(key)) {
      f->set(config, value);
    } else {
      unknown.push_back(key);
    }
  }
  if (!unknown.empty()) {
    std::string msg = "unknown config keys:";
    for (const auto& k : unknown) msg += " " + k;
    throw ConfigError(msg);
  }
  return config;
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read config file '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_run_config(ss.str());
}

std::string format_run_config(const RunConfig& config) {
  std::string out, section;
  for (const auto& [key, f] : fields()) {
    const auto dot = key.find('.');
    const std::string sec = key.substr(0, dot);
    if (sec != section) {
      if (!section.empty()) out += "\n";
      out += "[" + sec + "]\n";
      section = sec;
    }
    out += key.substr(dot + 1) + " = " + f.get(config) + "\n";
  }
  return out;
}

}  // namespace icl::cli
