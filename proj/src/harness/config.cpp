#include "lvr/config.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "lvr/csv.hpp"

namespace lvr {

namespace {

namespace fs = std::filesystem;
namespace pt = boost::property_tree;

std::string join_problems(const std::vector<std::string>& problems) {
  std::string out = "invalid configuration:";
  for (const auto& p : problems) out += "\n  " + p;
  return out;
}

template <typename I>
bool parse_int(const std::string& s, I& out) {
  const char* end = s.data() + s.size();
  auto [p, ec] = std::from_chars(s.data(), end, out);
  return ec == std::errc{} && p == end;
}

bool parse_double(const std::string& s, double& out) {
  if (s.empty()) return false;
  std::size_t used = 0;
  try {
    out = std::stod(s, &used);
  } catch (const std::exception&) {
    return false;
  }
  return used == s.size();
}

std::string fmt(double v) { return csv::format_number(v, 17); }

// One configuration key: how to read it into a config and how to print it.
struct Field {
  const char* section;
  const char* key;
  std::function<bool(TrainConfig&, const std::string&, const fs::path& base)> set;
  std::function<std::string(const TrainConfig&)> get;
};

template <typename I>
Field int_field(const char* section, const char* key, I TrainConfig::*member) {
  return {section, key,
          [member](TrainConfig& c, const std::string& v, const fs::path&) { return parse_int(v, c.*member); },
          [member](const TrainConfig& c) { return std::to_string(c.*member); }};
}

template <typename I>
Field model_field(const char* key, I ModelConfig::*member) {
  return {"model", key,
          [member](TrainConfig& c, const std::string& v, const fs::path&) { return parse_int(v, c.model.*member); },
          [member](const TrainConfig& c) { return std::to_string(c.model.*member); }};
}

Field double_field(const char* section, const char* key, std::function<double&(TrainConfig&)> ref) {
  return {section, key,
          [ref](TrainConfig& c, const std::string& v, const fs::path&) { return parse_double(v, ref(c)); },
          [ref](const TrainConfig& c) { return fmt(ref(const_cast<TrainConfig&>(c))); }};
}

Field path_field(const char* section, const char* key, fs::path TrainConfig::*member) {
  return {section, key,
          [member](TrainConfig& c, const std::string& v, const fs::path& base) {
            if (v.empty()) return false;
            fs::path p(v);
            c.*member = (p.is_absolute() ? p : base / p).lexically_normal();
            return true;
          },
          [member](const TrainConfig& c) { return (c.*member).string(); }};
}

const std::vector<Field>& fields() {
  static const std::vector<Field> table = {
      path_field("run", "manifest", &TrainConfig::manifest),
      path_field("run", "output_dir", &TrainConfig::output_dir),
      int_field("run", "seed", &TrainConfig::seed),
      int_field("run", "threads", &TrainConfig::threads),
      model_field("groups", &ModelConfig::num_groups),
      model_field("blocks_per_group", &ModelConfig::blocks_per_group),
      model_field("width", &ModelConfig::base_width),
      model_field("dw_expand", &ModelConfig::dw_expand),
      model_field("ffn_expand", &ModelConfig::ffn_expand),
      int_field("train", "batch_size", &TrainConfig::batch_size),
      int_field("train", "epochs", &TrainConfig::epochs),
      int_field("train", "max_steps", &TrainConfig::max_steps),
      double_field("train", "lr", [](TrainConfig& c) -> double& { return c.lr; }),
      double_field("train", "beta1", [](TrainConfig& c) -> double& { return c.beta1; }),
      double_field("train", "beta2", [](TrainConfig& c) -> double& { return c.beta2; }),
      double_field("train", "eps", [](TrainConfig& c) -> double& { return c.eps; }),
      double_field("train", "grad_clip", [](TrainConfig& c) -> double& { return c.grad_clip; }),
      int_field("train", "image_height", &TrainConfig::image_height),
      int_field("train", "image_width", &TrainConfig::image_width),
      double_field("train", "split_train", [](TrainConfig& c) -> double& { return c.split.train; }),
      double_field("train", "split_val", [](TrainConfig& c) -> double& { return c.split.val; }),
      double_field("train", "split_test", [](TrainConfig& c) -> double& { return c.split.test; }),
      double_field("loss", "perceptual", [](TrainConfig& c) -> double& { return c.loss.perceptual; }),
      double_field("loss", "edge", [](TrainConfig& c) -> double& { return c.loss.edge; }),
      double_field("loss", "fft", [](TrainConfig& c) -> double& { return c.loss.fft; }),
      double_field("loss", "epsilon_edge", [](TrainConfig& c) -> double& { return c.loss.epsilon_edge; }),
      int_field("loss", "extractor_seed", &TrainConfig::extractor_seed),
  };
  return table;
}

}  // namespace

ConfigError::ConfigError(std::vector<std::string> problems)
    : std::runtime_error(join_problems(problems)), problems_(std::move(problems)) {}

std::vector<std::string> TrainConfig::problems(bool check_files) const {
  std::vector<std::string> out;
  for (const auto& p : model.problems()) out.push_back("model: " + p);
  for (const auto& p : loss.problems()) out.push_back(p);
  if (batch_size < 1) out.push_back("train.batch_size must be >= 1");
  if (epochs < 1) out.push_back("train.epochs must be >= 1");
  if (max_steps < -1) out.push_back("train.max_steps must be >= -1");
  if (!(lr > 0)) out.push_back("train.lr must be > 0");
  if (!(beta1 >= 0 && beta1 < 1)) out.push_back("train.beta1 must be in [0, 1)");
  if (!(beta2 >= 0 && beta2 < 1)) out.push_back("train.beta2 must be in [0, 1)");
  if (!(eps > 0)) out.push_back("train.eps must be > 0");
  if (!(grad_clip >= 0)) out.push_back("train.grad_clip must be >= 0");
  // Validation SSIM needs at least one full 11x11 window.
  if (image_height < 11 || image_width < 11) out.push_back("train.image_height and image_width must be >= 11");
  const double fr[] = {split.train, split.val, split.test};
  bool fractions_ok = true;
  for (double f : fr) fractions_ok = fractions_ok && f >= 0 && f <= 1;
  if (!fractions_ok) out.push_back("train.split_* fractions must lie in [0, 1]");
  if (std::abs(split.train + split.val + split.test - 1.0) > 1e-9) out.push_back("train.split_* fractions must sum to 1");
  if (!(split.train > 0)) out.push_back("train.split_train must be > 0");
  if (threads < 0) out.push_back("run.threads must be >= 0");
  if (manifest.empty()) {
    out.push_back("run.manifest is required");
  } else if (check_files && !fs::is_regular_file(manifest)) {
    out.push_back("run.manifest: " + manifest.string() + " does not exist");
  }
  return out;
}

bool TrainConfig::same_trajectory(const TrainConfig& o) const {
  TrainConfig a = *this, b = o;
  for (TrainConfig* c : {&a, &b}) {
    c->output_dir.clear();
    c->threads = 0;
    c->epochs = 0;
    c->max_steps = 0;
  }
  return a == b;
}

TrainConfig parse_config(const std::string& text, const std::vector<ConfigOverride>& overrides,
                         const fs::path& base_dir) {
  std::vector<std::string> problems;
  pt::ptree tree;
  try {
    std::istringstream in(text);
    pt::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError({std::string("syntax error on line ") + std::to_string(e.line()) + ": " + e.message()});
  }

  std::map<std::string, std::string> values;
  for (const auto& [section, body] : tree) {
    if (!body.data().empty()) {
      problems.push_back("key '" + section + "' outside any section");
      continue;
    }
    for (const auto& [key, leaf] : body) values[section + "." + key] = leaf.get_value<std::string>();
  }
  for (const auto& [key, value] : overrides) values[key] = value;

  TrainConfig c;
  std::map<std::string, const Field*> known;
  for (const auto& f : fields()) known[std::string(f.section) + "." + f.key] = &f;
  for (const auto& [key, value] : values) {
    auto it = known.find(key);
    if (it == known.end()) {
      problems.push_back("unknown key '" + key + "'");
      continue;
    }
    if (!it->second->set(c, value, base_dir)) problems.push_back(key + ": cannot parse '" + value + "'");
  }
  for (const auto& p : c.problems()) problems.push_back(p);
  if (!problems.empty()) throw ConfigError(std::move(problems));
  return c;
}

TrainConfig load_config(const fs::path& path, const std::vector<ConfigOverride>& overrides) {
  std::ifstream in(path);
  if (!in) throw ConfigError({path.string() + ": cannot open config file"});
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), overrides, fs::absolute(path).parent_path());
}

std::string to_ini(const TrainConfig& config) {
  std::string out;
  std::string section;
  for (const auto& f : fields()) {
    if (section != f.section) {
      if (!section.empty()) out += '\n';
      section = f.section;
      out += "[" + section + "]\n";
    }
    out += std::string(f.key) + " = " + f.get(config) + "\n";
  }
  return out;
}

}  // namespace lvr
