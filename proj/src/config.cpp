#include "f3net/config.hpp"

#include <CLI11.hpp>
#include <charconv>
#include <functional>
#include <map>
#include <sstream>

#include "f3net/error.hpp"

namespace f3net {

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n\"'[]");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n\"'[]");
  return std::string(s.substr(b, e - b + 1));
}

template <typename T>
T parse_number(std::string_view key, std::string_view text) {
  const std::string t = trim(text);
  T v{};
  const auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
  if (ec != std::errc() || ptr != t.data() + t.size())
    throw InvalidConfig(std::string(key) + ": cannot parse '" + t + "'");
  return v;
}

bool parse_bool(std::string_view key, std::string_view text) {
  const std::string t = trim(text);
  if (t == "true" || t == "1" || t == "yes" || t == "on") return true;
  if (t == "false" || t == "0" || t == "no" || t == "off") return false;
  throw InvalidConfig(std::string(key) + ": expected a boolean, got '" + t + "'");
}

using Setter = std::function<void(RunConfig&, std::string_view)>;

template <typename T, typename Field>
Setter number(Field field, std::string_view key) {
  return [field, key](RunConfig& c, std::string_view v) { field(c) = parse_number<T>(key, v); };
}

const std::map<std::string, Setter, std::less<>>& setters() {
  static const std::map<std::string, Setter, std::less<>> table = [] {
    std::map<std::string, Setter, std::less<>> t;
    auto dbl = [&](const char* key, auto field) { t[key] = number<double>(field, key); };
    auto integer = [&](const char* key, auto field) { t[key] = number<int>(field, key); };
    auto boolean = [&](const char* key, auto field) {
      t[key] = [field, key](RunConfig& c, std::string_view v) { field(c) = parse_bool(key, v); };
    };

    integer("train.batch_size", [](RunConfig& c) -> int& { return c.train.batch_size; });
    t["train.patch_shape"] = [](RunConfig& c, std::string_view v) {
      c.train.patch_shape = parse_shape(v);
    };
    dbl("train.momentum", [](RunConfig& c) -> double& { return c.train.momentum; });
    dbl("train.weight_decay", [](RunConfig& c) -> double& { return c.train.weight_decay; });
    dbl("train.initial_lr", [](RunConfig& c) -> double& { return c.train.initial_lr; });
    dbl("train.poly_power", [](RunConfig& c) -> double& { return c.train.poly_power; });
    integer("train.max_epochs", [](RunConfig& c) -> int& { return c.train.max_epochs; });
    integer("train.steps_per_epoch", [](RunConfig& c) -> int& { return c.train.steps_per_epoch; });
    boolean("train.nesterov", [](RunConfig& c) -> bool& { return c.train.nesterov; });
    dbl("train.modality_drop_prob", [](RunConfig& c) -> double& { return c.train.modality_drop_prob; });
    dbl("train.foreground_oversample",
        [](RunConfig& c) -> double& { return c.train.foreground_oversample; });
    t["train.seed"] = [](RunConfig& c, std::string_view v) {
      c.train.seed = parse_number<std::uint64_t>("train.seed", v);
    };
    boolean("train.deterministic", [](RunConfig& c) -> bool& { return c.train.deterministic; });

    dbl("loss.lambda1", [](RunConfig& c) -> double& { return c.train.loss_weights.lambda1; });
    dbl("loss.lambda2", [](RunConfig& c) -> double& { return c.train.loss_weights.lambda2; });

    boolean("augment.enabled", [](RunConfig& c) -> bool& { return c.train.augment.enabled; });
    dbl("augment.flip_prob", [](RunConfig& c) -> double& { return c.train.augment.flip_prob; });
    dbl("augment.rotate_prob", [](RunConfig& c) -> double& { return c.train.augment.rotate_prob; });
    dbl("augment.scale_prob", [](RunConfig& c) -> double& { return c.train.augment.scale_prob; });
    dbl("augment.scale_low", [](RunConfig& c) -> double& { return c.train.augment.scale_low; });
    dbl("augment.scale_high", [](RunConfig& c) -> double& { return c.train.augment.scale_high; });

    integer("network.num_stages", [](RunConfig& c) -> int& { return c.train.network.num_stages; });
    integer("network.base_channels",
            [](RunConfig& c) -> int& { return c.train.network.base_channels; });
    integer("network.max_channels", [](RunConfig& c) -> int& { return c.train.network.max_channels; });
    integer("network.num_classes", [](RunConfig& c) -> int& { return c.train.network.num_classes; });
    t["network.mask_scope"] = [](RunConfig& c, std::string_view v) {
      auto s = parse_mask_scope(trim(v));
      if (!s) throw InvalidConfig("network.mask_scope must be all_stages or deepest_only");
      c.train.network.mask_scope = *s;
    };

    t["predict.patch_shape"] = [](RunConfig& c, std::string_view v) {
      c.predict.patch_shape = parse_shape(v);
      c.predict_patch_set = true;
    };
    dbl("predict.window_overlap", [](RunConfig& c) -> double& { return c.predict.window_overlap; });
    t["predict.blend"] = [](RunConfig& c, std::string_view v) {
      const std::string s = trim(v);
      if (s == "gaussian") c.predict.blend = BlendMode::Gaussian;
      else if (s == "uniform") c.predict.blend = BlendMode::Uniform;
      else throw InvalidConfig("predict.blend must be gaussian or uniform");
    };
    dbl("predict.threshold", [](RunConfig& c) -> double& { return c.predict.threshold; });
    boolean("predict.mirror", [](RunConfig& c) -> bool& { return c.predict.mirror; });
    return t;
  }();
  return table;
}

}  // namespace

RunConfig RunConfig::preset(std::string_view name) {
  RunConfig c;
  if (name == "desk") c.train = TrainConfig::desk();
  else if (name == "paper") c.train = TrainConfig::paper();
  else throw InvalidConfig("unknown preset '" + std::string(name) + "' (expected desk or paper)");
  c.predict.patch_shape = c.train.patch_shape;
  return c;
}

Shape3 parse_shape(std::string_view text) {
  std::vector<int> parts;
  std::string cur;
  for (char ch : std::string(text) + ",") {
    if (ch == ',' || ch == 'x' || ch == ' ') {
      if (!trim(cur).empty()) parts.push_back(parse_number<int>("shape", cur));
      cur.clear();
    } else {
      cur += ch;
    }
  }
  if (parts.size() == 1) return {parts[0], parts[0], parts[0]};
  if (parts.size() != 3) throw InvalidConfig("shape '" + std::string(text) + "' needs 1 or 3 values");
  for (int p : parts)
    if (p < 1) throw InvalidConfig("shape components must be positive");
  return {parts[0], parts[1], parts[2]};
}

void apply_setting(RunConfig& cfg, std::string_view key, std::string_view value) {
  const auto& table = setters();
  auto it = table.find(key);
  if (it == table.end()) throw InvalidConfig("unknown setting '" + std::string(key) + "'");
  it->second(cfg, value);
}

void apply_config_file(RunConfig& cfg, const std::filesystem::path& path) {
  std::vector<CLI::ConfigItem> items;
  try {
    items = CLI::ConfigINI().from_file(path.string());
  } catch (const CLI::Error& e) {
    throw InvalidConfig("config " + path.string() + ": " + e.what());
  }
  for (const auto& item : items) {
    if (item.name == "++" || item.name == "--" || item.parents.empty()) {
      if (!item.parents.empty() || item.name == "++" || item.name == "--") continue;
      throw InvalidConfig("config key '" + item.name + "' must live in a section");
    }
    std::string value;
    for (std::size_t i = 0; i < item.inputs.size(); ++i) value += (i ? "," : "") + item.inputs[i];
    apply_setting(cfg, item.fullname(), value);
  }
}

std::string render_config(const RunConfig& cfg) {
  const TrainConfig& t = cfg.train;
  auto shape = [](const Shape3& s) {
    return std::to_string(s.x) + "," + std::to_string(s.y) + "," + std::to_string(s.z);
  };
  std::ostringstream os;
  os.precision(17);
  os << "[train]\n"
     << "batch_size = " << t.batch_size << "\n"
     << "patch_shape = " << shape(t.patch_shape) << "\n"
     << "momentum = " << t.momentum << "\n"
     << "weight_decay = " << t.weight_decay << "\n"
     << "initial_lr = " << t.initial_lr << "\n"
     << "poly_power = " << t.poly_power << "\n"
     << "max_epochs = " << t.max_epochs << "\n"
     << "steps_per_epoch = " << t.steps_per_epoch << "\n"
     << "nesterov = " << (t.nesterov ? "true" : "false") << "\n"
     << "modality_drop_prob = " << t.modality_drop_prob << "\n"
     << "foreground_oversample = " << t.foreground_oversample << "\n"
     << "seed = " << t.seed << "\n"
     << "deterministic = " << (t.deterministic ? "true" : "false") << "\n"
     << "\n[loss]\n"
     << "lambda1 = " << t.loss_weights.lambda1 << "\n"
     << "lambda2 = " << t.loss_weights.lambda2 << "\n"
     << "\n[augment]\n"
     << "enabled = " << (t.augment.enabled ? "true" : "false") << "\n"
     << "flip_prob = " << t.augment.flip_prob << "\n"
     << "rotate_prob = " << t.augment.rotate_prob << "\n"
     << "scale_prob = " << t.augment.scale_prob << "\n"
     << "scale_low = " << t.augment.scale_low << "\n"
     << "scale_high = " << t.augment.scale_high << "\n"
     << "\n[network]\n"
     << "num_stages = " << t.network.num_stages << "\n"
     << "base_channels = " << t.network.base_channels << "\n"
     << "max_channels = " << t.network.max_channels << "\n"
     << "num_classes = " << t.network.num_classes << "\n"
     << "mask_scope = " << to_string(t.network.mask_scope) << "\n"
     << "\n[predict]\n"
     << "patch_shape = " << shape(cfg.predict.patch_shape) << "\n"
     << "window_overlap = " << cfg.predict.window_overlap << "\n"
     << "blend = " << (cfg.predict.blend == BlendMode::Gaussian ? "gaussian" : "uniform") << "\n"
     << "threshold = " << cfg.predict.threshold << "\n"
     << "mirror = " << (cfg.predict.mirror ? "true" : "false") << "\n";
  return os.str();
}

}  // namespace f3net
