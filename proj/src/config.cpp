#include "badvfl/config.hpp"

#include <cstdio>

#include "badvfl/common.hpp"

namespace badvfl {

using nlohmann::json;

json config_defaults() {
  return json{
      {"dataset",
       {{"kind", "blobs"},
        {"classes", 2},
        {"train_per_class", 1000},
        {"test_per_class", 250},
        {"features", 16},
        {"separation", 6.0},
        {"grid", nullptr},
        {"train_images", nullptr},
        {"train_labels", nullptr},
        {"test_images", nullptr},
        {"test_labels", nullptr},
        {"limit", nullptr}}},
      {"split", {{"parties", 2}, {"ranges", nullptr}}},
      {"model",
       {{"bottom_hidden", json::array({16})},
        {"bottom_out", 8},
        {"bottom_activation", "relu"},
        {"top_hidden_layers", 0},
        {"top_hidden_width", 16},
        {"weight_decay", 0.0}}},
      {"optimizer",
       {{"kind", "sgd"}, {"lr", 0.05}, {"lr_decay", 0.1}, {"lr_decay_every", 0}}},
      {"schedule", {{"epochs", 30}, {"batch_size", 64}}},
      {"attack",
       {{"kind", "none"},
        {"target_class", 0},
        {"target_id", -1},
        {"eta", 0.01},
        {"n", 5},
        {"alpha_thre", 0.6},
        {"selection", "threshold"},
        {"top_percent", 0.01},
        {"perturb", "same_batch"},
        {"trigger",
         {{"kind", "auto"},
          {"position", "center"},
          {"offset", nullptr},
          {"size", 2},
          {"value", nullptr}}},
        {"warmup_epochs", 1},
        {"max_tests", 3},
        {"mask_scale", 1.0},
        {"repeats", 1}}},
      {"defense",
       {{"kind", "none"}, {"variance", 0.0}, {"keep_fraction", 1.0}, {"seed", 77}}},
      {"run", {{"seed", 1}, {"baseline", true}, {"out_dir", "out"}}}};
}

namespace {

void merge_into(json& dst, const json& src, const std::string& prefix,
                std::set<std::string>& explicit_paths) {
  if (!src.is_object())
    throw ConfigError("config" + (prefix.empty() ? "" : " section " + prefix) +
                      " must be a JSON object");
  for (const auto& [key, val] : src.items()) {
    std::string path = prefix.empty() ? key : prefix + "." + key;
    if (!dst.contains(key)) throw ConfigError("unknown key: " + path);
    json& d = dst[key];
    if (d.is_object()) {
      merge_into(d, val, path, explicit_paths);
      continue;
    }
    if (!d.is_null() && !val.is_null()) {
      bool num_d = d.is_number(), num_v = val.is_number();
      if (d.type() != val.type() && !(num_d && num_v))
        throw ConfigError("type mismatch at " + path + ": expected " + std::string(d.type_name()) +
                          ", got " + std::string(val.type_name()));
    }
    d = val;
    explicit_paths.insert(path);
  }
}

const json& leaf(const json& root, const std::string& path) {
  const json* cur = &root;
  size_t start = 0;
  while (true) {
    size_t dot = path.find('.', start);
    std::string key = path.substr(start, dot == std::string::npos ? dot : dot - start);
    cur = &cur->at(key);
    if (dot == std::string::npos) return *cur;
    start = dot + 1;
  }
}

int get_int(const json& root, const std::string& path) {
  const json& v = leaf(root, path);
  if (!v.is_number_integer())
    throw ConfigError(path + " must be an integer");
  return v.get<int>();
}

int64_t get_i64(const json& root, const std::string& path) {
  const json& v = leaf(root, path);
  if (!v.is_number_integer()) throw ConfigError(path + " must be an integer");
  return v.get<int64_t>();
}

double get_num(const json& root, const std::string& path) {
  const json& v = leaf(root, path);
  if (!v.is_number()) throw ConfigError(path + " must be a number");
  return v.get<double>();
}

bool get_bool(const json& root, const std::string& path) {
  const json& v = leaf(root, path);
  if (!v.is_boolean()) throw ConfigError(path + " must be a boolean");
  return v.get<bool>();
}

std::string get_str(const json& root, const std::string& path) {
  const json& v = leaf(root, path);
  if (!v.is_string()) throw ConfigError(path + " must be a string");
  return v.get<std::string>();
}

std::string get_enum(const json& root, const std::string& path,
                     const std::vector<std::string>& allowed) {
  std::string s = get_str(root, path);
  for (const auto& a : allowed)
    if (s == a) return s;
  std::string opts;
  for (const auto& a : allowed) opts += (opts.empty() ? "" : " | ") + a;
  throw ConfigError(path + " must be one of {" + opts + "}, got '" + s + "'");
}

void require(bool ok, const std::string& msg) {
  if (!ok) throw ConfigError(msg);
}

}  // namespace

ExperimentConfig config_from_json(const json& user) {
  ExperimentConfig cfg;
  cfg.resolved = config_defaults();
  merge_into(cfg.resolved, user, "", cfg.explicit_paths);
  const json& r = cfg.resolved;

  // dataset
  cfg.dataset.kind = get_enum(r, "dataset.kind", {"blobs", "idx"});
  cfg.dataset.classes = get_int(r, "dataset.classes");
  cfg.dataset.train_per_class = get_int(r, "dataset.train_per_class");
  cfg.dataset.test_per_class = get_int(r, "dataset.test_per_class");
  cfg.dataset.features = get_int(r, "dataset.features");
  cfg.dataset.separation = get_num(r, "dataset.separation");
  if (cfg.dataset.kind == "blobs") {
    require(cfg.dataset.classes >= 2, "dataset.classes must be >= 2");
    require(cfg.dataset.train_per_class >= 1, "dataset.train_per_class must be >= 1");
    require(cfg.dataset.test_per_class >= 0, "dataset.test_per_class must be >= 0");
    require(cfg.dataset.features >= 2, "dataset.features must be >= 2");
    require(cfg.dataset.separation >= 0.0, "dataset.separation must be >= 0");
  }
  {
    const json& g = leaf(r, "dataset.grid");
    if (!g.is_null()) {
      if (!g.is_array() || g.size() != 2 || !g[0].is_number_integer() ||
          !g[1].is_number_integer())
        throw ConfigError("dataset.grid must be [h, w]");
      GridShape gs{g[0].get<int>(), g[1].get<int>()};
      require(gs.h >= 1 && gs.w >= 1, "dataset.grid entries must be >= 1");
      require(gs.h * gs.w == cfg.dataset.features,
              "dataset.grid " + std::to_string(gs.h) + "x" + std::to_string(gs.w) +
                  " does not match dataset.features = " + std::to_string(cfg.dataset.features));
      cfg.dataset.grid = gs;
    }
  }
  if (cfg.dataset.kind == "idx") {
    for (const char* key : {"train_images", "train_labels", "test_images", "test_labels"}) {
      const json& v = leaf(r, std::string("dataset.") + key);
      if (!v.is_string())
        throw ConfigError(std::string("dataset.") + key + " is required for idx datasets");
    }
    cfg.dataset.train_images = get_str(r, "dataset.train_images");
    cfg.dataset.train_labels = get_str(r, "dataset.train_labels");
    cfg.dataset.test_images = get_str(r, "dataset.test_images");
    cfg.dataset.test_labels = get_str(r, "dataset.test_labels");
    const json& lim = leaf(r, "dataset.limit");
    if (!lim.is_null()) {
      if (!lim.is_number_integer()) throw ConfigError("dataset.limit must be an integer");
      cfg.dataset.limit = lim.get<int64_t>();
      require(*cfg.dataset.limit >= 0, "dataset.limit must be >= 0");
    }
  }

  // split
  cfg.split.parties = get_int(r, "split.parties");
  require(cfg.split.parties >= 1, "split.parties must be >= 1");
  {
    const json& rg = leaf(r, "split.ranges");
    if (!rg.is_null()) {
      if (!rg.is_array() || rg.empty()) throw ConfigError("split.ranges must be a list of [lo, hi)");
      std::vector<std::pair<int, int>> ranges;
      for (const auto& e : rg) {
        if (!e.is_array() || e.size() != 2 || !e[0].is_number_integer() ||
            !e[1].is_number_integer())
          throw ConfigError("split.ranges entries must be [lo, hi] integer pairs");
        ranges.emplace_back(e[0].get<int>(), e[1].get<int>());
      }
      require(static_cast<int>(ranges.size()) == cfg.split.parties,
              "split.ranges has " + std::to_string(ranges.size()) + " entries but split.parties = " +
                  std::to_string(cfg.split.parties));
      cfg.split.ranges = std::move(ranges);
    }
  }

  // model
  {
    const json& bh = leaf(r, "model.bottom_hidden");
    if (!bh.is_array()) throw ConfigError("model.bottom_hidden must be a list of widths");
    cfg.model.bottom_hidden.clear();
    for (const auto& e : bh) {
      if (!e.is_number_integer() || e.get<int>() < 1)
        throw ConfigError("model.bottom_hidden entries must be integers >= 1");
      cfg.model.bottom_hidden.push_back(e.get<int>());
    }
  }
  cfg.model.bottom_out = get_int(r, "model.bottom_out");
  require(cfg.model.bottom_out >= 1, "model.bottom_out must be >= 1");
  {
    std::string a = get_enum(r, "model.bottom_activation", {"identity", "relu", "tanh"});
    cfg.model.bottom_activation = a == "identity" ? Activation::Identity
                                  : a == "relu"   ? Activation::ReLU
                                                  : Activation::Tanh;
  }
  cfg.model.top_hidden_layers = get_int(r, "model.top_hidden_layers");
  require(cfg.model.top_hidden_layers >= 0 && cfg.model.top_hidden_layers <= 3,
          "model.top_hidden_layers must be in [0,3]");
  cfg.model.top_hidden_width = get_int(r, "model.top_hidden_width");
  require(cfg.model.top_hidden_width >= 1, "model.top_hidden_width must be >= 1");
  cfg.model.weight_decay = get_num(r, "model.weight_decay");
  require(cfg.model.weight_decay >= 0.0, "model.weight_decay must be >= 0");

  // optimizer
  cfg.optimizer.kind =
      get_enum(r, "optimizer.kind", {"sgd", "adam"}) == "sgd" ? OptKind::Sgd : OptKind::Adam;
  cfg.optimizer.lr = get_num(r, "optimizer.lr");
  require(cfg.optimizer.lr > 0.0, "optimizer.lr must be > 0");
  cfg.optimizer.lr_decay = get_num(r, "optimizer.lr_decay");
  require(cfg.optimizer.lr_decay > 0.0, "optimizer.lr_decay must be > 0");
  cfg.optimizer.lr_decay_every = get_int(r, "optimizer.lr_decay_every");
  require(cfg.optimizer.lr_decay_every >= 0, "optimizer.lr_decay_every must be >= 0");

  // schedule
  cfg.epochs = get_int(r, "schedule.epochs");
  require(cfg.epochs >= 0, "schedule.epochs must be >= 0");
  cfg.batch_size = get_int(r, "schedule.batch_size");
  require(cfg.batch_size >= 1, "schedule.batch_size must be >= 1");

  // attack
  {
    std::string k = get_enum(r, "attack.kind", {"none", "badvfl", "gr"});
    cfg.attack.kind = k == "none" ? AttackKind::None : k == "badvfl" ? AttackKind::BadVfl : AttackKind::Gr;
  }
  cfg.attack.target_class = get_int(r, "attack.target_class");
  require(cfg.attack.target_class >= 0, "attack.target_class must be >= 0");
  cfg.attack.target_id = get_i64(r, "attack.target_id");
  require(cfg.attack.target_id >= -1, "attack.target_id must be -1 (auto) or a sample id");
  cfg.attack.eta = get_num(r, "attack.eta");
  require(cfg.attack.eta > 0.0 && cfg.attack.eta <= 1.0, "attack.eta must be in (0,1]");
  cfg.attack.n = get_int(r, "attack.n");
  require(cfg.attack.n >= 1, "attack.n must be >= 1");
  cfg.attack.alpha_thre = get_num(r, "attack.alpha_thre");
  require(cfg.attack.alpha_thre >= -1.0 && cfg.attack.alpha_thre <= 1.0,
          "attack.alpha_thre must be in [-1,1]");
  cfg.attack.selection = get_enum(r, "attack.selection", {"threshold", "top_percent"}) == "threshold"
                             ? SelectionRule::Threshold
                             : SelectionRule::TopPercent;
  cfg.attack.top_percent = get_num(r, "attack.top_percent");
  require(cfg.attack.top_percent > 0.0 && cfg.attack.top_percent <= 1.0,
          "attack.top_percent must be in (0,1]");
  {
    std::string p = get_enum(r, "attack.perturb", {"none", "same_batch", "whole_dataset"});
    cfg.attack.perturb = p == "none"         ? PerturbMode::None
                         : p == "same_batch" ? PerturbMode::SameBatch
                                             : PerturbMode::WholeDataset;
  }
  cfg.attack.trigger.kind = get_enum(r, "attack.trigger.kind", {"auto", "patch", "overwrite"});
  {
    std::string p =
        get_enum(r, "attack.trigger.position", {"up_left", "center", "bottom_right", "explicit"});
    cfg.attack.trigger.position = p == "up_left"     ? TriggerSpec::Position::UpLeft
                                  : p == "center"    ? TriggerSpec::Position::Center
                                  : p == "bottom_right" ? TriggerSpec::Position::BottomRight
                                                        : TriggerSpec::Position::Explicit;
  }
  {
    const json& off = leaf(r, "attack.trigger.offset");
    if (!off.is_null()) {
      if (!off.is_number_integer()) throw ConfigError("attack.trigger.offset must be an integer");
      cfg.attack.trigger.offset = off.get<int>();
      require(*cfg.attack.trigger.offset >= 0, "attack.trigger.offset must be >= 0");
    }
    if (cfg.attack.trigger.position == TriggerSpec::Position::Explicit && !cfg.attack.trigger.offset)
      throw ConfigError("attack.trigger.position 'explicit' needs attack.trigger.offset");
  }
  cfg.attack.trigger.size = get_int(r, "attack.trigger.size");
  require(cfg.attack.trigger.size >= 1, "attack.trigger.size must be >= 1");
  {
    const json& v = leaf(r, "attack.trigger.value");
    if (!v.is_null()) {
      if (!v.is_number()) throw ConfigError("attack.trigger.value must be a number");
      cfg.attack.trigger.value = v.get<double>();
    }
  }
  cfg.attack.warmup_epochs = get_int(r, "attack.warmup_epochs");
  require(cfg.attack.warmup_epochs >= 0, "attack.warmup_epochs must be >= 0");
  cfg.attack.max_tests = get_int(r, "attack.max_tests");
  require(cfg.attack.max_tests >= 1, "attack.max_tests must be >= 1");
  cfg.attack.mask_scale = get_num(r, "attack.mask_scale");
  require(cfg.attack.mask_scale >= 0.0, "attack.mask_scale must be >= 0");
  cfg.attack.repeats = get_int(r, "attack.repeats");
  require(cfg.attack.repeats >= 1, "attack.repeats must be >= 1");

  // defense
  {
    std::string k = get_enum(r, "defense.kind", {"none", "gaussian_noise", "compression"});
    cfg.defense.kind = k == "none"             ? DefenseSpec::Kind::None
                       : k == "gaussian_noise" ? DefenseSpec::Kind::GaussianNoise
                                               : DefenseSpec::Kind::Compression;
  }
  cfg.defense.variance = get_num(r, "defense.variance");
  require(cfg.defense.variance >= 0.0, "defense.variance must be >= 0");
  cfg.defense.keep_fraction = get_num(r, "defense.keep_fraction");
  require(cfg.defense.keep_fraction > 0.0 && cfg.defense.keep_fraction <= 1.0,
          "defense.keep_fraction must be in (0,1]");
  {
    int64_t s = get_i64(r, "defense.seed");
    require(s >= 0, "defense.seed must be >= 0");
    cfg.defense.seed = static_cast<uint64_t>(s);
  }

  // run
  {
    int64_t s = get_i64(r, "run.seed");
    require(s >= 0, "run.seed must be >= 0");
    cfg.run.seed = static_cast<uint64_t>(s);
  }
  cfg.run.baseline = get_bool(r, "run.baseline");
  cfg.run.out_dir = get_str(r, "run.out_dir");

  return cfg;
}

ExperimentConfig parse_config(const std::string& text) {
  json user;
  try {
    user = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  return config_from_json(user);
}

std::string config_fingerprint(const json& resolved) {
  json j = resolved;
  if (j.contains("run") && j["run"].is_object() && j["run"].contains("seed")) j["run"]["seed"] = 0;
  uint64_t h = fnv1a64(j.dump());
  char buf[24];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace badvfl
