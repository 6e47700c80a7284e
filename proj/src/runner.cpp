#include "badvfl/runner.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <sstream>
#include <thread>

#include "badvfl/attack.hpp"
#include "badvfl/common.hpp"
#include "badvfl/gr.hpp"
#include "badvfl/model_io.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace badvfl {

namespace {

constexpr uint64_t kStreamDataset = 0;
constexpr uint64_t kStreamModel = 1;
constexpr uint64_t kStreamSchedule = 2;
constexpr uint64_t kStreamAttack = 3;

std::string fmt_g(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

std::string fmt_opt(const std::optional<double>& v) { return v ? fmt_g(*v) : std::string(); }

double mean_of(const std::vector<double>& xs) {
  if (xs.empty()) return 0.0;
  double s = 0.0;
  for (double x : xs) s += x;
  return s / static_cast<double>(xs.size());
}

double stddev_of(const std::vector<double>& xs) {
  if (xs.size() < 2) return 0.0;
  double mu = mean_of(xs);
  double s = 0.0;
  for (double x : xs) s += (x - mu) * (x - mu);
  return std::sqrt(s / static_cast<double>(xs.size() - 1));
}

void write_text(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw InputError("cannot write file: " + path);
  out << content;
}

void parallel_for(int n, int jobs, const std::function<void(int)>& fn) {
  jobs = std::max(1, std::min(jobs, n));
  if (jobs <= 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<int> next{0};
  std::vector<std::thread> pool;
  pool.reserve(static_cast<size_t>(jobs));
  for (int w = 0; w < jobs; ++w) {
    pool.emplace_back([&] {
      for (int i = next.fetch_add(1); i < n; i = next.fetch_add(1)) fn(i);
    });
  }
  for (auto& t : pool) t.join();
}

const char* position_name(TriggerSpec::Position p) {
  switch (p) {
    case TriggerSpec::Position::UpLeft: return "up_left";
    case TriggerSpec::Position::Center: return "center";
    case TriggerSpec::Position::BottomRight: return "bottom_right";
    case TriggerSpec::Position::Explicit: return "explicit";
  }
  return "?";
}

const char* attack_kind_name(AttackKind k) {
  switch (k) {
    case AttackKind::None: return "benign";
    case AttackKind::BadVfl: return "badvfl";
    case AttackKind::Gr: return "gr";
  }
  return "?";
}

json trigger_json(const TriggerSpec& t, int width, const std::optional<GridShape>& grid) {
  json j;
  j["kind"] = t.kind == TriggerSpec::Kind::Patch ? "patch" : "overwrite";
  j["position"] = position_name(t.position);
  if (t.position == TriggerSpec::Position::Explicit) j["offset"] = t.offset;
  j["size"] = t.size;
  j["value"] = t.value;
  j["footprint"] = trigger_footprint(t, width, grid);
  return j;
}

std::string run_dir_name(const std::string& fp, uint64_t seed) {
  return "run-" + fp + "-s" + std::to_string(seed);
}

// Same experiment with the attack section reset to defaults; dataset,
// split, models, optimizer, schedule and defense all stay in place.
ExperimentConfig benignified(const ExperimentConfig& cfg) {
  json b = cfg.resolved;
  b["attack"] = config_defaults()["attack"];
  return config_from_json(b);
}

int64_t resolve_target(const ExperimentConfig& cfg, const BuiltData& data, uint64_t attack_seed,
                       int repeat) {
  const auto& labels = data.train.labels;
  if (cfg.attack.target_id >= 0) {
    int64_t id = cfg.attack.target_id;
    if (!data.index.contains(id))
      throw ConfigError("attack.target_id " + std::to_string(id) + " is not a training sample");
    if (labels[static_cast<size_t>(data.index.row(id))] != cfg.attack.target_class)
      throw ConfigError("attack.target_id " + std::to_string(id) +
                        " does not belong to attack.target_class " +
                        std::to_string(cfg.attack.target_class));
    return id;
  }
  std::vector<int64_t> pool;
  for (int i = 0; i < data.train.size(); ++i)
    if (labels[static_cast<size_t>(i)] == cfg.attack.target_class)
      pool.push_back(data.train.sample_ids[static_cast<size_t>(i)]);
  if (pool.empty())
    throw ConfigError("no training samples of attack.target_class " +
                      std::to_string(cfg.attack.target_class));
  Rng rng(derive_seed(attack_seed, 1000 + static_cast<uint64_t>(repeat)));
  return pool[static_cast<size_t>(rng.uniform_int(static_cast<int>(pool.size())))];
}

std::string detection_csv_header() { return "epoch,candidate_id,cosine,decision,true_label\n"; }

std::string detection_csv_badvfl(const AttackState& st, const BuiltData& data) {
  std::string out = detection_csv_header();
  for (const auto& rec : st.detection_log) {
    int row = data.index.row(rec.candidate);
    out += std::to_string(rec.epoch) + "," + std::to_string(rec.candidate) + "," +
           fmt_g(rec.cosine) + "," + (rec.accepted ? "1" : "0") + "," +
           std::to_string(data.train.labels[static_cast<size_t>(row)]) + "\n";
  }
  return out;
}

std::string detection_csv_gr(const GrState& st, const BuiltData& data) {
  std::string out = detection_csv_header();
  for (int64_t id : st.poisoned_ids) {
    int row = data.index.row(id);
    out += "," + std::to_string(id) + ",,1," +
           std::to_string(data.train.labels[static_cast<size_t>(row)]) + "\n";
  }
  return out;
}

std::string training_log_text(const std::string& fp, uint64_t seed, const std::string& kind,
                              const std::vector<TrainLog>& logs,
                              const std::vector<std::string>& notes) {
  std::string out = "run " + fp + " seed " + std::to_string(seed) + " kind " + kind + "\n";
  for (size_t r = 0; r < logs.size(); ++r) {
    if (logs.size() > 1) out += "repeat " + std::to_string(r) + "\n";
    for (size_t e = 0; e < logs[r].epoch_loss.size(); ++e)
      out += "epoch " + std::to_string(e) + " loss " + fmt_g(logs[r].epoch_loss[e]) + " acc " +
             fmt_g(logs[r].epoch_acc[e]) + "\n";
  }
  for (const auto& n : notes) out += "note " + n + "\n";
  return out;
}

json train_log_json(const TrainLog& log) {
  json j;
  j["loss"] = log.epoch_loss;
  j["acc"] = log.epoch_acc;
  return j;
}

std::string csv_row(const std::string& fp, uint64_t seed, const std::string& kind,
                    const MetricsReport& m) {
  return fp + "," + std::to_string(seed) + "," + kind + "," + fmt_g(m.tar) + "," + fmt_g(m.asr) +
         "," + fmt_opt(m.benign_tar) + "," + std::to_string(m.poisoned_count) + "," +
         fmt_opt(m.detection_precision);
}

struct BenignOutcome {
  BaselineResult result;
  RunRecord record;
};

// Full clean training run for `cfg` (whose attack section may simply be
// the defaults). Writes its own artifact directory and csv row.
BenignOutcome run_benign(const ExperimentConfig& cfg, uint64_t seed, const std::string& out_dir) {
  uint64_t ds_seed = derive_seed(seed, kStreamDataset);
  uint64_t model_seed = derive_seed(seed, kStreamModel);
  uint64_t sched_seed = derive_seed(seed, kStreamSchedule);

  BuiltData data = build_data(cfg, ds_seed);
  System sys = build_system(cfg, data, model_seed);
  TrainSchedule sched =
      TrainSchedule::build(data.train.sample_ids, cfg.epochs, cfg.batch_size, sched_seed);
  TrainLog log = train(sys.active, sys.parties, sched);

  TriggerSpec trig = resolve_trigger(cfg, data);
  MetricsReport m;
  m.tar = compute_tar(sys.active, sys.parties, data.test_shards, data.test.labels);
  m.asr = compute_asr(sys.active, sys.parties, data.test_shards, data.test.labels, trig,
                      cfg.attack.target_class);
  m.sdd_confusion.assign(static_cast<size_t>(data.train.class_count), 0);
  m.config_fingerprint = config_fingerprint(cfg.resolved);
  m.seed = seed;

  std::string dir = out_dir + "/" + run_dir_name(m.config_fingerprint, seed);
  fs::create_directories(dir);

  const auto& attacker_shard = data.train_shards.back();
  json report;
  report["kind"] = "benign";
  report["fingerprint"] = m.config_fingerprint;
  report["seed"] = seed;
  report["config"] = cfg.resolved;
  report["metrics"] = {{"tar", m.tar}, {"asr", m.asr}, {"poisoned_count", 0}};
  report["trigger"] = trigger_json(trig, attacker_shard.features.cols, attacker_shard.grid);
  report["training"] = json::array({train_log_json(log)});
  write_text(dir + "/report.json", report.dump(1) + "\n");
  write_text(dir + "/training.log",
             training_log_text(m.config_fingerprint, seed, "benign", {log}, {}));
  save_models(dir + "/models.json", sys.active, sys.parties,
              {{"kind", "benign"},
               {"fingerprint", m.config_fingerprint},
               {"seed", seed},
               {"class_count", data.train.class_count}});

  BenignOutcome out;
  out.result = BaselineResult{m.tar, m.asr, m.config_fingerprint};
  out.record.resolved_config = cfg.resolved;
  out.record.fingerprint = m.config_fingerprint;
  out.record.seed = seed;
  out.record.kind = "benign";
  out.record.metrics = m;
  out.record.run_dir = dir;
  out.record.csv_rows.push_back(csv_row(m.config_fingerprint, seed, "benign", m));
  return out;
}

std::optional<BaselineResult> cache_lookup(BaselineCache* cache, std::mutex* mu,
                                           const std::string& key) {
  if (!cache) return std::nullopt;
  std::unique_lock<std::mutex> lock;
  if (mu) lock = std::unique_lock<std::mutex>(*mu);
  auto it = cache->find(key);
  if (it == cache->end()) return std::nullopt;
  return it->second;
}

void cache_store(BaselineCache* cache, std::mutex* mu, const std::string& key,
                 const BaselineResult& value) {
  if (!cache) return;
  std::unique_lock<std::mutex> lock;
  if (mu) lock = std::unique_lock<std::mutex>(*mu);
  cache->emplace(key, value);
}

}  // namespace

BuiltData build_data(const ExperimentConfig& cfg, uint64_t dataset_seed) {
  BuiltData out;
  if (cfg.dataset.kind == "blobs") {
    Dataset full =
        make_synthetic_blobs(cfg.dataset.classes, cfg.dataset.train_per_class + cfg.dataset.test_per_class,
                             cfg.dataset.features, cfg.dataset.separation, dataset_seed);
    full.grid = cfg.dataset.grid;
    auto parts = split_train_test(full, cfg.dataset.test_per_class);
    out.train = std::move(parts.first);
    out.test = std::move(parts.second);
  } else {
    int64_t limit = cfg.dataset.limit.value_or(-1);
    out.train = load_idx_images(cfg.dataset.train_images, cfg.dataset.train_labels,
                                limit < 0 ? std::numeric_limits<int64_t>::max() : limit);
    out.test = load_idx_images(cfg.dataset.test_images, cfg.dataset.test_labels,
                               limit < 0 ? std::numeric_limits<int64_t>::max() : limit);
    if (out.train.width() != out.test.width())
      throw FormatError("train/test feature width mismatch: " + std::to_string(out.train.width()) +
                        " vs " + std::to_string(out.test.width()));
    // keep id spaces disjoint so nothing can confuse train and test rows
    for (auto& id : out.test.sample_ids) id += out.train.size();
    out.test.class_count = out.train.class_count =
        std::max(out.train.class_count, out.test.class_count);
  }

  out.split = cfg.split.ranges ? VerticalSplitSpec{*cfg.split.ranges}
                               : VerticalSplitSpec::even(out.train.width(), cfg.split.parties);
  out.split.validate(out.train.width());
  out.train_shards = vertical_split(out.train, out.split);
  out.test_shards = vertical_split(out.test, out.split);
  out.index = IdIndex::build(out.train.sample_ids);
  return out;
}

System build_system(const ExperimentConfig& cfg, const BuiltData& data, uint64_t model_seed) {
  Rng rng(model_seed);
  System sys;
  sys.parties.resize(data.train_shards.size());
  int concat_width = 0;
  for (size_t k = 0; k < data.train_shards.size(); ++k) {
    PassiveParty& p = sys.parties[k];
    p.party = static_cast<int>(k);
    p.shard = data.train_shards[k];
    std::vector<int> widths = {p.shard.features.cols};
    std::vector<Activation> acts;
    for (int h : cfg.model.bottom_hidden) {
      widths.push_back(h);
      acts.push_back(cfg.model.bottom_activation);
    }
    widths.push_back(cfg.model.bottom_out);
    acts.push_back(Activation::Identity);
    p.bottom = Mlp::make(widths, acts, rng);
    p.opt = Optimizer(cfg.optimizer);
    p.opt.bind(p.bottom);
    concat_width += cfg.model.bottom_out;
  }

  std::vector<int> top_widths = {concat_width};
  std::vector<Activation> top_acts;
  for (int i = 0; i < cfg.model.top_hidden_layers; ++i) {
    top_widths.push_back(cfg.model.top_hidden_width);
    top_acts.push_back(Activation::ReLU);
  }
  top_widths.push_back(data.train.class_count);
  top_acts.push_back(Activation::Identity);

  sys.active.top = Mlp::make(top_widths, top_acts, rng);
  sys.active.top_opt = Optimizer(cfg.optimizer);
  sys.active.top_opt.bind(sys.active.top);
  sys.active.labels = data.train.labels;
  sys.active.index = data.index;
  sys.active.class_count = data.train.class_count;
  sys.active.weight_decay = cfg.model.weight_decay;
  sys.active.defense =
      DefenseSpec{cfg.defense.kind, cfg.defense.variance, cfg.defense.keep_fraction,
                  cfg.defense.seed};
  sys.active.defense_rng = Rng(cfg.defense.seed);

  if (cfg.attack.target_class >= data.train.class_count || cfg.attack.target_class < 0)
    throw ConfigError("attack.target_class " + std::to_string(cfg.attack.target_class) +
                      " out of range for " + std::to_string(data.train.class_count) + " classes");
  return sys;
}

TriggerSpec resolve_trigger(const ExperimentConfig& cfg, const BuiltData& data) {
  const PartyShard& shard = data.train_shards.back();
  const TriggerCfg& tc = cfg.attack.trigger;
  TriggerSpec t;
  if (tc.kind == "auto")
    t.kind = shard.grid ? TriggerSpec::Kind::Patch : TriggerSpec::Kind::Overwrite;
  else if (tc.kind == "patch")
    t.kind = TriggerSpec::Kind::Patch;
  else
    t.kind = TriggerSpec::Kind::Overwrite;
  if (t.kind == TriggerSpec::Kind::Patch && !shard.grid)
    throw ConfigError("attack.trigger.kind: patch needs a feature grid on the attacker shard");
  t.position = tc.position;
  t.offset = tc.offset.value_or(-1);
  t.size = tc.size;
  if (tc.value) {
    t.value = *tc.value;
  } else {
    double mx = shard.features.data.empty() ? 1.0 : shard.features.data[0];
    for (double v : shard.features.data) mx = std::max(mx, v);
    t.value = mx;
  }
  trigger_footprint(t, shard.features.cols, shard.grid);  // validate bounds now
  return t;
}

std::string runs_csv_header() {
  return "config_hash,seed,kind,tar,asr,benign_tar,poisoned_count,detection_precision\n";
}

void append_csv_rows(const std::string& out_dir, const std::vector<std::string>& rows) {
  if (rows.empty()) return;
  fs::create_directories(out_dir);
  std::string path = out_dir + "/runs.csv";
  bool fresh = !fs::exists(path) || fs::file_size(path) == 0;
  std::ofstream out(path, std::ios::binary | std::ios::app);
  if (!out) throw InputError("cannot write file: " + path);
  if (fresh) out << runs_csv_header();
  for (const auto& r : rows) out << r << "\n";
}

RunRecord run_single(const ExperimentConfig& cfg, uint64_t seed, const std::string& out_dir,
                     BaselineCache* cache, std::mutex* cache_mu) {
  auto t0 = std::chrono::steady_clock::now();
  fs::create_directories(out_dir);

  RunRecord rec;
  rec.resolved_config = cfg.resolved;
  rec.seed = seed;
  rec.fingerprint = config_fingerprint(cfg.resolved);
  rec.kind = attack_kind_name(cfg.attack.kind);

  if (cfg.attack.kind == AttackKind::None) {
    std::string key = rec.fingerprint + ":" + std::to_string(seed);
    if (auto hit = cache_lookup(cache, cache_mu, key)) {
      rec.metrics.tar = hit->tar;
      rec.metrics.asr = hit->asr;
      rec.metrics.config_fingerprint = hit->fingerprint;
      rec.metrics.seed = seed;
      rec.run_dir = out_dir + "/" + run_dir_name(hit->fingerprint, seed);
    } else {
      BenignOutcome b = run_benign(cfg, seed, out_dir);
      cache_store(cache, cache_mu, key, b.result);
      rec = std::move(b.record);
    }
    rec.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0)
                      .count();
    return rec;
  }

  // benign reference point, shared across attacked cells that agree on it
  std::optional<double> benign_tar;
  if (cfg.run.baseline) {
    ExperimentConfig bcfg = benignified(cfg);
    std::string bkey = config_fingerprint(bcfg.resolved) + ":" + std::to_string(seed);
    if (auto hit = cache_lookup(cache, cache_mu, bkey)) {
      benign_tar = hit->tar;
    } else {
      BenignOutcome b = run_benign(bcfg, seed, out_dir);
      cache_store(cache, cache_mu, bkey, b.result);
      benign_tar = b.result.tar;
      for (auto& row : b.record.csv_rows) rec.csv_rows.push_back(row);
    }
  }

  uint64_t ds_seed = derive_seed(seed, kStreamDataset);
  uint64_t model_seed = derive_seed(seed, kStreamModel);
  uint64_t sched_seed = derive_seed(seed, kStreamSchedule);
  uint64_t attack_seed = derive_seed(seed, kStreamAttack);

  BuiltData data = build_data(cfg, ds_seed);
  TriggerSpec trig = resolve_trigger(cfg, data);

  SelectionRule rule = cfg.attack.selection;
  bool auto_switched = false;
  if (cfg.attack.kind == AttackKind::BadVfl && cfg.defense.kind == DefenseSpec::Kind::GaussianNoise &&
      !cfg.is_explicit("attack.selection") && rule == SelectionRule::Threshold) {
    // noisy gradients break a fixed cosine threshold; rank-based selection
    // keeps working, so it becomes the default under the noise defense
    rule = SelectionRule::TopPercent;
    auto_switched = true;
  }

  int repeats = std::max(1, cfg.attack.repeats);
  std::vector<TrainLog> logs;
  std::vector<std::string> notes;
  std::vector<double> tars, asrs;
  std::vector<int> confusion(static_cast<size_t>(data.train.class_count), 0);
  long poisoned_total = 0;
  json repeat_details = json::array();
  std::string dir = out_dir + "/" + run_dir_name(rec.fingerprint, seed);
  fs::create_directories(dir);
  if (auto_switched) notes.push_back("selection auto-switched to top_percent under gaussian_noise");

  for (int r = 0; r < repeats; ++r) {
    System sys = build_system(cfg, data, model_seed);
    TrainSchedule sched =
        TrainSchedule::build(data.train.sample_ids, cfg.epochs, cfg.batch_size, sched_seed);
    int64_t target = resolve_target(cfg, data, attack_seed, r);
    uint64_t hook_seed = derive_seed(attack_seed, 200 + static_cast<uint64_t>(r));

    const BadVflAttacker* bad = nullptr;
    const GrAttacker* gr = nullptr;
    PassiveParty& attacker_party = sys.parties.back();
    if (cfg.attack.kind == AttackKind::BadVfl) {
      AttackConfig ac;
      ac.target_id = target;
      ac.eta = cfg.attack.eta;
      ac.n = cfg.attack.n;
      ac.alpha_thre = cfg.attack.alpha_thre;
      ac.rule = rule;
      ac.top_percent = cfg.attack.top_percent;
      ac.perturb = cfg.attack.perturb;
      ac.trigger = trig;
      ac.warmup_epochs = cfg.attack.warmup_epochs;
      ac.max_tests = cfg.attack.max_tests;
      auto hook = std::make_unique<BadVflAttacker>(ac, &attacker_party.shard, hook_seed);
      bad = hook.get();
      attacker_party.hook = std::move(hook);
    } else {
      GrConfig gc;
      gc.target_id = target;
      gc.eta = cfg.attack.eta;
      gc.trigger = trig;
      gc.mask_scale = cfg.attack.mask_scale;
      auto hook = std::make_unique<GrAttacker>(gc, &attacker_party.shard, hook_seed);
      gr = hook.get();
      attacker_party.hook = std::move(hook);
    }

    logs.push_back(train(sys.active, sys.parties, sched));

    double tar = compute_tar(sys.active, sys.parties, data.test_shards, data.test.labels);
    double asr = compute_asr(sys.active, sys.parties, data.test_shards, data.test.labels, trig,
                             cfg.attack.target_class);
    tars.push_back(tar);
    asrs.push_back(asr);

    const std::vector<int64_t>& poison =
        bad ? bad->state().source_ids : gr->state().poisoned_ids;
    std::vector<int> conf =
        sdd_confusion(poison, data.index, data.train.labels, data.train.class_count);
    for (size_t c = 0; c < conf.size(); ++c) confusion[c] += conf[c];
    poisoned_total += static_cast<long>(poison.size());

    json detail;
    detail["repeat"] = r;
    detail["target_id"] = target;
    detail["tar"] = tar;
    detail["asr"] = asr;
    detail["poisoned_count"] = poison.size();
    detail["poison_label_histogram"] = conf;
    std::string det_path =
        dir + (r == 0 ? "/detection.csv" : "/detection_r" + std::to_string(r) + ".csv");
    if (bad) {
      const AttackState& st = bad->state();
      detail["source_ids"] = st.source_ids;
      detail["poison_flip_epoch"] = st.poison_flip_epoch;
      detail["similarity_tests"] = st.detection_log.size();
      detail["degenerate_cosines"] = st.degenerate_cosines;
      detail["fallback_donor_draws"] = st.fallback_draws;
      detail["poisoned_row_events"] = st.poisoned_row_events;
      write_text(det_path, detection_csv_badvfl(st, data));
      for (const auto& n : st.notes)
        notes.push_back("repeat " + std::to_string(r) + ": " + n);
    } else {
      const GrState& st = gr->state();
      detail["skipped_replacements"] = st.skipped_replacements;
      detail["poisoned_row_events"] = static_cast<long>(st.poisoned_ids.size());
      write_text(det_path, detection_csv_gr(st, data));
    }
    repeat_details.push_back(detail);

    if (r == 0)
      save_models(dir + "/models.json", sys.active, sys.parties,
                  {{"kind", rec.kind},
                   {"fingerprint", rec.fingerprint},
                   {"seed", seed},
                   {"class_count", data.train.class_count}});
  }

  MetricsReport& m = rec.metrics;
  m.tar = mean_of(tars);
  m.asr = mean_of(asrs);
  m.benign_tar = benign_tar;
  m.sdd_confusion = confusion;
  m.poisoned_count = static_cast<int>(
      std::llround(static_cast<double>(poisoned_total) / static_cast<double>(repeats)));
  m.detection_precision = detection_precision(confusion, cfg.attack.target_class);
  m.config_fingerprint = rec.fingerprint;
  m.seed = seed;
  rec.run_dir = dir;

  const auto& attacker_shard = data.train_shards.back();
  json report;
  report["kind"] = rec.kind;
  report["fingerprint"] = rec.fingerprint;
  report["seed"] = seed;
  report["config"] = cfg.resolved;
  report["selection"] = {{"rule", rule == SelectionRule::Threshold ? "threshold" : "top_percent"},
                         {"auto_switched", auto_switched}};
  report["trigger"] = trigger_json(trig, attacker_shard.features.cols, attacker_shard.grid);
  json metrics_j;
  metrics_j["tar"] = m.tar;
  metrics_j["asr"] = m.asr;
  if (m.benign_tar) metrics_j["benign_tar"] = *m.benign_tar;
  metrics_j["poisoned_count"] = m.poisoned_count;
  metrics_j["poison_label_histogram"] = m.sdd_confusion;
  if (m.detection_precision) metrics_j["detection_precision"] = *m.detection_precision;
  report["metrics"] = metrics_j;
  report["repeats"] = repeat_details;
  json training_j = json::array();
  for (const auto& l : logs) training_j.push_back(train_log_json(l));
  report["training"] = training_j;
  if (!notes.empty()) report["notes"] = notes;
  write_text(dir + "/report.json", report.dump(1) + "\n");
  write_text(dir + "/training.log", training_log_text(rec.fingerprint, seed, rec.kind, logs, notes));

  rec.csv_rows.push_back(csv_row(rec.fingerprint, seed, rec.kind, m));
  rec.wall_ms =
      std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
  return rec;
}

SweepOutcome run_sweep(const json& user_cfg, const std::vector<SweepAxis>& axes,
                       const std::vector<uint64_t>& seeds, const std::string& out_dir, int jobs) {
  if (seeds.empty()) throw ConfigError("sweep: at least one seed is required");
  json defaults = config_defaults();
  for (const auto& ax : axes) {
    if (ax.values.empty()) throw ConfigError("sweep axis " + ax.path + " has no values");
    if (ax.path == "run.seed") throw ConfigError("run.seed is swept via --seeds, not an axis");
    const json* cur = &defaults;
    size_t start = 0;
    while (true) {
      size_t dot = ax.path.find('.', start);
      std::string key = ax.path.substr(start, dot == std::string::npos ? dot : dot - start);
      if (!cur->is_object() || !cur->contains(key))
        throw ConfigError("sweep axis refers to unknown config key: " + ax.path);
      cur = &(*cur)[key];
      if (dot == std::string::npos) break;
      start = dot + 1;
    }
  }

  struct Cell {
    json user;
    ExperimentConfig cfg;
    std::vector<std::string> axis_values;  // printable, axis order
    bool valid = false;
    std::string error;
  };

  int cell_count = 1;
  for (const auto& ax : axes) cell_count *= static_cast<int>(ax.values.size());
  std::vector<Cell> cells(static_cast<size_t>(cell_count));
  for (int c = 0; c < cell_count; ++c) {
    Cell& cell = cells[static_cast<size_t>(c)];
    cell.user = user_cfg;
    int rem = c;
    // row-major: the last axis varies fastest
    std::vector<int> idx(axes.size(), 0);
    for (int a = static_cast<int>(axes.size()) - 1; a >= 0; --a) {
      idx[static_cast<size_t>(a)] = rem % static_cast<int>(axes[static_cast<size_t>(a)].values.size());
      rem /= static_cast<int>(axes[static_cast<size_t>(a)].values.size());
    }
    for (size_t a = 0; a < axes.size(); ++a) {
      std::string ptr = "/" + axes[a].path;
      std::replace(ptr.begin(), ptr.end(), '.', '/');
      const json& val = axes[a].values[static_cast<size_t>(idx[a])];
      cell.user[json::json_pointer(ptr)] = val;
      cell.axis_values.push_back(val.is_string() ? val.get<std::string>() : val.dump());
    }
    try {
      cell.cfg = config_from_json(cell.user);
      cell.valid = true;
    } catch (const std::exception& e) {
      cell.error = e.what();
    }
  }

  fs::create_directories(out_dir);
  BaselineCache cache;
  std::mutex cache_mu;
  std::mutex print_mu;

  // phase 1: every distinct clean baseline, each exactly once
  std::map<std::string, std::pair<ExperimentConfig, uint64_t>> benign_tasks;
  for (const auto& cell : cells) {
    if (!cell.valid) continue;
    for (uint64_t seed : seeds) {
      if (cell.cfg.attack.kind == AttackKind::None) {
        std::string key = config_fingerprint(cell.cfg.resolved) + ":" + std::to_string(seed);
        benign_tasks.emplace(key, std::make_pair(cell.cfg, seed));
      } else if (cell.cfg.run.baseline) {
        ExperimentConfig bcfg = benignified(cell.cfg);
        std::string key = config_fingerprint(bcfg.resolved) + ":" + std::to_string(seed);
        benign_tasks.emplace(key, std::make_pair(std::move(bcfg), seed));
      }
    }
  }
  std::vector<const std::pair<const std::string, std::pair<ExperimentConfig, uint64_t>>*> btasks;
  btasks.reserve(benign_tasks.size());
  for (auto& kv : benign_tasks) btasks.push_back(&kv);

  std::vector<std::string> all_rows;
  std::vector<std::optional<BenignOutcome>> boutcomes(btasks.size());
  std::vector<std::string> berrors(btasks.size());
  parallel_for(static_cast<int>(btasks.size()), jobs, [&](int i) {
    const auto& [key, task] = *btasks[static_cast<size_t>(i)];
    try {
      BenignOutcome b = run_benign(task.first, task.second, out_dir);
      {
        std::lock_guard<std::mutex> g(cache_mu);
        cache.emplace(key, b.result);
      }
      {
        std::lock_guard<std::mutex> g(print_mu);
        std::printf("[baseline %d/%d] seed %llu tar %.4f\n", i + 1,
                    static_cast<int>(btasks.size()),
                    static_cast<unsigned long long>(task.second), b.result.tar);
        std::fflush(stdout);
      }
      boutcomes[static_cast<size_t>(i)] = std::move(b);
    } catch (const std::exception& e) {
      std::lock_guard<std::mutex> g(print_mu);
      berrors[static_cast<size_t>(i)] = e.what();
      std::printf("[baseline %d/%d] FAILED: %s\n", i + 1, static_cast<int>(btasks.size()),
                  e.what());
      std::fflush(stdout);
    }
  });
  for (auto& b : boutcomes)
    if (b)
      for (auto& row : b->record.csv_rows) all_rows.push_back(row);

  // phase 2: attacked cells (and cache hits for the benign ones)
  struct Task {
    int cell = 0;
    uint64_t seed = 0;
  };
  std::vector<Task> tasks;
  for (int c = 0; c < cell_count; ++c)
    for (uint64_t seed : seeds) tasks.push_back(Task{c, seed});

  std::vector<RunRecord> records(tasks.size());
  parallel_for(static_cast<int>(tasks.size()), jobs, [&](int i) {
    const Task& t = tasks[static_cast<size_t>(i)];
    Cell& cell = cells[static_cast<size_t>(t.cell)];
    RunRecord rec;
    rec.seed = t.seed;
    if (!cell.valid) {
      rec.ok = false;
      rec.error = cell.error;
    } else {
      try {
        rec = run_single(cell.cfg, t.seed, out_dir, &cache, &cache_mu);
      } catch (const std::exception& e) {
        rec.ok = false;
        rec.error = e.what();
        rec.kind = attack_kind_name(cell.cfg.attack.kind);
        rec.fingerprint = config_fingerprint(cell.cfg.resolved);
      }
    }
    {
      std::lock_guard<std::mutex> g(print_mu);
      if (rec.ok)
        std::printf("[run %d/%d] cell %d seed %llu %s tar %.4f asr %.4f\n", i + 1,
                    static_cast<int>(tasks.size()), t.cell,
                    static_cast<unsigned long long>(t.seed), rec.kind.c_str(), rec.metrics.tar,
                    rec.metrics.asr);
      else
        std::printf("[run %d/%d] cell %d seed %llu FAILED: %s\n", i + 1,
                    static_cast<int>(tasks.size()), t.cell,
                    static_cast<unsigned long long>(t.seed), rec.error.c_str());
      std::fflush(stdout);
    }
    records[static_cast<size_t>(i)] = std::move(rec);
  });

  for (const auto& rec : records)
    for (const auto& row : rec.csv_rows) all_rows.push_back(row);
  append_csv_rows(out_dir, all_rows);

  // summary: one row per cell, aggregated over seeds
  std::string summary;
  for (const auto& ax : axes) summary += ax.path + ",";
  summary +=
      "config_hash,kind,status,seeds,tar_mean,tar_std,asr_mean,asr_std,"
      "precision_mean,benign_tar_mean\n";
  SweepOutcome out;
  out.cells = cell_count;
  for (int c = 0; c < cell_count; ++c) {
    const Cell& cell = cells[static_cast<size_t>(c)];
    std::vector<double> tar, asr, prec, btar;
    bool any_failed = !cell.valid;
    std::string kind = cell.valid ? attack_kind_name(cell.cfg.attack.kind) : "";
    std::string fp = cell.valid ? config_fingerprint(cell.cfg.resolved) : "";
    for (size_t i = 0; i < tasks.size(); ++i) {
      if (tasks[i].cell != c) continue;
      const RunRecord& rec = records[i];
      if (!rec.ok) {
        any_failed = true;
        continue;
      }
      tar.push_back(rec.metrics.tar);
      asr.push_back(rec.metrics.asr);
      if (rec.metrics.detection_precision) prec.push_back(*rec.metrics.detection_precision);
      if (rec.metrics.benign_tar) btar.push_back(*rec.metrics.benign_tar);
    }
    if (any_failed) ++out.failed_cells;
    for (const auto& v : cell.axis_values) summary += v + ",";
    summary += fp + "," + kind + "," + (any_failed ? "failed" : "ok") + "," +
               std::to_string(tar.size()) + ",";
    if (!tar.empty()) {
      summary += fmt_g(mean_of(tar)) + "," + fmt_g(stddev_of(tar)) + "," + fmt_g(mean_of(asr)) +
                 "," + fmt_g(stddev_of(asr)) + ",";
      summary += (prec.empty() ? std::string() : fmt_g(mean_of(prec))) + ",";
      summary += btar.empty() ? std::string() : fmt_g(mean_of(btar));
    } else {
      summary += ",,,,,";
    }
    summary += "\n";
  }
  out.summary_path = out_dir + "/summary.csv";
  write_text(out.summary_path, summary);
  out.runs = std::move(records);
  return out;
}

std::string aggregate_runs(const std::vector<std::string>& csv_paths) {
  struct Group {
    std::vector<double> tar, asr, prec, btar;
    long poisoned = 0;
  };
  std::map<std::pair<std::string, std::string>, Group> groups;
  for (const auto& path : csv_paths) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InputError("cannot read file: " + path);
    std::string line;
    if (!std::getline(in, line)) throw FormatError(path + ": empty file");
    std::string expect = runs_csv_header();
    expect.pop_back();
    if (line != expect) throw FormatError(path + ": unexpected header: " + line);
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      std::vector<std::string> fields;
      std::stringstream ss(line);
      std::string f;
      while (std::getline(ss, f, ',')) fields.push_back(f);
      fields.resize(8);
      Group& g = groups[{fields[0], fields[2]}];
      g.tar.push_back(std::stod(fields[3]));
      g.asr.push_back(std::stod(fields[4]));
      if (!fields[5].empty()) g.btar.push_back(std::stod(fields[5]));
      g.poisoned += std::stol(fields[6]);
      if (!fields[7].empty()) g.prec.push_back(std::stod(fields[7]));
    }
  }
  std::string out =
      "config_hash,kind,runs,tar_mean,tar_std,asr_mean,asr_std,precision_mean,"
      "benign_tar_mean,poisoned_mean\n";
  for (const auto& [key, g] : groups) {
    out += key.first + "," + key.second + "," + std::to_string(g.tar.size()) + "," +
           fmt_g(mean_of(g.tar)) + "," + fmt_g(stddev_of(g.tar)) + "," + fmt_g(mean_of(g.asr)) +
           "," + fmt_g(stddev_of(g.asr)) + ",";
    out += (g.prec.empty() ? std::string() : fmt_g(mean_of(g.prec))) + ",";
    out += (g.btar.empty() ? std::string() : fmt_g(mean_of(g.btar))) + ",";
    out += fmt_g(static_cast<double>(g.poisoned) / static_cast<double>(g.tar.size())) + "\n";
  }
  return out;
}

}  // namespace badvfl
