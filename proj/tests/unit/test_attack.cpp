#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <set>
#include <vector>

#include "badvfl/attack.hpp"
#include "badvfl/common.hpp"
#include "../helpers.hpp"

using namespace badvfl;

namespace {

// unit-norm row with an exact-by-construction cosine c against (1,0,0,...)
std::vector<double> row_with_cosine(double c, size_t dim) {
  std::vector<double> v(dim, 0.0);
  v[0] = c;
  v[1] = std::sqrt(1.0 - c * c);
  return v;
}

Matrix grads_for(const std::vector<std::vector<double>>& rows) {
  Matrix g(static_cast<int>(rows.size()), static_cast<int>(rows[0].size()));
  for (size_t i = 0; i < rows.size(); ++i)
    for (size_t j = 0; j < rows[i].size(); ++j) g.at(static_cast<int>(i), static_cast<int>(j)) = rows[i][j];
  return g;
}

TriggerSpec small_trigger() {
  TriggerSpec t;
  t.kind = TriggerSpec::Kind::Overwrite;
  t.position = TriggerSpec::Position::Explicit;
  t.offset = 0;
  t.size = 1;
  t.value = 5.0;
  return t;
}

AttackConfig base_cfg(int64_t target = 0) {
  AttackConfig cfg;
  cfg.target_id = target;
  cfg.eta = 0.25;
  cfg.n = 2;
  cfg.alpha_thre = 0.6;
  cfg.warmup_epochs = 1;
  cfg.trigger = small_trigger();
  return cfg;
}

Matrix input_for(const PartyShard& shard, const std::vector<int64_t>& batch) {
  std::vector<int> rix;
  for (int64_t id : batch) rix.push_back(static_cast<int>(id));
  return gather_rows(shard.features, rix);
}

}  // namespace

TEST_CASE("cosine similarity matches its closed forms") {
  std::vector<double> e0 = {1, 0};
  std::vector<double> e1 = {0, 1};
  std::vector<double> v = {1, 2};
  std::vector<double> w = {2, 4};
  std::vector<double> neg = {-1, 0};
  CHECK(cosine_similarity(e0, e0) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(cosine_similarity(e0, e1) == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(cosine_similarity(v, w) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(cosine_similarity(e0, neg) == doctest::Approx(-1.0).epsilon(1e-12));
}

TEST_CASE("cosine of a zero vector is zero and flagged degenerate") {
  std::vector<double> z = {0, 0, 0};
  std::vector<double> v = {1, 2, 3};
  bool degen = false;
  CHECK(cosine_similarity(z, v, &degen) == 0.0);
  CHECK(degen);
  degen = false;
  CHECK(cosine_similarity(v, z, &degen) == 0.0);
  CHECK(degen);
  bool fine = true;
  (void)cosine_similarity(v, v, &fine);
  CHECK(!fine);
}

TEST_CASE("cosine rejects mismatched lengths") {
  std::vector<double> a = {1, 2};
  std::vector<double> b = {1, 2, 3};
  CHECK_THROWS_AS((void)cosine_similarity(a, b), InputError);
}

TEST_CASE("cosine stays within unit bounds on random vectors") {
  Rng rng(3);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> a(8), b(8);
    for (auto& x : a) x = rng.gaussian();
    for (auto& x : b) x = rng.gaussian();
    double c = cosine_similarity(a, b);
    CHECK(c <= 1.0 + 1e-12);
    CHECK(c >= -1.0 - 1e-12);
  }
}

TEST_CASE("candidate selection excludes target detected and exhausted ids") {
  AttackConfig cfg = base_cfg();
  cfg.n = 10;
  AttackState st;
  std::vector<int64_t> batch = {0, 1, 2, 3, 4};
  Rng rng(5);

  std::vector<int64_t> only_target = {0};
  CHECK(select_candidates(only_target, st, cfg, rng).empty());

  auto all = select_candidates(batch, st, cfg, rng);
  CHECK(std::set<int64_t>(all.begin(), all.end()) == std::set<int64_t>{1, 2, 3, 4});

  st.source_set.insert(2);
  st.test_counts[3] = cfg.max_tests;
  auto rest = select_candidates(batch, st, cfg, rng);
  CHECK(std::set<int64_t>(rest.begin(), rest.end()) == std::set<int64_t>{1, 4});

  st.test_counts[4] = cfg.max_tests - 1;  // still eligible
  auto again = select_candidates(batch, st, cfg, rng);
  CHECK(std::set<int64_t>(again.begin(), again.end()) == std::set<int64_t>{1, 4});
}

TEST_CASE("candidate selection replays identically under one seed") {
  AttackConfig cfg = base_cfg();
  cfg.n = 5;
  AttackState st;
  std::vector<int64_t> batch = {0, 1, 2, 3, 4, 5, 6, 7, 8, 9};
  Rng a(55), b(55), c(56);
  auto first = select_candidates(batch, st, cfg, a);
  CHECK(first.size() == 5);
  CHECK(select_candidates(batch, st, cfg, b) == first);
  // a different stream draws a different subset eventually; check size only
  CHECK(select_candidates(batch, st, cfg, c).size() == 5);
}

TEST_CASE("threshold rule accepts exactly the candidates above alpha") {
  AttackConfig cfg = base_cfg();
  cfg.detection_budget = 5;
  AttackState st;
  st.target_grad = {1, 0, 0};
  st.has_target_grad = true;
  st.pending_nset = {10, 11, 12};
  std::vector<int64_t> batch = {10, 11, 12};
  Matrix grads = grads_for({row_with_cosine(0.9, 3), row_with_cosine(0.1, 3), row_with_cosine(0.7, 3)});

  auto newly = sdd_update(st, cfg, grads, batch);
  CHECK(newly == std::vector<int64_t>{10, 12});
  CHECK(st.source_ids == std::vector<int64_t>{10, 12});
  CHECK(st.source_set.count(11) == 0);
  REQUIRE(st.detection_log.size() == 3);
  CHECK(st.detection_log[0].cosine == doctest::Approx(0.9).epsilon(1e-9));
  CHECK(st.detection_log[0].accepted);
  CHECK(!st.detection_log[1].accepted);
  CHECK(st.detection_log[2].accepted);
  CHECK(st.test_counts[10] == 1);
  CHECK(st.test_counts[11] == 1);
  CHECK(st.test_counts[12] == 1);
}

TEST_CASE("an impossible threshold accepts nothing") {
  AttackConfig cfg = base_cfg();
  cfg.alpha_thre = 1.0 + 1e-9;
  cfg.detection_budget = 5;
  AttackState st;
  st.target_grad = {1, 0, 0};
  st.has_target_grad = true;
  st.pending_nset = {1, 2};
  std::vector<int64_t> batch = {1, 2};
  Matrix grads = grads_for({row_with_cosine(1.0, 3), row_with_cosine(0.99, 3)});
  CHECK(sdd_update(st, cfg, grads, batch).empty());
  CHECK(st.source_ids.empty());
}

TEST_CASE("detection stops accepting at the budget") {
  AttackConfig cfg = base_cfg();
  cfg.detection_budget = 1;
  AttackState st;
  st.target_grad = {1, 0};
  st.has_target_grad = true;
  st.pending_nset = {1, 2, 3};
  std::vector<int64_t> batch = {1, 2, 3};
  Matrix grads = grads_for({{1, 0}, {1, 0}, {1, 0}});
  auto newly = sdd_update(st, cfg, grads, batch);
  CHECK(newly == std::vector<int64_t>{1});
  CHECK(st.source_ids.size() == 1);
}

TEST_CASE("detection before any target gradient is a protocol error") {
  AttackConfig cfg = base_cfg();
  AttackState st;
  st.pending_nset = {1};
  std::vector<int64_t> batch = {1};
  Matrix grads = grads_for({{1, 0}});
  CHECK_THROWS_AS((void)sdd_update(st, cfg, grads, batch), ProtocolError);
}

TEST_CASE("a candidate missing from its batch is a protocol error") {
  AttackConfig cfg = base_cfg();
  AttackState st;
  st.target_grad = {1, 0};
  st.has_target_grad = true;
  st.pending_nset = {99};
  std::vector<int64_t> batch = {1, 2};
  Matrix grads = grads_for({{1, 0}, {0, 1}});
  CHECK_THROWS_AS((void)sdd_update(st, cfg, grads, batch), ProtocolError);
}

TEST_CASE("attacker constructor validates its configuration") {
  PartyShard shard = testutil::make_shard(8, 4, 1);
  AttackConfig cfg = base_cfg();
  cfg.target_id = 99;
  CHECK_THROWS_AS(BadVflAttacker(cfg, &shard, 7), ConfigError);
  cfg = base_cfg();
  cfg.eta = 0.0;
  CHECK_THROWS_AS(BadVflAttacker(cfg, &shard, 7), ConfigError);
  cfg = base_cfg();
  cfg.eta = 1.5;
  CHECK_THROWS_AS(BadVflAttacker(cfg, &shard, 7), ConfigError);
  cfg = base_cfg();
  cfg.n = 0;
  CHECK_THROWS_AS(BadVflAttacker(cfg, &shard, 7), ConfigError);
  cfg = base_cfg();
  cfg.trigger.offset = 10;  // past the 4-wide shard
  CHECK_THROWS_AS(BadVflAttacker(cfg, &shard, 7), ConfigError);

  cfg = base_cfg();
  BadVflAttacker ok(cfg, &shard, 7);
  CHECK(ok.config().detection_budget == 2);  // ceil(0.25 * 8)
  CHECK(ok.state().phase == AttackPhase::AwaitTargetGradient);
}

TEST_CASE("attacker walks await detect poison on crafted rounds") {
  PartyShard shard = testutil::make_shard(8, 4, 2);
  AttackConfig cfg = base_cfg();
  BadVflAttacker atk(cfg, &shard, 11);

  // warm-up epoch: inputs pass through untouched
  atk.on_epoch_start(0);
  std::vector<int64_t> batch0 = {0, 1, 2, 3};
  Matrix x0 = input_for(shard, batch0);
  Matrix x0_orig = x0;
  atk.rewrite_input(batch0, x0);
  CHECK(x0.data == x0_orig.data);

  // the target's delivered row becomes the reference gradient
  Matrix g0 = grads_for({{1, 0, 0}, {0, 1, 0}, {0, 0, 1}, {1, 1, 0}});
  atk.on_round_end(batch0, g0);
  CHECK(atk.state().has_target_grad);
  CHECK(atk.state().target_grad == std::vector<double>{1, 0, 0});
  atk.on_epoch_end(0);
  CHECK(atk.state().phase == AttackPhase::Detecting);

  // detection round: chosen candidates carry the target's raw features
  atk.on_epoch_start(1);
  std::vector<int64_t> batch1 = {1, 2, 3, 0};
  Matrix x1 = input_for(shard, batch1);
  atk.rewrite_input(batch1, x1);
  auto nset = atk.state().pending_nset;
  CHECK(nset.size() == 2);
  auto target_row = shard.features.row(0);
  for (int64_t cand : nset) {
    auto pos = std::find(batch1.begin(), batch1.end(), cand) - batch1.begin();
    auto row = x1.row(static_cast<int>(pos));
    for (size_t j = 0; j < row.size(); ++j) CHECK(row[j] == target_row[j]);
  }
  for (size_t i = 0; i < batch1.size(); ++i) {
    if (std::find(nset.begin(), nset.end(), batch1[i]) != nset.end()) continue;
    auto row = x1.row(static_cast<int>(i));
    auto honest = shard.features.row(static_cast<int>(batch1[i]));
    for (size_t j = 0; j < row.size(); ++j) CHECK(row[j] == honest[j]);
  }

  // accept both candidates: budget 2 reached, phase flips mid-epoch
  std::vector<std::vector<double>> rows(4, std::vector<double>{0, 0, 1});
  for (int64_t cand : nset) {
    auto pos = std::find(batch1.begin(), batch1.end(), cand) - batch1.begin();
    rows[static_cast<size_t>(pos)] = row_with_cosine(0.95, 3);
  }
  rows[3] = {1, 0, 0};  // honest target row refreshes the reference
  atk.on_round_end(batch1, grads_for(rows));
  CHECK(atk.state().phase == AttackPhase::Poisoning);
  CHECK(atk.state().poison_flip_epoch == 1);
  CHECK(atk.state().source_ids.size() == 2);
  bool flip_noted = false;
  for (const auto& n : atk.state().notes)
    flip_noted = flip_noted || n.find("poisoning started") != std::string::npos;
  CHECK(flip_noted);

  // poisoning round: source rows get a donor body plus the trigger
  std::vector<int64_t> sources = atk.state().source_ids;
  std::vector<int64_t> batch2 = {sources[0], 5, 0};
  Matrix x2 = input_for(shard, batch2);
  atk.rewrite_input(batch2, x2);
  auto poisoned = x2.row(0);
  CHECK(poisoned[0] == 5.0);  // trigger value at offset 0
  // donor body: the only same-batch donor is id 5
  auto donor = shard.features.row(5);
  for (size_t j = 1; j < poisoned.size(); ++j) CHECK(poisoned[j] == donor[j]);
  // non-source rows stay honest, including the target
  auto r5 = x2.row(1);
  for (size_t j = 0; j < r5.size(); ++j) CHECK(r5[j] == shard.features.row(5)[j]);
  auto rt = x2.row(2);
  for (size_t j = 0; j < rt.size(); ++j) CHECK(rt[j] == shard.features.row(0)[j]);
  CHECK(atk.state().poisoned_row_events == 1);
}

TEST_CASE("top-percent rule defers acceptance to the epoch boundary") {
  PartyShard shard = testutil::make_shard(8, 4, 3);
  AttackConfig cfg = base_cfg();
  cfg.rule = SelectionRule::TopPercent;
  cfg.top_percent = 0.4;  // pool of 3 -> accept ceil(1.2) = 2
  cfg.eta = 0.5;          // budget 4, not the binding constraint here
  cfg.n = 3;
  BadVflAttacker atk(cfg, &shard, 13);

  atk.on_epoch_start(0);
  std::vector<int64_t> batch0 = {0, 4, 5, 6};
  Matrix x0 = input_for(shard, batch0);
  atk.rewrite_input(batch0, x0);
  atk.on_round_end(batch0, grads_for({{1, 0}, {0, 1}, {0, 1}, {0, 1}}));
  atk.on_epoch_end(0);
  REQUIRE(atk.state().phase == AttackPhase::Detecting);

  atk.on_epoch_start(1);
  std::vector<int64_t> batch1 = {1, 2, 3, 0};
  Matrix x1 = input_for(shard, batch1);
  atk.rewrite_input(batch1, x1);
  auto nset = atk.state().pending_nset;
  REQUIRE(std::set<int64_t>(nset.begin(), nset.end()) == std::set<int64_t>{1, 2, 3});

  std::vector<std::vector<double>> rows(4);
  double cs[3] = {0.9, 0.5, 0.7};
  for (size_t i = 0; i < 3; ++i) {
    auto pos = std::find(batch1.begin(), batch1.end(), static_cast<int64_t>(i + 1)) - batch1.begin();
    rows[static_cast<size_t>(pos)] = row_with_cosine(cs[i], 2);
  }
  rows[3] = {1, 0};
  atk.on_round_end(batch1, grads_for(rows));
  // mid-epoch: similarities pooled, nothing accepted yet
  CHECK(atk.state().source_ids.empty());
  CHECK(atk.state().detection_log.size() == 3);

  atk.on_epoch_end(1);
  // ids 1 (0.9) and 3 (0.7) win the epoch pool
  CHECK(atk.state().source_ids == std::vector<int64_t>{1, 3});
  int accepted = 0;
  for (const auto& rec : atk.state().detection_log)
    if (rec.accepted) accepted++;
  CHECK(accepted == 2);
}

TEST_CASE("perturbation modes shape the poisoned row body") {
  PartyShard shard = testutil::make_shard(8, 4, 4);

  auto force_poisoning = [&](AttackConfig cfg, uint64_t seed) {
    cfg.eta = 0.25;
    cfg.n = 2;
    BadVflAttacker atk(cfg, &shard, seed);
    atk.on_epoch_start(0);
    std::vector<int64_t> b0 = {0, 1, 2, 3};
    Matrix x0 = input_for(shard, b0);
    atk.rewrite_input(b0, x0);
    atk.on_round_end(b0, grads_for({{1, 0}, {0, 1}, {0, 1}, {0, 1}}));
    atk.on_epoch_end(0);
    atk.on_epoch_start(1);
    Matrix x1 = input_for(shard, b0);
    atk.rewrite_input(b0, x1);
    std::vector<std::vector<double>> rows(4, std::vector<double>{0, 1});
    for (int64_t cand : atk.state().pending_nset) {
      auto pos = std::find(b0.begin(), b0.end(), cand) - b0.begin();
      rows[static_cast<size_t>(pos)] = {1, 0};
    }
    rows[0] = {1, 0};
    atk.on_round_end(b0, grads_for(rows));
    return atk;
  };

  AttackConfig none = base_cfg();
  none.perturb = PerturbMode::None;
  auto atk_none = force_poisoning(none, 21);
  REQUIRE(atk_none.state().phase == AttackPhase::Poisoning);
  int64_t s = atk_none.state().source_ids[0];
  std::vector<int64_t> batch = {s, 6, 0};
  Matrix x = input_for(shard, batch);
  atk_none.rewrite_input(batch, x);
  // body untouched, only the trigger written
  auto own = shard.features.row(static_cast<int>(s));
  auto row = x.row(0);
  CHECK(row[0] == 5.0);
  for (size_t j = 1; j < row.size(); ++j) CHECK(row[j] == own[j]);

  AttackConfig whole = base_cfg();
  whole.perturb = PerturbMode::WholeDataset;
  auto atk_whole = force_poisoning(whole, 22);
  REQUIRE(atk_whole.state().phase == AttackPhase::Poisoning);
  s = atk_whole.state().source_ids[0];
  std::vector<int64_t> batch2 = {s, 6, 0};
  Matrix x2 = input_for(shard, batch2);
  atk_whole.rewrite_input(batch2, x2);
  auto row2 = x2.row(0);
  CHECK(row2[0] == 5.0);
  // the body must be some non-source, non-target shard row
  bool matches_donor = false;
  for (int64_t id : shard.sample_ids) {
    if (id == 0 || atk_whole.state().source_set.count(id)) continue;
    auto cand = shard.features.row(static_cast<int>(id));
    bool same = true;
    for (size_t j = 1; j < row2.size(); ++j) same = same && row2[j] == cand[j];
    matches_donor = matches_donor || same;
  }
  CHECK(matches_donor);

  // same-batch mode falls back to the whole pool when the batch offers no donor
  AttackConfig same = base_cfg();
  same.perturb = PerturbMode::SameBatch;
  auto atk_same = force_poisoning(same, 23);
  REQUIRE(atk_same.state().phase == AttackPhase::Poisoning);
  auto srcs = atk_same.state().source_ids;
  std::vector<int64_t> starved = {srcs[0], srcs[1], 0};
  Matrix x3 = input_for(shard, starved);
  atk_same.rewrite_input(starved, x3);
  CHECK(atk_same.state().fallback_draws > 0);
  CHECK(x3.row(0)[0] == 5.0);
  CHECK(x3.row(1)[0] == 5.0);
}

TEST_CASE("exhausting every candidate flips to poisoning with whatever was found") {
  PartyShard shard = testutil::make_shard(4, 4, 5);
  AttackConfig cfg = base_cfg();
  cfg.alpha_thre = 2.0;  // never accept
  cfg.max_tests = 1;
  cfg.n = 3;
  cfg.eta = 0.5;
  BadVflAttacker atk(cfg, &shard, 31);

  atk.on_epoch_start(0);
  std::vector<int64_t> all = {0, 1, 2, 3};
  Matrix x = input_for(shard, all);
  atk.rewrite_input(all, x);
  atk.on_round_end(all, grads_for({{1, 0}, {0, 1}, {0, 1}, {0, 1}}));
  atk.on_epoch_end(0);
  REQUIRE(atk.state().phase == AttackPhase::Detecting);

  atk.on_epoch_start(1);
  Matrix x1 = input_for(shard, all);
  atk.rewrite_input(all, x1);
  CHECK(atk.state().pending_nset.size() == 3);  // every non-target id
  std::vector<std::vector<double>> rows(4, std::vector<double>{1, 0});
  atk.on_round_end(all, grads_for(rows));
  CHECK(atk.state().source_ids.empty());  // threshold 2.0 rejects everything
  atk.on_epoch_end(1);
  CHECK(atk.state().phase == AttackPhase::Poisoning);
  bool warned = false;
  for (const auto& n : atk.state().notes)
    warned = warned || n.find("empty source set") != std::string::npos;
  CHECK(warned);
}
