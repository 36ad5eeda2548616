// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "aseg/aseg.hpp"
#include "memory_oracle.hpp"
#include "model_checks.hpp"
#include "oracles.hpp"
#include "policy_checks.hpp"
#include "train_fixtures.hpp"

using namespace aseg;
using Clock = std::chrono::steady_clock;

namespace {

struct Outcome {
  bool ok = false;
  std::string detail;
};

int failures = 0;
std::vector<int> selected;  // empty runs everything

void criterion(int id, const std::string& name, double limit_s, const std::function<Outcome()>& body) {
  if (!selected.empty() && std::find(selected.begin(), selected.end(), id) == selected.end()) return;
  const auto start = Clock::now();
  Outcome r;
  try {
    r = body();
  } catch (const std::exception& e) {
    r = {false, std::string("exception: ") + e.what()};
  }
  const double secs = std::chrono::duration<double>(Clock::now() - start).count();
  if (secs > limit_s) {
    r.ok = false;
    r.detail += " [over time limit]";
  }
  failures += !r.ok;
  std::printf("%s %d %s: %s (%.1fs, limit %.0fs)\n", r.ok ? "PASS" : "FAIL", id, name.c_str(),
              r.detail.c_str(), secs, limit_s);
  std::fflush(stdout);
}

std::string fmt(const char* f, double a, double b = 0, double c = 0, double d = 0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, a, b, c, d);
  return buf;
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

Outcome budget_table() {
  const double table[10][3] = {{7.0, 2.3, 1.8},    {14.0, 4.6, 3.6},  {21.0, 7.0, 5.4},
                               {28.1, 9.3, 7.2},   {35.1, 11.7, 9.0}, {42.1, 14.0, 10.8},
                               {49.2, 16.4, 12.6}, {56.2, 18.7, 14.4}, {63.2, 21.0, 16.2},
                               {70.3, 23.4, 18.0}};
  double worst = 0.0;
  for (int n = 1; n <= 10; ++n)
    for (int s = 1; s <= 3; ++s)
      worst = std::max(worst, std::abs(budget_ratio(RetinaConfig::with_scales(s), n, 128, 256) - table[n - 1][s - 1]));
  const int c1 = analytic_pixel_count(RetinaConfig::with_scales(1));
  const int c2 = analytic_pixel_count(RetinaConfig::with_scales(2));
  const int c3 = analytic_pixel_count(RetinaConfig::with_scales(3));
  const bool counts = c1 == 2304 && c2 == 768 && c3 == 590;
  return {worst <= 0.1 && counts,
          fmt("max cell deviation %.4f pp; counts %.0f/%.0f/%.0f", worst, c1, c2, c3)};
}

Outcome memory_replay() {
  const int bad = oracle::memory_replay_mismatches(10000, 2024);
  return {bad == 0, fmt("%.0f of 10000 sequences differ from the replay oracle", bad)};
}

Outcome loss_checks() {
  // Step loss against the loop oracle.
  std::mt19937_64 rng(303);
  double step_err = 0.0;
  for (int trial = 0; trial < 1000; ++trial) {
    const auto c = oracle::random_tensor<double>(rng, 1, 4, 4, -3, 3);
    ErrorMaps<double> e{oracle::random_tensor<double>(rng, 1, 4, 4, 0, 5),
                        oracle::random_tensor<double>(rng, 1, 4, 4, 0, 5),
                        oracle::random_tensor<double>(rng, 1, 4, 4, 0, 5)};
    const LossState prev{0.5, 1.5, -0.25, 1.75};
    const LossState next = step_loss(prev, e, c);
    step_err = std::max({step_err, std::abs(next.cum_local - 0.5 - oracle::weighted_mean(c, e.local)),
                         std::abs(next.cum_global - 1.5 - oracle::weighted_mean(c, e.global)),
                         std::abs(next.cum_final + 0.25 - oracle::weighted_mean(c, e.final))});
  }
  // Optimal certainty by golden-section search.
  double cstar_err = 0.0;
  for (double e : {0.001, 0.05, 0.3, 1.0, 4.0}) {
    auto f = [e](double c) { return c * e + std::exp(-c); };
    double lo = -20, hi = 20;
    const double phi = (std::sqrt(5.0) - 1) / 2;
    for (int i = 0; i < 300; ++i) {
      const double a = hi - phi * (hi - lo), b = lo + phi * (hi - lo);
      if (f(a) < f(b)) hi = b; else lo = a;
    }
    cstar_err = std::max(cstar_err, std::abs(0.5 * (lo + hi) + std::log(e)));
  }
  // Finite-difference gradient of the rollout total.
  ArchConfig a;
  a.image_height = 32;
  a.image_width = 64;
  a.glimpse_size = 12;
  a.num_classes = 3;
  Model<double> model(a, 77);
  // Zero biases over zero (unwritten) memory put every unobserved pre-activation exactly on
  // the ReLU kink, where central differences are meaningless; move them off it.
  {
    std::uniform_real_distribution<double> jitter(-0.1, 0.1);
    for (auto& p : model.parameters())
      if (p.name.ends_with(".bias"))
        for (auto& v : p.value.values()) v = jitter(rng);
  }
  SyntheticSceneConfig sc;
  sc.num_classes = 3;
  sc.height = 32;
  sc.width = 64;
  sc.seed = 5;
  const Sample sample = generate_scene(sc, 0);
  AgentConfig agent;
  agent.steps = 2;
  agent.retina = RetinaConfig::with_scales(3, 12);
  const std::vector<GlimpseSpec> forced{{4, 8, 12}, {16, 36, 12}};
  const RolloutOptions opts{true, &forced};
  // The previous segmentation enters each step as a constant, so the oracle replays the
  // rollout from model primitives with S_{t-1} pinned to its unperturbed value.
  const RolloutTrace<double> base = rollout(model, sample, agent, 0, opts);
  const std::vector<Tensor<double>> pinned{Tensor<double>(3, 32, 64), base.maps[0].final_seg};
  const Tensor<double> target = one_hot<double>(sample.label, 3);
  auto objective = [&] {
    Graph<double> g(false);
    MemoryVars<double> mem = model.bind_memory(g, MemoryState<double>(32, 64, a.level1_channels, a.level2_channels));
    double total = 0.0;
    for (std::size_t t = 0; t < forced.size(); ++t) {
      const GlimpseSpec& s = forced[t];
      const Tensor<double> px = extract_glimpse(sample.image.cast<double>(), s, agent.retina).pixels;
      FeatureVars<double> f = model.encode(g, g.constant(px));
      mem.level1 = paste(mem.level1, f.level1, s.top, s.left);
      mem.level2 = paste(mem.level2, f.level2, s.top / 2, s.left / 2);
      mem.bottleneck = paste(mem.bottleneck, f.bottleneck, s.top / 4, s.left / 4);
      Var<double> local = model.decode_local(g, mem);
      Var<double> global = model.decode_global(g, mem);
      FusedVars<double> fused = model.fuse(g, g.constant(pinned[t]), local, global);
      for (Var<double> seg : {local, global, fused.segmentation})
        total += certainty_weighted_mean(fused.certainty, bce_error_map(seg, target)).value().item();
    }
    return total;
  };
  const double replay_gap = std::abs(objective() - base.objective());
  auto& params = model.parameters();
  params.zero_grad();
  {
    Graph<double> g(true);
    auto r = run_rollout(model, sample, agent, 0, g, opts);
    g.backward(r.objective);
    g.accumulate_parameter_grads();
  }
  std::uniform_int_distribution<std::size_t> pick_param(0, params.size() - 1);
  double worst_rel = 0.0;
  int checked = 0;
  while (checked < 20) {
    auto& p = params[pick_param(rng)];
    std::uniform_int_distribution<std::size_t> pick(0, p.value.size() - 1);
    const std::size_t i = pick(rng);
    const double analytic = p.grad[i];
    const double saved = p.value[i];
    const double h = 1e-6;
    p.value[i] = saved + h;
    const double up = objective();
    p.value[i] = saved - h;
    const double down = objective();
    p.value[i] = saved;
    const double numeric = (up - down) / (2 * h);
    const double scale = std::max({std::abs(analytic), std::abs(numeric), 1e-6});
    worst_rel = std::max(worst_rel, std::abs(analytic - numeric) / scale);
    ++checked;
  }
  const bool ok = step_err <= 1e-9 && cstar_err <= 1e-6 && worst_rel <= 1e-3 && replay_gap <= 1e-12;
  return {ok, fmt("step loss err %.2e; C* err %.2e; gradient max rel err %.2e over 20 parameters "
                  "(oracle replay gap %.1e)",
                  step_err, cstar_err, worst_rel, replay_gap)};
}

Outcome policy_checks() {
  const auto r = oracle::policy_brute_force(1000, 404);
  int cells = 0;
  const double chi = oracle::random_policy_chi_square(100000, 405, 128, 256, 48, &cells);
  const double crit = oracle::chi_square_critical(cells - 1);
  const bool ok = r.mismatches == 0 && r.shift_mismatches == 0 && chi < crit;
  return {ok, fmt("brute-force mismatches %.0f; shifted-map mismatches %.0f; chi2 %.1f vs critical %.1f",
                  r.mismatches, r.shift_mismatches, chi, crit)};
}

Outcome locality_globality() {
  ArchConfig a;
  a.image_height = 32;
  a.image_width = 64;
  a.glimpse_size = 12;
  a.num_classes = 3;
  Model<double> m(a, 505);
  std::mt19937_64 rng(506);
  const auto mem = oracle::random_memory<double>(rng, a);
  long outside = 0;
  int silent = 0;
  for (int cy = 0; cy < a.image_height / 4; ++cy)
    for (int cx = 0; cx < a.image_width / 4; ++cx) {
      const auto r = oracle::local_perturbation(m, mem, cy, cx);
      outside += r.changed_outside;
      silent += r.changed_inside == 0;
    }
  int zero_units = 0;
  for (auto [cy, cx] : {std::pair{0, 0}, std::pair{3, 9}, std::pair{7, 15}, std::pair{5, 1}})
    zero_units += oracle::global_zero_gradient_units(m, mem, cy, cx);
  return {outside == 0 && silent == 0 && zero_units == 0,
          fmt("local outputs changed outside reach %.0f; cells with no local effect %.0f; "
              "coarse units with zero gradient %.0f",
              outside, silent, zero_units)};
}

// Trains epoch by epoch until `epochs` or the wall-clock budget runs out.
Trainer train_until(const RunConfig& cfg, double budget_s) {
  auto [tr, va] = load_run_data(cfg);
  Trainer trainer(cfg, std::move(tr), std::move(va));
  const auto start = Clock::now();
  for (int e = 0; e < cfg.epochs; ++e) {
    const EpochRecord r = trainer.run_epoch();
    std::printf("  %s epoch %2d  train_objective %.4f  val_acc %.4f\n", cfg.agent.c_str(), r.epoch,
                r.train_objective, r.val_accuracy);
    std::fflush(stdout);
    if (std::chrono::duration<double>(Clock::now() - start).count() > budget_s) break;
  }
  return trainer;
}

double mean_final_accuracy(TrainModel& model, const Dataset& val, AgentConfig agent, int steps,
                           PolicyKind policy, std::uint64_t base) {
  agent.steps = steps;
  agent.policy.kind = policy;
  double acc = 0.0;
  for (std::uint64_t s = 1; s <= 3; ++s) acc += evaluate(model, val, agent, mix_seed(base, s)).final_accuracy;
  return acc / 3.0;
}

Outcome learning_signal() {
  RunConfig cfg;
  cfg.num_samples = 128;
  cfg.num_classes = 5;
  cfg.image_height = 64;
  cfg.image_width = 128;
  cfg.glimpse_size = 24;
  cfg.num_glimpses = 5;
  cfg.overview_size = 32;
  cfg.lr = 2e-3;
  cfg.batch_size = 8;
  cfg.epochs = 30;
  cfg.seed = 1;
  // Two runs share the 30 minute training allowance.
  Trainer go = train_until(cfg, 14 * 60);
  RunConfig hcfg = cfg;
  hcfg.agent = "hybrid";
  Trainer hy = train_until(hcfg, 14 * 60);

  const Dataset& val = go.validation();
  const AgentConfig agent = go.agent();
  const std::uint64_t base = eval_seed(cfg.seed);
  const double unc5 = mean_final_accuracy(go.best_model(), val, agent, 5, PolicyKind::uncertainty, base);
  const double rnd5 = mean_final_accuracy(go.best_model(), val, agent, 5, PolicyKind::random, base);
  const double unc1 = mean_final_accuracy(go.best_model(), val, agent, 1, PolicyKind::uncertainty, base);
  const double go2 = mean_final_accuracy(go.best_model(), val, agent, 2, PolicyKind::uncertainty, base);
  const double hy2 = mean_final_accuracy(hy.best_model(), val, hy.agent(), 2, PolicyKind::uncertainty, base);
  const bool a = unc5 - rnd5 >= 0.01;
  const bool b = hy2 >= go2;
  const bool c = unc5 > unc1;
  std::string d = fmt("(a) uncertainty %.4f vs random %.4f at T=5; ", unc5, rnd5);
  d += fmt("(b) hybrid %.4f vs glimpse-only %.4f at T=2; ", hy2, go2);
  d += fmt("(c) T=5 %.4f vs T=1 %.4f", unc5, unc1);
  return {a && b && c, d};
}

Outcome determinism() {
  RunConfig c1 = tiny_run("accept_det_a");
  RunConfig c2 = tiny_run("accept_det_b");
  c1.epochs = c2.epochs = 2;
  train(c1);
  train(c2);
  const RunArtifacts f1 = run_artifacts(c1.out_dir), f2 = run_artifacts(c2.out_dir);
  const bool history_same = slurp(f1.history.string()) == slurp(f2.history.string());

  TrainModel m1 = load_checkpoint<float>(f1.last_checkpoint.string());
  TrainModel m2 = load_checkpoint<float>(f2.last_checkpoint.string());
  const Sample sample = load_run_data(c1).second.front();
  std::ostringstream t1, t2;
  write_trace(t1, rollout(m1, sample, c1.agent_config(), rollout_seed(c1.seed, 0)).steps);
  write_trace(t2, rollout(m2, sample, c2.agent_config(), rollout_seed(c2.seed, 0)).steps);
  const bool trace_same = t1.str() == t2.str();

  std::stringstream blob;
  save_checkpoint(m1, blob);
  TrainModel reloaded = load_checkpoint<float>(blob);
  const Dataset val = load_run_data(c1).second;
  const BatchMetrics before = evaluate(m1, val, c1.agent_config(), eval_seed(c1.seed));
  const BatchMetrics after = evaluate(reloaded, val, c1.agent_config(), eval_seed(c1.seed));
  const bool eval_same = before.accuracy_curve == after.accuracy_curve &&
                         before.mean_objective == after.mean_objective &&
                         before.mean_iou == after.mean_iou && before.locations == after.locations;
  std::filesystem::remove_all(c1.out_dir);
  std::filesystem::remove_all(c2.out_dir);
  return {history_same && trace_same && eval_same,
          std::string("history ") + (history_same ? "identical" : "differs") + "; trace " +
              (trace_same ? "identical" : "differs") + "; reloaded evaluation " +
              (eval_same ? "bit-equal" : "differs")};
}

Outcome metric_oracles() {
  std::mt19937_64 rng(808);
  int bad = 0;
  for (int i = 0; i < 1000; ++i) {
    const int k = 2 + i % 6;
    const auto p = oracle::random_tensor<double>(rng, k, 8, 8, 0, 1);
    const auto l = oracle::random_labels(rng, 8, 8, k);
    std::vector<double> per;
    const double want = oracle::mean_iou(p, l, k, &per);
    const IouReport got = mean_iou(p, l, k);
    bool ok = pixel_accuracy(p, l) == oracle::pixel_accuracy(p, l) && got.mean == want;
    for (int c = 0; c < k; ++c)
      ok = ok && (per[c] < 0 ? !got.per_class[c].has_value() : got.per_class[c] && *got.per_class[c] == per[c]);
    bad += !ok;
  }
  return {bad == 0, fmt("%.0f of 1000 instances differ from the oracles", bad)};
}

}  // namespace

// Optional arguments pick criteria by number, e.g. `acceptance 1 2 8`.
int main(int argc, char** argv) {
  for (int i = 1; i < argc; ++i) selected.push_back(std::atoi(argv[i]));
  criterion(1, "budget table and pixel counts", 1, budget_table);
  criterion(2, "memory overwrite replay", 30, memory_replay);
  criterion(3, "loss oracle, optimal certainty and gradient check", 120, loss_checks);
  criterion(4, "uncertainty policy and random policy", 60, policy_checks);
  criterion(5, "local reach and global coverage", 60, locality_globality);
  criterion(7, "determinism and checkpoint round trip", 300, determinism);
  criterion(8, "metric oracles", 10, metric_oracles);
  criterion(6, "learning signal", 40 * 60, learning_signal);
  std::printf("%d criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
