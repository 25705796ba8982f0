// Acceptance gate: one test case per criterion, each printing a single
// [PASS]/[FAIL] line. Criteria 7 and 8 carry soft expectations reported as
// [SOFT-PASS]/[SOFT-FAIL]; a soft failure warns instead of failing the gate
// and requires a written analysis alongside the run artifacts.
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <functional>
#include <fstream>
#include <sstream>

#include "fd_oracle.hpp"
#include "tsac/harness.hpp"

using namespace tsac;
using tsac_test::fd_gradient;
using tsac_test::rel_error;

namespace {

void report(int n, const char* name, bool ok) {
  std::printf("[%s] criterion %d: %s\n", ok ? "PASS" : "FAIL", n, name);
  std::fflush(stdout);
}

void report_soft(int n, const char* name, bool ok) {
  std::printf("[%s] criterion %d: %s\n", ok ? "SOFT-PASS" : "SOFT-FAIL", n, name);
  if (!ok) {
    std::printf("  soft criterion not met: see the analysis accompanying this run\n");
  }
  std::fflush(stdout);
}

std::vector<double> flatten_params(MlpParams& p) {
  std::vector<double> out;
  p.for_each_param([&](Tensor& t, Tensor&) {
    out.insert(out.end(), t.data().begin(), t.data().end());
  });
  return out;
}

std::vector<double> flatten_grads(MlpParams& p) {
  std::vector<double> out;
  p.for_each_param([&](Tensor&, Tensor& g) {
    out.insert(out.end(), g.data().begin(), g.data().end());
  });
  return out;
}

double fd_check(MlpParams& net, const std::vector<double>& analytic,
                const std::function<double()>& loss) {
  std::vector<double> fd;
  net.for_each_param([&](Tensor& p, Tensor&) {
    Tensor g = fd_gradient(p, loss);
    fd.insert(fd.end(), g.data().begin(), g.data().end());
  });
  return rel_error(analytic, fd);
}

TrainerConfig tiny_trainer() {
  TrainerConfig c;
  c.hidden = {6};
  c.batch_size = 8;
  c.rollout_steps = 4;
  c.updates_per_iteration = 2;
  c.warmup_env_steps = 0;
  return c;
}

/// The configuration used for the end-to-end criteria (6-8).
TrainerConfig learn_trainer() {
  TrainerConfig c;
  c.hidden = {32, 32};
  c.batch_size = 64;
  c.rollout_steps = 25;
  c.updates_per_iteration = 50;
  c.warmup_env_steps = 1000;
  c.lr = 1e-3;
  c.lr_lambda = 0.01;
  return c;
}

constexpr std::uint64_t kEvalMix = 0x9e3779b97f4a7c15ULL;

/// Trains until `threshold` mean success or the iteration cap; returns the
/// best success seen and the env-step count where the threshold was reached.
struct LearnResult {
  double best = 0.0;
  std::size_t steps_at_threshold = 0;
  bool reached = false;
};

LearnResult train_until(const std::string& suite, AlgoMode algo, std::uint64_t seed,
                        double threshold, std::size_t max_iterations, std::size_t eval_interval) {
  TrainerConfig tc = learn_trainer();
  tc.mode = algo;
  Trainer trainer(CmdpSuite::builtin(suite), tc, seed);
  LearnResult res;
  for (std::size_t it = 1; it <= max_iterations; ++it) {
    trainer.train_iteration();
    if (it % eval_interval != 0 && it != max_iterations) continue;
    const EvalResult ev = trainer.evaluate(10, seed * kEvalMix + it);
    res.best = std::max(res.best, ev.mean_success);
    if (!res.reached && ev.mean_success >= threshold) {
      res.reached = true;
      res.steps_at_threshold = trainer.env_steps();
      break;
    }
  }
  return res;
}

struct TempDir {
  std::filesystem::path path;
  explicit TempDir(const std::string& name)
      : path(std::filesystem::temp_directory_path() / name) {
    std::filesystem::remove_all(path);
    std::filesystem::create_directories(path);
  }
  ~TempDir() { std::filesystem::remove_all(path); }
  std::string sub(const std::string& s) const { return (path / s).string(); }
};

}  // namespace

TEST_CASE("criterion 1: gradient fidelity") {
  int instances = 0, failures = 0;
  for (std::uint64_t trial = 0; trial < 5; ++trial) {
    TrainerConfig cfg = tiny_trainer();
    cfg.correction = trial % 2 == 0 ? CorrectionFnKind::SpDominated : CorrectionFnKind::Softclip;
    cfg.init_lambda = 0.1 * static_cast<double>(trial);
    Trainer t(CmdpSuite::builtin("mtpoint4"), cfg, 100 + trial);
    t.collect_rollout();
    const Batch batch = t.sample_batch();
    const Tensor nsp = sample_standard_normal(t.rng(), batch.size(), 2);
    const Tensor nacp = sample_standard_normal(t.rng(), batch.size(), 2);

    // Critic MSE: four networks, each an instance.
    t.critics().zero_grads(CriticHead::Dense);
    t.critics().zero_grads(CriticHead::Sparse);
    t.critic_loss_value(batch, nsp, nacp, true);
    auto critic_closure = [&]() { return t.critic_loss_value(batch, nsp, nacp, false); };
    for (MlpParams* net :
         {&t.critics().dense1, &t.critics().dense2, &t.critics().sparse1, &t.critics().sparse2}) {
      instances++;
      if (fd_check(*net, flatten_grads(*net), critic_closure) >= 1e-4) failures++;
    }

    // SP loss: the correction path is gradient-stopped by design, so the
    // oracle zeroes the ACP to make the finite-difference total derivative
    // coincide with the implemented partial derivative.
    for (auto& l : t.acp().net.layers) {
      l.w.fill(0.0);
      l.b.fill(0.0);
    }
    t.sp().net.zero_grads();
    t.sp_loss_value(batch, nsp, nacp, true);
    instances++;
    if (fd_check(t.sp().net, flatten_grads(t.sp().net),
                 [&]() { return t.sp_loss_value(batch, nsp, nacp, false); }) >= 1e-4) {
      failures++;
    }

    // ACP loss.
    t.acp().net.zero_grads();
    t.acp_loss_value(batch, nsp, nacp, true);
    instances++;
    if (fd_check(t.acp().net, flatten_grads(t.acp().net),
                 [&]() { return t.acp_loss_value(batch, nsp, nacp, false); }) >= 1e-4) {
      failures++;
    }

    // Alpha losses for both policies.
    for (bool acp : {false, true}) {
      instances++;
      double grad = 0.0;
      t.alpha_loss_value(acp, batch, nsp, &grad);
      double& la = acp ? t.entropy().log_alpha_acp : t.entropy().log_alpha_sp;
      const double h = 1e-5, orig = la;
      la = orig + h;
      const double up = t.alpha_loss_value(acp, batch, nsp, nullptr);
      la = orig - h;
      const double down = t.alpha_loss_value(acp, batch, nsp, nullptr);
      la = orig;
      const double fd = (up - down) / (2.0 * h);
      if (rel_error({grad}, {fd}) >= 1e-4) failures++;
    }
  }
  const bool ok = failures == 0 && instances >= 20;
  report(1, "gradient fidelity (analytic vs central finite differences)", ok);
  std::printf("  %d/%d randomized loss instances matched within 1e-4\n", instances - failures,
              instances);
  CHECK(ok);
}

TEST_CASE("criterion 2: correction-function algebra") {
  Rng rng(2024);
  std::uniform_real_distribution<double> dist(-1.0, 1.0);
  const double A = 1.0;
  bool ok = true;
  for (int i = 0; i < 10000 && ok; ++i) {
    const double a_hat = dist(rng), da = dist(rng);
    for (CorrectionFnKind k : {CorrectionFnKind::SpDominated, CorrectionFnKind::AcpDominated,
                               CorrectionFnKind::Equal, CorrectionFnKind::Softclip}) {
      const double a = correct1(k, a_hat, da, A);
      ok = ok && a >= -A && a <= A;                                   // range containment
      ok = ok && correct1(k, a_hat, da + 1e-3, A) >= a;               // monotone in delta_a
      ok = ok && correct1(k, a_hat + 1e-3, da, A) >= a;               // monotone in a_hat
    }
    // SP overwrite: a saturated proposal cannot be overturned.
    ok = ok && correct1(CorrectionFnKind::SpDominated, 1.0, da, A) == 1.0;
    ok = ok && correct1(CorrectionFnKind::SpDominated, -1.0, da, A) == -1.0;
    // ACP overwrite symmetry: a saturated correction always wins.
    ok = ok && correct1(CorrectionFnKind::AcpDominated, a_hat, 1.0, A) == 1.0;
    ok = ok && correct1(CorrectionFnKind::AcpDominated, a_hat, -1.0, A) == -1.0;
    // Equal contribution: antisymmetric pair cancels exactly.
    ok = ok && correct1(CorrectionFnKind::Equal, a_hat, -a_hat, A) == 0.0;
  }
  report(2, "correction-function algebra over 10^4 random triples", ok);
  CHECK(ok);
}

TEST_CASE("criterion 3: lagrangian dynamics") {
  Rng rng(31337);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  bool ok = true;

  // Sign-correct movement on 100 randomized batches.
  for (int i = 0; i < 100; ++i) {
    LagrangeState ls;
    ls.c = -0.5 * unit(rng) - 0.01;
    ls.lr = 0.05 * unit(rng) + 1e-3;
    ls.lambda = unit(rng);
    std::vector<double> rewards(32);
    const double p = unit(rng);
    for (double& r : rewards) r = unit(rng) < p ? 1.0 : 0.0;
    double mean = 0.0;
    for (double r : rewards) mean += r;
    mean /= static_cast<double>(rewards.size());
    const double before = ls.lambda;
    const double slack = ls.update(rewards);
    ok = ok && std::abs(slack - (mean + ls.c)) < 1e-12;
    ok = ok && ls.lambda >= 0.0;
    if (slack < 0.0) ok = ok && ls.lambda > before - 1e-15;       // shortfall: lambda rises
    if (slack > 0.0) ok = ok && ls.lambda <= before;              // surplus: lambda falls
  }

  // Convergence to zero when the sparse-reward rate exceeds -c.
  LagrangeState ls;
  ls.c = -0.05;
  ls.lr = 0.01;
  ls.lambda = 0.5;
  for (int i = 0; i < 1000; ++i) {
    std::vector<double> rewards(64);
    for (double& r : rewards) r = unit(rng) < 0.2 ? 1.0 : 0.0;  // rate 0.2 > 0.05
    ls.update(rewards);
    ok = ok && ls.lambda >= 0.0;
  }
  ok = ok && ls.lambda == 0.0;
  report(3, "lagrangian dynamics (sign-correct, non-negative, convergent)", ok);
  CHECK(ok);
}

TEST_CASE("criterion 4: critic correctness against dynamic programming") {
  // Fixed 5-state chain, actions {-1, +1}: +1 moves right (capped at 4),
  // -1 moves left (capped at 0). Dense reward is the next state's position
  // scaled to [0, 1]; sparse reward is the indicator of reaching state 4.
  // The frozen policy moves right with a fixed per-state probability.
  const int S = 5;
  const double gamma = 0.9;
  const double p_right[S] = {0.9, 0.7, 0.5, 0.3, 0.8};
  auto next_state = [](int s, int a) { return a > 0 ? std::min(s + 1, 4) : std::max(s - 1, 0); };
  auto r_dense = [&](int s, int a) { return static_cast<double>(next_state(s, a)) / 4.0; };
  auto r_sparse = [&](int s, int a) { return next_state(s, a) == 4 ? 1.0 : 0.0; };

  // Exact policy evaluation by value iteration on the 10 Q-entries.
  double qd[S][2] = {}, qs[S][2] = {};
  for (int sweep = 0; sweep < 2000; ++sweep) {
    double nd[S][2], ns[S][2];
    for (int s = 0; s < S; ++s) {
      for (int ai = 0; ai < 2; ++ai) {
        const int a = ai == 0 ? -1 : 1;
        const int sn = next_state(s, a);
        const double vd = p_right[sn] * qd[sn][1] + (1.0 - p_right[sn]) * qd[sn][0];
        const double vs = p_right[sn] * qs[sn][1] + (1.0 - p_right[sn]) * qs[sn][0];
        nd[s][ai] = r_dense(s, a) + gamma * vd;
        ns[s][ai] = r_sparse(s, a) + gamma * vs;
      }
    }
    std::memcpy(qd, nd, sizeof qd);
    std::memcpy(qs, ns, sizeof qs);
  }

  // TD training of the critic module on the same MDP, single-critic mode,
  // with exact expectations over the frozen policy in the bootstrap.
  Rng rng(4242);
  CriticParams critic = CriticParams::make(S, 1, {32, 32}, rng, 0.05, false);
  AdamState opt_d = AdamState::init(critic.dense1, 3e-3);
  AdamState opt_s = AdamState::init(critic.sparse1, 3e-3);

  Tensor obs(2 * S, S), act(2 * S, 1), obs_next(2 * S, S);
  Tensor rd(2 * S, 1), rs(2 * S, 1), pn(2 * S, 1);
  for (int s = 0; s < S; ++s) {
    for (int ai = 0; ai < 2; ++ai) {
      const std::size_t row = static_cast<std::size_t>(2 * s + ai);
      const int a = ai == 0 ? -1 : 1;
      obs(row, static_cast<std::size_t>(s)) = 1.0;
      act(row, 0) = a;
      const int sn = next_state(s, a);
      obs_next(row, static_cast<std::size_t>(sn)) = 1.0;
      rd[row] = r_dense(s, a);
      rs[row] = r_sparse(s, a);
      pn[row] = p_right[sn];
    }
  }
  const Tensor plus(2 * S, 1, 1.0), minus(2 * S, 1, -1.0);

  std::size_t steps = 0;
  double max_err = 1e9;
  auto measure = [&]() {
    double err = 0.0;
    const Tensor qdn = q_eval(critic, obs, act, CriticHead::Dense, false, Reduce::First);
    const Tensor qsn = q_eval(critic, obs, act, CriticHead::Sparse, false, Reduce::First);
    for (int s = 0; s < S; ++s) {
      for (int ai = 0; ai < 2; ++ai) {
        const std::size_t row = static_cast<std::size_t>(2 * s + ai);
        err = std::max(err, std::abs(qdn[row] - qd[s][ai]));
        err = std::max(err, std::abs(qsn[row] - qs[s][ai]));
      }
    }
    return err;
  };

  for (; steps < 20000; ++steps) {
    const Tensor qp_d = q_eval(critic, obs_next, plus, CriticHead::Dense, true, Reduce::First);
    const Tensor qm_d = q_eval(critic, obs_next, minus, CriticHead::Dense, true, Reduce::First);
    const Tensor qp_s = q_eval(critic, obs_next, plus, CriticHead::Sparse, true, Reduce::First);
    const Tensor qm_s = q_eval(critic, obs_next, minus, CriticHead::Sparse, true, Reduce::First);
    Tensor yd(2 * S, 1), ys(2 * S, 1);
    for (std::size_t i = 0; i < yd.size(); ++i) {
      yd[i] = rd[i] + gamma * (pn[i] * qp_d[i] + (1.0 - pn[i]) * qm_d[i]);
      ys[i] = rs[i] + gamma * (pn[i] * qp_s[i] + (1.0 - pn[i]) * qm_s[i]);
    }
    critic.zero_grads(CriticHead::Dense);
    critic.zero_grads(CriticHead::Sparse);
    critic_loss(critic, obs, act, yd, ys, true, true);
    adam_step(critic.dense1, opt_d);
    adam_step(critic.sparse1, opt_s);
    critic.polyak_update();
    if (steps % 500 == 499) {
      max_err = measure();
      if (max_err < 5e-3) break;
    }
  }
  max_err = measure();
  const bool ok = max_err < 1e-2;
  report(4, "critic TD learning matches dynamic-programming values", ok);
  std::printf("  max |Q - Q_dp| = %.2e over both heads after %zu gradient steps\n", max_err,
              steps + 1);
  CHECK(ok);
}

TEST_CASE("criterion 5: gradient separation between the two policies") {
  TrainerConfig cfg = tiny_trainer();
  Trainer t(CmdpSuite::builtin("mtpoint4"), cfg, 5);
  t.collect_rollout();
  const Batch batch = t.sample_batch();

  std::vector<double> psi_before = flatten_params(t.acp().net);
  t.update_sp(batch);
  const bool sp_ok = flatten_params(t.acp().net) == psi_before;

  std::vector<double> phi_before = flatten_params(t.sp().net);
  t.update_acp(batch);
  const bool acp_ok = flatten_params(t.sp().net) == phi_before;

  const bool ok = sp_ok && acp_ok;
  report(5, "update_sp leaves psi bit-unchanged; update_acp leaves phi bit-unchanged", ok);
  CHECK(ok);
}

TEST_CASE("criterion 6: end-to-end learning on MTPoint-4") {
  bool ok = true;
  for (std::uint64_t seed = 0; seed < 4; ++seed) {
    LearnResult r = train_until("mtpoint4", AlgoMode::Tsac, seed, 0.8, 300, 20);
    std::printf("  tsac seed %llu: best success %.2f%s\n",
                static_cast<unsigned long long>(seed), r.best,
                r.reached ? (" (reached at " + std::to_string(r.steps_at_threshold) + " env steps)").c_str()
                          : " (threshold not reached)");
    ok = ok && r.reached && r.steps_at_threshold <= 200000;
  }
  for (std::uint64_t seed = 0; seed < 4; ++seed) {
    LearnResult r = train_until("mtpoint4", AlgoMode::Mtsac, seed, 0.6, 300, 20);
    std::printf("  mtsac seed %llu: best success %.2f%s\n",
                static_cast<unsigned long long>(seed), r.best,
                r.reached ? (" (reached at " + std::to_string(r.steps_at_threshold) + " env steps)").c_str()
                          : " (threshold not reached)");
    ok = ok && r.reached && r.steps_at_threshold <= 200000;
  }
  report(6, "TSAC >= 0.8 and MT-SAC >= 0.6 mean success on MTPoint-4, 4 seeds", ok);
  CHECK(ok);
}

TEST_CASE("criterion 7: sample-efficiency direction on MTPoint-10 (soft)") {
  // Matched early checkpoint: 25% of the criterion-6 budget of 2*10^5 env
  // steps, i.e. 5*10^4 steps. Per-seed success at the checkpoint is the
  // trailing-smoothed (window 3) evaluation curve's final value.
  const std::size_t iterations = 200;  // 200 * 250 = 5*10^4 env steps
  const std::size_t eval_every = 25;
  auto run = [&](AlgoMode algo, std::uint64_t seed) {
    TrainerConfig tc = learn_trainer();
    tc.mode = algo;
    Trainer trainer(CmdpSuite::builtin("mtpoint10"), tc, seed);
    std::vector<double> curve;
    for (std::size_t it = 1; it <= iterations; ++it) {
      trainer.train_iteration();
      if (it % eval_every == 0) {
        curve.push_back(trainer.evaluate(10, seed * kEvalMix + it).mean_success);
      }
    }
    return smooth(curve, 3).back();
  };
  double tsac_mean = 0.0, mtsac_mean = 0.0;
  for (std::uint64_t seed = 0; seed < 4; ++seed) {
    const double ts = run(AlgoMode::Tsac, seed);
    const double ms = run(AlgoMode::Mtsac, seed);
    std::printf("  seed %llu @ 50k steps: tsac %.2f, mtsac %.2f\n",
                static_cast<unsigned long long>(seed), ts, ms);
    tsac_mean += ts / 4.0;
    mtsac_mean += ms / 4.0;
  }
  const bool ok = tsac_mean >= mtsac_mean;
  report_soft(7, "TSAC mean success >= MT-SAC at the matched early checkpoint", ok);
  std::printf("  means over 4 seeds: tsac %.3f vs mtsac %.3f\n", tsac_mean, mtsac_mean);
  WARN_MESSAGE(ok, "soft criterion 7 not met; written analysis required");
}

TEST_CASE("criterion 8: ablation harness over the four correction variants") {
  TempDir dir("tsac_acceptance_ablation");
  ExperimentConfig base;
  base.suite = "mtpoint4";
  base.seed = 0;
  base.total_iterations = 160;
  base.eval_interval = 20;
  base.eval_episodes_per_task = 10;
  base.out_dir = dir.sub("ablation");
  base.trainer = learn_trainer();
  const std::vector<AblationRow> rows = ablation_sweep(base, 5);

  bool completed = rows.size() == 4;
  double sp_final = 0.0, equal_final = 0.0;
  for (const AblationRow& r : rows) {
    completed = completed && !r.failed;
    std::printf("  %s: final %.2f, best smoothed %.2f%s\n", to_string(r.variant).c_str(),
                r.final_success, r.best_smoothed_success, r.failed ? " [failed]" : "");
    if (r.variant == CorrectionFnKind::SpDominated) sp_final = r.final_success;
    if (r.variant == CorrectionFnKind::Equal) equal_final = r.final_success;
  }
  completed = completed &&
              std::filesystem::exists(std::filesystem::path(base.out_dir) / "ablation_summary.jsonl");
  report(8, "ablation sweep completes all four variants with a summary", completed);
  CHECK(completed);

  const bool ordering = sp_final >= equal_final;
  report_soft(8, "SpDominated >= Equal in final success", ordering);
  WARN_MESSAGE(ordering, "soft criterion 8 ordering not met; written analysis required");
}

TEST_CASE("criterion 9: determinism and checkpoint persistence") {
  TempDir dir("tsac_acceptance_det");

  // Byte-identical metrics for seed-identical deterministic runs.
  ExperimentConfig c1, c2;
  for (ExperimentConfig* c : {&c1, &c2}) {
    c->total_iterations = 6;
    c->eval_interval = 2;
    c->eval_episodes_per_task = 2;
    c->trainer = tiny_trainer();
  }
  c1.out_dir = dir.sub("a");
  c2.out_dir = dir.sub("b");
  run_experiment(c1);
  run_experiment(c2);
  auto metric_lines = [](const std::string& path) {
    std::ifstream in(path);
    std::string line, out;
    while (std::getline(in, line)) {
      if (line.find("\"type\":\"metric\"") != std::string::npos) out += line + "\n";
    }
    return out;
  };
  const bool identical = metric_lines(dir.sub("a") + "/metrics.jsonl") ==
                             metric_lines(dir.sub("b") + "/metrics.jsonl") &&
                         !metric_lines(dir.sub("a") + "/metrics.jsonl").empty();

  // Save -> load -> resume reproduces the uninterrupted run for >= 10
  // further iterations.
  TrainerConfig tc = tiny_trainer();
  Trainer uninterrupted(CmdpSuite::builtin("mtpoint4"), tc, 12);
  for (int i = 0; i < 5; ++i) uninterrupted.train_iteration();
  std::stringstream ckpt;
  uninterrupted.save(ckpt);
  Trainer resumed(CmdpSuite::builtin("mtpoint4"), tc, 999);
  resumed.load(ckpt);

  bool resume_ok = true;
  for (int i = 0; i < 10; ++i) {
    uninterrupted.train_iteration();
    resumed.train_iteration();
    const EvalResult ea = uninterrupted.evaluate(2, 1000 + static_cast<std::uint64_t>(i));
    const EvalResult eb = resumed.evaluate(2, 1000 + static_cast<std::uint64_t>(i));
    resume_ok = resume_ok && ea.mean_success == eb.mean_success &&
                ea.mean_dense_return == eb.mean_dense_return &&
                ea.mean_sparse_return == eb.mean_sparse_return;
  }
  resume_ok = resume_ok && uninterrupted.lagrange().lambda == resumed.lagrange().lambda &&
              uninterrupted.entropy().log_alpha_sp == resumed.entropy().log_alpha_sp;

  const bool ok = identical && resume_ok;
  report(9, "byte-identical metrics and exact checkpoint resume", ok);
  CHECK(identical);
  CHECK(resume_ok);
}
