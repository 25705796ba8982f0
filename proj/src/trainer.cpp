#include "tsac/trainer.hpp"

#include <cmath>
#include <fstream>

#include "tsac/serialize.hpp"

namespace tsac {

void ReplayBuffer::push(const Transition& t) {
  if (data_.size() < capacity_) {
    data_.push_back(t);
  } else {
    data_[cursor_] = t;
  }
  cursor_ = (cursor_ + 1) % capacity_;
}

std::vector<std::size_t> ReplayBuffer::sample_indices(std::size_t n, Rng& rng) const {
  if (data_.empty()) throw Error("ReplayBuffer: sampling from an empty buffer");
  std::uniform_int_distribution<std::size_t> dist(0, data_.size() - 1);
  std::vector<std::size_t> out(n);
  for (std::size_t& i : out) i = dist(rng);
  return out;
}

double LagrangeState::update(const std::vector<double>& sparse_rewards) {
  if (sparse_rewards.empty()) throw Error("LagrangeState::update: empty batch");
  double mean = 0.0;
  for (double r : sparse_rewards) mean += r;
  mean /= static_cast<double>(sparse_rewards.size());
  const double slack = mean + c;
  lambda = std::max(0.0, lambda - lr * slack);
  return slack;
}

double EntropyState::alpha_sp() const { return std::exp(log_alpha_sp); }
double EntropyState::alpha_acp() const { return std::exp(log_alpha_acp); }

Trainer::Trainer(CmdpSuite suite, TrainerConfig config, std::uint64_t seed)
    : suite_(std::move(suite)),
      config_(config),
      replay_(config.replay_capacity),
      env_(suite_, seed, config.terminate_on_success),
      rng_(seed) {
  suite_.validate();
  const std::size_t od = suite_.obs_dim();
  const std::size_t ad = suite_.action_dim;
  sp_ = GaussianPolicy::make(od, ad, config_.hidden, rng_);
  acp_ = GaussianPolicy::make(od + ad, ad, config_.hidden, rng_);
  critics_ = CriticParams::make(od, ad, config_.hidden, rng_, config_.tau, config_.twin_critics);
  opt_sp_ = AdamState::init(sp_.net, config_.lr);
  opt_acp_ = AdamState::init(acp_.net, config_.lr);
  opt_dense_ = AdamState::init(critics_.dense1, config_.lr);
  {
    AdamState second = AdamState::init(critics_.dense2, config_.lr);
    opt_dense_.m.insert(opt_dense_.m.end(), second.m.begin(), second.m.end());
    opt_dense_.v.insert(opt_dense_.v.end(), second.v.begin(), second.v.end());
  }
  opt_sparse_ = AdamState::init(critics_.sparse1, config_.lr);
  {
    AdamState second = AdamState::init(critics_.sparse2, config_.lr);
    opt_sparse_.m.insert(opt_sparse_.m.end(), second.m.begin(), second.m.end());
    opt_sparse_.v.insert(opt_sparse_.v.end(), second.v.begin(), second.v.end());
  }
  for (AdamState* o : {&opt_sp_, &opt_acp_, &opt_dense_, &opt_sparse_}) {
    o->plain_sgd = config_.plain_sgd;
  }
  lagrange_.lambda = config_.init_lambda;
  lagrange_.c = config_.budget_c;
  lagrange_.lr = config_.lr_lambda;
  entropy_.log_alpha_sp = std::log(config_.init_alpha);
  entropy_.log_alpha_acp = std::log(config_.init_alpha);
  const double default_target = -static_cast<double>(ad);
  entropy_.target_entropy_sp =
      config_.target_entropy_sp != 0.0 ? config_.target_entropy_sp : default_target;
  entropy_.target_entropy_acp =
      config_.target_entropy_acp != 0.0 ? config_.target_entropy_acp : default_target;
  entropy_.opt_sp = AdamState::init_scalar(config_.lr_alpha);
  entropy_.opt_acp = AdamState::init_scalar(config_.lr_alpha);
  entropy_.opt_sp.plain_sgd = config_.plain_sgd;
  entropy_.opt_acp.plain_sgd = config_.plain_sgd;
}

Tensor Trainer::act_batch(const Tensor& obs, Rng& rng, bool deterministic) {
  ActResult r = compose_act(sp_, acp_, config_.correction, obs, rng, deterministic,
                            suite_.action_bound, config_.mode == AlgoMode::Mtsac);
  return r.a;
}

std::vector<Transition> Trainer::collect_rollout() {
  std::vector<Transition> batch;
  batch.reserve(config_.rollout_steps * suite_.num_tasks());
  const bool warmup = env_steps_ < config_.warmup_env_steps;
  PolicyFn policy = [this, warmup](const Tensor& obs) -> Tensor {
    if (warmup) {
      Tensor a(obs.rows(), suite_.action_dim);
      std::uniform_real_distribution<double> dist(-suite_.action_bound, suite_.action_bound);
      for (double& v : a.data()) v = dist(rng_);
      return a;
    }
    return act_batch(obs, rng_, false);
  };
  env_.rollout(policy, config_.rollout_steps, batch);
  for (const Transition& t : batch) replay_.push(t);
  env_steps_ += batch.size();
  return batch;
}

Batch Trainer::sample_batch() {
  const std::size_t b = config_.batch_size;
  const std::vector<std::size_t> idx = replay_.sample_indices(b, rng_);
  const std::size_t od = suite_.obs_dim(), ad = suite_.action_dim;
  Batch out{Tensor(b, od), Tensor(b, ad), Tensor(b, od),
            Tensor(b, 1),  Tensor(b, 1),  Tensor(b, 1)};
  for (std::size_t i = 0; i < b; ++i) {
    const Transition& t = replay_.at(idx[i]);
    for (std::size_t j = 0; j < od; ++j) {
      out.obs(i, j) = t.s[j];
      out.obs_next(i, j) = t.s_next[j];
    }
    for (std::size_t j = 0; j < ad; ++j) out.act(i, j) = t.a[j];
    out.r_dense(i, 0) = t.r_dense;
    out.r_sparse(i, 0) = t.r_sparse;
    out.done(i, 0) = t.terminal ? 1.0 : 0.0;
  }
  return out;
}

void Trainer::update_lambda(const std::vector<Transition>& rollout) {
  if (config_.mode == AlgoMode::Mtsac) return;
  std::vector<double> rewards;
  if (config_.lambda_source == LambdaSource::Rollout) {
    rewards.reserve(rollout.size());
    for (const Transition& t : rollout) rewards.push_back(t.r_sparse);
  } else {
    if (replay_.size() == 0) return;
    const std::vector<std::size_t> idx =
        replay_.sample_indices(std::min(config_.batch_size, replay_.size()), rng_);
    for (std::size_t i : idx) rewards.push_back(replay_.at(i).r_sparse);
  }
  lagrange_.update(rewards);
}

double Trainer::critic_loss_value(const Batch& batch, const Tensor& noise_sp,
                                  const Tensor& noise_acp, bool accumulate_grads) {
  const bool mtsac = config_.mode == AlgoMode::Mtsac;
  const double A = suite_.action_bound;

  // Next actions from the current composed policy (no gradient).
  Tensor a_hat_next;
  {
    Tape tape;
    PolicySample s = sample_on_tape(tape, sp_, tape.constant(batch.obs_next), noise_sp, A, false);
    a_hat_next = tape.value(s.action);
  }
  Tensor a_next = a_hat_next;
  if (!mtsac) {
    Tape tape;
    Tape::Id input = tape.constant(concat_obs_act(batch.obs_next, a_hat_next));
    PolicySample s = sample_on_tape(tape, acp_, input, noise_acp, A, false);
    a_next = correct(config_.correction, a_hat_next, tape.value(s.action), A);
  }

  const Tensor qd_next = q_eval(critics_, batch.obs_next, a_next, CriticHead::Dense, true, Reduce::Min);
  const Tensor y_dense = td_target(batch.r_dense, batch.done, qd_next, suite_.gamma);
  Tensor y_sparse;
  if (!mtsac) {
    const Tensor qs_next =
        q_eval(critics_, batch.obs_next, a_next, CriticHead::Sparse, true, Reduce::Min);
    y_sparse = td_target(batch.r_sparse, batch.done, qs_next, suite_.gamma);
  }
  return critic_loss(critics_, batch.obs, batch.act, y_dense, y_sparse, accumulate_grads, !mtsac);
}

double Trainer::sp_loss_value(const Batch& batch, const Tensor& noise_sp, const Tensor& noise_acp,
                              bool accumulate_grads) {
  const double A = suite_.action_bound;
  const bool mtsac = config_.mode == AlgoMode::Mtsac;
  Tape tape;
  Tape::Id obs = tape.constant(batch.obs);
  PolicySample sp_s = sample_on_tape(tape, sp_, obs, noise_sp, A, true);

  Tape::Id a = sp_s.action;
  if (!mtsac) {
    // Correction resampled from the current ACP but gradient-stopped, so
    // the only path into phi is the direct a_hat input of h.
    Tape::Id acp_in = tape.concat_cols(obs, tape.stop_gradient(sp_s.action));
    PolicySample acp_s = sample_on_tape(tape, acp_, acp_in, noise_acp, A, false);
    a = correct_on_tape(tape, config_.correction, sp_s.action, tape.stop_gradient(acp_s.action), A);
  }
  Tape::Id q = q_forward(tape, critics_, CriticHead::Dense, tape.concat_cols(obs, a), false,
                         config_.actor_reduce);
  Tape::Id loss = tape.add(tape.mean_all(tape.neg(q)),
                           tape.scale(tape.mean_all(sp_s.log_prob), entropy_.alpha_sp()));
  const double value = tape.value(loss)[0];
  if (!std::isfinite(value)) throw TrainingError("sp loss non-finite");
  if (accumulate_grads) tape.backward(loss);
  return value;
}

double Trainer::acp_loss_value(const Batch& batch, const Tensor& noise_sp, const Tensor& noise_acp,
                               bool accumulate_grads) {
  const double A = suite_.action_bound;
  // Preliminary action resampled from the current SP, gradient-stopped.
  Tensor a_hat;
  {
    Tape tape;
    PolicySample s = sample_on_tape(tape, sp_, tape.constant(batch.obs), noise_sp, A, false);
    a_hat = tape.value(s.action);
  }
  const Tensor q_hat =
      q_eval(critics_, batch.obs, a_hat, CriticHead::Dense, false, config_.actor_reduce);

  Tape tape;
  Tape::Id obs = tape.constant(batch.obs);
  Tape::Id acp_in = tape.concat_cols(obs, tape.constant(a_hat));
  PolicySample acp_s = sample_on_tape(tape, acp_, acp_in, noise_acp, A, true);
  Tape::Id a = correct_on_tape(tape, config_.correction, tape.constant(a_hat), acp_s.action, A);
  Tape::Id q_in = tape.concat_cols(obs, a);
  Tape::Id q_a = q_forward(tape, critics_, CriticHead::Dense, q_in, false, config_.actor_reduce);
  Tape::Id hinge = tape.relu(tape.sub(tape.constant(q_hat), q_a));
  Tape::Id q_s = q_forward(tape, critics_, CriticHead::Sparse, q_in, false, config_.actor_reduce);
  Tape::Id loss = tape.add(
      tape.sub(tape.mean_all(hinge), tape.scale(tape.mean_all(q_s), lagrange_.lambda)),
      tape.scale(tape.mean_all(acp_s.log_prob), entropy_.alpha_acp()));
  const double value = tape.value(loss)[0];
  if (!std::isfinite(value)) throw TrainingError("acp loss non-finite");
  if (accumulate_grads) tape.backward(loss);
  return value;
}

double Trainer::alpha_loss_value(bool acp, const Batch& batch, const Tensor& noise,
                                 double* grad_out) {
  const double A = suite_.action_bound;
  double mean_logp;
  {
    Tape tape;
    if (acp) {
      Tensor a_hat;
      {
        Tape t2;
        PolicySample s = sample_on_tape(t2, sp_, t2.constant(batch.obs), noise, A, false);
        a_hat = t2.value(s.action);
      }
      Tape::Id input = tape.constant(concat_obs_act(batch.obs, a_hat));
      PolicySample s = sample_on_tape(tape, acp_, input, noise, A, false);
      mean_logp = tape.value(tape.mean_all(s.log_prob))[0];
    } else {
      PolicySample s = sample_on_tape(tape, sp_, tape.constant(batch.obs), noise, A, false);
      mean_logp = tape.value(tape.mean_all(s.log_prob))[0];
    }
  }
  const double log_alpha = acp ? entropy_.log_alpha_acp : entropy_.log_alpha_sp;
  const double target = acp ? entropy_.target_entropy_acp : entropy_.target_entropy_sp;
  // L(log a) = -exp(log a) * (mean_logp + target); dL/dlog a = L.
  const double loss = -std::exp(log_alpha) * (mean_logp + target);
  if (grad_out) *grad_out = loss;
  return loss;
}

void Trainer::update_critics(const Batch& batch) {
  const std::size_t b = batch.size();
  const Tensor nsp = sample_standard_normal(rng_, b, suite_.action_dim);
  const Tensor nacp = sample_standard_normal(rng_, b, suite_.action_dim);
  critics_.zero_grads(CriticHead::Dense);
  critics_.zero_grads(CriticHead::Sparse);
  critic_loss_value(batch, nsp, nacp, true);
  {
    std::vector<std::pair<Tensor*, const Tensor*>> pg;
    critics_.dense1.for_each_param([&](Tensor& p, Tensor& g) { pg.emplace_back(&p, &g); });
    critics_.dense2.for_each_param([&](Tensor& p, Tensor& g) { pg.emplace_back(&p, &g); });
    adam_step(pg, opt_dense_);
  }
  if (config_.mode == AlgoMode::Tsac) {
    std::vector<std::pair<Tensor*, const Tensor*>> pg;
    critics_.sparse1.for_each_param([&](Tensor& p, Tensor& g) { pg.emplace_back(&p, &g); });
    critics_.sparse2.for_each_param([&](Tensor& p, Tensor& g) { pg.emplace_back(&p, &g); });
    adam_step(pg, opt_sparse_);
  }
  critics_.polyak_update();
}

void Trainer::update_sp(const Batch& batch) {
  const std::size_t b = batch.size();
  const Tensor nsp = sample_standard_normal(rng_, b, suite_.action_dim);
  const Tensor nacp = sample_standard_normal(rng_, b, suite_.action_dim);
  sp_.net.zero_grads();
  sp_loss_value(batch, nsp, nacp, true);
  adam_step(sp_.net, opt_sp_);
}

void Trainer::update_acp(const Batch& batch) {
  if (config_.mode == AlgoMode::Mtsac) return;
  const std::size_t b = batch.size();
  const Tensor nsp = sample_standard_normal(rng_, b, suite_.action_dim);
  const Tensor nacp = sample_standard_normal(rng_, b, suite_.action_dim);
  acp_.net.zero_grads();
  acp_loss_value(batch, nsp, nacp, true);
  adam_step(acp_.net, opt_acp_);
}

void Trainer::update_entropy(const Batch& batch) {
  const std::size_t b = batch.size();
  {
    const Tensor noise = sample_standard_normal(rng_, b, suite_.action_dim);
    double grad = 0.0;
    alpha_loss_value(false, batch, noise, &grad);
    Tensor p = Tensor::scalar(entropy_.log_alpha_sp);
    Tensor g = Tensor::scalar(grad);
    adam_step({{&p, &g}}, entropy_.opt_sp);
    entropy_.log_alpha_sp = p[0];
  }
  if (config_.mode == AlgoMode::Tsac) {
    const Tensor noise = sample_standard_normal(rng_, b, suite_.action_dim);
    double grad = 0.0;
    alpha_loss_value(true, batch, noise, &grad);
    Tensor p = Tensor::scalar(entropy_.log_alpha_acp);
    Tensor g = Tensor::scalar(grad);
    adam_step({{&p, &g}}, entropy_.opt_acp);
    entropy_.log_alpha_acp = p[0];
  }
}

void Trainer::train_iteration() {
  const std::vector<Transition> rollout = collect_rollout();
  std::size_t rounds = config_.updates_per_iteration;
  if (rounds == 0) rounds = config_.rollout_steps * suite_.num_tasks();
  const bool can_update = replay_.size() >= config_.batch_size && env_steps_ >= config_.warmup_env_steps;
  if (can_update) {
    for (std::size_t u = 0; u < rounds; ++u) {
      const Batch batch = sample_batch();
      update_critics(batch);
      if (u == 0) update_lambda(rollout);
      update_sp(batch);
      update_acp(batch);
      update_entropy(batch);
    }
  }
  iteration_ += 1;
}

EvalResult Trainer::evaluate(std::size_t episodes_per_task, std::uint64_t eval_seed) {
  const std::size_t n = suite_.num_tasks();
  EvalResult res;
  res.per_task_success.assign(n, 0.0);
  Rng eval_rng(eval_seed);
  std::vector<double> successes;
  double dense_total = 0.0, sparse_total = 0.0;
  for (std::size_t ep = 0; ep < episodes_per_task; ++ep) {
    std::vector<std::array<double, 2>> states(n);
    std::vector<bool> hit(n, false);
    std::vector<double> dense_ret(n, 0.0), sparse_ret(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) states[i] = reset_state(suite_.tasks[i], eval_rng);
    for (std::size_t step = 0; step < suite_.horizon; ++step) {
      Tensor obs(n, suite_.obs_dim());
      for (std::size_t i = 0; i < n; ++i) {
        const std::vector<double> o = make_observation(suite_, suite_.tasks[i], states[i]);
        for (std::size_t j = 0; j < o.size(); ++j) obs(i, j) = o[j];
      }
      const Tensor actions = act_batch(obs, eval_rng, true);
      for (std::size_t i = 0; i < n; ++i) {
        Transition t = env_step(suite_, suite_.tasks[i], states[i],
                                {actions(i, 0), actions(i, 1)}, step);
        states[i] = {t.s_next[0], t.s_next[1]};
        dense_ret[i] += t.r_dense;
        sparse_ret[i] += t.r_sparse;
        hit[i] = hit[i] || t.r_sparse > 0.0;
      }
    }
    for (std::size_t i = 0; i < n; ++i) {
      res.per_task_success[i] += hit[i] ? 1.0 : 0.0;
      successes.push_back(hit[i] ? 1.0 : 0.0);
      dense_total += dense_ret[i];
      sparse_total += sparse_ret[i];
    }
  }
  for (double& v : res.per_task_success) v /= static_cast<double>(episodes_per_task);
  const double m = static_cast<double>(successes.size());
  double mean = 0.0;
  for (double v : successes) mean += v;
  mean /= m;
  double var = 0.0;
  for (double v : successes) var += (v - mean) * (v - mean);
  res.mean_success = mean;
  res.stderr_success = m > 1 ? std::sqrt(var / (m - 1.0) / m) : 0.0;
  res.mean_dense_return = dense_total / m;
  res.mean_sparse_return = sparse_total / m;
  return res;
}

namespace {
constexpr char kMagic[9] = "TSACCKP1";

void save_mlp(BinWriter& w, const MlpParams& p) {
  w.u64(p.layers.size());
  for (const MlpParams::Layer& l : p.layers) {
    w.tensor(l.w);
    w.tensor(l.b);
  }
}

void load_mlp(BinReader& r, MlpParams& p) {
  const std::size_t n = r.u64();
  if (n != p.layers.size()) throw Error("checkpoint: layer count mismatch");
  for (MlpParams::Layer& l : p.layers) {
    Tensor w = r.tensor();
    Tensor b = r.tensor();
    if (!w.same_shape(l.w) || !b.same_shape(l.b)) throw Error("checkpoint: layer shape mismatch");
    l.w = std::move(w);
    l.b = std::move(b);
  }
}

void save_adam(BinWriter& w, const AdamState& s) {
  w.u64(static_cast<std::uint64_t>(s.step));
  w.u64(s.m.size());
  for (const Tensor& t : s.m) w.tensor(t);
  for (const Tensor& t : s.v) w.tensor(t);
}

void load_adam(BinReader& r, AdamState& s) {
  s.step = static_cast<long>(r.u64());
  const std::size_t n = r.u64();
  if (n != s.m.size()) throw Error("checkpoint: optimizer buffer count mismatch");
  for (Tensor& t : s.m) t = r.tensor();
  for (Tensor& t : s.v) t = r.tensor();
}
}  // namespace

void Trainer::save(std::ostream& out) const {
  BinWriter w{out};
  w.str(kMagic);
  w.u64(1);  // version
  w.u64(iteration_);
  w.u64(env_steps_);
  w.rng(rng_);
  save_mlp(w, sp_.net);
  save_mlp(w, acp_.net);
  for (const MlpParams* p : {&critics_.dense1, &critics_.dense2, &critics_.sparse1,
                             &critics_.sparse2, &critics_.t_dense1, &critics_.t_dense2,
                             &critics_.t_sparse1, &critics_.t_sparse2}) {
    save_mlp(w, *p);
  }
  for (const AdamState* s : {&opt_sp_, &opt_acp_, &opt_dense_, &opt_sparse_}) save_adam(w, *s);
  w.f64(lagrange_.lambda);
  w.f64(entropy_.log_alpha_sp);
  w.f64(entropy_.log_alpha_acp);
  save_adam(w, entropy_.opt_sp);
  save_adam(w, entropy_.opt_acp);
  env_.save(out);
  w.u64(replay_.size());
  w.u64(const_cast<ReplayBuffer&>(replay_).cursor());
  for (std::size_t i = 0; i < replay_.size(); ++i) {
    const Transition& t = replay_.at(i);
    w.u64(static_cast<std::uint64_t>(t.task_id));
    w.u64(t.s.size());
    for (double v : t.s) w.f64(v);
    for (double v : t.s_next) w.f64(v);
    w.u64(t.a.size());
    for (double v : t.a) w.f64(v);
    w.f64(t.r_dense);
    w.f64(t.r_sparse);
    w.u64((t.done ? 1u : 0u) | (t.success ? 2u : 0u) | (t.terminal ? 4u : 0u));
  }
}

void Trainer::load(std::istream& in) {
  BinReader r{in};
  if (r.str() != kMagic) throw Error("checkpoint: bad magic");
  if (r.u64() != 1) throw Error("checkpoint: unsupported version");
  iteration_ = r.u64();
  env_steps_ = r.u64();
  r.rng(rng_);
  load_mlp(r, sp_.net);
  load_mlp(r, acp_.net);
  for (MlpParams* p : {&critics_.dense1, &critics_.dense2, &critics_.sparse1, &critics_.sparse2,
                       &critics_.t_dense1, &critics_.t_dense2, &critics_.t_sparse1,
                       &critics_.t_sparse2}) {
    load_mlp(r, *p);
  }
  for (AdamState* s : {&opt_sp_, &opt_acp_, &opt_dense_, &opt_sparse_}) load_adam(r, *s);
  lagrange_.lambda = r.f64();
  entropy_.log_alpha_sp = r.f64();
  entropy_.log_alpha_acp = r.f64();
  load_adam(r, entropy_.opt_sp);
  load_adam(r, entropy_.opt_acp);
  env_.load(in);
  const std::size_t n = r.u64();
  const std::size_t cursor = r.u64();
  std::vector<Transition>& data = replay_.raw();
  data.clear();
  data.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    Transition t;
    t.task_id = static_cast<int>(r.u64());
    const std::size_t sd = r.u64();
    t.s.resize(sd);
    t.s_next.resize(sd);
    for (double& v : t.s) v = r.f64();
    for (double& v : t.s_next) v = r.f64();
    const std::size_t ad = r.u64();
    t.a.resize(ad);
    for (double& v : t.a) v = r.f64();
    t.r_dense = r.f64();
    t.r_sparse = r.f64();
    const std::uint64_t flags = r.u64();
    t.done = (flags & 1u) != 0;
    t.success = (flags & 2u) != 0;
    t.terminal = (flags & 4u) != 0;
    data.push_back(std::move(t));
  }
  replay_.set_cursor(cursor);
}

void Trainer::save_file(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open checkpoint file '" + path + "' for writing");
  save(out);
}

void Trainer::load_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open checkpoint file '" + path + "'");
  load(in);
}

}  // namespace tsac
