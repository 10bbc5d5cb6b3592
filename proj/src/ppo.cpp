// SPDX-License-Identifier: Apache-2.0

#include "isac/ppo.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <filesystem>
#include <fstream>
#include <istream>
#include <limits>
#include <mutex>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <thread>

#include "isac/experiment.hpp"

namespace isac {

namespace {

constexpr const char* kCheckpointMagic = "isac-ppo-checkpoint";
constexpr int kCheckpointVersion = 1;
constexpr std::uint64_t kInitStream = 0x696e6974;
constexpr std::uint64_t kSampleStream = 0x736d706c;
constexpr std::uint64_t kSetStream = 0x73657473;
constexpr std::uint64_t kShuffleStream = 0x73686666;
constexpr std::uint64_t kWarmupEpisodeBase = 1ULL << 40;
constexpr int kWarmupResets = 64;

Eigen::MatrixXd orthogonal(int rows, int cols, SeededRng& rng) {
  const int n = std::max(rows, cols);
  Eigen::MatrixXd g(n, std::min(rows, cols));
  for (int j = 0; j < g.cols(); ++j)
    for (int i = 0; i < n; ++i) g(i, j) = rng.normal();
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(g);
  Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(n, g.cols());
  const Eigen::MatrixXd r = qr.matrixQR();
  for (int j = 0; j < q.cols(); ++j)
    if (r(j, j) < 0) q.col(j) = -q.col(j);
  return rows >= cols ? q : Eigen::MatrixXd(q.transpose());
}

void write_vec(std::ostream& os, const char* tag, const Eigen::VectorXd& v) {
  os << tag << ' ' << v.size() << '\n';
  char buf[64];
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%a\n", v[i]);
    os << buf;
  }
}

Eigen::VectorXd read_vec(std::istream& is, const char* tag) {
  std::string t;
  Eigen::Index n = 0;
  if (!(is >> t >> n) || t != tag || n < 0)
    throw std::runtime_error(std::string("checkpoint: expected ") + tag);
  Eigen::VectorXd v(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    std::string s;
    if (!(is >> s)) throw std::runtime_error(std::string("checkpoint: truncated ") + tag);
    v[i] = std::strtod(s.c_str(), nullptr);
  }
  return v;
}

template <class T>
T read_scalar(std::istream& is, const char* tag) {
  std::string t;
  T v{};
  if (!(is >> t >> v) || t != tag) throw std::runtime_error(std::string("checkpoint: expected ") + tag);
  return v;
}

}  // namespace

Mlp::Mlp(std::vector<int> sizes) : sizes_(std::move(sizes)) {
  if (sizes_.size() < 2) throw std::invalid_argument("Mlp: need at least two layer sizes");
  Eigen::Index off = 0;
  for (std::size_t l = 0; l + 1 < sizes_.size(); ++l) {
    offsets_.push_back(off);
    off += static_cast<Eigen::Index>(sizes_[l + 1]) * sizes_[l] + sizes_[l + 1];
  }
  params_ = Eigen::VectorXd::Zero(off);
}

Eigen::MatrixXd Mlp::forward(const Eigen::MatrixXd& x, Cache* cache) const {
  Eigen::MatrixXd a = x;
  if (cache) cache->activations.assign(1, a);
  const std::size_t layers = sizes_.size() - 1;
  for (std::size_t l = 0; l < layers; ++l) {
    const int in = sizes_[l], out = sizes_[l + 1];
    Eigen::Map<const Eigen::MatrixXd> w(params_.data() + offsets_[l], out, in);
    Eigen::Map<const Eigen::VectorXd> b(params_.data() + offsets_[l] + out * in, out);
    Eigen::MatrixXd z = w * a;
    z.colwise() += b;
    if (l + 1 < layers) z = z.array().tanh().matrix();
    a = std::move(z);
    if (cache) cache->activations.push_back(a);
  }
  return a;
}

void Mlp::backward(const Cache& cache, const Eigen::MatrixXd& d_out, Eigen::VectorXd& grad) const {
  if (grad.size() != params_.size()) grad = Eigen::VectorXd::Zero(params_.size());
  Eigen::MatrixXd delta = d_out;
  for (std::size_t l = sizes_.size() - 1; l-- > 0;) {
    const int in = sizes_[l], out = sizes_[l + 1];
    Eigen::Map<const Eigen::MatrixXd> w(params_.data() + offsets_[l], out, in);
    Eigen::Map<Eigen::MatrixXd> gw(grad.data() + offsets_[l], out, in);
    Eigen::Map<Eigen::VectorXd> gb(grad.data() + offsets_[l] + out * in, out);
    const Eigen::MatrixXd& a = cache.activations[l];
    gw.noalias() += delta * a.transpose();
    gb += delta.rowwise().sum();
    if (l > 0) delta = ((w.transpose() * delta).array() * (1.0 - a.array().square())).matrix();
  }
}

void Mlp::init_orthogonal(SeededRng& rng, double hidden_gain, const std::vector<double>& out_gains) {
  const std::size_t layers = sizes_.size() - 1;
  params_.setZero();
  for (std::size_t l = 0; l < layers; ++l) {
    const int in = sizes_[l], out = sizes_[l + 1];
    Eigen::Map<Eigen::MatrixXd> w(params_.data() + offsets_[l], out, in);
    w = orthogonal(out, in, rng);
    if (l + 1 < layers) {
      w *= hidden_gain;
    } else {
      for (int r = 0; r < out; ++r)
        w.row(r) *= r < static_cast<int>(out_gains.size()) ? out_gains[r] : 1.0;
    }
  }
}

void RunningStats::resize(Eigen::Index n) {
  count = 0;
  mean = Eigen::VectorXd::Zero(n);
  m2 = Eigen::VectorXd::Zero(n);
}

void RunningStats::update(const Eigen::VectorXd& x) {
  ++count;
  const Eigen::VectorXd d = x - mean;
  mean += d / static_cast<double>(count);
  m2 += (d.array() * (x - mean).array()).matrix();
}

Eigen::VectorXd RunningStats::stddev(double floor) const {
  if (count < 2) return Eigen::VectorXd::Ones(mean.size());
  return (m2 / static_cast<double>(count - 1)).array().sqrt().max(floor).matrix();
}

double clipped_objective(double ratio, double a, double eps) {
  return std::min(ratio * a, std::clamp(ratio, 1.0 - eps, 1.0 + eps) * a);
}

std::vector<double> discounted_returns(const std::vector<double>& r, const std::vector<bool>& done,
                                       double gamma) {
  std::vector<double> g(r.size());
  double acc = 0.0;
  for (std::size_t t = r.size(); t-- > 0;) {
    if (done[t]) acc = 0.0;
    acc = r[t] + gamma * acc;
    g[t] = acc;
  }
  return g;
}

std::vector<double> mc_advantages(const std::vector<double>& r, const std::vector<double>& v,
                                  const std::vector<bool>& done, double gamma) {
  auto g = discounted_returns(r, done, gamma);
  for (std::size_t t = 0; t < g.size(); ++t) g[t] -= v[t];
  return g;
}

std::vector<double> gae_advantages(const std::vector<double>& r, const std::vector<double>& v,
                                   const std::vector<bool>& done, double gamma, double lambda) {
  std::vector<double> a(r.size());
  double acc = 0.0;
  for (std::size_t t = r.size(); t-- > 0;) {
    const bool last = done[t] || t + 1 == r.size();
    const double next_v = last ? 0.0 : v[t + 1];
    if (last) acc = 0.0;
    const double delta = r[t] + gamma * next_v - v[t];
    acc = delta + gamma * lambda * acc;
    a[t] = acc;
  }
  return a;
}

void normalize_in_place(std::vector<double>& xs) {
  if (xs.size() < 2) return;
  double m = 0.0;
  for (double x : xs) m += x;
  m /= xs.size();
  double v = 0.0;
  for (double x : xs) v += (x - m) * (x - m);
  const double sd = std::sqrt(v / (xs.size() - 1));
  for (double& x : xs) x = (x - m) / (sd + 1e-8);
}

std::vector<bool> action_mask(const std::string& set, int n_users) {
  const int n = action_count(n_users);
  std::vector<bool> mask(n, true);
  if (set == "mb") return mask;
  if (set != "1b") throw std::invalid_argument("action_set must be mb or 1b");
  for (int a = 0; a < n; ++a)
    for (int d : action_digits(a, n_users))
      if (d != 1 && d != 4 && d != 6) mask[a] = false;
  return mask;
}

Eigen::VectorXd masked_softmax(const Eigen::VectorXd& z, const std::vector<bool>& mask) {
  double mx = -std::numeric_limits<double>::infinity();
  for (Eigen::Index k = 0; k < z.size(); ++k)
    if (mask[k]) mx = std::max(mx, z[k]);
  Eigen::VectorXd p = Eigen::VectorXd::Zero(z.size());
  double s = 0.0;
  for (Eigen::Index k = 0; k < z.size(); ++k)
    if (mask[k]) s += (p[k] = std::exp(z[k] - mx));
  return p / s;
}

LossStats ppo_loss(const Mlp& net, const PpoBatch& b, const std::vector<bool>& mask,
                   const RlConfig& rl, Eigen::VectorXd* grad) {
  const Eigen::Index n = b.obs.cols();
  const int na = static_cast<int>(mask.size());
  Mlp::Cache cache;
  const Eigen::MatrixXd out = net.forward(b.obs, grad ? &cache : nullptr);
  Eigen::MatrixXd d_out = Eigen::MatrixXd::Zero(out.rows(), n);
  LossStats st;
  const double inv_n = 1.0 / static_cast<double>(n);
  for (Eigen::Index j = 0; j < n; ++j) {
    const Eigen::VectorXd z = out.col(j).head(na);
    double mx = -std::numeric_limits<double>::infinity();
    for (int k = 0; k < na; ++k)
      if (mask[k]) mx = std::max(mx, z[k]);
    double s = 0.0;
    for (int k = 0; k < na; ++k)
      if (mask[k]) s += std::exp(z[k] - mx);
    const double lse = mx + std::log(s);
    Eigen::VectorXd logp = Eigen::VectorXd::Zero(na), p = Eigen::VectorXd::Zero(na);
    double h = 0.0;
    for (int k = 0; k < na; ++k)
      if (mask[k]) {
        logp[k] = z[k] - lse;
        p[k] = std::exp(logp[k]);
        h -= p[k] * logp[k];
      }
    const int a = b.actions[j];
    const double adv = b.advantages[j];
    const double ratio = std::exp(logp[a] - b.old_logp[j]);
    const double unclipped = ratio * adv;
    const double clipped = std::clamp(ratio, 1.0 - rl.clip_epsilon, 1.0 + rl.clip_epsilon) * adv;
    const double surr = std::min(unclipped, clipped);
    const double v = out(na, j);
    const double verr = v - b.value_targets[j];

    st.policy -= surr * inv_n;
    st.value += verr * verr * inv_n;
    st.entropy += h * inv_n;
    st.approx_kl += (b.old_logp[j] - logp[a]) * inv_n;
    st.clip_fraction += (std::abs(ratio - 1.0) > rl.clip_epsilon ? 1.0 : 0.0) * inv_n;

    if (grad) {
      const double g_logp = unclipped <= clipped ? unclipped : 0.0;
      for (int k = 0; k < na; ++k) {
        if (!mask[k]) continue;
        const double dlogp = (k == a ? 1.0 : 0.0) - p[k];
        d_out(k, j) = -g_logp * dlogp * inv_n + rl.entropy_coef * p[k] * (logp[k] + h) * inv_n;
      }
      d_out(na, j) = 2.0 * rl.value_coef * verr * inv_n;
    }
  }
  st.total = st.policy + rl.value_coef * st.value - rl.entropy_coef * st.entropy;
  if (grad) {
    *grad = Eigen::VectorXd::Zero(net.n_params());
    net.backward(cache, d_out, *grad);
  }
  return st;
}

void Adam::step(Eigen::VectorXd& params, const Eigen::VectorXd& g, double lr) {
  if (m.size() != params.size()) {
    m = Eigen::VectorXd::Zero(params.size());
    v = Eigen::VectorXd::Zero(params.size());
  }
  ++t;
  m = beta1 * m + (1.0 - beta1) * g;
  v = beta2 * v + (1.0 - beta2) * g.cwiseProduct(g);
  const double c1 = 1.0 - std::pow(beta1, static_cast<double>(t));
  const double c2 = 1.0 - std::pow(beta2, static_cast<double>(t));
  params.array() -= lr * (m.array() / c1) / ((v.array() / c2).sqrt() + eps);
}

double scheduled_lr(const RlConfig& rl, std::int64_t step) {
  double lr = rl.learning_rate;
  const double total = static_cast<double>(rl.total_steps);
  if (step >= total / 3.0) lr *= 0.5;
  if (step >= 2.0 * total / 3.0) lr *= 0.5;
  return lr;
}

PpoAgent::PpoAgent(const SystemConfig& cfg, std::uint64_t seed_in)
    : seed(seed_in),
      n_t_(cfg.n_tx_antennas),
      n_users_(cfg.n_users),
      n_actions_(action_count(cfg.n_users)),
      input_size_(2 * cfg.n_tx_antennas + 2 * cfg.n_users),
      action_set_(cfg.rl.action_set),
      mask_(action_mask(cfg.rl.action_set, cfg.n_users)),
      net_({input_size_, cfg.rl.hidden_units, cfg.rl.hidden_units, n_actions_ + 1}) {
  for (int u = 0; u < n_users_; ++u) {
    deadlines_.push_back(cfg.deadlines[u]);
    capacities_.push_back(cfg.buffer_sizes[u]);
  }
  SeededRng rng(seed, kInitStream);
  std::vector<double> gains(n_actions_ + 1, 0.01);
  gains.back() = 1.0;
  net_.init_orthogonal(rng, std::sqrt(2.0), gains);
  obs_stats_.resize(n_t_);
  ret_stats_.resize(1);
}

Eigen::VectorXd PpoAgent::raw_features(const std::vector<double>& obs) const {
  if (static_cast<int>(obs.size()) != input_size_)
    throw std::invalid_argument("agent: observation size mismatch");
  Eigen::VectorXd x(input_size_);
  for (int n = 0; n < n_t_; ++n) x[n] = std::log10(std::max(obs[n], 1e-30));
  for (int n = 0; n < n_t_; ++n) x[n_t_ + n] = obs[n_t_ + n] / n_users_;
  for (int u = 0; u < n_users_; ++u) {
    x[2 * n_t_ + u] = obs[2 * n_t_ + u] / deadlines_[u];
    x[2 * n_t_ + n_users_ + u] = obs[2 * n_t_ + n_users_ + u] / capacities_[u];
  }
  return x;
}

Eigen::VectorXd PpoAgent::encode(const std::vector<double>& obs) const {
  Eigen::VectorXd x = raw_features(obs);
  const Eigen::VectorXd sd = obs_stats_.stddev(1e-3);
  for (int n = 0; n < n_t_; ++n)
    x[n] = std::clamp((x[n] - obs_stats_.mean[n]) / sd[n], -10.0, 10.0);
  return x;
}

void PpoAgent::observe(const std::vector<double>& obs) {
  obs_stats_.update(raw_features(obs).head(n_t_));
}

double PpoAgent::return_mean() const { return ret_stats_.mean[0]; }
double PpoAgent::return_std() const { return ret_stats_.stddev(1e-6)[0]; }

PpoAgent::Output PpoAgent::evaluate(const Eigen::VectorXd& enc) const {
  const Eigen::VectorXd out = net_.forward(enc);
  Output o;
  o.probs = masked_softmax(out.head(n_actions_), mask_);
  o.value = out[n_actions_] * return_std() + return_mean();
  return o;
}

int PpoAgent::greedy_action(const Eigen::VectorXd& enc) const {
  const Eigen::VectorXd out = net_.forward(enc);
  int best = -1;
  for (int k = 0; k < n_actions_; ++k)
    if (mask_[k] && (best < 0 || out[k] > out[best])) best = k;
  return best;
}

int PpoAgent::sample_action(const Eigen::VectorXd& probs, SeededRng& rng) const {
  const double u = rng.uniform();
  double acc = 0.0;
  int last = -1;
  for (int k = 0; k < n_actions_; ++k) {
    if (!mask_[k]) continue;
    acc += probs[k];
    last = k;
    if (u < acc) return k;
  }
  return last;
}

void PpoAgent::save(std::ostream& os) const {
  os << kCheckpointMagic << ' ' << kCheckpointVersion << '\n';
  os << "layers " << net_.sizes().size();
  for (int s : net_.sizes()) os << ' ' << s;
  os << '\n';
  os << "action_set " << action_set_ << '\n';
  os << "seed " << seed << '\n';
  os << "steps " << steps << '\n';
  os << "episodes " << episodes << '\n';
  os << "updates " << updates << '\n';
  os << "adam_t " << adam_.t << '\n';
  write_vec(os, "params", net_.params());
  write_vec(os, "adam_m", adam_.m.size() ? adam_.m : Eigen::VectorXd::Zero(net_.n_params()));
  write_vec(os, "adam_v", adam_.v.size() ? adam_.v : Eigen::VectorXd::Zero(net_.n_params()));
  os << "obs_count " << obs_stats_.count << '\n';
  write_vec(os, "obs_mean", obs_stats_.mean);
  write_vec(os, "obs_m2", obs_stats_.m2);
  os << "ret_count " << ret_stats_.count << '\n';
  write_vec(os, "ret_mean", ret_stats_.mean);
  write_vec(os, "ret_m2", ret_stats_.m2);
  write_vec(os, "recent_rewards",
            Eigen::Map<const Eigen::VectorXd>(recent_rewards.data(),
                                              static_cast<Eigen::Index>(recent_rewards.size())));
  os << "end\n";
}

PpoAgent PpoAgent::load(std::istream& is, const SystemConfig& cfg_in) {
  std::string magic;
  int version = 0;
  if (!(is >> magic >> version) || magic != kCheckpointMagic)
    throw std::runtime_error("checkpoint: bad header");
  if (version != kCheckpointVersion) throw std::runtime_error("checkpoint: unsupported version");
  const auto n_layers = read_scalar<std::size_t>(is, "layers");
  std::vector<int> sizes(n_layers);
  for (auto& s : sizes)
    if (!(is >> s)) throw std::runtime_error("checkpoint: bad layers");
  SystemConfig cfg = cfg_in;
  cfg.rl.action_set = read_scalar<std::string>(is, "action_set");
  PpoAgent a(cfg, read_scalar<std::uint64_t>(is, "seed"));
  if (sizes != a.net_.sizes()) a.net_ = Mlp(sizes);
  if (sizes.front() != a.input_size_ || sizes.back() != a.n_actions_ + 1)
    throw std::runtime_error("checkpoint: network shape does not match the config");
  a.steps = read_scalar<std::int64_t>(is, "steps");
  a.episodes = read_scalar<std::int64_t>(is, "episodes");
  a.updates = read_scalar<std::int64_t>(is, "updates");
  a.adam_.t = read_scalar<long long>(is, "adam_t");
  a.net_.params() = read_vec(is, "params");
  if (a.net_.params().size() != a.net_.n_params() ||
      a.net_.n_params() != Mlp(sizes).n_params())
    throw std::runtime_error("checkpoint: parameter count mismatch");
  a.adam_.m = read_vec(is, "adam_m");
  a.adam_.v = read_vec(is, "adam_v");
  a.obs_stats_.count = read_scalar<long long>(is, "obs_count");
  a.obs_stats_.mean = read_vec(is, "obs_mean");
  a.obs_stats_.m2 = read_vec(is, "obs_m2");
  a.ret_stats_.count = read_scalar<long long>(is, "ret_count");
  a.ret_stats_.mean = read_vec(is, "ret_mean");
  a.ret_stats_.m2 = read_vec(is, "ret_m2");
  const Eigen::VectorXd rr = read_vec(is, "recent_rewards");
  a.recent_rewards.assign(rr.data(), rr.data() + rr.size());
  std::string end;
  if (!(is >> end) || end != "end") throw std::runtime_error("checkpoint: truncated");
  return a;
}

void PpoAgent::save_file(const std::string& path) const {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream os(tmp);
    if (!os) throw std::runtime_error("cannot write checkpoint " + path);
    save(os);
    if (!os) throw std::runtime_error("cannot write checkpoint " + path);
  }
  std::filesystem::rename(tmp, path);
}

PpoAgent PpoAgent::load_file(const std::string& path, const SystemConfig& cfg) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot read checkpoint " + path);
  return load(is, cfg);
}

AgentPolicy::AgentPolicy(std::shared_ptr<const PpoAgent> agent, bool greedy, std::string name)
    : agent_(std::move(agent)), greedy_(greedy), name_(std::move(name)) {}

BeamRequests AgentPolicy::decide(const IsacEnv& env, SeededRng& rng) {
  const Eigen::VectorXd x = agent_->encode(env.observation());
  last_action_ = greedy_ ? agent_->greedy_action(x) : agent_->sample_action(agent_->evaluate(x).probs, rng);
  return decode_action(last_action_, env.allocation(), env.bin_power(), env.config().n_tx_antennas);
}

namespace {

struct EpisodeRollout {
  std::vector<Eigen::VectorXd> obs;
  std::vector<std::vector<double>> raw_obs;
  std::vector<int> actions;
  std::vector<double> logp;
  std::vector<double> values;
  std::vector<double> rewards;
  double total_reward = 0.0;
};

EpisodeRollout collect_episode(IsacEnv& env, const PpoAgent& agent, const SystemConfig& cfg,
                               std::uint64_t seed, std::uint64_t episode) {
  SeededRng set_rng(seed, stream_id({episode, kSetStream}));
  const auto& sets = cfg.experiment.train_sets;
  const int set = sets[set_rng.uniform_int(0, static_cast<int>(sets.size()) - 1)];
  SeededRng act_rng(seed, stream_id({episode, kSampleStream}));
  EpisodeRollout ep;
  std::vector<double> obs = env.reset(set, episode);
  while (!env.done()) {
    const Eigen::VectorXd x = agent.encode(obs);
    const PpoAgent::Output o = agent.evaluate(x);
    const int a = agent.sample_action(o.probs, act_rng);
    MdpSnapshot s = env.step(a);
    ep.obs.push_back(x);
    ep.raw_obs.push_back(std::move(obs));
    ep.actions.push_back(a);
    ep.logp.push_back(std::log(o.probs[a]));
    ep.values.push_back(o.value);
    ep.rewards.push_back(s.reward);
    ep.total_reward += s.reward;
    obs = std::move(s.observation);
  }
  return ep;
}

template <class F>
void parallel_for(int n, int workers, F&& body) {
  std::atomic<int> next{0};
  std::exception_ptr failure;
  std::mutex mu;
  auto work = [&](int w) {
    try {
      for (int i = next++; i < n; i = next++) body(w, i);
    } catch (...) {
      std::lock_guard lock(mu);
      if (!failure) failure = std::current_exception();
      next = n;
    }
  };
  workers = std::clamp(workers, 1, std::max(1, n));
  if (workers == 1) {
    work(0);
  } else {
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w) pool.emplace_back(work, w);
    for (auto& t : pool) t.join();
  }
  if (failure) std::rethrow_exception(failure);
}

}  // namespace

void write_curve_header(std::ostream& os, const SystemConfig& cfg, std::uint64_t seed) {
  write_csv_header(os, kCurveSchema, cfg, seed, {"action_set=" + cfg.rl.action_set});
  os << "step,episodes,mean_reward,policy_loss,value_loss,entropy,approx_kl,clip_fraction,lr\n";
}

void write_curve_row(std::ostream& os, const CurveRow& r) {
  os << r.step << ',' << r.episodes << ',' << format_double(r.mean_reward) << ','
     << format_double(r.loss.policy) << ',' << format_double(r.loss.value) << ','
     << format_double(r.loss.entropy) << ',' << format_double(r.loss.approx_kl) << ','
     << format_double(r.loss.clip_fraction) << ',' << format_double(r.lr) << '\n';
}

std::vector<CurveRow> train(PpoAgent& agent, const SystemConfig& cfg, const TrainOptions& opt) {
  const RlConfig& rl = cfg.rl;
  const int n_tti = cfg.experiment.ttis_per_episode;
  const int workers = std::max(1, opt.workers);
  std::vector<std::unique_ptr<IsacEnv>> envs;
  for (int w = 0; w < workers; ++w) envs.push_back(std::make_unique<IsacEnv>(cfg, opt.seed));

  std::ofstream curve;
  if (!opt.curve_path.empty()) {
    const bool append = agent.steps > 0 && std::filesystem::exists(opt.curve_path);
    curve.open(opt.curve_path, append ? std::ios::app : std::ios::trunc);
    if (!curve) throw std::runtime_error("cannot write " + opt.curve_path);
    if (!append) write_curve_header(curve, cfg, opt.seed);
  }

  if (agent.obs_stats().count == 0 && rl.total_steps > agent.steps) {
    for (int k = 0; k < kWarmupResets; ++k) {
      const auto& sets = cfg.experiment.train_sets;
      agent.observe(envs[0]->reset(sets[k % sets.size()], kWarmupEpisodeBase + k));
    }
  }

  std::vector<CurveRow> rows;
  std::int64_t next_checkpoint =
      rl.checkpoint_every > 0 ? (agent.steps / rl.checkpoint_every + 1) * rl.checkpoint_every : -1;
  while (agent.steps < rl.total_steps) {
    const std::int64_t remaining = rl.total_steps - agent.steps;
    const std::int64_t want = std::min<std::int64_t>(rl.rollout_steps, remaining);
    const int n_eps = static_cast<int>((want + n_tti - 1) / n_tti);
    const std::uint64_t first = static_cast<std::uint64_t>(agent.episodes);

    std::vector<EpisodeRollout> eps(n_eps);
    const PpoAgent& frozen = agent;
    parallel_for(n_eps, workers, [&](int w, int i) {
      eps[i] = collect_episode(*envs[w], frozen, cfg, opt.seed, first + i);
    });

    PpoBatch batch;
    std::vector<double> rewards, values;
    std::vector<bool> dones;
    for (const auto& ep : eps)
      for (std::size_t t = 0; t < ep.rewards.size(); ++t) {
        rewards.push_back(ep.rewards[t]);
        values.push_back(ep.values[t]);
        dones.push_back(t + 1 == ep.rewards.size());
        batch.actions.push_back(ep.actions[t]);
        batch.old_logp.push_back(ep.logp[t]);
      }
    const Eigen::Index n = static_cast<Eigen::Index>(rewards.size());
    batch.obs.resize(agent.input_size(), n);
    {
      Eigen::Index c = 0;
      for (const auto& ep : eps)
        for (const auto& x : ep.obs) batch.obs.col(c++) = x;
    }
    const std::vector<double> returns = discounted_returns(rewards, dones, rl.gamma);
    batch.advantages = rl.use_gae ? gae_advantages(rewards, values, dones, rl.gamma, rl.gae_lambda)
                                  : mc_advantages(rewards, values, dones, rl.gamma);
    normalize_in_place(batch.advantages);
    for (double g : returns) agent.return_stats().update(Eigen::VectorXd::Constant(1, g));
    for (double g : returns) batch.value_targets.push_back((g - agent.return_mean()) / agent.return_std());

    const double lr = scheduled_lr(rl, agent.steps);
    SeededRng shuffle(opt.seed, stream_id({static_cast<std::uint64_t>(agent.updates), kShuffleStream}));
    std::vector<int> perm(n);
    LossStats last;
    for (int epoch = 0; epoch < rl.epochs; ++epoch) {
      for (Eigen::Index i = 0; i < n; ++i) perm[i] = static_cast<int>(i);
      for (Eigen::Index i = n - 1; i > 0; --i)
        std::swap(perm[i], perm[shuffle.uniform_int(0, static_cast<int>(i))]);
      for (Eigen::Index start = 0; start < n; start += rl.minibatch_size) {
        const Eigen::Index m = std::min<Eigen::Index>(rl.minibatch_size, n - start);
        PpoBatch mb;
        mb.obs.resize(batch.obs.rows(), m);
        for (Eigen::Index k = 0; k < m; ++k) {
          const int j = perm[start + k];
          mb.obs.col(k) = batch.obs.col(j);
          mb.actions.push_back(batch.actions[j]);
          mb.old_logp.push_back(batch.old_logp[j]);
          mb.advantages.push_back(batch.advantages[j]);
          mb.value_targets.push_back(batch.value_targets[j]);
        }
        Eigen::VectorXd grad;
        last = ppo_loss(agent.net(), mb, agent.mask(), rl, &grad);
        if (!std::isfinite(last.total) || !grad.allFinite())
          throw std::runtime_error("ppo: non-finite loss at update " + std::to_string(agent.updates));
        const double norm = grad.norm();
        if (norm > rl.max_grad_norm) grad *= rl.max_grad_norm / norm;
        agent.adam().step(agent.net().params(), grad, lr);
      }
    }
    for (const auto& ep : eps)
      for (const auto& o : ep.raw_obs) agent.observe(o);

    for (const auto& ep : eps) {
      agent.recent_rewards.push_back(ep.total_reward);
      if (static_cast<int>(agent.recent_rewards.size()) > rl.moving_average_window)
        agent.recent_rewards.erase(agent.recent_rewards.begin());
    }
    agent.steps += n;
    agent.episodes += n_eps;
    ++agent.updates;

    CurveRow row;
    row.step = agent.steps;
    row.episodes = agent.episodes;
    double s = 0.0;
    for (double r : agent.recent_rewards) s += r;
    row.mean_reward = agent.recent_rewards.empty() ? 0.0 : s / agent.recent_rewards.size();
    row.loss = ppo_loss(agent.net(), batch, agent.mask(), rl, nullptr);
    row.lr = lr;
    rows.push_back(row);
    if (curve) {
      write_curve_row(curve, row);
      curve.flush();
    }
    if (next_checkpoint > 0 && agent.steps >= next_checkpoint && !opt.checkpoint_path.empty()) {
      agent.save_file(opt.checkpoint_path);
      while (next_checkpoint <= agent.steps) next_checkpoint += rl.checkpoint_every;
    }
    if (opt.progress) opt.progress(row);
  }
  if (!opt.checkpoint_path.empty()) agent.save_file(opt.checkpoint_path);
  return rows;
}

}  // namespace isac
