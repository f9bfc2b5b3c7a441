#include "cforge/sampler.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <limits>
#include <mutex>
#include <thread>

#include "cforge/rng.hpp"

namespace cforge {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kMaxDeltaH = 1000.0;
constexpr std::uint64_t kChainStreamBase = 0xC4A1000000000000ull;

double lse(double a, double b) {
  if (a == -kInf) return b;
  if (b == -kInf) return a;
  const double m = std::max(a, b);
  return m + std::log(std::exp(a - m) + std::exp(b - m));
}

double dot(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

// Log density and gradient on the unconstrained scale.
class UnconstrainedTarget {
 public:
  UnconstrainedTarget(const LogDensityFn& f, const ParameterSpace& space) : f_(f), space_(space) {}

  double operator()(const std::vector<double>& u, std::vector<double>& grad) {
    tape_.clear();
    uvars_.clear();
    for (double x : u) uvars_.push_back(tape_.input(x));
    const Var logj = transform_to_natural(space_, uvars_, natural_);
    nat_vals_.resize(natural_.size());
    for (std::size_t i = 0; i < natural_.size(); ++i) nat_vals_[i] = natural_[i].val;
    nat_grad_.assign(natural_.size(), 0.0);
    double lp;
    try {
      lp = f_(nat_vals_, nat_grad_);
    } catch (const EvaluationError&) {
      return -kInf;
    }
    if (!std::isfinite(lp) || !std::isfinite(logj.val)) return -kInf;
    for (double g : nat_grad_)
      if (!std::isfinite(g)) return -kInf;
    const Var linear = tape_.push(OpKind::sum, 0.0, natural_, nat_grad_);
    const Var out = linear + logj;
    const auto& adj = tape_.backward(out);
    grad.resize(u.size());
    for (std::size_t i = 0; i < u.size(); ++i) grad[i] = adj[uvars_[i].idx];
    return lp + logj.val;
  }

  const std::vector<double>& last_natural() const { return nat_vals_; }

 private:
  const LogDensityFn& f_;
  const ParameterSpace& space_;
  Tape tape_;
  std::vector<Var> uvars_;
  std::vector<Var> natural_;
  std::vector<double> nat_vals_;
  std::vector<double> nat_grad_;
};

struct PhasePoint {
  std::vector<double> q, p, grad;
  double logp = -kInf;
};

class StepSizeAdapter {
 public:
  void set_mu(double mu) { mu_ = mu; }
  void restart() {
    counter_ = 0;
    s_bar_ = 0.0;
    x_bar_ = 0.0;
  }
  void learn(double& epsilon, double accept, double delta) {
    ++counter_;
    accept = std::min(accept, 1.0);
    const double eta = 1.0 / (counter_ + t0_);
    s_bar_ = (1.0 - eta) * s_bar_ + eta * (delta - accept);
    const double x = mu_ - s_bar_ * std::sqrt(static_cast<double>(counter_)) / gamma_;
    const double x_eta = std::pow(static_cast<double>(counter_), -kappa_);
    x_bar_ = (1.0 - x_eta) * x_bar_ + x_eta * x;
    epsilon = std::exp(x);
  }
  double final_epsilon() const { return std::exp(x_bar_); }

 private:
  double mu_ = 0.0, s_bar_ = 0.0, x_bar_ = 0.0;
  double gamma_ = 0.05, kappa_ = 0.75, t0_ = 10.0;
  int counter_ = 0;
};

// Windowed variance adaptation: a fast initial buffer, doubling slow windows
// that each re-estimate the diagonal metric, and a terminal step-size buffer.
class MetricAdapter {
 public:
  MetricAdapter(int warmup, std::size_t dim) : warmup_(warmup), dim_(dim) {
    if (warmup < 20) {
      enabled_ = false;
      return;
    }
    if (init_buffer_ + base_window_ + term_buffer_ > warmup) {
      init_buffer_ = static_cast<int>(0.15 * warmup);
      term_buffer_ = static_cast<int>(0.1 * warmup);
      base_window_ = warmup - (init_buffer_ + term_buffer_);
    }
    window_size_ = base_window_;
    next_window_ = init_buffer_ + window_size_ - 1;
    reset_estimator();
  }

  // Returns true when the metric was updated.
  bool learn(std::vector<double>& inv_metric, const std::vector<double>& q) {
    if (!enabled_) return false;
    if (in_window()) add(q);
    if (end_window()) {
      compute_next_window();
      const double n = static_cast<double>(n_);
      for (std::size_t i = 0; i < dim_; ++i) {
        const double var = m2_[i] / (n - 1.0);
        inv_metric[i] = (n / (n + 5.0)) * var + 1e-3 * (5.0 / (n + 5.0));
      }
      reset_estimator();
      ++counter_;
      return true;
    }
    ++counter_;
    return false;
  }

 private:
  int warmup_;
  std::size_t dim_;
  bool enabled_ = true;
  int init_buffer_ = 75, term_buffer_ = 50, base_window_ = 25;
  int window_size_ = 0, next_window_ = 0, counter_ = 0;
  long n_ = 0;
  std::vector<double> mean_, m2_;

  bool in_window() const {
    return counter_ >= init_buffer_ && counter_ < warmup_ - term_buffer_ && counter_ != warmup_;
  }
  bool end_window() const { return counter_ == next_window_ && counter_ != warmup_; }
  void compute_next_window() {
    if (next_window_ == warmup_ - term_buffer_ - 1) return;
    window_size_ *= 2;
    next_window_ = counter_ + window_size_;
    if (next_window_ != warmup_ - term_buffer_ - 1) {
      const int boundary = next_window_ + 2 * window_size_;
      if (boundary >= warmup_ - term_buffer_) next_window_ = warmup_ - term_buffer_ - 1;
    }
  }
  void reset_estimator() {
    n_ = 0;
    mean_.assign(dim_, 0.0);
    m2_.assign(dim_, 0.0);
  }
  void add(const std::vector<double>& q) {
    ++n_;
    for (std::size_t i = 0; i < dim_; ++i) {
      const double d = q[i] - mean_[i];
      mean_[i] += d / static_cast<double>(n_);
      m2_[i] += d * (q[i] - mean_[i]);
    }
  }
};

class NutsChain {
 public:
  NutsChain(const LogDensityFn& f, const ParameterSpace& space, const SamplerConfig& cfg, Rng rng)
      : target_(f, space), cfg_(cfg), rng_(rng), dim_(space.dim()) {
    inv_metric_.assign(dim_, 1.0);
  }

  bool initialize(const std::vector<double>& q0) {
    z_.q = q0;
    z_.logp = target_(z_.q, z_.grad);
    z_.p.assign(dim_, 0.0);
    return std::isfinite(z_.logp);
  }

  void init_stepsize() {
    const PhasePoint init = z_;
    if (epsilon_ == 0.0 || epsilon_ > 1e7 || std::isnan(epsilon_)) return;
    sample_momentum();
    double h0 = hamiltonian(z_);
    leapfrog(z_, epsilon_);
    double h = hamiltonian(z_);
    if (std::isnan(h)) h = kInf;
    const int direction = (h0 - h) > std::log(0.8) ? 1 : -1;
    for (;;) {
      z_ = init;
      sample_momentum();
      h0 = hamiltonian(z_);
      leapfrog(z_, epsilon_);
      h = hamiltonian(z_);
      if (std::isnan(h)) h = kInf;
      const double delta = h0 - h;
      if (direction == 1 && !(delta > std::log(0.8))) break;
      if (direction == -1 && !(delta < std::log(0.8))) break;
      epsilon_ = direction == 1 ? 2.0 * epsilon_ : 0.5 * epsilon_;
      if (epsilon_ > 1e7) throw std::runtime_error("sampler: step size diverged; the posterior may be improper");
      if (epsilon_ == 0.0) throw std::runtime_error("sampler: step size underflowed to zero");
    }
    z_ = init;
  }

  struct Transition {
    double accept = 0.0;
    int depth = 0;
    bool divergent = false;
  };

  Transition transition() {
    sample_momentum();
    const double h0 = hamiltonian(z_);
    PhasePoint z_fwd = z_, z_bck = z_, z_sample = z_, z_propose = z_;

    std::vector<double> p_sharp = sharp(z_.p);
    std::vector<double> p_fwd_fwd = z_.p, p_sharp_fwd_fwd = p_sharp;
    std::vector<double> p_fwd_bck = z_.p, p_sharp_fwd_bck = p_sharp;
    std::vector<double> p_bck_fwd = z_.p, p_sharp_bck_fwd = p_sharp;
    std::vector<double> p_bck_bck = z_.p, p_sharp_bck_bck = p_sharp;
    std::vector<double> rho = z_.p;

    double log_sum_weight = 0.0;
    int n_leapfrog = 0;
    double sum_metro = 0.0;
    int depth = 0;
    divergent_ = false;

    while (depth < cfg_.max_tree_depth) {
      std::vector<double> rho_fwd(dim_, 0.0), rho_bck(dim_, 0.0);
      bool valid = false;
      double lsw_subtree = -kInf;
      if (rng_.uniform() > 0.5) {
        z_ = z_fwd;
        rho_bck = rho;
        p_bck_fwd = p_fwd_bck;
        p_sharp_bck_fwd = p_sharp_fwd_bck;
        valid = build_tree(depth, z_propose, p_sharp_fwd_bck, p_sharp_fwd_fwd, rho_fwd, p_fwd_bck, p_fwd_fwd, h0, 1.0,
                           n_leapfrog, lsw_subtree, sum_metro);
        z_fwd = z_;
      } else {
        z_ = z_bck;
        rho_fwd = rho;
        p_fwd_bck = p_bck_fwd;
        p_sharp_fwd_bck = p_sharp_bck_fwd;
        valid = build_tree(depth, z_propose, p_sharp_bck_fwd, p_sharp_bck_bck, rho_bck, p_bck_fwd, p_bck_bck, h0, -1.0,
                           n_leapfrog, lsw_subtree, sum_metro);
        z_bck = z_;
      }
      if (!valid) break;
      ++depth;
      if (lsw_subtree > log_sum_weight) {
        z_sample = z_propose;
      } else if (rng_.uniform() < std::exp(lsw_subtree - log_sum_weight)) {
        z_sample = z_propose;
      }
      log_sum_weight = lse(log_sum_weight, lsw_subtree);

      for (std::size_t i = 0; i < dim_; ++i) rho[i] = rho_bck[i] + rho_fwd[i];
      bool persist = criterion(p_sharp_bck_bck, p_sharp_fwd_fwd, rho);
      std::vector<double> ext(dim_);
      for (std::size_t i = 0; i < dim_; ++i) ext[i] = rho_bck[i] + p_fwd_bck[i];
      persist = persist && criterion(p_sharp_bck_bck, p_sharp_fwd_bck, ext);
      for (std::size_t i = 0; i < dim_; ++i) ext[i] = rho_fwd[i] + p_bck_fwd[i];
      persist = persist && criterion(p_sharp_bck_fwd, p_sharp_fwd_fwd, ext);
      if (!persist) break;
    }

    z_ = z_sample;
    Transition t;
    t.accept = n_leapfrog > 0 ? sum_metro / n_leapfrog : 0.0;
    t.depth = depth;
    t.divergent = divergent_;
    return t;
  }

  double& epsilon() { return epsilon_; }
  std::vector<double>& inv_metric() { return inv_metric_; }
  const std::vector<double>& position() const { return z_.q; }

 private:
  UnconstrainedTarget target_;
  const SamplerConfig& cfg_;
  Rng rng_;
  std::size_t dim_;
  std::vector<double> inv_metric_;
  double epsilon_ = 1.0;
  PhasePoint z_;
  bool divergent_ = false;

  void sample_momentum() {
    z_.p.resize(dim_);
    for (std::size_t i = 0; i < dim_; ++i) z_.p[i] = rng_.normal() / std::sqrt(inv_metric_[i]);
  }

  double hamiltonian(const PhasePoint& z) const {
    double k = 0.0;
    for (std::size_t i = 0; i < dim_; ++i) k += z.p[i] * z.p[i] * inv_metric_[i];
    return -z.logp + 0.5 * k;
  }

  std::vector<double> sharp(const std::vector<double>& p) const {
    std::vector<double> s(dim_);
    for (std::size_t i = 0; i < dim_; ++i) s[i] = inv_metric_[i] * p[i];
    return s;
  }

  void leapfrog(PhasePoint& z, double eps) {
    if (!std::isfinite(z.logp)) return;
    for (std::size_t i = 0; i < dim_; ++i) z.p[i] += 0.5 * eps * z.grad[i];
    for (std::size_t i = 0; i < dim_; ++i) z.q[i] += eps * inv_metric_[i] * z.p[i];
    z.logp = target_(z.q, z.grad);
    if (!std::isfinite(z.logp)) return;
    for (std::size_t i = 0; i < dim_; ++i) z.p[i] += 0.5 * eps * z.grad[i];
  }

  static bool criterion(const std::vector<double>& p_sharp_minus, const std::vector<double>& p_sharp_plus,
                        const std::vector<double>& rho) {
    return dot(p_sharp_plus, rho) > 0.0 && dot(p_sharp_minus, rho) > 0.0;
  }

  bool build_tree(int depth, PhasePoint& z_propose, std::vector<double>& p_sharp_beg, std::vector<double>& p_sharp_end,
                  std::vector<double>& rho, std::vector<double>& p_beg, std::vector<double>& p_end, double h0,
                  double sign, int& n_leapfrog, double& log_sum_weight, double& sum_metro) {
    if (depth == 0) {
      leapfrog(z_, sign * epsilon_);
      ++n_leapfrog;
      double h = std::isfinite(z_.logp) ? hamiltonian(z_) : kInf;
      if (std::isnan(h)) h = kInf;
      if (h - h0 > kMaxDeltaH) divergent_ = true;
      log_sum_weight = lse(log_sum_weight, h0 - h);
      sum_metro += (h0 - h > 0.0) ? 1.0 : std::exp(h0 - h);
      z_propose = z_;
      p_sharp_beg = sharp(z_.p);
      p_sharp_end = p_sharp_beg;
      for (std::size_t i = 0; i < dim_; ++i) rho[i] += z_.p[i];
      p_beg = z_.p;
      p_end = p_beg;
      return !divergent_;
    }

    double lsw_init = -kInf;
    std::vector<double> p_init_end(dim_), p_sharp_init_end(dim_), rho_init(dim_, 0.0);
    if (!build_tree(depth - 1, z_propose, p_sharp_beg, p_sharp_init_end, rho_init, p_beg, p_init_end, h0, sign,
                    n_leapfrog, lsw_init, sum_metro))
      return false;

    PhasePoint z_propose_final = z_;
    double lsw_final = -kInf;
    std::vector<double> p_final_beg(dim_), p_sharp_final_beg(dim_), rho_final(dim_, 0.0);
    if (!build_tree(depth - 1, z_propose_final, p_sharp_final_beg, p_sharp_end, rho_final, p_final_beg, p_end, h0,
                    sign, n_leapfrog, lsw_final, sum_metro))
      return false;

    const double lsw_subtree = lse(lsw_init, lsw_final);
    log_sum_weight = lse(log_sum_weight, lsw_subtree);
    if (lsw_final > lsw_subtree) {
      z_propose = z_propose_final;
    } else if (rng_.uniform() < std::exp(lsw_final - lsw_subtree)) {
      z_propose = z_propose_final;
    }

    std::vector<double> rho_subtree(dim_), ext(dim_);
    for (std::size_t i = 0; i < dim_; ++i) {
      rho_subtree[i] = rho_init[i] + rho_final[i];
      rho[i] += rho_subtree[i];
    }
    bool persist = criterion(p_sharp_beg, p_sharp_end, rho_subtree);
    for (std::size_t i = 0; i < dim_; ++i) ext[i] = rho_init[i] + p_final_beg[i];
    persist = persist && criterion(p_sharp_beg, p_sharp_final_beg, ext);
    for (std::size_t i = 0; i < dim_; ++i) ext[i] = rho_final[i] + p_init_end[i];
    persist = persist && criterion(p_sharp_init_end, p_sharp_end, ext);
    return persist;
  }
};

struct ChainResult {
  std::vector<double> values;
  std::vector<std::uint8_t> divergent;
  std::vector<int> depth;
  std::vector<double> accept;
  double step_size = 0.0;
};

ChainResult run_chain(const LogDensityFn& f, const ParameterSpace& space, const SamplerConfig& cfg, int chain,
                      const std::optional<std::vector<double>>& init) {
  const std::uint64_t stream = kChainStreamBase + static_cast<std::uint64_t>(chain);
  NutsChain nuts(f, space, cfg, Rng(cfg.seed, stream));
  Rng init_rng(cfg.seed, stream ^ 0x1000000000ull);

  std::vector<double> base;
  if (init) {
    if (init->size() != space.natural_dim()) throw std::invalid_argument("nuts_run: init has the wrong length");
    base = transform_to_unconstrained(space, *init);
  }
  bool ok = false;
  for (int attempt = 0; attempt <= 100 && !ok; ++attempt) {
    std::vector<double> q(space.dim());
    for (std::size_t i = 0; i < q.size(); ++i) {
      const double jitter = init_rng.uniform(-2.0, 2.0);
      q[i] = init ? base[i] + (attempt == 0 ? 0.0 : jitter) : jitter;
    }
    ok = nuts.initialize(q);
  }
  if (!ok)
    throw InitializationError("sampler: chain " + std::to_string(chain + 1) +
                              " found no finite initial log density after 100 retries");

  nuts.init_stepsize();
  StepSizeAdapter step;
  step.set_mu(std::log(10.0 * nuts.epsilon()));
  step.restart();
  MetricAdapter metric(cfg.warmup, space.dim());

  ChainResult out;
  const int kept = cfg.iterations - cfg.warmup;
  out.values.reserve(static_cast<std::size_t>(kept) * space.natural_dim());
  for (int it = 0; it < cfg.iterations; ++it) {
    const auto t = nuts.transition();
    if (it < cfg.warmup) {
      step.learn(nuts.epsilon(), t.accept, cfg.target_accept);
      if (metric.learn(nuts.inv_metric(), nuts.position())) {
        nuts.init_stepsize();
        step.set_mu(std::log(10.0 * nuts.epsilon()));
        step.restart();
      }
      if (it == cfg.warmup - 1) nuts.epsilon() = step.final_epsilon();
      continue;
    }
    const auto nat = transform_to_natural(space, nuts.position());
    out.values.insert(out.values.end(), nat.values.begin(), nat.values.end());
    out.divergent.push_back(t.divergent ? 1 : 0);
    out.depth.push_back(t.depth);
    out.accept.push_back(t.accept);
  }
  out.step_size = nuts.epsilon();
  return out;
}

}  // namespace

void SamplerConfig::validate() const {
  if (chains < 1) throw std::invalid_argument("sampler: chains must be >= 1");
  if (warmup < 0 || iterations <= warmup) throw std::invalid_argument("sampler: warmup must be < iterations");
  if (!(target_accept > 0.0 && target_accept < 1.0)) throw std::invalid_argument("sampler: target_accept in (0,1)");
  if (max_tree_depth < 1) throw std::invalid_argument("sampler: max_tree_depth must be >= 1");
}

std::optional<std::size_t> PosteriorDraws::index_of(const std::string& name) const {
  for (std::size_t i = 0; i < names.size(); ++i)
    if (names[i] == name) return i;
  return std::nullopt;
}

std::size_t PosteriorDraws::require(const std::string& name) const {
  const auto i = index_of(name);
  if (!i) throw std::out_of_range("draws: no parameter named '" + name + "'");
  return *i;
}

std::vector<std::vector<double>> PosteriorDraws::by_chain(std::size_t param) const {
  std::vector<std::vector<double>> out(chains, std::vector<double>(draws));
  for (int c = 0; c < chains; ++c)
    for (int d = 0; d < draws; ++d) out[c][d] = at(c, d, param);
  return out;
}

std::vector<double> PosteriorDraws::pooled(std::size_t param) const {
  std::vector<double> out;
  out.reserve(static_cast<std::size_t>(chains) * draws);
  for (int c = 0; c < chains; ++c)
    for (int d = 0; d < draws; ++d) out.push_back(at(c, d, param));
  return out;
}

int PosteriorDraws::divergences() const {
  int n = 0;
  for (auto d : divergent) n += d;
  return n;
}

int PosteriorDraws::depth_saturations() const {
  int n = 0;
  for (int d : tree_depth) n += (d >= max_tree_depth) ? 1 : 0;
  return n;
}

void PosteriorDraws::add_derived(const std::vector<std::string>& derived_names,
                                 const std::function<std::vector<double>(std::span<const double>)>& fn) {
  if (derived_names.empty()) return;
  const std::size_t p_old = params();
  const std::size_t p_new = p_old + derived_names.size();
  std::vector<double> next;
  next.reserve(static_cast<std::size_t>(chains) * draws * p_new);
  for (std::size_t row = 0; row < static_cast<std::size_t>(chains) * draws; ++row) {
    std::span<const double> r(values.data() + row * p_old, p_old);
    next.insert(next.end(), r.begin(), r.end());
    const auto extra = fn(r);
    if (extra.size() != derived_names.size()) throw std::logic_error("add_derived: wrong number of values");
    next.insert(next.end(), extra.begin(), extra.end());
  }
  values = std::move(next);
  names.insert(names.end(), derived_names.begin(), derived_names.end());
}

std::vector<double> init_strategy(const ParameterSpace& space, std::uint64_t seed, std::uint64_t stream) {
  Rng rng(seed, kChainStreamBase + stream);
  std::vector<double> u(space.dim());
  for (auto& x : u) x = rng.uniform(-2.0, 2.0);
  return transform_to_natural(space, u).values;
}

int max_parallel_chains(int chains) {
  int cap = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  if (const char* env = std::getenv("CONFOUNDER_FORGE_THREADS")) {
    const int v = std::atoi(env);
    if (v > 0) cap = v;
  }
  return std::max(1, std::min(cap, chains));
}

PosteriorDraws nuts_run(const LogDensityFn& logdensity, const ParameterSpace& space, const SamplerConfig& config,
                        const std::optional<std::vector<double>>& init) {
  config.validate();
  std::vector<ChainResult> results(config.chains);
  std::vector<std::exception_ptr> errors(config.chains);
  const int workers = max_parallel_chains(config.chains);
  if (workers == 1) {
    for (int c = 0; c < config.chains; ++c) results[c] = run_chain(logdensity, space, config, c, init);
  } else {
    std::atomic<int> next{0};
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        for (int c = next++; c < config.chains; c = next++) {
          try {
            results[c] = run_chain(logdensity, space, config, c, init);
          } catch (...) {
            errors[c] = std::current_exception();
          }
        }
      });
    }
    for (auto& t : pool) t.join();
    for (auto& e : errors)
      if (e) std::rethrow_exception(e);
  }

  PosteriorDraws out;
  out.names = space.names();
  out.chains = config.chains;
  out.draws = config.iterations - config.warmup;
  out.max_tree_depth = config.max_tree_depth;
  for (auto& r : results) {
    out.values.insert(out.values.end(), r.values.begin(), r.values.end());
    out.divergent.insert(out.divergent.end(), r.divergent.begin(), r.divergent.end());
    out.tree_depth.insert(out.tree_depth.end(), r.depth.begin(), r.depth.end());
    out.accept_stat.insert(out.accept_stat.end(), r.accept.begin(), r.accept.end());
    out.step_size.push_back(r.step_size);
  }
  return out;
}

}  // namespace cforge
