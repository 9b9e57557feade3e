#include "ibrl/behavior.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "ibrl/parallel.hpp"

namespace ibrl {

std::vector<std::tuple<int, int, std::uint32_t>> SufficientStats::nonzero() const {
  std::vector<std::tuple<int, int, std::uint32_t>> out;
  for (int s = 0; s < S_; ++s)
    for (int v = 0; v < V_; ++v) {
      const std::uint32_t c = counts_[static_cast<std::size_t>(s) * V_ + v];
      if (c > 0) out.emplace_back(s, v, c);
    }
  return out;
}

SufficientStats SufficientStats::operator+(const SufficientStats& other) const {
  if (S_ != other.S_ || V_ != other.V_) throw UsageError("SufficientStats: shape mismatch");
  SufficientStats out(S_, V_);
  for (std::size_t i = 0; i < counts_.size(); ++i) out.counts_[i] = counts_[i] + other.counts_[i];
  out.total_ = total_ + other.total_;
  return out;
}

SufficientStats update_counts(const SufficientStats& psi, int s, int v) {
  SufficientStats out = psi;
  out.add(s, v);
  return out;
}

ParticleSet sample_particles(const BehaviorModel& model, int n, std::uint64_t seed) {
  if (n < 1) throw UsageError("particle count must be >= 1");
  ParticleSet out;
  out.seed = seed;
  out.particles.reserve(static_cast<std::size_t>(n));
  Rng rng(derive_seed(seed, 0x70617274ULL));
  for (int j = 0; j < n; ++j) {
    BehaviorParams p = model.sample_prior(rng);
    model.validate_params(p);
    out.particles.push_back(std::move(p));
  }
  return out;
}

double log_phi(const BehaviorModel& model, const SufficientStats& psi, const BehaviorParams& lambda) {
  model.validate_params(lambda);
  double acc = 0.0;
  for (const auto& [s, v, c] : psi.nonzero()) {
    const double p = model.likelihood(lambda, s, v);
    if (p <= 0.0) return -std::numeric_limits<double>::infinity();
    acc += static_cast<double>(c) * std::log(p);
  }
  return acc;
}

double phi_eval(const BehaviorModel& model, const SufficientStats& psi, const BehaviorParams& lambda) {
  return std::exp(log_phi(model, psi, lambda));
}

std::vector<double> log_phi_batch(const BehaviorModel& model, const SufficientStats& psi,
                                  const ParticleSet& particles) {
  const auto nz = psi.nonzero();
  std::vector<double> out(static_cast<std::size_t>(particles.n()));
  par::for_index(particles.n(), [&](std::int64_t j) {
    const BehaviorParams& lambda = particles.particles[static_cast<std::size_t>(j)];
    double acc = 0.0;
    for (const auto& [s, v, c] : nz) {
      const double p = model.likelihood(lambda, s, v);
      if (p <= 0.0) {
        acc = -std::numeric_limits<double>::infinity();
        break;
      }
      acc += static_cast<double>(c) * std::log(p);
    }
    out[static_cast<std::size_t>(j)] = acc;
  });
  return out;
}

std::vector<double> posterior_weights(const BehaviorModel& model, const SufficientStats& psi,
                                      const ParticleSet& particles) {
  if (particles.n() < 1) throw UsageError("posterior_weights: empty particle set");
  std::vector<double> logs = log_phi_batch(model, psi, particles);
  const double max_log = *std::max_element(logs.begin(), logs.end());
  if (max_log == -std::numeric_limits<double>::infinity())
    throw DegenerateBeliefError("all particles inconsistent with observations");
  std::vector<double> w(logs.size());
  par::for_index(static_cast<std::int64_t>(logs.size()), [&](std::int64_t j) {
    w[static_cast<std::size_t>(j)] = std::exp(logs[static_cast<std::size_t>(j)] - max_log);
  });
  const double total = par::sum(w);
  for (double& x : w) x /= total;
  return w;
}

LikelihoodTable build_likelihood_table(const BehaviorModel& model, const ParticleSet& particles) {
  LikelihoodTable t;
  t.S = model.num_states();
  t.V = model.num_opponent_actions();
  t.n = particles.n();
  for (const auto& p : particles.particles) model.validate_params(p);
  t.values.resize(static_cast<std::size_t>(t.S) * t.V * t.n);
  par::for_index(static_cast<std::int64_t>(t.S) * t.V, [&](std::int64_t sv) {
    const int s = static_cast<int>(sv / t.V);
    const int v = static_cast<int>(sv % t.V);
    double* row = t.values.data() + static_cast<std::size_t>(sv) * t.n;
    for (int j = 0; j < t.n; ++j)
      row[j] = model.likelihood(particles.particles[static_cast<std::size_t>(j)], s, v);
  });
  return t;
}

FdmModel::FdmModel(int num_states, int num_opponent_actions, std::vector<double> dirichlet_alpha,
                   std::string name)
    : S_(num_states), V_(num_opponent_actions), alpha_(std::move(dirichlet_alpha)), name_(std::move(name)) {
  if (S_ <= 0 || V_ <= 0) throw UsageError("FdmModel: dimensions must be positive");
  if (alpha_.size() != static_cast<std::size_t>(S_) * V_)
    throw UsageError("FdmModel: alpha table size mismatch");
  for (double a : alpha_)
    if (!(a > 0.0)) throw UsageError("FdmModel: Dirichlet parameters must be positive");
}

FdmModel::FdmModel(int num_states, int num_opponent_actions, double symmetric_alpha, std::string name)
    : FdmModel(num_states, num_opponent_actions,
               std::vector<double>(static_cast<std::size_t>(num_states) * num_opponent_actions,
                                   symmetric_alpha),
               std::move(name)) {}

double FdmModel::likelihood(const BehaviorParams& lambda, int state, int v) const {
  validate_params(lambda);
  if (state < 0 || state >= S_ || v < 0 || v >= V_) throw UsageError("FdmModel: index out of range");
  return lambda.values[static_cast<std::size_t>(state) * V_ + v];
}

BehaviorParams FdmModel::sample_prior(Rng& rng) const {
  BehaviorParams out;
  out.values.resize(static_cast<std::size_t>(S_) * V_);
  for (int s = 0; s < S_; ++s) {
    double sum = 0.0;
    for (int v = 0; v < V_; ++v) {
      const double g = rng.gamma(alpha_[static_cast<std::size_t>(s) * V_ + v]);
      out.values[static_cast<std::size_t>(s) * V_ + v] = g;
      sum += g;
    }
    if (sum <= 0.0) {  // all gammas underflowed; fall back to the mean direction
      for (int v = 0; v < V_; ++v)
        out.values[static_cast<std::size_t>(s) * V_ + v] = 1.0 / V_;
    } else {
      for (int v = 0; v < V_; ++v) out.values[static_cast<std::size_t>(s) * V_ + v] /= sum;
    }
  }
  return out;
}

void FdmModel::validate_params(const BehaviorParams& lambda) const {
  if (lambda.values.size() != static_cast<std::size_t>(S_) * V_)
    throw DomainError("FdmModel: parameter vector has wrong dimension");
  for (int s = 0; s < S_; ++s) {
    double sum = 0.0;
    for (int v = 0; v < V_; ++v) {
      const double p = lambda.values[static_cast<std::size_t>(s) * V_ + v];
      if (p < -1e-12 || p > 1.0 + 1e-12) throw DomainError("FdmModel: probability out of [0,1]");
      sum += p;
    }
    if (std::abs(sum - 1.0) > 1e-9) throw DomainError("FdmModel: row does not sum to 1");
  }
}

BehaviorParams FdmModel::prior_mean() const {
  BehaviorParams out;
  out.values.resize(static_cast<std::size_t>(S_) * V_);
  for (int s = 0; s < S_; ++s) {
    double sum = 0.0;
    for (int v = 0; v < V_; ++v) sum += alpha_[static_cast<std::size_t>(s) * V_ + v];
    for (int v = 0; v < V_; ++v)
      out.values[static_cast<std::size_t>(s) * V_ + v] = alpha_[static_cast<std::size_t>(s) * V_ + v] / sum;
  }
  return out;
}

bool FdmModel::clamp_params(BehaviorParams& lambda) const {
  bool changed = false;
  if (lambda.values.size() != static_cast<std::size_t>(S_) * V_)
    throw DomainError("FdmModel: parameter vector has wrong dimension");
  for (int s = 0; s < S_; ++s) {
    double sum = 0.0;
    for (int v = 0; v < V_; ++v) {
      double& p = lambda.values[static_cast<std::size_t>(s) * V_ + v];
      if (p < 0.0) {
        p = 0.0;
        changed = true;
      }
      sum += p;
    }
    if (std::abs(sum - 1.0) > 1e-12) {
      changed = true;
      if (sum <= 0.0) {
        for (int v = 0; v < V_; ++v) lambda.values[static_cast<std::size_t>(s) * V_ + v] = 1.0 / V_;
      } else {
        for (int v = 0; v < V_; ++v) lambda.values[static_cast<std::size_t>(s) * V_ + v] /= sum;
      }
    }
  }
  return changed;
}

}  // namespace ibrl
