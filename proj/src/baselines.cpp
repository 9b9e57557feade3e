#include "ibrl/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "ibrl/parallel.hpp"

namespace ibrl {

QTable value_iteration(const StochasticGame& game, const BehaviorModel& model,
                       const BehaviorParams& lambda, double tol, int max_sweeps) {
  if (!(tol > 0.0)) throw UsageError("value_iteration: tol must be positive");
  model.validate_params(lambda);
  if (model.num_states() != game.num_states)
    throw UsageError("value_iteration: model and game disagree on state count");
  const int S = game.num_states;
  const int U = game.num_agent_actions;
  const int V = game.num_opponent_actions;
  const double phi = game.discount;

  // Collapse the opponent: R_s(u) = sum_v p_s^v r_s(u,v); sparse rows of
  // P_s^u(s') = sum_v p_s^v p_s^{uv}(s').
  std::vector<double> R(static_cast<std::size_t>(S) * U, 0.0);
  std::vector<std::vector<std::pair<int, double>>> P(static_cast<std::size_t>(S) * U);
  par::for_index(S, [&](std::int64_t si) {
    const int s = static_cast<int>(si);
    std::vector<double> lik(static_cast<std::size_t>(V));
    for (int v = 0; v < V; ++v) lik[static_cast<std::size_t>(v)] = model.likelihood(lambda, s, v);
    std::vector<double> row(static_cast<std::size_t>(S));
    for (int u = 0; u < U; ++u) {
      double r = 0.0;
      std::fill(row.begin(), row.end(), 0.0);
      for (int v = 0; v < V; ++v) {
        r += lik[static_cast<std::size_t>(v)] * game.reward(s, u, v);
        const double lv = lik[static_cast<std::size_t>(v)];
        if (lv <= 0.0) continue;
        for (int s2 = 0; s2 < S; ++s2) {
          const double p = game.transition(s, u, v, s2);
          if (p > 0.0) row[static_cast<std::size_t>(s2)] += lv * p;
        }
      }
      R[static_cast<std::size_t>(s) * U + u] = r;
      auto& sparse = P[static_cast<std::size_t>(s) * U + u];
      for (int s2 = 0; s2 < S; ++s2)
        if (row[static_cast<std::size_t>(s2)] > 0.0) sparse.emplace_back(s2, row[static_cast<std::size_t>(s2)]);
    }
  });

  QTable out;
  out.num_states = S;
  out.num_actions = U;
  out.q.assign(static_cast<std::size_t>(S) * U, 0.0);
  std::vector<double> value(static_cast<std::size_t>(S), 0.0);
  std::vector<double> new_value(static_cast<std::size_t>(S), 0.0);
  for (int sweep = 0; sweep < max_sweeps; ++sweep) {
    par::for_index(S, [&](std::int64_t si) {
      const int s = static_cast<int>(si);
      double best = -std::numeric_limits<double>::infinity();
      for (int u = 0; u < U; ++u) {
        double acc = R[static_cast<std::size_t>(s) * U + u];
        for (const auto& [s2, w] : P[static_cast<std::size_t>(s) * U + u])
          acc += phi * w * value[static_cast<std::size_t>(s2)];
        out.q[static_cast<std::size_t>(s) * U + u] = acc;
        best = std::max(best, acc);
      }
      new_value[static_cast<std::size_t>(s)] = best;
    });
    double residual = 0.0;
    for (int s = 0; s < S; ++s)
      residual = std::max(residual, std::abs(new_value[static_cast<std::size_t>(s)] - value[static_cast<std::size_t>(s)]));
    std::swap(value, new_value);
    out.residual = residual;
    out.sweeps = sweep + 1;
    if (residual <= tol) break;
  }
  return out;
}

std::pair<double, std::vector<double>> fictitious_play_maximin(
    const std::vector<double>& payoff, int rows, int cols, int rounds) {
  if (rows <= 0 || cols <= 0 || static_cast<int>(payoff.size()) != rows * cols)
    throw UsageError("fictitious_play_maximin: bad matrix");
  std::vector<double> row_counts(static_cast<std::size_t>(rows), 0.0);
  std::vector<double> col_counts(static_cast<std::size_t>(cols), 0.0);
  // Cumulative payoffs against the other side's empirical play.
  std::vector<double> row_score(static_cast<std::size_t>(rows), 0.0);  // maximizer
  std::vector<double> col_score(static_cast<std::size_t>(cols), 0.0);  // minimizer
  int r_play = 0, c_play = 0;
  for (int t = 0; t < rounds; ++t) {
    row_counts[static_cast<std::size_t>(r_play)] += 1.0;
    col_counts[static_cast<std::size_t>(c_play)] += 1.0;
    for (int i = 0; i < rows; ++i) row_score[static_cast<std::size_t>(i)] += payoff[static_cast<std::size_t>(i) * cols + c_play];
    for (int j = 0; j < cols; ++j) col_score[static_cast<std::size_t>(j)] += payoff[static_cast<std::size_t>(r_play) * cols + j];
    r_play = 0;
    for (int i = 1; i < rows; ++i)
      if (row_score[static_cast<std::size_t>(i)] > row_score[static_cast<std::size_t>(r_play)]) r_play = i;
    c_play = 0;
    for (int j = 1; j < cols; ++j)
      if (col_score[static_cast<std::size_t>(j)] < col_score[static_cast<std::size_t>(c_play)]) c_play = j;
  }
  std::vector<double> strategy(static_cast<std::size_t>(rows));
  for (int i = 0; i < rows; ++i) strategy[static_cast<std::size_t>(i)] = row_counts[static_cast<std::size_t>(i)] / rounds;
  // Bracket the game value by the two best responses to the empirical mixes.
  double upper = -std::numeric_limits<double>::infinity();
  for (int i = 0; i < rows; ++i) {
    double acc = 0.0;
    for (int j = 0; j < cols; ++j)
      acc += payoff[static_cast<std::size_t>(i) * cols + j] * col_counts[static_cast<std::size_t>(j)] / rounds;
    upper = std::max(upper, acc);
  }
  double lower = std::numeric_limits<double>::infinity();
  for (int j = 0; j < cols; ++j) {
    double acc = 0.0;
    for (int i = 0; i < rows; ++i)
      acc += payoff[static_cast<std::size_t>(i) * cols + j] * row_counts[static_cast<std::size_t>(i)] / rounds;
    lower = std::min(lower, acc);
  }
  return {0.5 * (upper + lower), strategy};
}

MaximinSolution solve_maximin(const StochasticGame& game, double tol, int fictitious_play_rounds) {
  const int S = game.num_states;
  const int U = game.num_agent_actions;
  const int V = game.num_opponent_actions;
  const double phi = game.discount;
  MaximinSolution out;
  out.values.assign(static_cast<std::size_t>(S), 0.0);
  out.strategy.assign(static_cast<std::size_t>(S), std::vector<double>(static_cast<std::size_t>(U), 0.0));
  std::vector<double> next(static_cast<std::size_t>(S), 0.0);
  const int max_outer = 10000;
  for (int sweep = 0; sweep < max_outer; ++sweep) {
    par::for_index(S, [&](std::int64_t si) {
      const int s = static_cast<int>(si);
      std::vector<double> matrix(static_cast<std::size_t>(U) * V);
      for (int u = 0; u < U; ++u)
        for (int v = 0; v < V; ++v) {
          double acc = game.reward(s, u, v);
          for (int s2 = 0; s2 < S; ++s2) {
            const double p = game.transition(s, u, v, s2);
            if (p > 0.0) acc += phi * p * out.values[static_cast<std::size_t>(s2)];
          }
          matrix[static_cast<std::size_t>(u) * V + v] = acc;
        }
      auto [value, strategy] = fictitious_play_maximin(matrix, U, V, fictitious_play_rounds);
      next[static_cast<std::size_t>(s)] = value;
      out.strategy[static_cast<std::size_t>(s)] = std::move(strategy);
    });
    double residual = 0.0;
    for (int s = 0; s < S; ++s)
      residual = std::max(residual, std::abs(next[static_cast<std::size_t>(s)] - out.values[static_cast<std::size_t>(s)]));
    out.values = next;
    if (residual <= tol) break;
  }
  return out;
}

std::vector<double> myopic_vpi(const std::vector<QTable>& samples, int state) {
  if (samples.empty()) throw UsageError("myopic_vpi: no samples");
  const int U = samples[0].num_actions;
  const int m = static_cast<int>(samples.size());
  std::vector<double> mean(static_cast<std::size_t>(U), 0.0);
  for (const auto& t : samples)
    for (int u = 0; u < U; ++u)
      mean[static_cast<std::size_t>(u)] += t.q[static_cast<std::size_t>(state) * U + u] / m;
  int best = 0;
  for (int u = 1; u < U; ++u)
    if (mean[static_cast<std::size_t>(u)] > mean[static_cast<std::size_t>(best)]) best = u;
  double second = -std::numeric_limits<double>::infinity();
  for (int u = 0; u < U; ++u)
    if (u != best) second = std::max(second, mean[static_cast<std::size_t>(u)]);
  if (U == 1) second = mean[0];

  std::vector<double> vpi(static_cast<std::size_t>(U), 0.0);
  for (int u = 0; u < U; ++u) {
    double acc = 0.0;
    for (const auto& t : samples) {
      const double q = t.q[static_cast<std::size_t>(state) * U + u];
      if (u == best)
        acc += std::max(0.0, second - q);  // learning the best is actually worse
      else
        acc += std::max(0.0, q - mean[static_cast<std::size_t>(best)]);  // learning u overtakes
    }
    vpi[static_cast<std::size_t>(u)] = acc / m;
  }
  return vpi;
}

QTableCache::QTableCache(const StochasticGame& game, std::shared_ptr<const BehaviorModel> model,
                         std::shared_ptr<const ParticleSet> particles, double tol)
    : game_(game), model_(std::move(model)), particles_(std::move(particles)), tol_(tol) {}

const QTable& QTableCache::at_particle(int j) {
  {
    std::lock_guard<std::mutex> lock(mutex_);
    auto it = cache_.find(j);
    if (it != cache_.end()) return *it->second;
  }
  auto solved = std::make_shared<QTable>(
      value_iteration(game_, *model_, particles_->particles[static_cast<std::size_t>(j)], tol_));
  std::lock_guard<std::mutex> lock(mutex_);
  auto [it, inserted] = cache_.emplace(j, std::move(solved));
  return *it->second;
}

int bpvi_select(const BehaviorModel& model, const SufficientStats& psi,
                const ParticleSet& particles, const StochasticGame& game, int state,
                int m_samples, Rng& rng, double vi_tol, QTableCache* cache) {
  if (m_samples < 1) throw UsageError("bpvi_select: m_samples must be >= 1");
  game.check_state(state);
  const std::vector<double> weights = posterior_weights(model, psi, particles);
  std::vector<QTable> samples;
  samples.reserve(static_cast<std::size_t>(m_samples));
  for (int i = 0; i < m_samples; ++i) {
    const int j = rng.categorical(weights);
    if (cache != nullptr)
      samples.push_back(cache->at_particle(j));
    else
      samples.push_back(value_iteration(game, model, particles.particles[static_cast<std::size_t>(j)], vi_tol));
  }
  const int U = game.num_agent_actions;
  std::vector<double> mean_q(static_cast<std::size_t>(U), 0.0);
  for (const auto& t : samples)
    for (int u = 0; u < U; ++u)
      mean_q[static_cast<std::size_t>(u)] += t.q[static_cast<std::size_t>(state) * U + u] / m_samples;
  const std::vector<double> vpi = myopic_vpi(samples, state);
  int best = 0;
  double best_score = -std::numeric_limits<double>::infinity();
  for (int u = 0; u < U; ++u) {
    const double score = mean_q[static_cast<std::size_t>(u)] + vpi[static_cast<std::size_t>(u)];
    if (score > best_score) {
      best_score = score;
      best = u;
    }
  }
  return best;
}

}  // namespace ibrl
