#include "ibrl/planner.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstring>
#include <unordered_map>
#include <unordered_set>

#include <Eigen/Dense>

#include "ibrl/parallel.hpp"

namespace ibrl {

namespace {

std::uint64_t hash_bytes(const void* data, std::size_t len) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < len; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::uint64_t saturating_add(std::uint64_t a, std::uint64_t b) {
  const std::uint64_t s = a + b;
  return s < a ? UINT64_MAX : s;
}

/// Successor lists per opponent action: s' with p_s^{uv}(s') > 0 for some u.
std::vector<std::vector<int>> successors_per_v(const StochasticGame& game, int s) {
  std::vector<std::vector<int>> succ(static_cast<std::size_t>(game.num_opponent_actions));
  for (int v = 0; v < game.num_opponent_actions; ++v) {
    std::vector<char> seen(static_cast<std::size_t>(game.num_states), 0);
    for (int u = 0; u < game.num_agent_actions; ++u)
      for (int s2 = 0; s2 < game.num_states; ++s2)
        if (game.transition(s, u, v, s2) > 0.0) seen[static_cast<std::size_t>(s2)] = 1;
    for (int s2 = 0; s2 < game.num_states; ++s2)
      if (seen[static_cast<std::size_t>(s2)]) succ[static_cast<std::size_t>(v)].push_back(s2);
  }
  return succ;
}

}  // namespace

SampledBelief make_sampled_belief(const BehaviorModel& model, const ParticleSet& particles,
                                  SufficientStats counts) {
  SampledBelief b;
  b.counts = std::move(counts);
  std::vector<double> logs = log_phi_batch(model, b.counts, particles);
  b.log_scale = *std::max_element(logs.begin(), logs.end());
  if (b.log_scale == -std::numeric_limits<double>::infinity())
    throw DegenerateBeliefError("sampled belief has zero mass on every particle");
  b.phi.resize(logs.size());
  par::for_index(static_cast<std::int64_t>(logs.size()), [&](std::int64_t j) {
    b.phi[static_cast<std::size_t>(j)] = std::exp(logs[static_cast<std::size_t>(j)] - b.log_scale);
  });
  b.phi_sum = par::sum(b.phi);
  b.eta = static_cast<double>(particles.n()) / b.phi_sum;
  b.weights.resize(b.phi.size());
  for (std::size_t j = 0; j < b.phi.size(); ++j) b.weights[j] = b.phi[j] / b.phi_sum;
  return b;
}

double mc_inner(std::span<const double> g_evals, const SampledBelief& belief) {
  if (g_evals.size() != belief.weights.size())
    throw UsageError("mc_inner: dimension mismatch");
  if (!(belief.phi_sum > 0.0)) throw DegenerateBeliefError("mc_inner: zero normalizer");
  return par::dot(g_evals, belief.weights);
}

SampledBeliefSet sample_reachable_beliefs(const StochasticGame& game, const BehaviorModel& model,
                                          const ParticleSet& particles, int per_state_count,
                                          int depth, Rng& rng) {
  if (per_state_count < 1) throw UsageError("per_state_count must be >= 1");
  if (depth < 0) throw UsageError("depth must be >= 0");
  if (model.num_states() != game.num_states)
    throw UsageError("model and game disagree on state count");

  const int S = game.num_states;
  const int V = game.num_opponent_actions;
  auto count_hash = [](const SufficientStats& c) {
    return hash_bytes(c.raw().data(), c.raw().size() * sizeof(std::uint32_t));
  };
  // Beliefs per state, insertion-ordered; slot 0 is the prior. Count vectors
  // with zero mass on every particle are skipped: they cannot serve as basis
  // functions or integration weights.
  SampledBeliefSet out;
  out.per_state.resize(static_cast<std::size_t>(S));
  std::vector<std::unordered_set<std::uint64_t>> seen(static_cast<std::size_t>(S));
  const SampledBelief prior = make_sampled_belief(model, particles, SufficientStats(S, V));
  int full_states = 0;
  for (int s = 0; s < S; ++s) {
    out.per_state[static_cast<std::size_t>(s)].push_back(prior);
    seen[static_cast<std::size_t>(s)].insert(count_hash(prior.counts));
    if (per_state_count == 1) ++full_states;
  }

  const int max_rollouts = 16 * S;
  std::vector<double> lik_row(static_cast<std::size_t>(V));
  for (int r = 0; r < max_rollouts && full_states < S; ++r) {
    const BehaviorParams lambda = model.sample_prior(rng);
    SufficientStats psi(S, V);
    int s = game.initial_state;
    for (int t = 0; t <= depth; ++t) {
      auto& bucket = out.per_state[static_cast<std::size_t>(s)];
      if (static_cast<int>(bucket.size()) < per_state_count &&
          seen[static_cast<std::size_t>(s)].insert(count_hash(psi)).second) {
        try {
          bucket.push_back(make_sampled_belief(model, particles, psi));
          if (static_cast<int>(bucket.size()) == per_state_count) ++full_states;
        } catch (const DegenerateBeliefError&) {
          // no particle is consistent with these counts; keep sampling
        }
      }
      if (t == depth) break;
      const int u = rng.uniform_int(game.num_agent_actions);
      for (int v = 0; v < V; ++v) lik_row[static_cast<std::size_t>(v)] = model.likelihood(lambda, s, v);
      const int v = rng.categorical(lik_row);
      psi.add(s, v);
      const int s2 = rng.categorical(next_state_dist(game, s, u, v));
      s = s2;
    }
  }
  return out;
}

AlphaSet exact_backup(int s, const std::vector<AlphaSet>& prev, const StochasticGame& game,
                      const LikelihoodTable& ltab, std::int64_t cap) {
  game.check_state(s);
  const int S = game.num_states;
  const int U = game.num_agent_actions;
  const int V = game.num_opponent_actions;
  const int n = ltab.n;
  for (const AlphaSet& g : prev)
    if (g.empty()) throw UsageError("exact_backup: previous alpha sets must be nonempty");

  // Choice-vector radices, one slot per (s', v) pair, s' major.
  const int num_pairs = S * V;
  std::vector<std::int64_t> radix(static_cast<std::size_t>(num_pairs));
  long double predicted = static_cast<long double>(U);
  for (int s2 = 0; s2 < S; ++s2)
    for (int v = 0; v < V; ++v) {
      radix[static_cast<std::size_t>(s2 * V + v)] = static_cast<std::int64_t>(prev[static_cast<std::size_t>(s2)].size());
      predicted *= static_cast<long double>(prev[static_cast<std::size_t>(s2)].size());
    }
  if (predicted > static_cast<long double>(cap))
    throw ExplosionError("exact backup would enumerate " + std::to_string(static_cast<double>(predicted)) +
                         " alpha-functions (cap " + std::to_string(cap) + ")");
  std::int64_t num_t = 1;
  for (std::int64_t r : radix) num_t *= r;
  const std::int64_t total = static_cast<std::int64_t>(U) * num_t;

  AlphaSet out(static_cast<std::size_t>(total));
  par::for_index(total, [&](std::int64_t idx) {
    const int u = static_cast<int>(idx / num_t);
    std::int64_t code = idx % num_t;
    std::vector<std::int32_t> choice(static_cast<std::size_t>(num_pairs));
    for (int p = num_pairs - 1; p >= 0; --p) {
      choice[static_cast<std::size_t>(p)] = static_cast<std::int32_t>(code % radix[static_cast<std::size_t>(p)]);
      code /= radix[static_cast<std::size_t>(p)];
    }
    AlphaFunction a;
    a.action = u;
    a.prov_action = u;
    a.prov_choices = choice;
    a.term_count = static_cast<std::uint64_t>(V);
    a.evals.assign(static_cast<std::size_t>(n), 0.0);
    for (int j = 0; j < n; ++j) {
      double acc = 0.0;
      for (int v = 0; v < V; ++v) {
        double future = 0.0;
        for (int s2 = 0; s2 < S; ++s2) {
          const double p = game.transition(s, u, v, s2);
          if (p <= 0.0) continue;
          const AlphaFunction& child =
              prev[static_cast<std::size_t>(s2)][static_cast<std::size_t>(choice[static_cast<std::size_t>(s2 * V + v)])];
          future += p * child.evals[static_cast<std::size_t>(j)];
        }
        acc += ltab.row(s, v)[static_cast<std::size_t>(j)] *
               (game.reward(s, u, v) + game.discount * future);
      }
      a.evals[static_cast<std::size_t>(j)] = acc;
    }
    for (int s2 = 0; s2 < S; ++s2)
      for (int v = 0; v < V; ++v)
        a.term_count = saturating_add(
            a.term_count,
            prev[static_cast<std::size_t>(s2)][static_cast<std::size_t>(choice[static_cast<std::size_t>(s2 * V + v)])].term_count);
    out[static_cast<std::size_t>(idx)] = std::move(a);
  });
  return out;
}

namespace {

/// Maximum over the probability simplex of min_beta w' (alpha - beta): the
/// margin by which alpha pokes above the kept envelope. Nonpositive means
/// alpha is dominated everywhere. Dense two-phase tableau simplex with a
/// maintained reduced-cost row and Bland's rule; instances here are tiny.
/// Returns +inf (keep) if the solve falls outside its iteration budget.
double domination_gap(const std::vector<double>& alpha,
                      const std::vector<const std::vector<double>*>& kept) {
  if (kept.empty()) return std::numeric_limits<double>::infinity();
  const int n = static_cast<int>(alpha.size());
  const int K = static_cast<int>(kept.size());
  // Variables: w_1..w_n, dp, dm (delta = dp - dm), slacks s_1..s_K, artificial.
  // Rows: per beta: (beta - alpha).w + dp - dm + s = 0;  sum w + a = 1.
  const int nvars = n + 2;
  const int art = nvars + K;
  const int ncols = art + 1;
  const int m = K + 1;
  std::vector<double> tab(static_cast<std::size_t>(m) * (ncols + 1), 0.0);
  auto at = [&](int r, int c) -> double& { return tab[static_cast<std::size_t>(r) * (ncols + 1) + c]; };
  for (int r = 0; r < K; ++r) {
    const std::vector<double>& beta = *kept[static_cast<std::size_t>(r)];
    for (int j = 0; j < n; ++j) at(r, j) = beta[static_cast<std::size_t>(j)] - alpha[static_cast<std::size_t>(j)];
    at(r, n) = 1.0;
    at(r, n + 1) = -1.0;
    at(r, nvars + r) = 1.0;
  }
  for (int j = 0; j < n; ++j) at(K, j) = 1.0;
  at(K, art) = 1.0;
  at(K, ncols) = 1.0;

  std::vector<int> basis(static_cast<std::size_t>(m));
  for (int r = 0; r < K; ++r) basis[static_cast<std::size_t>(r)] = nvars + r;
  basis[static_cast<std::size_t>(K)] = art;

  constexpr double kEps = 1e-10;
  std::vector<double> red(static_cast<std::size_t>(ncols), 0.0);  // reduced costs
  std::vector<char> blocked(static_cast<std::size_t>(ncols), 0);
  double objective = 0.0;

  auto pivot = [&](int lr, int ec) {
    const double p = at(lr, ec);
    for (int c = 0; c <= ncols; ++c) at(lr, c) /= p;
    for (int r = 0; r < m; ++r) {
      if (r == lr) continue;
      const double f = at(r, ec);
      if (f == 0.0) continue;
      for (int c = 0; c <= ncols; ++c) at(r, c) -= f * at(lr, c);
    }
    const double rf = red[static_cast<std::size_t>(ec)];
    if (rf != 0.0) {
      for (int c = 0; c < ncols; ++c) red[static_cast<std::size_t>(c)] -= rf * at(lr, c);
      objective += rf * at(lr, ncols);
    }
    basis[static_cast<std::size_t>(lr)] = ec;
  };

  auto optimize = [&]() -> bool {  // false if iteration budget exhausted
    // Dantzig's rule for speed, switching to Bland's rule late to guarantee
    // termination on degenerate instances.
    constexpr int kBlandAfter = 600;
    for (int iter = 0; iter < 5000; ++iter) {
      int enter = -1;
      if (iter < kBlandAfter) {
        double best = kEps;
        for (int c = 0; c < ncols; ++c)
          if (!blocked[static_cast<std::size_t>(c)] && red[static_cast<std::size_t>(c)] > best) {
            best = red[static_cast<std::size_t>(c)];
            enter = c;
          }
      } else {
        for (int c = 0; c < ncols; ++c)
          if (!blocked[static_cast<std::size_t>(c)] && red[static_cast<std::size_t>(c)] > kEps) {
            enter = c;
            break;
          }
      }
      if (enter < 0) return true;
      int leave = -1;
      double best_ratio = 0.0;
      for (int r = 0; r < m; ++r) {
        const double coef = at(r, enter);
        if (coef > kEps) {
          const double ratio = at(r, ncols) / coef;
          if (leave < 0 || ratio < best_ratio - 1e-12 ||
              (ratio <= best_ratio + 1e-12 &&
               basis[static_cast<std::size_t>(r)] < basis[static_cast<std::size_t>(leave)])) {
            leave = r;
            best_ratio = ratio;
          }
        }
      }
      if (leave < 0) return true;  // unbounded; delta is data-bounded so treat as done
      pivot(leave, enter);
    }
    return false;
  };

  // Phase 1: maximize -artificial (drive it to zero). Reduced costs for
  // cost vector c with the initial basis (slacks cost 0, artificial cost -1).
  for (int c = 0; c < ncols; ++c) red[static_cast<std::size_t>(c)] = at(K, c);
  red[static_cast<std::size_t>(art)] = 0.0;
  objective = -at(K, ncols);
  if (!optimize()) return std::numeric_limits<double>::infinity();
  if (objective < -1e-7) return std::numeric_limits<double>::infinity();  // infeasible: keep

  // Pivot the artificial out if it lingers in the basis at level zero.
  for (int r = 0; r < m; ++r) {
    if (basis[static_cast<std::size_t>(r)] != art) continue;
    int col = -1;
    for (int c = 0; c < art; ++c)
      if (std::abs(at(r, c)) > 1e-9) {
        col = c;
        break;
      }
    if (col >= 0) pivot(r, col);
  }
  blocked[static_cast<std::size_t>(art)] = 1;

  // Phase 2: maximize dp - dm. Rebuild reduced costs against the current basis.
  std::vector<double> cost(static_cast<std::size_t>(ncols), 0.0);
  cost[static_cast<std::size_t>(n)] = 1.0;
  cost[static_cast<std::size_t>(n + 1)] = -1.0;
  for (int c = 0; c < ncols; ++c) red[static_cast<std::size_t>(c)] = cost[static_cast<std::size_t>(c)];
  objective = 0.0;
  for (int r = 0; r < m; ++r) {
    const double cb = cost[static_cast<std::size_t>(basis[static_cast<std::size_t>(r)])];
    if (cb == 0.0) continue;
    for (int c = 0; c < ncols; ++c) red[static_cast<std::size_t>(c)] -= cb * at(r, c);
    objective += cb * at(r, ncols);
  }
  if (!optimize()) return std::numeric_limits<double>::infinity();
  return objective;
}

}  // namespace

void prune_alpha_set(AlphaSet& set) {
  if (set.size() <= 1) return;
  // Bit-exact duplicate removal first (cross-sums repeat heavily).
  std::unordered_map<std::uint64_t, std::vector<std::size_t>> buckets;
  std::vector<std::size_t> alive;
  for (std::size_t i = 0; i < set.size(); ++i) {
    const std::uint64_t h = hash_bytes(set[i].evals.data(), set[i].evals.size() * sizeof(double));
    auto& bucket = buckets[h];
    bool dup = false;
    for (std::size_t j : bucket)
      if (set[j].evals == set[i].evals) {
        dup = true;
        break;
      }
    if (!dup) {
      bucket.push_back(i);
      alive.push_back(i);
    }
  }
  // Strong vectors first so the envelope filter converges near the minimal
  // set; deterministic order (mean descending, then lexicographic).
  std::sort(alive.begin(), alive.end(), [&](std::size_t a, std::size_t b) {
    double ma = 0.0, mb = 0.0;
    for (double x : set[a].evals) ma += x;
    for (double x : set[b].evals) mb += x;
    if (ma != mb) return ma > mb;
    return set[a].evals > set[b].evals;
  });

  const std::size_t n_evals = set[alive.front()].evals.size();
  std::vector<std::size_t> kept;
  std::vector<const std::vector<double>*> kept_evals;
  // Envelope values at cheap witness points (corners and the barycenter): a
  // candidate that beats the kept envelope at any witness is certainly kept,
  // skipping its LP.
  std::vector<double> corner_max(n_evals, -std::numeric_limits<double>::infinity());
  double mean_max = -std::numeric_limits<double>::infinity();
  for (std::size_t idx : alive) {
    const auto& e = set[idx].evals;
    double mean = 0.0;
    for (double x : e) mean += x;
    mean /= static_cast<double>(n_evals);
    bool wins_somewhere = kept.empty() || mean > mean_max + 1e-12;
    if (!wins_somewhere)
      for (std::size_t j = 0; j < n_evals; ++j)
        if (e[j] > corner_max[j] + 1e-12) {
          wins_somewhere = true;
          break;
        }
    bool dominated = false;
    if (!wins_somewhere) {
      // Cheap pointwise-dominance prefilter.
      for (std::size_t k : kept) {
        const auto& ke = set[k].evals;
        bool ge = true;
        for (std::size_t j = 0; j < n_evals; ++j)
          if (ke[j] < e[j]) {
            ge = false;
            break;
          }
        if (ge) {
          dominated = true;
          break;
        }
      }
      // Exact test: does alpha rise above the kept envelope anywhere on the
      // particle simplex?
      if (!dominated && domination_gap(e, kept_evals) <= 1e-12) dominated = true;
    }
    if (!dominated) {
      kept.push_back(idx);
      kept_evals.push_back(&set[idx].evals);
      for (std::size_t j = 0; j < n_evals; ++j) corner_max[j] = std::max(corner_max[j], e[j]);
      mean_max = std::max(mean_max, mean);
    }
  }
  std::sort(kept.begin(), kept.end());
  AlphaSet pruned;
  for (std::size_t idx : kept) pruned.push_back(std::move(set[idx]));
  set = std::move(pruned);
}

WeightedBackupResult backup_at_weight_vectors(std::span<const std::vector<double>> weights, int s,
                                              const std::vector<AlphaSet>& prev,
                                              const StochasticGame& game,
                                              const LikelihoodTable& ltab,
                                              const AlphaSet* current, double dedupe_tol) {
  game.check_state(s);
  if (weights.empty()) throw UsageError("backup: empty belief set");
  const int U = game.num_agent_actions;
  const int V = game.num_opponent_actions;
  const int n = ltab.n;
  const int B = static_cast<int>(weights.size());
  const double phi = game.discount;
  for (const AlphaSet& g : prev)
    if (g.empty()) throw UsageError("backup: previous alpha sets must be nonempty");

  const auto succ = successors_per_v(game, s);

  // Step 1: g_u(lambda_j) = sum_v r_s(u,v) p_s^v(lambda_j).
  std::vector<std::vector<double>> g_u(static_cast<std::size_t>(U),
                                       std::vector<double>(static_cast<std::size_t>(n), 0.0));
  for (int u = 0; u < U; ++u)
    for (int v = 0; v < V; ++v) {
      const double r = game.reward(s, u, v);
      const auto row = ltab.row(s, v);
      for (int j = 0; j < n; ++j)
        g_u[static_cast<std::size_t>(u)][static_cast<std::size_t>(j)] += r * row[static_cast<std::size_t>(j)];
    }

  WeightedBackupResult result;
  result.alphas.resize(static_cast<std::size_t>(B));
  result.values.assign(static_cast<std::size_t>(B), 0.0);

  // Steps 2-4 per belief: pick the best previous alpha per (v, s') under the
  // likelihood-weighted inner product, then the best action.
  par::for_index(B, [&](std::int64_t bi) {
    const std::vector<double>& w = weights[static_cast<std::size_t>(bi)];
    if (static_cast<int>(w.size()) != n) throw UsageError("backup: weight vector length mismatch");

    std::vector<double> wl(static_cast<std::size_t>(n));
    // best previous alpha per (v, s'): index and the inner product value.
    std::vector<std::vector<std::int32_t>> best_idx(static_cast<std::size_t>(V));
    std::vector<std::vector<double>> best_val(static_cast<std::size_t>(V));
    for (int v = 0; v < V; ++v) {
      const auto row = ltab.row(s, v);
      for (int j = 0; j < n; ++j) wl[static_cast<std::size_t>(j)] = w[static_cast<std::size_t>(j)] * row[static_cast<std::size_t>(j)];
      const auto& sv = succ[static_cast<std::size_t>(v)];
      best_idx[static_cast<std::size_t>(v)].resize(sv.size());
      best_val[static_cast<std::size_t>(v)].resize(sv.size());
      for (std::size_t k = 0; k < sv.size(); ++k) {
        const AlphaSet& gamma = prev[static_cast<std::size_t>(sv[k])];
        int arg = 0;
        double best = -std::numeric_limits<double>::infinity();
        for (std::size_t j2 = 0; j2 < gamma.size(); ++j2) {
          const double val = par::dot(wl, gamma[j2].evals);
          if (val > best) {
            best = val;
            arg = static_cast<int>(j2);
          }
        }
        best_idx[static_cast<std::size_t>(v)][k] = arg;
        best_val[static_cast<std::size_t>(v)][k] = best;
      }
    }

    // Step 3-4: score each u at this belief, lowest index wins ties.
    int best_u = 0;
    double best_score = -std::numeric_limits<double>::infinity();
    for (int u = 0; u < U; ++u) {
      double score = par::dot(w, g_u[static_cast<std::size_t>(u)]);
      for (int v = 0; v < V; ++v) {
        const auto& sv = succ[static_cast<std::size_t>(v)];
        for (std::size_t k = 0; k < sv.size(); ++k) {
          const double p = game.transition(s, u, v, sv[k]);
          if (p <= 0.0) continue;
          score += phi * p * best_val[static_cast<std::size_t>(v)][k];
        }
      }
      if (score > best_score) {
        best_score = score;
        best_u = u;
      }
    }

    // Assemble the winning alpha's per-particle evaluations (Eq. 11 with the
    // chosen indices).
    AlphaFunction a;
    a.action = best_u;
    a.prov_action = best_u;
    a.term_count = static_cast<std::uint64_t>(V);
    a.evals = g_u[static_cast<std::size_t>(best_u)];
    for (int v = 0; v < V; ++v) {
      const auto row = ltab.row(s, v);
      const auto& sv = succ[static_cast<std::size_t>(v)];
      for (std::size_t k = 0; k < sv.size(); ++k) {
        const double p = game.transition(s, best_u, v, sv[k]);
        const AlphaFunction& child =
            prev[static_cast<std::size_t>(sv[k])][static_cast<std::size_t>(best_idx[static_cast<std::size_t>(v)][k])];
        a.prov_choices.push_back(best_idx[static_cast<std::size_t>(v)][k]);
        a.term_count = saturating_add(a.term_count, child.term_count);
        if (p <= 0.0) continue;
        const double scale = phi * p;
        for (int j = 0; j < n; ++j)
          a.evals[static_cast<std::size_t>(j)] += scale * row[static_cast<std::size_t>(j)] * child.evals[static_cast<std::size_t>(j)];
      }
    }

    // Replace-if-better: keep the previous sweep's alpha when the fresh
    // backup does not improve this belief's value.
    if (current != nullptr && !current->empty()) {
      double old_best = -std::numeric_limits<double>::infinity();
      std::size_t old_arg = 0;
      for (std::size_t j2 = 0; j2 < current->size(); ++j2) {
        const double val = par::dot(w, (*current)[j2].evals);
        if (val > old_best) {
          old_best = val;
          old_arg = j2;
        }
      }
      if (old_best > best_score) {
        a = (*current)[old_arg];
        best_score = old_best;
      }
    }

    result.values[static_cast<std::size_t>(bi)] = best_score;
    result.alphas[static_cast<std::size_t>(bi)] = std::move(a);
  });

  // Duplicate elimination (identical within tolerance), order-preserving.
  AlphaSet dedup;
  for (auto& a : result.alphas) {
    bool dup = false;
    for (const auto& kept : dedup) {
      double max_diff = 0.0;
      for (std::size_t j = 0; j < a.evals.size(); ++j)
        max_diff = std::max(max_diff, std::abs(a.evals[j] - kept.evals[j]));
      if (max_diff <= dedupe_tol) {
        dup = true;
        break;
      }
    }
    if (!dup) dedup.push_back(std::move(a));
  }
  result.alphas = std::move(dedup);
  return result;
}

WeightedBackupResult pb_backup(const std::vector<SampledBelief>& beliefs, int s,
                               const std::vector<AlphaSet>& prev, const StochasticGame& game,
                               const LikelihoodTable& ltab, const AlphaSet* current,
                               double dedupe_tol) {
  if (beliefs.empty()) throw UsageError("pb_backup: B_s must be nonempty");
  std::vector<std::vector<double>> w;
  w.reserve(beliefs.size());
  for (const auto& b : beliefs) {
    if (!(b.phi_sum > 0.0)) throw DegenerateBeliefError("pb_backup: degenerate belief");
    w.push_back(b.weights);
  }
  return backup_at_weight_vectors(w, s, prev, game, ltab, current, dedupe_tol);
}

BeliefBasis build_belief_basis(const std::vector<SampledBelief>& beliefs) {
  BeliefBasis basis;
  basis.size = static_cast<int>(beliefs.size());
  const int B = basis.size;
  basis.inner.resize(static_cast<std::size_t>(B) * B);
  par::for_index(static_cast<std::int64_t>(B) * B, [&](std::int64_t ik) {
    const int i = static_cast<int>(ik / B);
    const int k = static_cast<int>(ik % B);
    basis.inner[static_cast<std::size_t>(ik)] =
        mc_inner(beliefs[static_cast<std::size_t>(i)].phi, beliefs[static_cast<std::size_t>(k)]);
  });
  basis.gram.assign(static_cast<std::size_t>(B) * B, 0.0);
  for (int j = 0; j < B; ++j)
    for (int i = 0; i < B; ++i) {
      double acc = 0.0;
      for (int k = 0; k < B; ++k)
        acc += basis.inner[static_cast<std::size_t>(i) * B + k] * basis.inner[static_cast<std::size_t>(j) * B + k];
      basis.gram[static_cast<std::size_t>(j) * B + i] = acc;
    }
  return basis;
}

std::vector<double> project_alpha(AlphaFunction& alpha, const std::vector<SampledBelief>& beliefs,
                                  const BeliefBasis& basis) {
  const int B = basis.size;
  if (B < 1 || static_cast<int>(beliefs.size()) != B) throw UsageError("project_alpha: bad basis");

  Eigen::VectorXd alpha_vals(B);
  for (int k = 0; k < B; ++k) alpha_vals[k] = mc_inner(alpha.evals, beliefs[static_cast<std::size_t>(k)]);

  Eigen::MatrixXd A(B, B);
  for (int j = 0; j < B; ++j)
    for (int i = 0; i < B; ++i) A(j, i) = basis.gram[static_cast<std::size_t>(j) * B + i];
  Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> M(
      basis.inner.data(), B, B);
  Eigen::VectorXd d = M * alpha_vals;

  Eigen::VectorXd x = A.ldlt().solve(d);
  const double dnorm = std::max(d.norm(), 1e-300);
  if (!x.allFinite() || (A * x - d).norm() > 1e-8 * dnorm) {
    const double ridge = 1e-8 * A.trace() / B;
    Eigen::MatrixXd Ar = A + ridge * Eigen::MatrixXd::Identity(B, B);
    x = Ar.ldlt().solve(d);
  }

  Eigen::VectorXd fitted = M.transpose() * x;
  alpha.projection_residual = 0.5 * (alpha_vals - fitted).squaredNorm();
  alpha.coeffs.assign(x.data(), x.data() + B);
  return alpha.coeffs;
}

namespace {

AlphaSet zero_alpha_set(int n) {
  AlphaFunction zero;
  zero.evals.assign(static_cast<std::size_t>(n), 0.0);
  return AlphaSet{zero};
}

}  // namespace

AlphaSet exact_backup_pruned(int s, const std::vector<AlphaSet>& prev, const StochasticGame& game,
                             const LikelihoodTable& ltab, std::int64_t cap) {
  const int S = game.num_states;
  const int U = game.num_agent_actions;
  const int V = game.num_opponent_actions;
  const int n = ltab.n;
  AlphaSet out;
  for (int u = 0; u < U; ++u) {
    std::vector<std::vector<double>> current;
    std::vector<double> g(static_cast<std::size_t>(n), 0.0);
    for (int v = 0; v < V; ++v) {
      const double r = game.reward(s, u, v);
      const auto row = ltab.row(s, v);
      for (int j = 0; j < n; ++j) g[static_cast<std::size_t>(j)] += r * row[static_cast<std::size_t>(j)];
    }
    current.push_back(std::move(g));
    for (int s2 = 0; s2 < S; ++s2)
      for (int v = 0; v < V; ++v) {
        const double p = game.transition(s, u, v, s2);
        if (p <= 0.0) continue;  // the pair contributes only the zero vector
        const AlphaSet& gamma = prev[static_cast<std::size_t>(s2)];
        const auto row = ltab.row(s, v);
        const double scale = game.discount * p;
        if (static_cast<std::int64_t>(current.size()) * static_cast<std::int64_t>(gamma.size()) > cap)
          throw ExplosionError("exact backup cross-sum exceeded cap even with pruning");
        std::vector<std::vector<double>> next;
        next.reserve(current.size() * gamma.size());
        for (const auto& base : current)
          for (const auto& child : gamma) {
            std::vector<double> e(static_cast<std::size_t>(n));
            for (int j = 0; j < n; ++j)
              e[static_cast<std::size_t>(j)] =
                  base[static_cast<std::size_t>(j)] +
                  scale * row[static_cast<std::size_t>(j)] * child.evals[static_cast<std::size_t>(j)];
            next.push_back(std::move(e));
          }
        AlphaSet tmp(next.size());
        for (std::size_t i = 0; i < next.size(); ++i) tmp[i].evals = std::move(next[i]);
        prune_alpha_set(tmp);
        current.clear();
        for (auto& a : tmp) current.push_back(std::move(a.evals));
      }
    for (auto& e : current) {
      AlphaFunction a;
      a.evals = std::move(e);
      a.action = u;
      a.prov_action = u;
      out.push_back(std::move(a));
    }
  }
  prune_alpha_set(out);
  return out;
}

PolicyBundle plan(const StochasticGame& game, const BehaviorModel& model,
                  const ParticleSet& particles, const PlanConfig& config) {
  game.validate();
  if (config.horizon < 0) throw UsageError("plan: horizon must be >= 0");
  if (particles.n() < 1) throw UsageError("plan: empty particle set");
  if (model.num_states() != game.num_states)
    throw UsageError("plan: model and game disagree on state count");

  const int S = game.num_states;
  const int n = particles.n();
  using clock = std::chrono::steady_clock;

  // Shifting rewards to be nonnegative keeps replace-if-better sound and the
  // per-belief values monotone; the argmax is unchanged because every alpha
  // of the same sweep absorbs the same constant.
  StochasticGame shifted = game;
  double shift = 0.0;
  if (config.shift_rewards) {
    const double r_min = *std::min_element(game.reward_table.begin(), game.reward_table.end());
    if (r_min < 0.0) {
      shift = -r_min;
      for (double& r : shifted.reward_table) r += shift;
    }
  }

  Rng belief_rng(derive_seed(config.seed, 0x62656c69ULL));
  const LikelihoodTable ltab = build_likelihood_table(model, particles);
  SampledBeliefSet beliefs = sample_reachable_beliefs(shifted, model, particles,
                                                      config.beliefs_per_state, config.sample_depth,
                                                      belief_rng);

  std::vector<BeliefBasis> bases(static_cast<std::size_t>(S));
  if (config.mode != PolicyBundle::Variant::kDiscrete) {
    par::for_index(S, [&](std::int64_t s) {
      bases[static_cast<std::size_t>(s)] =
          build_belief_basis(beliefs.per_state[static_cast<std::size_t>(s)]);
    });
  }

  std::vector<AlphaSet> gamma(static_cast<std::size_t>(S), zero_alpha_set(n));
  std::vector<std::vector<double>> values(static_cast<std::size_t>(S));
  for (int s = 0; s < S; ++s)
    values[static_cast<std::size_t>(s)].assign(beliefs.per_state[static_cast<std::size_t>(s)].size(), 0.0);

  PolicyBundle bundle;
  bundle.variant = config.mode;
  bundle.env_name = config.env_name.empty() ? game.name : config.env_name;
  bundle.model_name = model.name();
  bundle.game_hash = game.hash();
  bundle.horizon = config.horizon;
  bundle.seed = config.seed;
  bundle.discount = game.discount;
  bundle.reward_shift = shift;
  bundle.sup_change_tol = config.sup_change_tol;
  bundle.dedupe_tol = config.dedupe_tol;
  bundle.particles = particles;
  bundle.param_dim = particles.n() > 0 ? static_cast<std::int32_t>(particles.particles[0].values.size()) : 0;

  const double phi = game.discount;
  double shift_correction_prev = 0.0;
  int sweeps = 0;
  for (int k = 1; k <= config.horizon; ++k) {
    const auto t0 = clock::now();
    std::vector<AlphaSet> next(static_cast<std::size_t>(S));
    std::vector<std::vector<double>> next_values(static_cast<std::size_t>(S));
    par::for_index(S, [&](std::int64_t si) {
      const int s = static_cast<int>(si);
      const auto& bs = beliefs.per_state[static_cast<std::size_t>(s)];
      if (config.mode == PolicyBundle::Variant::kExact) {
        AlphaSet cand = config.prune_exact
                            ? exact_backup_pruned(s, gamma, shifted, ltab, config.explosion_cap)
                            : exact_backup(s, gamma, shifted, ltab, config.explosion_cap);
        if (config.prune_exact == false) prune_alpha_set(cand);
        std::vector<double> vals(bs.size());
        for (std::size_t i = 0; i < bs.size(); ++i) {
          double best = -std::numeric_limits<double>::infinity();
          for (const auto& a : cand) best = std::max(best, mc_inner(a.evals, bs[i]));
          vals[i] = best;
        }
        next[static_cast<std::size_t>(s)] = std::move(cand);
        next_values[static_cast<std::size_t>(s)] = std::move(vals);
      } else if (config.mode == PolicyBundle::Variant::kDiscrete) {
        std::vector<std::vector<double>> w;
        w.reserve(bs.size());
        for (const auto& b : bs) w.push_back(b.weights);
        auto res = backup_at_weight_vectors(w, s, gamma, shifted, ltab,
                                            config.keep_better ? &gamma[static_cast<std::size_t>(s)] : nullptr,
                                            config.dedupe_tol);
        next[static_cast<std::size_t>(s)] = std::move(res.alphas);
        next_values[static_cast<std::size_t>(s)] = std::move(res.values);
      } else {
        auto res = pb_backup(bs, s, gamma, shifted, ltab,
                             config.keep_better ? &gamma[static_cast<std::size_t>(s)] : nullptr,
                             config.dedupe_tol);
        // Projection onto this state's own basis after every point-based sweep.
        for (auto& a : res.alphas)
          project_alpha(a, bs, bases[static_cast<std::size_t>(s)]);
        next[static_cast<std::size_t>(s)] = std::move(res.alphas);
        next_values[static_cast<std::size_t>(s)] = std::move(res.values);
      }
    });

    // Sup-change over all sampled beliefs, in unshifted units: every alpha of
    // sweep k absorbs shift * sum_{i<k} phi^i, which is subtracted out.
    const double shift_correction = shift == 0.0 ? 0.0 : shift * (1.0 - std::pow(phi, k)) / (1.0 - phi);
    double sup_change = 0.0;
    for (int s = 0; s < S; ++s)
      for (std::size_t i = 0; i < next_values[static_cast<std::size_t>(s)].size(); ++i) {
        const double before = values[static_cast<std::size_t>(s)][i] - shift_correction_prev;
        const double after = next_values[static_cast<std::size_t>(s)][i] - shift_correction;
        sup_change = std::max(sup_change, std::abs(after - before));
      }
    gamma = std::move(next);
    values = std::move(next_values);
    bundle.sup_changes.push_back(sup_change);
    shift_correction_prev = shift_correction;
    sweeps = k;
    if (config.sweep_seconds != nullptr)
      config.sweep_seconds->push_back(std::chrono::duration<double>(clock::now() - t0).count());
    if (sup_change < config.sup_change_tol) break;
  }
  bundle.sweeps_done = sweeps;

  // Final projection pass so stored coefficients are consistent for every
  // surviving alpha (replace-if-better can retain earlier-sweep members).
  bundle.beliefs = std::move(beliefs);
  bundle.policy.resize(static_cast<std::size_t>(S));
  par::for_index(S, [&](std::int64_t si) {
    const int s = static_cast<int>(si);
    const auto& bs = bundle.beliefs.per_state[static_cast<std::size_t>(s)];
    const int B = static_cast<int>(bs.size());
    AlphaSet& set = gamma[static_cast<std::size_t>(s)];
    StatePolicy& sp = bundle.policy[static_cast<std::size_t>(s)];
    const int A = static_cast<int>(set.size());
    sp.actions.resize(static_cast<std::size_t>(A));
    sp.evals.resize(static_cast<std::size_t>(A) * n);
    sp.z_table.resize(static_cast<std::size_t>(A) * n);
    if (config.mode != PolicyBundle::Variant::kDiscrete)
      sp.coeffs.resize(static_cast<std::size_t>(A) * B);
    double best_prior = -std::numeric_limits<double>::infinity();
    for (int a = 0; a < A; ++a) {
      AlphaFunction& alpha = set[static_cast<std::size_t>(a)];
      sp.actions[static_cast<std::size_t>(a)] = alpha.action;
      std::copy(alpha.evals.begin(), alpha.evals.end(), sp.evals.begin() + static_cast<std::ptrdiff_t>(a) * n);
      if (config.mode == PolicyBundle::Variant::kDiscrete) {
        // Indicator basis: the per-particle values are the coefficients.
        std::copy(alpha.evals.begin(), alpha.evals.end(),
                  sp.z_table.begin() + static_cast<std::ptrdiff_t>(a) * n);
      } else {
        project_alpha(alpha, bs, bases[static_cast<std::size_t>(s)]);
        std::copy(alpha.coeffs.begin(), alpha.coeffs.end(),
                  sp.coeffs.begin() + static_cast<std::ptrdiff_t>(a) * B);
        // Precompute sum_i c_i Phi_s^i(lambda_j): the online O(n) table.
        for (int j = 0; j < n; ++j) {
          double acc = 0.0;
          for (int i = 0; i < B; ++i)
            acc += alpha.coeffs[static_cast<std::size_t>(i)] * bs[static_cast<std::size_t>(i)].phi[static_cast<std::size_t>(j)];
          sp.z_table[static_cast<std::size_t>(a) * n + static_cast<std::size_t>(j)] = acc;
        }
      }
      const double at_prior = mc_inner(alpha.evals, bs[0]);
      if (at_prior > best_prior) {
        best_prior = at_prior;
        sp.prior_action = alpha.action;
      }
    }
  });
  return bundle;
}

namespace {

ActionSelection select_from_scaled(const PolicyBundle& bundle, std::span<const double> phi_scaled,
                                   double denom, int state, bool degenerate) {
  const StatePolicy& sp = bundle.policy[static_cast<std::size_t>(state)];
  const int n = bundle.particles.n();
  const int A = sp.num_alphas();
  if (A == 0) throw UsageError("select_action: state has no alpha-functions");
  ActionSelection out;
  out.degenerate = degenerate;
  out.scores.resize(static_cast<std::size_t>(A));
  int best = 0;
  double best_score = -std::numeric_limits<double>::infinity();
  for (int a = 0; a < A; ++a) {
    const double num = par::dot(phi_scaled, {sp.z_table.data() + static_cast<std::size_t>(a) * n,
                                             static_cast<std::size_t>(n)});
    const double score = num / denom;
    out.scores[static_cast<std::size_t>(a)] = score;
    if (score > best_score) {
      best_score = score;
      best = a;
    }
  }
  out.action = sp.actions[static_cast<std::size_t>(best)];
  return out;
}

}  // namespace

ActionSelection select_action_logphi(const PolicyBundle& bundle, std::span<const double> log_phi,
                                     int state) {
  const int n = bundle.particles.n();
  if (static_cast<int>(log_phi.size()) != n) throw UsageError("select_action: log-phi length mismatch");
  if (state < 0 || state >= static_cast<int>(bundle.policy.size()))
    throw UsageError("select_action: state out of range");
  double max_log = -std::numeric_limits<double>::infinity();
  for (double lp : log_phi) max_log = std::max(max_log, lp);
  std::vector<double> scaled(static_cast<std::size_t>(n));
  bool degenerate = false;
  if (max_log == -std::numeric_limits<double>::infinity()) {
    // Belief has no mass on any particle: fall back to the prior weights.
    degenerate = true;
    std::fill(scaled.begin(), scaled.end(), 1.0);
  } else {
    par::for_index(n, [&](std::int64_t j) {
      scaled[static_cast<std::size_t>(j)] = std::exp(log_phi[static_cast<std::size_t>(j)] - max_log);
    });
  }
  const double denom = par::sum(scaled);
  return select_from_scaled(bundle, scaled, denom, state, degenerate);
}

ActionSelection select_action(const PolicyBundle& bundle, const BehaviorModel& model,
                              const SufficientStats& psi, int state) {
  const int n = bundle.particles.n();
  std::vector<double> log_phi(static_cast<std::size_t>(n));
  const auto nz = psi.nonzero();
  par::for_index(n, [&](std::int64_t j) {
    const BehaviorParams& lambda = bundle.particles.particles[static_cast<std::size_t>(j)];
    double acc = 0.0;
    for (const auto& [s, v, c] : nz) {
      const double p = model.likelihood(lambda, s, v);
      if (p <= 0.0) {
        acc = -std::numeric_limits<double>::infinity();
        break;
      }
      acc += static_cast<double>(c) * std::log(p);
    }
    log_phi[static_cast<std::size_t>(j)] = acc;
  });
  return select_action_logphi(bundle, log_phi, state);
}

}  // namespace ibrl
