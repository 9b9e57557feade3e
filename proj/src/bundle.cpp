#include "ibrl/bundle.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

namespace ibrl {

static_assert(std::endian::native == std::endian::little,
              "bundle format is little-endian; byte swapping is not implemented");

namespace {

constexpr char kMagic[4] = {'I', 'B', 'R', 'L'};
constexpr std::uint32_t kVersion = 1;

template <class T>
void put(std::ostream& out, const T& x) {
  out.write(reinterpret_cast<const char*>(&x), sizeof x);
}

template <class T>
T get(std::istream& in) {
  T x{};
  in.read(reinterpret_cast<char*>(&x), sizeof x);
  if (!in) throw IoError("bundle: truncated file");
  return x;
}

void put_string(std::ostream& out, const std::string& s) {
  put<std::uint32_t>(out, static_cast<std::uint32_t>(s.size()));
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string get_string(std::istream& in) {
  const auto len = get<std::uint32_t>(in);
  if (len > (1u << 20)) throw IoError("bundle: implausible string length");
  std::string s(len, '\0');
  in.read(s.data(), len);
  if (!in) throw IoError("bundle: truncated string");
  return s;
}

void put_doubles(std::ostream& out, const std::vector<double>& v) {
  put<std::uint64_t>(out, static_cast<std::uint64_t>(v.size()));
  out.write(reinterpret_cast<const char*>(v.data()),
            static_cast<std::streamsize>(v.size() * sizeof(double)));
}

std::vector<double> get_doubles(std::istream& in) {
  const auto len = get<std::uint64_t>(in);
  std::vector<double> v(static_cast<std::size_t>(len));
  in.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(len * sizeof(double)));
  if (!in) throw IoError("bundle: truncated array");
  return v;
}

void put_i32s(std::ostream& out, const std::vector<std::int32_t>& v) {
  put<std::uint64_t>(out, static_cast<std::uint64_t>(v.size()));
  out.write(reinterpret_cast<const char*>(v.data()),
            static_cast<std::streamsize>(v.size() * sizeof(std::int32_t)));
}

std::vector<std::int32_t> get_i32s(std::istream& in) {
  const auto len = get<std::uint64_t>(in);
  std::vector<std::int32_t> v(static_cast<std::size_t>(len));
  in.read(reinterpret_cast<char*>(v.data()),
          static_cast<std::streamsize>(len * sizeof(std::int32_t)));
  if (!in) throw IoError("bundle: truncated array");
  return v;
}

}  // namespace

void write_bundle(const PolicyBundle& bundle, std::ostream& out) {
  out.write(kMagic, 4);
  put<std::uint32_t>(out, kVersion);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(bundle.variant));
  put<std::uint64_t>(out, bundle.game_hash);
  put<std::int32_t>(out, bundle.horizon);
  put<std::int32_t>(out, bundle.sweeps_done);
  put<std::uint64_t>(out, bundle.seed);
  put<double>(out, bundle.discount);
  put<double>(out, bundle.reward_shift);
  put<double>(out, bundle.sup_change_tol);
  put<double>(out, bundle.dedupe_tol);
  put_string(out, bundle.env_name);
  put_string(out, bundle.model_name);

  put<std::uint64_t>(out, bundle.particles.seed);
  put<std::int32_t>(out, bundle.particles.n());
  put<std::int32_t>(out, bundle.param_dim);
  for (const auto& p : bundle.particles.particles) {
    if (static_cast<std::int32_t>(p.values.size()) != bundle.param_dim)
      throw IoError("bundle: inconsistent particle dimension");
    out.write(reinterpret_cast<const char*>(p.values.data()),
              static_cast<std::streamsize>(p.values.size() * sizeof(double)));
  }
  put_doubles(out, bundle.sup_changes);

  const auto S = static_cast<std::int32_t>(bundle.policy.size());
  put<std::int32_t>(out, S);
  for (std::int32_t s = 0; s < S; ++s) {
    const auto& beliefs = bundle.beliefs.per_state[static_cast<std::size_t>(s)];
    put<std::int32_t>(out, static_cast<std::int32_t>(beliefs.size()));
    for (const auto& b : beliefs) {
      put<std::int32_t>(out, b.counts.num_states());
      put<std::int32_t>(out, b.counts.num_opponent_actions());
      const auto nz = b.counts.nonzero();
      put<std::uint32_t>(out, static_cast<std::uint32_t>(nz.size()));
      for (const auto& [cs, cv, c] : nz) {
        put<std::int32_t>(out, cs);
        put<std::int32_t>(out, cv);
        put<std::uint32_t>(out, c);
      }
      put<double>(out, b.log_scale);
      put_doubles(out, b.phi);
    }
    const auto& sp = bundle.policy[static_cast<std::size_t>(s)];
    put_i32s(out, sp.actions);
    put<std::int32_t>(out, sp.prior_action);
    put_doubles(out, sp.coeffs);
    put_doubles(out, sp.z_table);
    put_doubles(out, sp.evals);
  }
  if (!out) throw IoError("bundle: write failed");
}

PolicyBundle read_bundle(std::istream& in) {
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kMagic, 4) != 0) throw IoError("bundle: bad magic");
  const auto version = get<std::uint32_t>(in);
  if (version != kVersion) throw IoError("bundle: unsupported version " + std::to_string(version));

  PolicyBundle b;
  b.variant = static_cast<PolicyBundle::Variant>(get<std::uint32_t>(in));
  b.game_hash = get<std::uint64_t>(in);
  b.horizon = get<std::int32_t>(in);
  b.sweeps_done = get<std::int32_t>(in);
  b.seed = get<std::uint64_t>(in);
  b.discount = get<double>(in);
  b.reward_shift = get<double>(in);
  b.sup_change_tol = get<double>(in);
  b.dedupe_tol = get<double>(in);
  b.env_name = get_string(in);
  b.model_name = get_string(in);

  b.particles.seed = get<std::uint64_t>(in);
  const auto n = get<std::int32_t>(in);
  b.param_dim = get<std::int32_t>(in);
  if (n < 0 || b.param_dim < 0) throw IoError("bundle: bad particle header");
  b.particles.particles.resize(static_cast<std::size_t>(n));
  for (auto& p : b.particles.particles) {
    p.values.resize(static_cast<std::size_t>(b.param_dim));
    in.read(reinterpret_cast<char*>(p.values.data()),
            static_cast<std::streamsize>(p.values.size() * sizeof(double)));
    if (!in) throw IoError("bundle: truncated particles");
  }
  b.sup_changes = get_doubles(in);

  const auto S = get<std::int32_t>(in);
  if (S < 0) throw IoError("bundle: bad state count");
  b.beliefs.per_state.resize(static_cast<std::size_t>(S));
  b.policy.resize(static_cast<std::size_t>(S));
  for (std::int32_t s = 0; s < S; ++s) {
    const auto B = get<std::int32_t>(in);
    auto& beliefs = b.beliefs.per_state[static_cast<std::size_t>(s)];
    beliefs.resize(static_cast<std::size_t>(B));
    for (auto& belief : beliefs) {
      const auto psi_s = get<std::int32_t>(in);
      const auto psi_v = get<std::int32_t>(in);
      belief.counts = SufficientStats(psi_s, psi_v);
      const auto nnz = get<std::uint32_t>(in);
      for (std::uint32_t i = 0; i < nnz; ++i) {
        const auto cs = get<std::int32_t>(in);
        const auto cv = get<std::int32_t>(in);
        const auto c = get<std::uint32_t>(in);
        belief.counts.add(cs, cv, c);
      }
      belief.log_scale = get<double>(in);
      belief.phi = get_doubles(in);
      belief.phi_sum = 0.0;
      for (double x : belief.phi) belief.phi_sum += x;
      belief.eta = belief.phi.empty() ? 0.0 : static_cast<double>(belief.phi.size()) / belief.phi_sum;
      belief.weights.resize(belief.phi.size());
      for (std::size_t j = 0; j < belief.phi.size(); ++j)
        belief.weights[j] = belief.phi[j] / belief.phi_sum;
    }
    auto& sp = b.policy[static_cast<std::size_t>(s)];
    sp.actions = get_i32s(in);
    sp.prior_action = get<std::int32_t>(in);
    sp.coeffs = get_doubles(in);
    sp.z_table = get_doubles(in);
    sp.evals = get_doubles(in);
  }
  return b;
}

void save_bundle(const PolicyBundle& bundle, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open for writing: " + path);
  write_bundle(bundle, out);
}

PolicyBundle load_bundle(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open for reading: " + path);
  return read_bundle(in);
}

std::string describe_bundle(const PolicyBundle& b) {
  std::ostringstream os;
  const char* variant = b.variant == PolicyBundle::Variant::kPointBased ? "point-based"
                        : b.variant == PolicyBundle::Variant::kExact    ? "exact"
                                                                        : "discrete";
  os << "env: " << b.env_name << "\n";
  os << "model: " << b.model_name << "\n";
  os << "variant: " << variant << "\n";
  os << "game hash: " << std::hex << b.game_hash << std::dec << "\n";
  os << "horizon: " << b.horizon << " (sweeps done: " << b.sweeps_done << ")\n";
  os << "seed: " << b.seed << " (particle seed: " << b.particles.seed << ")\n";
  os << "particles: " << b.particles.n() << " x " << b.param_dim << "\n";
  os << "discount: " << b.discount << ", reward shift: " << b.reward_shift << "\n";
  os << "states: " << b.policy.size() << "\n";
  std::size_t total_alphas = 0, total_beliefs = 0;
  for (std::size_t s = 0; s < b.policy.size(); ++s) {
    total_alphas += b.policy[s].actions.size();
    total_beliefs += b.beliefs.per_state[s].size();
  }
  os << "beliefs: " << total_beliefs << " total, alphas: " << total_alphas << " total\n";
  if (!b.sup_changes.empty())
    os << "final sup-change: " << b.sup_changes.back() << " after " << b.sup_changes.size()
       << " sweeps\n";
  return os.str();
}

}  // namespace ibrl
