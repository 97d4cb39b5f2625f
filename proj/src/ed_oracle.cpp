#include "kondo_eof/ed_oracle.hpp"

#include "kondo_eof/two_qubit.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <limits>
#include <map>
#include <random>
#include <unordered_map>

namespace kondo_eof {

namespace {

using u64 = std::uint64_t;

constexpr std::size_t kSectorCap = 6000;

int fermions_below(u64 state, int bit) {
  return std::popcount(state & ((u64(1) << bit) - 1) & ~u64(1));
}

// c_bit |state>; returns false if it vanishes
bool annihilate(u64& state, int bit, double& sign) {
  if (!((state >> bit) & 1)) return false;
  if (fermions_below(state, bit) % 2) sign = -sign;
  state ^= u64(1) << bit;
  return true;
}

bool create(u64& state, int bit, double& sign) {
  if ((state >> bit) & 1) return false;
  if (fermions_below(state, bit) % 2) sign = -sign;
  state ^= u64(1) << bit;
  return true;
}

}  // namespace

QN FockSpace::qn(u64 state) const {
  QN q;
  q.sz2 = (state & 1) ? -1 : 1;
  int occ = 0;
  for (int n = 0; n < sites; ++n)
    for (int a = 0; a < channels; ++a) {
      const int up = (state >> bit(n, 2 * a)) & 1, dn = (state >> bit(n, 2 * a + 1)) & 1;
      q.sz2 += up - dn;
      occ += up + dn;
    }
  q.charge = occ - channels * sites;
  return q;
}

std::vector<double> EdSpectrum::relative() const {
  std::vector<double> e;
  for (const auto& s : sectors)
    for (int i = 0; i < s.energies.size(); ++i) e.push_back(s.energies(i) - ground);
  std::sort(e.begin(), e.end());
  return e;
}

EdSpectrum exact_spectrum(const WilsonChain& chain, const ModelSpec& spec, int last_site, u64 cap) {
  validate(spec);
  if (last_site < 0 || last_site > chain.N) throw std::invalid_argument("site out of chain range");
  EdSpectrum ed;
  ed.space.channels = spec.channels;
  ed.space.sites = last_site + 1;
  const FockSpace& fs = ed.space;
  if (fs.modes() > 62 || fs.dim() > cap) throw SizeError("Fock space exceeds the size cap");

  std::map<QN, std::vector<u64>> by_qn;
  for (u64 s = 0; s < fs.dim(); ++s) by_qn[fs.qn(s)].push_back(s);

  ed.ground = std::numeric_limits<double>::infinity();
  for (auto& [q, states] : by_qn) {
    if (states.size() > kSectorCap) throw SizeError("symmetry sector too large for dense solve");
    std::unordered_map<u64, int> index;
    for (int i = 0; i < static_cast<int>(states.size()); ++i) index[states[i]] = i;
    const int d = static_cast<int>(states.size());
    Eigen::MatrixXd H = Eigen::MatrixXd::Zero(d, d);
    auto add = [&](u64 to, int from, double v) { H(index.at(to), from) += v; };
    for (int i = 0; i < d; ++i) {
      const u64 s = states[i];
      const double Sz = (s & 1) ? -0.5 : 0.5;
      for (int a = 0; a < spec.channels; ++a) {
        const int up = fs.bit(0, 2 * a), dn = fs.bit(0, 2 * a + 1);
        const double sz = 0.5 * (double((s >> up) & 1) - double((s >> dn) & 1));
        H(i, i) += spec.J * Sz * sz;
        // S+ s-: impurity down -> up, bath up -> down
        if (s & 1) {
          u64 t = s;
          double sg = 1.0;
          if (annihilate(t, up, sg) && create(t, dn, sg)) add(t & ~u64(1), i, 0.5 * spec.J * sg);
        } else {
          u64 t = s;
          double sg = 1.0;
          if (annihilate(t, dn, sg) && create(t, up, sg)) add(t | u64(1), i, 0.5 * spec.J * sg);
        }
      }
      for (int n = 0; n < last_site; ++n)
        for (int k = 0; k < 2 * spec.channels; ++k) {
          const double tn = chain.hoppings[n];
          for (int dir = 0; dir < 2; ++dir) {
            const int from = fs.bit(dir ? n : n + 1, k), to = fs.bit(dir ? n + 1 : n, k);
            u64 t = s;
            double sg = 1.0;
            if (annihilate(t, from, sg) && create(t, to, sg)) add(t, i, tn * sg);
          }
        }
    }
    EdSector sec;
    sec.qn = q;
    sec.states = std::move(states);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(H);
    sec.energies = es.eigenvalues();
    sec.vectors = es.eigenvectors();
    ed.ground = std::min(ed.ground, sec.energies(0));
    ed.sectors.push_back(std::move(sec));
  }
  return ed;
}

Eigen::MatrixXd thermal_density(const EdSpectrum& ed, double T) {
  const u64 dim = ed.space.dim();
  if (dim > 4096) throw SizeError("dense density matrix too large");
  Eigen::MatrixXd rho = Eigen::MatrixXd::Zero(dim, dim);
  double z = 0.0;
  for (const auto& s : ed.sectors) {
    for (int c = 0; c < s.energies.size(); ++c) {
      const double e = s.energies(c) - ed.ground;
      const double w = T > 0 ? std::exp(-e / T) : (e < 1e-9 ? 1.0 : 0.0);
      if (w == 0.0) continue;
      z += w;
      for (size_t a = 0; a < s.states.size(); ++a)
        for (size_t b = 0; b < s.states.size(); ++b)
          rho(s.states[a], s.states[b]) += w * s.vectors(a, c) * s.vectors(b, c);
    }
  }
  return rho / z;
}

namespace {

struct SplitTerm {
  u64 in;  // labels in the original layout (impurity bit kept)
  u64 out;
  double amp;
};

std::vector<SplitTerm> split_state(u64 s, const FockSpace& fs, const std::vector<double>& p) {
  std::vector<int> occ;
  for (int b = 1; b <= fs.modes(); ++b)
    if ((s >> b) & 1) occ.push_back(b);
  std::vector<SplitTerm> out;
  const int k = static_cast<int>(occ.size());
  for (u64 choice = 0; choice < (u64(1) << k); ++choice) {
    double amp = 1.0;
    u64 in = s & 1, ot = 0;
    int outs_seen = 0, swaps = 0;
    for (int i = 0; i < k; ++i) {
      const double pn = p[(occ[i] - 1) / (2 * fs.channels)];
      if ((choice >> i) & 1) {
        amp *= std::sqrt(std::max(0.0, 1.0 - pn));
        ot |= u64(1) << occ[i];
        ++outs_seen;
      } else {
        amp *= std::sqrt(pn);
        in |= u64(1) << occ[i];
        swaps += outs_seen;  // in-modes precede every out-mode
      }
    }
    if (amp == 0.0) continue;
    out.push_back({in, ot, (swaps % 2) ? -amp : amp});
  }
  return out;
}

}  // namespace

Eigen::MatrixXd brute_force_partial_trace(const Eigen::MatrixXd& rho, const FockSpace& fs,
                                          const std::vector<double>& p) {
  const u64 dim = fs.dim();
  if (dim > 4096) throw SizeError("state too large for brute-force trace");
  if (static_cast<u64>(rho.rows()) != dim || static_cast<int>(p.size()) != fs.sites)
    throw std::invalid_argument("dimension mismatch");
  std::vector<std::vector<SplitTerm>> split(dim);
  for (u64 s = 0; s < dim; ++s) split[s] = split_state(s, fs, p);
  Eigen::MatrixXd red = Eigen::MatrixXd::Zero(dim, dim);
  for (u64 a = 0; a < dim; ++a)
    for (u64 b = 0; b < dim; ++b) {
      const double r = rho(a, b);
      if (r == 0.0) continue;
      for (const auto& x : split[a])
        for (const auto& y : split[b])
          if (x.out == y.out) red(x.in, y.in) += r * x.amp * y.amp;
    }
  return red;
}

double entanglement_entropy(const Eigen::VectorXcd& psi, int dA, int dB) {
  Eigen::MatrixXcd m(dA, dB);
  for (int a = 0; a < dA; ++a)
    for (int b = 0; b < dB; ++b) m(a, b) = psi(a * dB + b);
  const Eigen::VectorXd s = m.jacobiSvd().singularValues();
  const double norm = s.squaredNorm();
  double e = 0.0;
  for (int i = 0; i < s.size(); ++i) {
    const double q = s(i) * s(i) / norm;
    if (q > 1e-300) e -= q * std::log2(q);
  }
  return e;
}

RoofResult stochastic_convex_roof(const Eigen::MatrixXcd& rho, int dA, int dB, const RoofOptions& opt) {
  if (rho.rows() != dA * dB || rho.rows() > 16) throw SizeError("convex roof search needs dim <= 16");
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(rho);
  const double tr = rho.trace().real();
  std::vector<int> cols;
  for (int i = 0; i < es.eigenvalues().size(); ++i)
    if (es.eigenvalues()(i) > 1e-12 * tr) cols.push_back(i);
  const int r = static_cast<int>(cols.size());
  Eigen::MatrixXcd V(rho.rows(), r);
  for (int j = 0; j < r; ++j) V.col(j) = es.eigenvectors().col(cols[j]) * std::sqrt(es.eigenvalues()(cols[j]));
  const int m = opt.components > 0 ? std::max(opt.components, r) : r * r;

  std::mt19937_64 rng(opt.seed);
  std::normal_distribution<double> g;
  auto value = [&](const Eigen::MatrixXcd& U) {
    const Eigen::MatrixXcd psi = V * U.transpose();
    double e = 0.0;
    for (int i = 0; i < m; ++i) {
      const double p = psi.col(i).squaredNorm();
      if (p > 1e-300) e += p * entanglement_entropy(psi.col(i), dA, dB);
    }
    return e;
  };
  auto gaussian = [&](int rows, int c) {
    Eigen::MatrixXcd G(rows, c);
    for (int i = 0; i < rows; ++i)
      for (int j = 0; j < c; ++j) G(i, j) = {g(rng), g(rng)};
    return G;
  };

  Eigen::MatrixXcd best;
  double best_val = std::numeric_limits<double>::infinity();
  for (int s = 0; s < opt.samples; ++s) {
    Eigen::HouseholderQR<Eigen::MatrixXcd> qr(gaussian(m, r));
    Eigen::MatrixXcd Q = qr.householderQ() * Eigen::MatrixXcd::Identity(m, r);
    const double v = value(Q);
    if (v < best_val) {
      best_val = v;
      best = Q;
    }
  }
  // local descent with Cayley-transformed random generators
  double eps = 0.1;
  const Eigen::MatrixXcd I = Eigen::MatrixXcd::Identity(m, m);
  for (int step = 0; step < opt.descent_steps && eps > 1e-7; ++step) {
    Eigen::MatrixXcd H = gaussian(m, m);
    H = 0.5 * (H + H.adjoint()).eval();
    const Eigen::MatrixXcd A = cplx(0, 0.5 * eps) * H;
    const Eigen::MatrixXcd W = (I - A).partialPivLu().solve(I + A);
    Eigen::MatrixXcd U = W * best;
    const double v = value(U);
    if (v < best_val) {
      best_val = v;
      best = U;
      eps *= 1.2;
    } else {
      eps *= 0.97;
    }
  }
  return {best_val, opt.samples, opt.seed};
}

}  // namespace kondo_eof
