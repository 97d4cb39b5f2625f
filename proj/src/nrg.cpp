#include "kondo_eof/nrg.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <limits>
#include <numeric>

namespace kondo_eof {

SiteBasis make_site(int channels) {
  SiteBasis s;
  s.channels = channels;
  const int modes = 2 * channels;
  s.dim = 1 << modes;
  for (int st = 0; st < s.dim; ++st) {
    int sz2 = 0;
    for (int a = 0; a < channels; ++a) sz2 += ((st >> (2 * a)) & 1) - ((st >> (2 * a + 1)) & 1);
    const int occ = std::popcount(static_cast<unsigned>(st));
    s.qn.push_back({occ - channels, sz2});
    s.occupancy.push_back(occ);
  }
  for (int k = 0; k < modes; ++k) {
    Eigen::MatrixXd f = Eigen::MatrixXd::Zero(s.dim, s.dim);
    for (int st = 0; st < s.dim; ++st) {
      if (!((st >> k) & 1)) continue;
      const int below = std::popcount(static_cast<unsigned>(st & ((1 << k) - 1)));
      f(st ^ (1 << k), st) = (below % 2) ? -1.0 : 1.0;
    }
    s.annihilate.push_back(f);
  }
  return s;
}

int StepStates::dim() const {
  int d = 0;
  for (const auto& s : sectors) d += static_cast<int>(s.prev.size());
  return d;
}

std::vector<double> EnergyShell::spectrum() const {
  std::vector<double> e;
  for (const auto& s : states->sectors)
    for (int i = 0; i < s.energies.size(); ++i) e.push_back(s.energies(i));
  std::sort(e.begin(), e.end());
  return e;
}

int chain_length_for(double Lambda, double lowest_energy) {
  if (!(lowest_energy > 0)) throw std::invalid_argument("lowest energy must be positive");
  const double n = 2.0 * std::log(1.0 / (1e-2 * lowest_energy)) / std::log(Lambda);
  return std::max(8, static_cast<int>(std::ceil(n)));
}

namespace {

struct PrevBasis {
  std::vector<QN> qn;
  Eigen::VectorXd energy;
  // contiguous ranges of equal labels
  std::map<QN, std::pair<int, int>> range;
  std::map<QN, int> parity;
};

PrevBasis impurity_basis() {
  PrevBasis p;
  p.qn = {{0, 1}, {0, -1}};
  p.energy = Eigen::VectorXd::Zero(2);
  p.range[{0, 1}] = {0, 1};
  p.range[{0, -1}] = {1, 1};
  p.parity[{0, 1}] = 0;
  p.parity[{0, -1}] = 0;
  return p;
}

struct Layout {
  QN qn;
  std::vector<int> offset;  // per site state, -1 if absent
  int dim = 0;
};

std::vector<Layout> sector_layouts(const PrevBasis& prev, const SiteBasis& site) {
  std::map<QN, Layout> by_qn;
  for (const auto& [pq, r] : prev.range)
    for (int s = 0; s < site.dim; ++s) {
      QN q = pq + site.qn[s];
      auto& L = by_qn[q];
      if (L.offset.empty()) {
        L.qn = q;
        L.offset.assign(site.dim, -1);
      }
    }
  std::vector<Layout> out;
  for (auto& [q, L] : by_qn) {
    for (int s = 0; s < site.dim; ++s) {
      auto it = prev.range.find(q - site.qn[s]);
      if (it == prev.range.end()) continue;
      L.offset[s] = L.dim;
      L.dim += it->second.second;
    }
    out.push_back(L);
  }
  return out;
}

void impurity_coupling(const SiteBasis& site, double J, const Layout& L, const PrevBasis& prev,
                       Eigen::MatrixXd& H) {
  // impurity spin operators in {up, dn}
  Eigen::Matrix2d Sz, Sp, Sm;
  Sz << 0.5, 0, 0, -0.5;
  Sp << 0, 1, 0, 0;
  Sm = Sp.transpose();
  Eigen::MatrixXd sz = Eigen::MatrixXd::Zero(site.dim, site.dim), sp = sz;
  for (int a = 0; a < site.channels; ++a) {
    const auto& fu = site.annihilate[2 * a];
    const auto& fd = site.annihilate[2 * a + 1];
    sz += 0.5 * (fu.transpose() * fu - fd.transpose() * fd);
    sp += fu.transpose() * fd;
  }
  Eigen::MatrixXd sm = sp.transpose();
  for (int s1 = 0; s1 < site.dim; ++s1) {
    if (L.offset[s1] < 0) continue;
    for (int s2 = 0; s2 < site.dim; ++s2) {
      if (L.offset[s2] < 0) continue;
      const auto& r1 = prev.range.at(L.qn - site.qn[s1]);
      const auto& r2 = prev.range.at(L.qn - site.qn[s2]);
      for (int a = 0; a < r1.second; ++a)
        for (int b = 0; b < r2.second; ++b) {
          const int e1 = r1.first + a, e2 = r2.first + b;
          const double v = J * (Sz(e1, e2) * sz(s1, s2) + 0.5 * Sp(e1, e2) * sm(s1, s2) +
                                0.5 * Sm(e1, e2) * sp(s1, s2));
          H(L.offset[s1] + a, L.offset[s2] + b) += v;
        }
    }
  }
}

void hopping(const SiteBasis& site, double t, const std::vector<Eigen::MatrixXd>& creation,
             const Layout& L, const PrevBasis& prev, Eigen::MatrixXd& H) {
  for (int k = 0; k < site.modes(); ++k) {
    const auto& f = site.annihilate[k];
    for (int s = 0; s < site.dim; ++s) {
      if (!((s >> k) & 1) || L.offset[s] < 0) continue;
      const int s1 = s ^ (1 << k);
      if (L.offset[s1] < 0) continue;
      // <j',s1| f^dag_n f_{n+1} |j,s> = F(j',j) (-1)^{N_j} <s1|f|s>
      const QN qj = L.qn - site.qn[s], qj1 = L.qn - site.qn[s1];
      const auto& rj = prev.range.at(qj);
      const auto& rj1 = prev.range.at(qj1);
      const double sign = prev.parity.at(qj) ? -1.0 : 1.0;
      const double amp = t * sign * f(s1, s);
      auto blk = creation[k].block(rj1.first, rj.first, rj1.second, rj.second);
      H.block(L.offset[s1], L.offset[s], rj1.second, rj.second) += amp * blk;
      H.block(L.offset[s], L.offset[s1], rj.second, rj1.second) += amp * blk.transpose();
    }
  }
}

}  // namespace

NrgRun iterative_diagonalization(const WilsonChain& chain, const ModelSpec& spec, int keep_max) {
  validate(spec);
  NrgRun run;
  run.spec = spec;
  run.chain = chain;
  run.keep_max = keep_max;
  run.site = make_site(spec.channels);
  const SiteBasis& site = run.site;
  if (keep_max < site.dim) throw std::invalid_argument("keep_max must be at least 4^M");
  const int N = chain.N;

  PrevBasis prev = impurity_basis();
  double ground = 0.0;
  for (int n = 0; n <= N; ++n) {
    auto st = std::make_shared<StepStates>();
    st->n = n;
    st->prev_qn = prev.qn;
    const double scale = n == 0 ? 1.0 : chain.hoppings[n - 1];
    auto layouts = sector_layouts(prev, site);
    double emin = std::numeric_limits<double>::infinity();
    for (const auto& L : layouts) {
      Eigen::MatrixXd H = Eigen::MatrixXd::Zero(L.dim, L.dim);
      SectorBlock blk;
      blk.qn = L.qn;
      blk.prev.resize(L.dim);
      blk.site.resize(L.dim);
      for (int s = 0; s < site.dim; ++s) {
        if (L.offset[s] < 0) continue;
        const auto& r = prev.range.at(L.qn - site.qn[s]);
        for (int a = 0; a < r.second; ++a) {
          const int row = L.offset[s] + a;
          blk.prev[row] = r.first + a;
          blk.site[row] = s;
          if (!(prev.qn[r.first + a] + site.qn[s] == L.qn))
            throw InvariantError("quantum number sum rule violated");
          H(row, row) = prev.energy(r.first + a);
        }
      }
      if (n == 0) impurity_coupling(site, spec.J, L, prev, H);
      else hopping(site, chain.hoppings[n - 1], run.shells.back().creation, L, prev, H);
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(H);
      blk.energies = es.eigenvalues();
      blk.vectors = es.eigenvectors();
      emin = std::min(emin, blk.energies(0));
      st->sectors.push_back(std::move(blk));
    }
    for (auto& b : st->sectors) b.energies.array() -= emin;
    ground += emin;

    // truncation
    std::vector<StateRef> all;
    for (int q = 0; q < static_cast<int>(st->sectors.size()); ++q)
      for (int c = 0; c < st->sectors[q].energies.size(); ++c) all.push_back({q, c});
    std::stable_sort(all.begin(), all.end(), [&](const StateRef& a, const StateRef& b) {
      return st->energy(a) < st->energy(b);
    });
    int cut = static_cast<int>(all.size());
    if (n == N) cut = 0;
    else if (cut > keep_max) {
      cut = keep_max;
      while (cut < static_cast<int>(all.size()) &&
             st->energy(all[cut]) - st->energy(all[cut - 1]) <= 1e-8 * scale)
        ++cut;
    }
    st->kept.assign(all.begin(), all.begin() + cut);
    st->discarded.assign(all.begin() + cut, all.end());
    std::sort(st->kept.begin(), st->kept.end(), [](const StateRef& a, const StateRef& b) {
      return a.sector != b.sector ? a.sector < b.sector : a.col < b.col;
    });

    EnergyShell shell;
    shell.ground_energy = ground;
    shell.scale = scale;

    // next incoming basis and creation operators in the kept basis
    PrevBasis next;
    std::vector<int> kept_offset(st->sectors.size(), -1), kept_count(st->sectors.size(), 0);
    for (int i = 0; i < static_cast<int>(st->kept.size()); ++i) {
      const auto& r = st->kept[i];
      if (kept_offset[r.sector] < 0) kept_offset[r.sector] = i;
      if (r.col != kept_count[r.sector]) throw InvariantError("kept states are not a sector prefix");
      ++kept_count[r.sector];
      next.qn.push_back(st->qn(r));
    }
    next.energy.resize(st->kept.size());
    for (int i = 0; i < static_cast<int>(st->kept.size()); ++i) next.energy(i) = st->energy(st->kept[i]);
    for (int q = 0; q < static_cast<int>(st->sectors.size()); ++q) {
      if (kept_count[q] == 0) continue;
      const QN qq = st->sectors[q].qn;
      next.range[qq] = {kept_offset[q], kept_count[q]};
      next.parity[qq] = ((qq.charge + site.channels * (n + 1)) % 2 + 2) % 2;
    }

    if (n < N) {
      const int K = static_cast<int>(st->kept.size());
      std::map<QN, int> sector_index;
      for (int q = 0; q < static_cast<int>(st->sectors.size()); ++q) sector_index[st->sectors[q].qn] = q;
      for (int k = 0; k < site.modes(); ++k) {
        Eigen::MatrixXd C = Eigen::MatrixXd::Zero(K, K);
        const QN dq{1, (k % 2 == 0) ? 1 : -1};
        const Eigen::MatrixXd fdag = site.annihilate[k].transpose();
        for (int q = 0; q < static_cast<int>(st->sectors.size()); ++q) {
          if (kept_count[q] == 0) continue;
          auto it = sector_index.find(st->sectors[q].qn + dq);
          if (it == sector_index.end() || kept_count[it->second] == 0) continue;
          const int q1 = it->second;
          const auto& A = st->sectors[q];
          const auto& B = st->sectors[q1];
          const Layout* LA = nullptr;
          const Layout* LB = nullptr;
          for (const auto& L : layouts) {
            if (L.qn == A.qn) LA = &L;
            if (L.qn == B.qn) LB = &L;
          }
          Eigen::MatrixXd T = Eigen::MatrixXd::Zero(B.vectors.rows(), kept_count[q]);
          for (int s = 0; s < site.dim; ++s) {
            if (LA->offset[s] < 0 || ((s >> k) & 1)) continue;
            const int s1 = s | (1 << k);
            if (LB->offset[s1] < 0) continue;
            const QN qj = A.qn - site.qn[s];
            const auto& r = prev.range.at(qj);
            const double amp = (prev.parity.at(qj) ? -1.0 : 1.0) * fdag(s1, s);
            T.block(LB->offset[s1], 0, r.second, kept_count[q]) +=
                amp * A.vectors.block(LA->offset[s], 0, r.second, kept_count[q]);
          }
          C.block(kept_offset[q1], kept_offset[q], kept_count[q1], kept_count[q]) =
              B.vectors.leftCols(kept_count[q1]).transpose() * T;
        }
        shell.creation.push_back(std::move(C));
      }
    }
    shell.states = st;
    run.shells.push_back(std::move(shell));
    prev = std::move(next);
  }
  return run;
}

std::vector<std::vector<double>> rescaled_spectra(const NrgRun& run) {
  std::vector<std::vector<double>> out;
  for (const auto& sh : run.shells) {
    auto e = sh.spectrum();
    const double f = std::pow(run.chain.Lambda, 0.5 * sh.n());
    for (auto& x : e) x *= f;
    out.push_back(e);
  }
  return out;
}

int stationary_iteration(const std::vector<std::vector<double>>& rescaled, int levels, double tol) {
  const int n_shells = static_cast<int>(rescaled.size());
  auto close = [&](int n) {
    const auto& a = rescaled[n];
    const auto& b = rescaled[n + 2];
    const int m = std::min({levels, static_cast<int>(a.size()), static_cast<int>(b.size())});
    if (m == 0) return false;
    const double ref = std::max(std::abs(a[m - 1]), 1e-300);
    for (int i = 0; i < m; ++i)
      if (std::abs(a[i] - b[i]) > tol * ref) return false;
    return true;
  };
  // last index with a comparison partner is n_shells - 3
  int first = -1;
  for (int n = n_shells - 3; n >= 0; --n) {
    if (close(n)) first = n;
    else break;
  }
  if (first < 0 || n_shells - 3 - first < 2) throw NotConvergedError("spectrum never becomes stationary");
  return first;
}

double kondo_temperature_2ck(const NrgRun& run, int* n_star) {
  if (run.shells.size() < 10) throw std::invalid_argument("need at least 10 shells");
  const int n = stationary_iteration(rescaled_spectra(run));
  if (n_star) *n_star = n;
  return run.spec.D * std::pow(run.chain.Lambda, -0.5 * n);
}

double BlockThermalState::total() const {
  return std::accumulate(block_trace.begin(), block_trace.end(), 0.0);
}

BlockThermalState thermal_state(const NrgRun& run, double T) {
  if (!(T >= 0.0) || !std::isfinite(T)) throw TemperatureRangeError("temperature must be finite and >= 0");
  BlockThermalState out;
  out.T = T;
  const int N = static_cast<int>(run.shells.size()) - 1;
  out.weights.resize(N + 1);
  out.block_trace.assign(N + 1, 0.0);
  const double Eref = run.shells[N].ground_energy;
  if (T == 0.0) {
    const auto& sh = run.shells[N];
    const auto& st = *sh.states;
    std::vector<int> ground;
    for (int i = 0; i < static_cast<int>(st.discarded.size()); ++i)
      if (st.energy(st.discarded[i]) <= 1e-8 * sh.scale) ground.push_back(i);
    for (int n = 0; n <= N; ++n) out.weights[n].assign(run.shells[n].states->discarded.size(), 0.0);
    for (int i : ground) out.weights[N][i] = 1.0 / ground.size();
    out.block_trace[N] = 1.0;
    return out;
  }
  const double ln4M = run.site.modes() * std::log(2.0);
  std::vector<std::vector<double>> lw(N + 1);
  double mx = -std::numeric_limits<double>::infinity();
  for (int n = 0; n <= N; ++n) {
    const auto& sh = run.shells[n];
    for (const auto& r : sh.states->discarded) {
      const double e = sh.ground_energy - Eref + sh.states->energy(r);
      const double v = -e / T + ln4M * (N - n);
      lw[n].push_back(v);
      mx = std::max(mx, v);
    }
  }
  double z = 0.0;
  for (const auto& v : lw)
    for (double x : v) z += std::exp(x - mx);
  const double lnZ = mx + std::log(z);
  for (int n = 0; n <= N; ++n) {
    for (double x : lw[n]) {
      const double w = std::exp(x - lnZ);
      out.weights[n].push_back(w);
      out.block_trace[n] += w;
    }
  }
  if (!(std::abs(out.total() - 1.0) < 1e-8)) throw TemperatureRangeError("thermal weights do not normalize");
  return out;
}

std::vector<Eigen::MatrixXd> future_density(const NrgRun& run, const BlockThermalState& rho) {
  const int N = static_cast<int>(run.shells.size()) - 1;
  std::vector<Eigen::MatrixXd> F(N + 1);
  F[N] = Eigen::MatrixXd::Zero(run.shells[N].states->kept.size(), run.shells[N].states->kept.size());
  for (int n = N - 1; n >= 0; --n) {
    const auto& cur = *run.shells[n].states;
    const auto& nxt = *run.shells[n + 1].states;
    const int K = static_cast<int>(cur.kept.size());
    Eigen::MatrixXd Fn = Eigen::MatrixXd::Zero(K, K);
    // weight matrix per sector of shell n+1
    std::vector<Eigen::MatrixXd> W(nxt.sectors.size());
    for (size_t q = 0; q < nxt.sectors.size(); ++q) {
      const int d = static_cast<int>(nxt.sectors[q].energies.size());
      W[q] = Eigen::MatrixXd::Zero(d, d);
    }
    for (size_t i = 0; i < nxt.discarded.size(); ++i) {
      const auto& r = nxt.discarded[i];
      W[r.sector](r.col, r.col) += rho.weights[n + 1][i];
    }
    std::vector<int> off(nxt.sectors.size(), -1), cnt(nxt.sectors.size(), 0);
    for (int i = 0; i < static_cast<int>(nxt.kept.size()); ++i) {
      const auto& r = nxt.kept[i];
      if (off[r.sector] < 0) off[r.sector] = i;
      ++cnt[r.sector];
    }
    for (size_t q = 0; q < nxt.sectors.size(); ++q) {
      if (cnt[q] > 0) W[q].topLeftCorner(cnt[q], cnt[q]) += F[n + 1].block(off[q], off[q], cnt[q], cnt[q]);
      const auto& S = nxt.sectors[q];
      if (W[q].cwiseAbs().maxCoeff() == 0.0) continue;
      Eigen::MatrixXd R = S.vectors * W[q] * S.vectors.transpose();
      const int d = static_cast<int>(S.prev.size());
      for (int a = 0; a < d; ++a)
        for (int b = 0; b < d; ++b)
          if (S.site[a] == S.site[b]) Fn(S.prev[a], S.prev[b]) += R(a, b);
    }
    F[n] = std::move(Fn);
  }
  return F;
}

}  // namespace kondo_eof
