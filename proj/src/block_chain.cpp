#include "kondo_eof/block_chain.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <functional>
#include <numeric>

namespace kondo_eof {

namespace {

constexpr QN kUp{0, 1};

}  // namespace

double BlockChain::block_trace(int n) const {
  return std::accumulate(weights[n].begin(), weights[n].end(), 0.0);
}

BlockChain chain_from_nrg(const NrgRun& run, const BlockThermalState& rho) {
  if (rho.weights.size() != run.shells.size()) throw std::invalid_argument("thermal state does not match the run");
  BlockChain c;
  c.channels = run.spec.channels;
  c.site_qn = run.site.qn;
  for (size_t n = 0; n < run.shells.size(); ++n) {
    const auto& sh = run.shells[n];
    c.steps.push_back(sh.states);
    c.weights.push_back(rho.weights[n]);
    std::vector<double> e;
    for (const auto& r : sh.states->discarded) e.push_back(sh.ground_energy + sh.states->energy(r));
    c.energy.push_back(std::move(e));
    c.tail.push_back(Eigen::VectorXd::Constant(run.site.dim, 1.0 / run.site.dim));
  }
  return c;
}

int BathSectors::find(const QN& q) const {
  auto it = index_.find(q);
  return it == index_.end() ? -1 : it->second;
}

int BathSectors::add(const QN& q, int d) {
  const int i = static_cast<int>(qn.size());
  qn.push_back(q);
  dim.push_back(d);
  index_[q] = i;
  return i;
}

int BathSectors::total() const { return std::accumulate(dim.begin(), dim.end(), 0); }

BathSectors vacuum_sectors() {
  BathSectors v;
  v.add({0, 0}, 1);
  return v;
}

std::vector<BathState> impurity_states() {
  BathState up, dn;
  up.su = 0;
  up.up = Eigen::VectorXd::Ones(1);
  dn.sd = 0;
  dn.dn = Eigen::VectorXd::Ones(1);
  return {up, dn};
}

SectorLayout tensor_site(const BathSectors& in, const std::vector<QN>& site_qn) {
  SectorLayout L;
  L.offset.assign(in.qn.size(), std::vector<int>(site_qn.size(), -1));
  L.target = L.offset;
  for (size_t k = 0; k < in.qn.size(); ++k)
    for (size_t s = 0; s < site_qn.size(); ++s) {
      const QN q = in.qn[k] + site_qn[s];
      int idx = L.out.find(q);
      if (idx < 0) {
        idx = L.out.add(q, 0);
        L.blocks.emplace_back();
      }
      L.offset[k][s] = L.out.dim[idx];
      L.target[k][s] = idx;
      L.blocks[idx].push_back({static_cast<int>(k), static_cast<int>(s), L.out.dim[idx]});
      L.out.dim[idx] += in.dim[k];
    }
  return L;
}

std::shared_ptr<ResolvedStep> resolve_step(const BlockChain& chain, int n, const BathSectors& prev_K,
                                           const std::vector<BathState>& prev_kept, double rank_tol) {
  const StepStates& st = *chain.steps[n];
  if (prev_kept.size() != st.prev_qn.size()) throw InvariantError("previous kept basis does not match the step");
  auto R = std::make_shared<ResolvedStep>();
  {
    SectorLayout L = tensor_site(prev_K, chain.site_qn);
    R->V = std::move(L.out);
    R->offset = std::move(L.offset);
    R->blocks = std::move(L.blocks);
  }
  const auto& V = R->V;

  // bath parts of every state of every sector
  std::vector<std::array<Eigen::MatrixXd, 2>> parts(st.sectors.size());
  std::vector<std::array<int, 2>> part_sec(st.sectors.size());
  for (size_t b = 0; b < st.sectors.size(); ++b) {
    const auto& blk = st.sectors[b];
    for (int eta = 0; eta < 2; ++eta) {
      const QN q = eta == 0 ? blk.qn - kUp : blk.qn + kUp;
      const int vs = V.find(q);
      part_sec[b][eta] = vs;
      if (vs < 0) continue;
      Eigen::MatrixXd M = Eigen::MatrixXd::Zero(V.dim[vs], blk.prev.size());
      bool any = false;
      for (size_t r = 0; r < blk.prev.size(); ++r) {
        const auto& A = prev_kept[blk.prev[r]];
        const int ks = eta == 0 ? A.su : A.sd;
        if (ks < 0) continue;
        M.block(R->offset[ks][blk.site[r]], r, prev_K.dim[ks], 1) = eta == 0 ? A.up : A.dn;
        any = true;
      }
      if (!any) {
        part_sec[b][eta] = -1;
        continue;
      }
      parts[b][eta] = M * blk.vectors;
    }
  }
  auto state = [&](const StateRef& r) {
    BathState s;
    if (part_sec[r.sector][0] >= 0) {
      s.su = part_sec[r.sector][0];
      s.up = parts[r.sector][0].col(r.col);
    }
    if (part_sec[r.sector][1] >= 0) {
      s.sd = part_sec[r.sector][1];
      s.dn = parts[r.sector][1].col(r.col);
    }
    return s;
  };

  // span of the kept bath parts, sector by sector
  std::vector<BathState> kept;
  for (const auto& r : st.kept) kept.push_back(state(r));
  std::vector<std::vector<const Eigen::VectorXd*>> cols(V.qn.size());
  for (const auto& s : kept) {
    if (s.su >= 0) cols[s.su].push_back(&s.up);
    if (s.sd >= 0) cols[s.sd].push_back(&s.dn);
  }
  std::vector<int> v_to_k(V.qn.size(), -1);
  for (size_t vs = 0; vs < V.qn.size(); ++vs) {
    if (cols[vs].empty()) continue;
    Eigen::MatrixXd X(V.dim[vs], cols[vs].size());
    for (size_t c = 0; c < cols[vs].size(); ++c) X.col(c) = *cols[vs][c];
    Eigen::BDCSVD<Eigen::MatrixXd> svd(X, Eigen::ComputeThinU);
    const auto& sv = svd.singularValues();
    if (sv.size() == 0 || sv(0) <= 0.0) continue;
    int rank = 0;
    while (rank < sv.size() && sv(rank) > rank_tol * sv(0)) ++rank;
    v_to_k[vs] = R->K.add(V.qn[vs], rank);
    R->basis.push_back(svd.matrixU().leftCols(rank));
  }
  for (auto& s : kept) {
    BathState k;
    if (s.su >= 0 && v_to_k[s.su] >= 0) {
      k.su = v_to_k[s.su];
      k.up = R->basis[k.su].transpose() * s.up;
    }
    if (s.sd >= 0 && v_to_k[s.sd] >= 0) {
      k.sd = v_to_k[s.sd];
      k.dn = R->basis[k.sd].transpose() * s.dn;
    }
    R->kept.push_back(std::move(k));
  }
  for (const auto& r : st.discarded) R->discarded.push_back(state(r));
  return R;
}

namespace {

// Weight carried from earlier blocks, projected onto impurity x K of the
// latest step; per total sector, coordinates [up part | dn part].
struct Leak {
  std::map<QN, Eigen::MatrixXd> R;
  double trace() const {
    double t = 0.0;
    for (const auto& [q, m] : R) t += m.trace();
    return t;
  }
};

int part_dim(const BathSectors& K, const QN& q, int eta) {
  const int k = K.find(eta == 0 ? q - kUp : q + kUp);
  return k < 0 ? 0 : K.dim[k];
}

Leak update_leak(const Leak& old, const BathSectors& old_K, const ResolvedStep& R, const StepStates& st,
                 const std::vector<double>& w, const Eigen::VectorXd& tail, const std::vector<QN>& site_qn,
                 double cutoff) {
  Leak out;
  auto slot = [&](const QN& q) -> Eigen::MatrixXd& {
    auto it = out.R.find(q);
    if (it == out.R.end()) {
      const int d = part_dim(R.K, q, 0) + part_dim(R.K, q, 1);
      it = out.R.emplace(q, Eigen::MatrixXd::Zero(d, d)).first;
    }
    return it->second;
  };
  for (size_t i = 0; i < st.discarded.size(); ++i) {
    if (w[i] <= cutoff) continue;
    const QN q = st.qn(st.discarded[i]);
    const int du = part_dim(R.K, q, 0), dd = part_dim(R.K, q, 1);
    if (du + dd == 0) continue;
    const auto& b = R.discarded[i];
    Eigen::VectorXd c = Eigen::VectorXd::Zero(du + dd);
    if (du > 0 && b.su >= 0) c.head(du) = R.basis[R.K.find(q - kUp)].transpose() * b.up;
    if (dd > 0 && b.sd >= 0) c.tail(dd) = R.basis[R.K.find(q + kUp)].transpose() * b.dn;
    slot(q) += w[i] * c * c.transpose();
  }
  for (const auto& [q0, M] : old.R) {
    const int ou = old_K.find(q0 - kUp), od = old_K.find(q0 + kUp);
    const int du0 = ou < 0 ? 0 : old_K.dim[ou], dd0 = od < 0 ? 0 : old_K.dim[od];
    for (int s = 0; s < tail.size(); ++s) {
      if (tail(s) <= 0.0) continue;
      const QN q = q0 + site_qn[s];
      const int ku = R.K.find(q - kUp), kd = R.K.find(q + kUp);
      const int du = ku < 0 ? 0 : R.K.dim[ku], dd = kd < 0 ? 0 : R.K.dim[kd];
      if ((du == 0 || du0 == 0) && (dd == 0 || dd0 == 0)) continue;
      Eigen::MatrixXd P = Eigen::MatrixXd::Zero(du + dd, du0 + dd0);
      if (du > 0 && du0 > 0) P.topLeftCorner(du, du0) = R.basis[ku].middleRows(R.offset[ou][s], du0).transpose();
      if (dd > 0 && dd0 > 0) P.bottomRightCorner(dd, dd0) = R.basis[kd].middleRows(R.offset[od][s], dd0).transpose();
      slot(q) += tail(s) * P * M * P.transpose();
    }
  }
  return out;
}

struct LeakTerm {
  BathState state;
  double weight;
  int sz2;
};

std::vector<LeakTerm> leak_terms(const Leak& L, const BathSectors& K, double cutoff) {
  std::vector<LeakTerm> out;
  for (const auto& [q, M] : L.R) {
    if (M.rows() == 0) continue;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (M + M.transpose()));
    const int du = part_dim(K, q, 0);
    for (int k = static_cast<int>(M.rows()) - 1; k >= 0; --k) {
      const double r = es.eigenvalues()(k);
      if (r <= cutoff) break;
      LeakTerm t;
      t.weight = r;
      t.sz2 = q.sz2;
      const Eigen::VectorXd v = es.eigenvectors().col(k);
      if (du > 0) {
        t.state.su = K.find(q - kUp);
        t.state.up = v.head(du);
      }
      if (M.rows() - du > 0) {
        t.state.sd = K.find(q + kUp);
        t.state.dn = v.tail(M.rows() - du);
      }
      out.push_back(std::move(t));
    }
  }
  return out;
}

BathTerm to_term(const BathState& s, double w, double energy, int sz2, bool own) {
  BathTerm t;
  t.weight = w;
  t.energy = energy;
  t.sz2 = sz2;
  t.own = own;
  if (s.su >= 0 && s.up.size() > 0) {
    t.sec_up = s.su;
    t.up = s.up.cast<cplx>();
  }
  if (s.sd >= 0 && s.dn.size() > 0) {
    t.sec_dn = s.sd;
    t.dn = s.dn.cast<cplx>();
  }
  return t;
}

int support(const Eigen::VectorXd& tail) { return static_cast<int>((tail.array() > 0.0).count()); }

// Unit holding steps n0..n1. steps[i] is step n0 + i; K0 is the kept bath of
// step n0 - 1 and leak the weight carried into the unit.
UnitBuild build_unit(const BlockChain& chain, int n0, const std::vector<const ResolvedStep*>& steps,
                     const BathSectors& K0, const Leak& leak, const BoundOptions& opt, bool check_budget) {
  const int u = static_cast<int>(steps.size());
  UnitBuild out;
  // workspaces W[i] = K0 x sites n0 .. n0 + i - 1
  std::vector<SectorLayout> W(u + 1);
  W[0].out = K0;
  for (int i = 1; i <= u; ++i) W[i] = tensor_site(W[i - 1].out, chain.site_qn);
  const BathSectors& Wf = W[u].out;

  const auto lterms = leak_terms(leak, K0, opt.weight_cutoff);
  for (const auto& t : lterms) out.leak += t.weight;
  double count = 0.0;
  {
    double mult = 1.0;
    for (int i = u - 1; i >= 0; --i) {
      int own = 0;
      for (double w : chain.weights[n0 + i])
        if (w > opt.weight_cutoff) ++own;
      count += own * mult;
      mult *= support(chain.tail[n0 + i]);
    }
    count += lterms.size() * mult;
  }
  for (int i = 0; i < u; ++i)
    for (double w : chain.weights[n0 + i])
      if (w > opt.weight_cutoff) out.own += w;
  const double avg = Wf.qn.empty() ? 0.0 : static_cast<double>(Wf.total()) / Wf.qn.size();
  if (check_budget && count * avg * 2.0 * sizeof(cplx) > opt.memory_budget) {
    out.fits = false;
    return out;
  }

  // K of step n0 + i - 1 embedded in W[i]
  std::vector<std::vector<Eigen::MatrixXd>> emb(u + 1);
  auto prev_K = [&](int i) -> const BathSectors& { return i == 1 ? K0 : steps[i - 2]->K; };
  auto lift = [&](int i, int vsec, const Eigen::MatrixXd& X) {
    const ResolvedStep& R = *steps[i - 1];
    const BathSectors& PK = prev_K(i);
    const int wsec = W[i].out.find(R.V.qn[vsec]);
    Eigen::MatrixXd Y = Eigen::MatrixXd::Zero(W[i].out.dim[wsec], X.cols());
    for (const auto& [ks, s, voff] : R.blocks[vsec]) {
      const int dk = PK.dim[ks];
      const int wp = W[i - 1].out.find(PK.qn[ks]);
      const int woff = W[i].offset[wp][s];
      if (i == 1)
        Y.middleRows(woff, dk) += X.middleRows(voff, dk);
      else
        Y.middleRows(woff, W[i - 1].out.dim[wp]) += emb[i - 1][ks] * X.middleRows(voff, dk);
    }
    return std::make_pair(wsec, Y);
  };
  for (int i = 1; i <= u; ++i) {
    const ResolvedStep& R = *steps[i - 1];
    for (size_t kb = 0; kb < R.K.qn.size(); ++kb)
      emb[i].push_back(lift(i, R.V.find(R.K.qn[kb]), R.basis[kb]).second);
  }

  out.terms.sector_dims = Wf.dim;
  out.terms.excluded.assign(Wf.qn.size(), Eigen::MatrixXcd());
  {
    const ResolvedStep& R = *steps[u - 1];
    for (size_t kb = 0; kb < R.K.qn.size(); ++kb) out.terms.excluded[Wf.find(R.K.qn[kb])] = emb[u][kb].cast<cplx>();
  }

  // tensor a state of W[i] with every site configuration up to the last site
  std::function<void(const BathState&, double, int, const std::function<void(const BathState&, double)>&)> expand =
      [&](const BathState& s, double w, int i, const std::function<void(const BathState&, double)>& emit) {
        if (i == u) {
          emit(s, w);
          return;
        }
        const Eigen::VectorXd& tail = chain.tail[n0 + i];
        const SectorLayout& L = W[i + 1];
        for (int x = 0; x < tail.size(); ++x) {
          if (tail(x) <= 0.0) continue;
          BathState t;
          if (s.su >= 0) {
            t.su = L.out.find(W[i].out.qn[s.su] + chain.site_qn[x]);
            t.up = Eigen::VectorXd::Zero(L.out.dim[t.su]);
            t.up.segment(L.offset[s.su][x], s.up.size()) = s.up;
          }
          if (s.sd >= 0) {
            t.sd = L.out.find(W[i].out.qn[s.sd] + chain.site_qn[x]);
            t.dn = Eigen::VectorXd::Zero(L.out.dim[t.sd]);
            t.dn.segment(L.offset[s.sd][x], s.dn.size()) = s.dn;
          }
          expand(t, w * tail(x), i + 1, emit);
        }
      };

  for (const auto& lt : lterms)
    expand(lt.state, lt.weight, 0, [&](const BathState& s, double w) {
      out.terms.terms.push_back(to_term(s, w, 0.0, lt.sz2, false));
    });
  for (int i = 1; i <= u; ++i) {
    const int n = n0 + i - 1;
    const ResolvedStep& R = *steps[i - 1];
    const StepStates& st = *chain.steps[n];
    for (size_t d = 0; d < R.discarded.size(); ++d) {
      const double w = chain.weights[n][d];
      if (w <= opt.weight_cutoff) continue;
      const auto& b = R.discarded[d];
      BathState s;
      if (b.su >= 0) {
        auto [ws, Y] = lift(i, b.su, b.up);
        s.su = ws;
        s.up = Y.col(0);
      }
      if (b.sd >= 0) {
        auto [ws, Y] = lift(i, b.sd, b.dn);
        s.sd = ws;
        s.dn = Y.col(0);
      }
      const double e = chain.energy.empty() ? 0.0 : chain.energy[n][d];
      const int sz2 = st.qn(st.discarded[d]).sz2;
      expand(s, w, i, [&](const BathState& x, double wx) {
        out.terms.terms.push_back(to_term(x, wx, e, sz2, true));
      });
    }
  }
  return out;
}

// Streams the chain once and hands out every unit of the requested sizes.
void walk(const BlockChain& chain, const std::vector<int>& sizes, const BoundOptions& opt,
          const std::function<void(int, const ResolvedStep&, const Leak&)>& on_block,
          const std::function<bool(int, int, int)>& wants_unit,
          const std::function<void(int, int, int, UnitBuild&&)>& on_unit) {
  const int N = chain.size();
  const int umax = sizes.empty() ? 1 : *std::max_element(sizes.begin(), sizes.end());
  std::deque<std::shared_ptr<ResolvedStep>> window;  // steps n - umax .. n
  std::deque<Leak> leaks;                            // leak after the same steps
  const BathSectors vac = vacuum_sectors();
  const auto imp = impurity_states();
  Leak none;
  for (int n = 0; n < N; ++n) {
    const ResolvedStep* prev = window.empty() ? nullptr : window.back().get();
    const BathSectors& pK = prev ? prev->K : vac;
    auto R = resolve_step(chain, n, pK, prev ? prev->kept : imp);
    const Leak& lprev = leaks.empty() ? none : leaks.back();
    Leak lnow = update_leak(lprev, pK, *R, *chain.steps[n], chain.weights[n], chain.tail[n], chain.site_qn,
                            opt.weight_cutoff);
    on_block(n, *R, lprev);
    window.push_back(R);
    leaks.push_back(std::move(lnow));
    if (static_cast<int>(window.size()) > umax + 1) {
      window.pop_front();
      leaks.pop_front();
    }
    for (int u : sizes) {
      if ((n + 1) % u != 0 && n != N - 1) continue;
      const int n0 = (n / u) * u;
      if (!wants_unit(u, n0, n)) continue;
      const int first = n - static_cast<int>(window.size()) + 1;  // step held in window[0]
      std::vector<const ResolvedStep*> steps;
      for (int m = n0; m <= n; ++m) steps.push_back(window[m - first].get());
      const bool has_prev = n0 > 0;
      const BathSectors& K0 = has_prev ? window[n0 - 1 - first]->K : vac;
      const Leak& L0 = has_prev ? leaks[n0 - 1 - first] : none;
      if (has_prev || n0 == 0) {
        UnitBuild b = build_unit(chain, n0, steps, K0, L0, opt, u > 1);
        on_unit(u, n0, n, std::move(b));
      }
    }
  }
}

}  // namespace

std::vector<UnitBuild> chain_units(const BlockChain& chain, int unit_size, const BoundOptions& opt) {
  std::vector<UnitBuild> out;
  BoundOptions o = opt;
  o.memory_budget = std::numeric_limits<double>::infinity();
  walk(
      chain, {unit_size}, o, [](int, const ResolvedStep&, const Leak&) {}, [](int, int, int) { return true; },
      [&](int, int, int, UnitBuild&& b) { out.push_back(std::move(b)); });
  return out;
}

ChainBounds chain_bounds(const BlockChain& chain, const BoundOptions& opt) {
  ChainBounds out;
  std::vector<int> sizes = opt.unit_sizes;
  if (std::find(sizes.begin(), sizes.end(), 1) == sizes.end()) sizes.push_back(1);
  std::sort(sizes.begin(), sizes.end());
  sizes.erase(std::unique(sizes.begin(), sizes.end()), sizes.end());

  struct PerSize {
    double lower = 0.0, leakage = 0.0;
    int dropped = 0;
    bool skipped = false;
  };
  std::map<int, PerSize> per;
  for (int u : sizes) per[u];

  // traces needed to decide whether a unit matters before building it
  std::vector<double> trace(chain.size());
  for (int n = 0; n < chain.size(); ++n) trace[n] = chain.block_trace(n);
  std::vector<double> leak_in(chain.size(), 0.0);

  walk(
      chain, sizes, opt,
      [&](int n, const ResolvedStep& R, const Leak& lprev) {
        BlockRecord rec;
        rec.n = n;
        rec.trace = trace[n];
        rec.leak = lprev.trace();
        leak_in[n] = rec.leak;
        if (rec.trace > opt.skip_trace) {
          UnitTerms block;
          block.sector_dims = R.V.dim;
          const StepStates& st = *chain.steps[n];
          for (size_t d = 0; d < R.discarded.size(); ++d) {
            const double w = chain.weights[n][d];
            if (w <= opt.weight_cutoff) continue;
            block.terms.push_back(to_term(R.discarded[d], w, chain.energy[n][d], st.qn(st.discarded[d]).sz2, true));
          }
          UpperBoundOptions uo = opt.upper;
          uo.search = uo.search && rec.trace >= opt.mix_min_trace;
          const auto ub = block_upper_bound(block, uo);
          rec.upper = ub.value;
          rec.trivial = ub.trivial;
          rec.y1 = ub.y1;
          rec.y2 = ub.y2;
          rec.boundary = ub.boundary && ub.mixed;
        } else {
          rec.upper = rec.trivial = rec.trace;
        }
        out.upper += rec.upper;
        out.boundary_blocks += rec.boundary;
        out.blocks.push_back(rec);
      },
      [&](int u, int n0, int n1) {
        if (per[u].skipped) return false;
        double w = leak_in[n0];
        for (int m = n0; m <= n1; ++m) w += trace[m];
        return w > opt.skip_trace;
      },
      [&](int u, int n0, int n1, UnitBuild&& b) {
        auto& ps = per[u];
        if (!b.fits) {
          ps.skipped = true;
          return;
        }
        const auto lb = best_unit_lower_bound(b.terms, opt.witness);
        ps.lower += lb.value;
        ps.leakage = std::max(ps.leakage, lb.leakage);
        ps.dropped += lb.dropped;
        if (u == 1) {
          auto& rec = out.blocks[n0];
          rec.lower = lb.value;
          rec.pairs = lb.pairs;
          rec.dropped = lb.dropped;
          rec.leakage = lb.leakage;
        }
        (void)n1;
      });

  out.lower = -1.0;
  for (const auto& [u, ps] : per) {
    if (ps.skipped) {
      out.skipped_unit_sizes.push_back(u);
      continue;
    }
    out.lower_by_unit_size[u] = ps.lower;
    if (ps.lower > out.lower) {
      out.lower = ps.lower;
      out.unit_size = u;
      out.leakage = ps.leakage;
      out.dropped = ps.dropped;
    }
  }
  return out;
}

}  // namespace kondo_eof
