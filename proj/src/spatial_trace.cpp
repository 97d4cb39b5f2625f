#include "kondo_eof/spatial_trace.hpp"

#include <gsl/gsl_sf_expint.h>

#include <algorithm>
#include <bit>
#include <boost/math/quadrature/gauss.hpp>
#include <cmath>
#include <complex>
#include <numeric>

namespace kondo_eof {

double SpatialProjector::max_off_diagonal() const {
  double m = 0.0;
  for (Eigen::Index i = 0; i < P.rows(); ++i)
    for (Eigen::Index j = 0; j < P.cols(); ++j)
      if (i != j) m = std::max(m, std::abs(P(i, j)));
  return m;
}

namespace {

// k interval of a star orbital, as offsets from k_F = 1
std::pair<double, double> k_offsets(const StarOrbital& s) {
  return s.sign > 0 ? std::pair{s.lo, s.hi} : std::pair{-s.hi, -s.lo};
}

// int_{u0}^{u1} (alpha + beta u) sin(L u) / u du
double linear_sinc(double L, double alpha, double beta, double u0, double u1) {
  if (u1 <= u0) return 0.0;
  if (L * (u1 - u0) <= 20.0) {
    auto f = [&](double u) {
      const double x = L * u;
      const double s = std::abs(x) < 1e-8 ? 1.0 - x * x / 6.0 : std::sin(x) / x;
      return (alpha + beta * u) * L * s;
    };
    return boost::math::quadrature::gauss<double, 30>::integrate(f, u0, u1);
  }
  return alpha * (gsl_sf_Si(L * u1) - gsl_sf_Si(L * u0)) + beta * (std::cos(L * u0) - std::cos(L * u1)) / L;
}

// int_X dk int_Y dk' sin(L (k - k')) / (k - k'), via the overlap length of
// X and Y + u as a function of u = k - k'
double box_integral(double L, double x0, double x1, double y0, double y1) {
  const double wx = x1 - x0, wy = y1 - y0;
  const double u_lo = x0 - y1, u_hi = x1 - y0;
  const double m1 = std::min(x0 - y0, x1 - y1), m2 = std::max(x0 - y0, x1 - y1);
  const double c = std::min(wx, wy);
  return linear_sinc(L, -u_lo, 1.0, u_lo, m1) + linear_sinc(L, c, 0.0, m1, m2) +
         linear_sinc(L, u_hi, -1.0, m2, u_hi);
}

SpatialProjector from_star(double L, const WilsonChain& chain, const Eigen::MatrixXd& A) {
  SpatialProjector out;
  out.L = L;
  out.P = chain.lanczos * A * chain.lanczos.transpose();
  out.P = 0.5 * (out.P + out.P.transpose()).eval();
  out.p = out.P.diagonal();
  out.n_L = 2.0 * std::log(L) / std::log(chain.Lambda);
  return out;
}

}  // namespace

SpatialProjector projector_matrix(double L, const WilsonChain& chain) {
  if (!(L > 0.0)) throw std::invalid_argument("L must be positive");
  const int S = static_cast<int>(chain.star.size());
  Eigen::MatrixXd A(S, S);
  for (int a = 0; a < S; ++a) {
    const auto [a0, a1] = k_offsets(chain.star[a]);
    for (int b = a; b < S; ++b) {
      const auto [b0, b1] = k_offsets(chain.star[b]);
      // k - k' from the offsets; k + k' = 2 + offsets, the second box mirrored
      const double minus = box_integral(L, a0, a1, b0, b1);
      const double plus = box_integral(L, 1.0 + a0, 1.0 + a1, -1.0 - b1, -1.0 - b0);
      const double v = (minus + plus) / (M_PI * std::sqrt((a1 - a0) * (b1 - b0)));
      A(a, b) = A(b, a) = v;
    }
  }
  return from_star(L, chain, A);
}

SpatialProjector projector_by_quadrature(double L, const WilsonChain& chain, int points_per_decade, double tol,
                                         int max_doublings) {
  if (!(L > 0.0)) throw std::invalid_argument("L must be positive");
  const int S = static_cast<int>(chain.star.size());
  const int sites = static_cast<int>(chain.lanczos.rows());
  std::vector<double> e0(S), e1(S), w(S);
  for (int m = 0; m < S; ++m) {
    std::tie(e0[m], e1[m]) = k_offsets(chain.star[m]);
    w[m] = e1[m] - e0[m];
  }
  // site envelopes without the k_F carrier; the 2 k_F part of the product
  // averages out, leaving (1/pi) Re[A_n conj(A_n')]
  auto envelopes = [&](double x) {
    Eigen::VectorXcd a(S);
    for (int m = 0; m < S; ++m) {
      const double ph = 0.5 * (e0[m] + e1[m]) * x, h = 0.5 * w[m] * x;
      // (e^{i e1 x} - e^{i e0 x}) / x = 2i e^{i ph} sin(h) / x
      const double s = std::abs(h) < 1e-8 ? 0.5 * w[m] : std::sin(h) / x;
      a(m) = std::complex<double>(0.0, 2.0) * std::polar(1.0, ph) * s / std::sqrt(w[m]);
    }
    return Eigen::VectorXcd(chain.lanczos.cast<std::complex<double>>() * a);
  };
  const double x_min = 1e-8;
  // logarithmic grid up to x_c, then uniform steps that resolve the
  // largest envelope frequency (|eps| <= 1)
  auto integrate = [&](int ppd) {
    Eigen::MatrixXd P = Eigen::MatrixXd::Zero(sites, sites);
    auto add = [&](double x, double wgt) {
      const Eigen::VectorXcd a = envelopes(x);
      P.noalias() += (wgt / M_PI) * (a * a.adjoint()).real();
    };
    const double h = std::log(10.0) / ppd, dx = 25.0 / ppd;
    const double x_c = std::min(L, dx / h);
    int steps = std::max(2, static_cast<int>(std::ceil(std::log(x_c / x_min) / h)));
    steps += steps % 2;
    const double hl = std::log(x_c / x_min) / steps;
    // Simpson in t = ln x, dx = x dt
    for (int i = 0; i <= steps; ++i) {
      const double x = x_min * std::exp(i * hl);
      add(x, ((i == 0 || i == steps) ? 1.0 : (i % 2 ? 4.0 : 2.0)) * hl / 3.0 * x);
    }
    if (L > x_c) {
      int m = std::max(2, static_cast<int>(std::ceil((L - x_c) / dx)));
      m += m % 2;
      const double hu = (L - x_c) / m;
      for (int i = 0; i <= m; ++i)
        add(x_c + i * hu, ((i == 0 || i == m) ? 1.0 : (i % 2 ? 4.0 : 2.0)) * hu / 3.0);
    }
    // 0 .. x_min, envelopes flat there
    add(x_min, x_min);
    return P;
  };
  Eigen::MatrixXd prev = integrate(points_per_decade);
  for (int d = 0; d < max_doublings; ++d) {
    points_per_decade *= 2;
    Eigen::MatrixXd next = integrate(points_per_decade);
    const double change = (next - prev).cwiseAbs().maxCoeff();
    if (change < tol) {
      SpatialProjector out;
      out.L = L;
      out.P = 0.5 * (next + next.transpose());
      out.p = out.P.diagonal();
      out.n_L = 2.0 * std::log(L) / std::log(chain.Lambda);
      return out;
    }
    prev = std::move(next);
  }
  throw AccuracyError("projector quadrature did not settle after " + std::to_string(max_doublings) + " doublings");
}

std::vector<std::vector<SplitAmplitude>> split_site_basis(double p, int channels) {
  if (!(p >= 0.0 && p <= 1.0)) throw std::invalid_argument("p must lie in [0, 1]");
  const int modes = 2 * channels, dim = 1 << modes;
  const double a_in = std::sqrt(p), a_out = std::sqrt(1.0 - p);
  std::vector<std::vector<SplitAmplitude>> out(dim);
  for (int s = 0; s < dim; ++s) {
    // every subset of the occupied modes goes out
    for (int o = s;; o = (o - 1) & s) {
      const int in = s & ~o;
      double amp = std::pow(a_in, std::popcount(static_cast<unsigned>(in))) *
                   std::pow(a_out, std::popcount(static_cast<unsigned>(o)));
      if (amp != 0.0) {
        // moving out modes ahead of lower in modes
        int swaps = 0;
        for (int l = 0; l < modes; ++l)
          if (o >> l & 1) swaps += std::popcount(static_cast<unsigned>(in & ((1 << l) - 1)));
        if (swaps & 1) amp = -amp;
        out[s].push_back({in, o, amp});
      }
      if (o == 0) break;
    }
  }
  return out;
}

Eigen::VectorXd inside_tail(double p, int channels) {
  const auto split = split_site_basis(p, channels);
  const int dim = static_cast<int>(split.size());
  Eigen::VectorXd t = Eigen::VectorXd::Zero(dim);
  for (const auto& terms : split)
    for (const auto& a : terms) t(a.in) += a.amp * a.amp / dim;
  return t;
}

namespace {

// Kept state of the original run, written as a purification over
// (reduced inside basis) x (environment).
struct Purified {
  std::vector<int> env;                // per inside sector: environment sector or -1
  std::vector<Eigen::MatrixXd> block;  // per inside sector: inside dim x env dim
};

struct Direction {
  double w;
  int sector, col;
};

// Eigen-directions of symmetric per-sector matrices, sorted by weight
// (largest first), with the count kept after dropping at most `drop` of
// the smallest weight and capping at `cap`.
struct Pruned {
  std::vector<Eigen::MatrixXd> vec;
  std::vector<Eigen::VectorXd> val;
  std::vector<Direction> order;
  int keep = 0;
  double dropped = 0.0;
};

Pruned prune(const std::vector<Eigen::MatrixXd>& m, double drop, int cap) {
  Pruned out;
  out.vec.resize(m.size());
  out.val.resize(m.size());
  for (size_t s = 0; s < m.size(); ++s) {
    if (m[s].size() == 0) continue;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m[s]);
    out.vec[s] = es.eigenvectors();
    out.val[s] = es.eigenvalues();
    for (Eigen::Index j = 0; j < es.eigenvalues().size(); ++j)
      out.order.push_back({es.eigenvalues()(j), static_cast<int>(s), static_cast<int>(j)});
  }
  std::stable_sort(out.order.begin(), out.order.end(), [](const Direction& a, const Direction& b) { return a.w > b.w; });
  int keep = static_cast<int>(out.order.size());
  double cum = 0.0;
  while (keep > 0) {
    const double w = std::max(out.order[keep - 1].w, 0.0);
    if (out.order[keep - 1].w > 0.0 && cum + w > drop && keep <= cap) break;
    cum += w;
    --keep;
  }
  out.keep = keep;
  out.dropped = cum;
  return out;
}

}  // namespace

ReducedState partial_trace_out(const NrgRun& run, const BlockThermalState& rho, const std::vector<double>& p,
                               const TraceOptions& opt) {
  const int N = static_cast<int>(run.shells.size()) - 1;
  if (static_cast<int>(p.size()) != N + 1) throw std::invalid_argument("need one p per site");
  if (rho.weights.size() != run.shells.size()) throw std::invalid_argument("thermal state does not match the run");
  const int M = run.spec.channels;
  const SiteBasis& site = run.site;
  const int max_basis = opt.max_basis > 0 ? opt.max_basis : run.keep_max;
  const int max_env = opt.max_env > 0 ? opt.max_env : 8 * max_basis;
  const auto future = future_density(run, rho);
  // sites after the last one with any inside weight are traced whole
  int n_last = 0;
  for (int n = 0; n <= N; ++n)
    if (p[n] > opt.out_threshold) n_last = n;
  // dropped discarded weight is the only trace loss
  const double drop_disc = std::min(opt.drop_weight, opt.max_trace_loss / (n_last + 1));

  std::vector<QN> out_qn(site.dim);
  for (int o = 0; o < site.dim; ++o) out_qn[o] = {site.occupancy[o], site.qn[o].sz2};

  // inside space of the reduced kept states, environment of the traced modes
  BathSectors in;
  in.add({0, 1}, 1);
  in.add({0, -1}, 1);
  std::vector<std::vector<int>> in_global = {{0}, {1}};
  std::vector<QN> in_qn_global = {{0, 1}, {0, -1}};
  BathSectors env;
  env.add({0, 0}, 1);
  std::vector<Purified> Y(2);
  for (int k = 0; k < 2; ++k) {
    Y[k].env = {k == 0 ? 0 : -1, k == 1 ? 0 : -1};
    Y[k].block.resize(2);
    Y[k].block[k] = Eigen::MatrixXd::Ones(1, 1);
  }

  ReducedState R;
  BlockChain& C = R.chain;
  C.channels = M;
  C.site_qn = site.qn;
  double lost = 0.0;

  for (int n = 0; n <= n_last; ++n) {
    const StepStates& st = *run.shells[n].states;
    if (st.prev_qn.size() != Y.size()) throw InvariantError("purified states do not match the step");
    const bool last = n == n_last;
    const auto split = split_site_basis(p[n], M);
    const SectorLayout Lin = tensor_site(in, site.qn);
    const SectorLayout Lenv = tensor_site(env, out_qn);
    const int nin = static_cast<int>(Lin.out.qn.size()), nenv = static_cast<int>(Lenv.out.qn.size());

    std::vector<Eigen::MatrixXd> rho_in(nin), om_in(nin), om_env(nenv);
    auto acc = [](Eigen::MatrixXd& m, int d) {
      if (m.size() == 0) m = Eigen::MatrixXd::Zero(d, d);
    };

    std::vector<std::vector<int>> disc_of(st.sectors.size()), kept_of(st.sectors.size());
    for (size_t i = 0; i < st.discarded.size(); ++i) disc_of[st.discarded[i].sector].push_back(static_cast<int>(i));
    for (size_t g = 0; g < st.kept.size(); ++g) kept_of[st.kept[g].sector].push_back(static_cast<int>(g));

    // per original sector: flat (inside sector, env sector) layout and the kept columns in it
    struct Flat {
      std::vector<std::array<int, 3>> rec;  // (inside sector, env sector, offset)
      Eigen::MatrixXd kept;                 // flat x kept-of-sector
    };
    std::vector<Flat> flats(st.sectors.size());

    for (size_t b = 0; b < st.sectors.size(); ++b) {
      const auto& blk = st.sectors[b];
      if (disc_of[b].empty() && kept_of[b].empty()) continue;
      Flat& F = flats[b];
      std::vector<int> rec_of(nin, -1);
      int flat = 0;
      for (int qi = 0; qi < nin; ++qi) {
        const int qe = Lenv.out.find(blk.qn - Lin.out.qn[qi]);
        if (qe < 0) continue;
        rec_of[qi] = static_cast<int>(F.rec.size());
        F.rec.push_back({qi, qe, flat});
        flat += Lin.out.dim[qi] * Lenv.out.dim[qe];
      }
      if (flat == 0) continue;
      const int rows = static_cast<int>(blk.prev.size());
      Eigen::MatrixXd T = Eigen::MatrixXd::Zero(flat, rows);
      for (int r = 0; r < rows; ++r) {
        const Purified& y = Y[blk.prev[r]];
        for (size_t A = 0; A < in.qn.size(); ++A) {
          const int E = y.env[A];
          if (E < 0 || y.block[A].size() == 0) continue;
          // out modes of this site pass the inside modes of earlier sites
          const bool odd_in = ((in.qn[A].charge + M * n) & 1) != 0;
          for (const auto& t : split[blk.site[r]]) {
            const int qi = Lin.target[A][t.in], qe = Lenv.target[E][t.out];
            const int ri = rec_of[qi];
            if (ri < 0 || F.rec[ri][1] != qe) throw InvariantError("split term leaves its symmetry sector");
            const double a = (odd_in && (std::popcount(static_cast<unsigned>(t.out)) & 1)) ? -t.amp : t.amp;
            Eigen::Map<Eigen::MatrixXd> Bk(T.col(r).data() + F.rec[ri][2], Lin.out.dim[qi], Lenv.out.dim[qe]);
            Bk.block(Lin.offset[A][t.in], Lenv.offset[E][t.out], in.dim[A], env.dim[E]) += a * y.block[A];
          }
        }
      }

      // discarded: inside densities
      for (int i : disc_of[b]) {
        const double w = rho.weights[n][i];
        if (w <= 0.0) continue;
        const Eigen::VectorXd v = T * blk.vectors.col(st.discarded[i].col);
        for (const auto& [qi, qe, off] : F.rec) {
          Eigen::Map<const Eigen::MatrixXd> Bk(v.data() + off, Lin.out.dim[qi], Lenv.out.dim[qe]);
          acc(rho_in[qi], Lin.out.dim[qi]);
          rho_in[qi].noalias() += w * Bk * Bk.transpose();
        }
      }
      if (kept_of[b].empty()) continue;

      // kept: carried on, weighted by what the future does with them
      const int nk = static_cast<int>(kept_of[b].size());
      Eigen::MatrixXd cols(rows, nk), Fb(nk, nk);
      for (int j = 0; j < nk; ++j) {
        cols.col(j) = blk.vectors.col(st.kept[kept_of[b][j]].col);
        for (int l = 0; l < nk; ++l) Fb(j, l) = future[n](kept_of[b][j], kept_of[b][l]);
      }
      F.kept = T * cols;
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(Fb);
      const Eigen::VectorXd f = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
      const Eigen::MatrixXd Z = F.kept * es.eigenvectors() * f.asDiagonal();
      if (last) {
        // everything later is outside: only the inside density is left
        for (const auto& [qi, qe, off] : F.rec) {
          acc(rho_in[qi], Lin.out.dim[qi]);
          for (int j = 0; j < nk; ++j) {
            Eigen::Map<const Eigen::MatrixXd> Bk(Z.col(j).data() + off, Lin.out.dim[qi], Lenv.out.dim[qe]);
            rho_in[qi].noalias() += Bk * Bk.transpose();
          }
        }
        continue;
      }
      for (const auto& [qi, qe, off] : F.rec) {
        acc(om_in[qi], Lin.out.dim[qi]);
        acc(om_env[qe], Lenv.out.dim[qe]);
        for (int j = 0; j < nk; ++j) {
          if (f(j) == 0.0) continue;
          Eigen::Map<const Eigen::MatrixXd> Bk(Z.col(j).data() + off, Lin.out.dim[qi], Lenv.out.dim[qe]);
          om_in[qi].noalias() += Bk * Bk.transpose();
          om_env[qe].noalias() += Bk.transpose() * Bk;
        }
      }
    }

    // reduced discarded and kept states
    const Pruned D = prune(rho_in, drop_disc, std::numeric_limits<int>::max());
    Pruned K;
    if (!last) K = prune(om_in, opt.drop_weight, max_basis);
    const Pruned Ev = last ? Pruned{} : prune(om_env, opt.drop_weight, max_env);

    auto st_out = std::make_shared<StepStates>();
    st_out->n = n;
    st_out->prev_qn = in_qn_global;
    std::vector<int> sec_of(nin, -1);
    std::vector<std::vector<int>> k_cols(nin), d_cols(nin);
    for (int j = 0; j < K.keep; ++j) k_cols[K.order[j].sector].push_back(K.order[j].col);
    for (int j = 0; j < D.keep; ++j) d_cols[D.order[j].sector].push_back(D.order[j].col);
    for (int qi = 0; qi < nin; ++qi) {
      if (k_cols[qi].empty() && d_cols[qi].empty()) continue;
      sec_of[qi] = static_cast<int>(st_out->sectors.size());
      SectorBlock sb;
      sb.qn = Lin.out.qn[qi];
      for (const auto& [A, s, off] : Lin.blocks[qi])
        for (int i = 0; i < in.dim[A]; ++i) {
          sb.prev.push_back(in_global[A][i]);
          sb.site.push_back(s);
        }
      const int nk = static_cast<int>(k_cols[qi].size()), nd = static_cast<int>(d_cols[qi].size());
      sb.vectors.resize(Lin.out.dim[qi], nk + nd);
      sb.energies.resize(nk + nd);
      for (int j = 0; j < nk; ++j) sb.vectors.col(j) = K.vec[qi].col(k_cols[qi][j]), sb.energies(j) = 0.0;
      for (int j = 0; j < nd; ++j) {
        sb.vectors.col(nk + j) = D.vec[qi].col(d_cols[qi][j]);
        sb.energies(nk + j) = -std::log(D.val[qi](d_cols[qi][j]));
      }
      st_out->sectors.push_back(std::move(sb));
    }
    // projections onto the truncated bases shrink the block; restore its
    // thermal weight
    double reduced = 0.0, target = rho.block_trace[n];
    for (const auto& m : rho_in)
      if (m.size()) reduced += m.trace();
    if (last)
      for (int m = n + 1; m <= N; ++m) target += rho.block_trace[m];
    const double scale = reduced > 0.0 ? target / reduced : 0.0;
    R.projection_loss += std::max(0.0, target - reduced);
    lost += reduced > 0.0 ? D.dropped * scale : target;
    std::vector<double> wts, en;
    {
      std::vector<int> seen(nin, 0);
      for (int j = 0; j < D.keep; ++j) {
        const auto& d = D.order[j];
        st_out->discarded.push_back({sec_of[d.sector], static_cast<int>(k_cols[d.sector].size()) + seen[d.sector]++});
        wts.push_back(d.w * scale);
        en.push_back(-std::log(d.w));
      }
    }

    // next inside basis: sectors in order, columns in weight order
    BathSectors next_in;
    std::vector<std::vector<int>> next_global;
    std::vector<QN> next_qn;
    std::vector<int> new_in(nin, -1);
    for (int qi = 0; qi < nin; ++qi) {
      if (k_cols[qi].empty()) continue;
      new_in[qi] = next_in.add(Lin.out.qn[qi], static_cast<int>(k_cols[qi].size()));
      next_global.emplace_back();
      for (size_t j = 0; j < k_cols[qi].size(); ++j) {
        next_global.back().push_back(static_cast<int>(next_qn.size()));
        st_out->kept.push_back({sec_of[qi], static_cast<int>(j)});
        next_qn.push_back(Lin.out.qn[qi]);
      }
    }
    C.steps.push_back(st_out);
    C.weights.push_back(std::move(wts));
    C.energy.push_back(std::move(en));
    C.tail.push_back(inside_tail(p[n], M));
    R.kept_dim.push_back(static_cast<int>(next_qn.size()));
    if (last) {
      R.env_dim.push_back(env.total());
      break;
    }

    // next environment and the compressed purifications
    std::vector<std::vector<int>> e_cols(nenv);
    for (int j = 0; j < Ev.keep; ++j) e_cols[Ev.order[j].sector].push_back(Ev.order[j].col);
    BathSectors next_env;
    std::vector<int> new_env(nenv, -1);
    std::vector<Eigen::MatrixXd> Benv(nenv), Bin(nin);
    for (int qe = 0; qe < nenv; ++qe) {
      if (e_cols[qe].empty()) continue;
      new_env[qe] = next_env.add(Lenv.out.qn[qe], static_cast<int>(e_cols[qe].size()));
      Benv[qe].resize(Lenv.out.dim[qe], e_cols[qe].size());
      for (size_t j = 0; j < e_cols[qe].size(); ++j) Benv[qe].col(j) = Ev.vec[qe].col(e_cols[qe][j]);
    }
    for (int qi = 0; qi < nin; ++qi) {
      if (k_cols[qi].empty()) continue;
      Bin[qi].resize(Lin.out.dim[qi], k_cols[qi].size());
      for (size_t j = 0; j < k_cols[qi].size(); ++j) Bin[qi].col(j) = K.vec[qi].col(k_cols[qi][j]);
    }
    std::vector<Purified> nextY(st.kept.size());
    for (size_t b = 0; b < st.sectors.size(); ++b) {
      const Flat& F = flats[b];
      for (size_t j = 0; j < kept_of[b].size(); ++j) {
        Purified& y = nextY[kept_of[b][j]];
        y.env.assign(next_in.qn.size(), -1);
        y.block.resize(next_in.qn.size());
        if (F.kept.size() == 0) continue;
        for (const auto& [qi, qe, off] : F.rec) {
          if (new_in[qi] < 0 || new_env[qe] < 0) continue;
          Eigen::Map<const Eigen::MatrixXd> Bk(F.kept.col(j).data() + off, Lin.out.dim[qi], Lenv.out.dim[qe]);
          y.block[new_in[qi]] = Bin[qi].transpose() * Bk * Benv[qe];
          y.env[new_in[qi]] = new_env[qe];
        }
      }
    }
    Y = std::move(nextY);
    in = std::move(next_in);
    in_global = std::move(next_global);
    in_qn_global = std::move(next_qn);
    env = std::move(next_env);
    R.env_dim.push_back(env.total());
  }

  double total = 0.0;
  for (const auto& w : C.weights) total += std::accumulate(w.begin(), w.end(), 0.0);
  R.trace_loss = lost;
  if (R.trace_loss > opt.max_trace_loss)
    throw TruncationError("partial trace lost " + std::to_string(R.trace_loss) + " of the trace");
  for (auto& w : C.weights)
    for (double& x : w) x /= total;
  return R;
}

}  // namespace kondo_eof
