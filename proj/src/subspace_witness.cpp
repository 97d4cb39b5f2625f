#include "kondo_eof/subspace_witness.hpp"

#include <algorithm>
#include <boost/math/tools/minima.hpp>
#include <cmath>
#include <map>
#include <numeric>

namespace kondo_eof {

double UnitTerms::trace() const {
  double t = 0.0;
  for (const auto& x : terms) t += x.weight;
  return t;
}

UnitTerms terms_from_density(const Eigen::MatrixXcd& rho, int d, double cutoff) {
  if (rho.rows() != 2 * d || rho.cols() != 2 * d) throw std::invalid_argument("density must be 2d x 2d");
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(0.5 * (rho + rho.adjoint()));
  const double tr = rho.trace().real();
  UnitTerms u;
  u.sector_dims = {d};
  u.excluded.assign(1, Eigen::MatrixXcd());
  for (int k = static_cast<int>(es.eigenvalues().size()) - 1; k >= 0; --k) {
    const double w = es.eigenvalues()(k);
    if (w <= cutoff * tr) continue;
    BathTerm t;
    t.weight = w;
    t.energy = -w;
    t.up = es.eigenvectors().col(k).head(d);
    t.dn = es.eigenvectors().col(k).tail(d);
    t.sec_up = t.up.norm() > 0 ? 0 : -1;
    t.sec_dn = t.dn.norm() > 0 ? 0 : -1;
    u.terms.push_back(std::move(t));
  }
  return u;
}

Eigen::MatrixXcd density_from_terms(const UnitTerms& u) {
  if (u.sector_dims.size() != 1) throw std::invalid_argument("single-sector unit expected");
  const int d = u.sector_dims[0];
  Eigen::MatrixXcd rho = Eigen::MatrixXcd::Zero(2 * d, 2 * d);
  for (const auto& t : u.terms) {
    Eigen::VectorXcd psi = Eigen::VectorXcd::Zero(2 * d);
    if (t.sec_up >= 0) psi.head(d) = t.up;
    if (t.sec_dn >= 0) psi.tail(d) = t.dn;
    rho += t.weight * psi * psi.adjoint();
  }
  return rho;
}

namespace {

constexpr double kDependent = 1e-8;

std::vector<int> term_order(const UnitTerms& u, PairOrdering order) {
  std::vector<int> idx(u.terms.size());
  std::iota(idx.begin(), idx.end(), 0);
  const auto& T = u.terms;
  if (order == PairOrdering::weight) {
    std::stable_sort(idx.begin(), idx.end(), [&](int a, int b) {
      if (T[a].weight != T[b].weight) return T[a].weight > T[b].weight;
      if (T[a].energy != T[b].energy) return T[a].energy < T[b].energy;
      return T[a].sz2 < T[b].sz2;
    });
  } else {
    std::stable_sort(idx.begin(), idx.end(), [&](int a, int b) {
      if (T[a].own != T[b].own) return T[a].own;
      if (T[a].own && T[a].energy != T[b].energy) return T[a].energy < T[b].energy;
      if (T[a].weight != T[b].weight) return T[a].weight > T[b].weight;
      return T[a].sz2 < T[b].sz2;
    });
  }
  return idx;
}

struct Basis {
  Eigen::MatrixXcd q;
  int n = 0;
};

Eigen::VectorXcd project_out(const Eigen::VectorXcd& v, const Eigen::MatrixXcd& excl, const Basis& b) {
  Eigen::VectorXcd x = v;
  for (int pass = 0; pass < 2; ++pass) {
    if (excl.cols() > 0) x -= excl * (excl.adjoint() * x);
    if (b.n > 0) x -= b.q.leftCols(b.n) * (b.q.leftCols(b.n).adjoint() * x);
  }
  return x;
}

void push(Basis& b, const Eigen::VectorXcd& v) {
  if (b.q.cols() <= b.n) {
    Eigen::MatrixXcd grown(v.size(), std::max<Eigen::Index>(8, 2 * b.q.cols()));
    if (b.n > 0) grown.leftCols(b.n) = b.q.leftCols(b.n);
    b.q.swap(grown);
  }
  b.q.col(b.n++) = v;
}

// Coefficients <eta phi_a|psi_t> of every term touching a pair.
struct PairCoefficients {
  std::vector<int> terms;
  Eigen::MatrixXcd c;  // terms x 4, column eta*2 + a
};

PairCoefficients coefficients(const UnitTerms& u, const BathPair& p) {
  PairCoefficients out;
  for (int t = 0; t < static_cast<int>(u.terms.size()); ++t) {
    const auto& x = u.terms[t];
    if (x.sec_up != p.sec_up && x.sec_up != p.sec_dn && x.sec_dn != p.sec_up && x.sec_dn != p.sec_dn) continue;
    out.terms.push_back(t);
  }
  out.c = Eigen::MatrixXcd::Zero(out.terms.size(), 4);
  for (size_t r = 0; r < out.terms.size(); ++r) {
    const auto& x = u.terms[out.terms[r]];
    const int sec[2] = {x.sec_up, x.sec_dn};
    const Eigen::VectorXcd* comp[2] = {&x.up, &x.dn};
    const int psec[2] = {p.sec_up, p.sec_dn};
    const Eigen::VectorXcd* phi[2] = {&p.up, &p.dn};
    for (int eta = 0; eta < 2; ++eta)
      for (int a = 0; a < 2; ++a)
        if (sec[eta] >= 0 && sec[eta] == psec[a]) out.c(r, eta * 2 + a) = phi[a]->dot(*comp[eta]);
  }
  return out;
}

double pair_value(const Mat4c& rho) {
  if (rho.trace().real() <= 0.0) return 0.0;
  return eof(rho);
}

// Full-length coefficient columns for the heaviest pairs (rows = all terms).
Eigen::MatrixXcd dense_coefficients(const UnitTerms& u, const BathPair& p) {
  auto pc = coefficients(u, p);
  Eigen::MatrixXcd c = Eigen::MatrixXcd::Zero(u.terms.size(), 4);
  for (size_t r = 0; r < pc.terms.size(); ++r) c.row(pc.terms[r]) = pc.c.row(r);
  return c;
}

struct Rotation {
  double theta = 0.0, chi = 0.0, gain = 0.0;
};

// Mixing matrix for the rotated pair i (first) or j (second) in the joint
// coordinates (c_i, c_j).
Eigen::Matrix<cplx, 4, 8> mixing(double theta, double chi, bool first) {
  Eigen::Matrix<cplx, 4, 8> R = Eigen::Matrix<cplx, 4, 8>::Zero();
  const double ang[2] = {theta, chi};
  for (int eta = 0; eta < 2; ++eta)
    for (int a = 0; a < 2; ++a) {
      const double c = std::cos(ang[a]), s = std::sin(ang[a]);
      const int row = eta * 2 + a;
      if (first) {
        R(row, row) = c;
        R(row, 4 + row) = s;
      } else {
        R(row, row) = -s;
        R(row, 4 + row) = c;
      }
    }
  return R;
}

Rotation best_rotation(const Eigen::Matrix<cplx, 8, 8>& joint, double base) {
  auto value = [&](double th, double ch) {
    const auto Ri = mixing(th, ch, true), Rj = mixing(th, ch, false);
    const Mat4c a = Ri * joint * Ri.adjoint(), b = Rj * joint * Rj.adjoint();
    return pair_value(a) + pair_value(b);
  };
  Rotation best;
  double bv = base;
  const int grid = 8;
  for (int i = 0; i < grid; ++i)
    for (int k = 0; k < grid; ++k) {
      const double th = M_PI * i / grid, ch = M_PI * k / grid;
      const double v = value(th, ch);
      if (v > bv + 1e-14) {
        bv = v;
        best = {th, ch, 0.0};
      }
    }
  const double h = M_PI / grid;
  for (int round = 0; round < 3; ++round) {
    auto r1 = boost::math::tools::brent_find_minima(
        [&](double th) { return -value(th, best.chi); }, best.theta - h, best.theta + h, 40);
    if (-r1.second > bv) {
      bv = -r1.second;
      best.theta = r1.first;
    }
    auto r2 = boost::math::tools::brent_find_minima(
        [&](double ch) { return -value(best.theta, ch); }, best.chi - h, best.chi + h, 40);
    if (-r2.second > bv) {
      bv = -r2.second;
      best.chi = r2.first;
    }
  }
  best.gain = bv - base;
  return best;
}

}  // namespace

PairSet orthonormalize_bath_pairs(const UnitTerms& u, PairOrdering order) {
  const int S = static_cast<int>(u.sector_dims.size());
  std::vector<Basis> basis(S);
  PairSet out;
  auto excl = [&](int s) -> const Eigen::MatrixXcd& {
    static const Eigen::MatrixXcd none;
    return s < static_cast<int>(u.excluded.size()) ? u.excluded[s] : none;
  };
  for (int t : term_order(u, order)) {
    const auto& x = u.terms[t];
    if (x.sec_up < 0 || x.sec_dn < 0) {
      ++out.dropped;
      continue;
    }
    if (basis[x.sec_up].n >= u.sector_dims[x.sec_up] || basis[x.sec_dn].n >= u.sector_dims[x.sec_dn]) {
      ++out.dropped;
      continue;
    }
    const double nu = x.up.norm(), nd = x.dn.norm();
    if (nu < kDependent || nd < kDependent) {
      ++out.dropped;
      continue;
    }
    Eigen::VectorXcd a = project_out(x.up / nu, excl(x.sec_up), basis[x.sec_up]);
    if (a.norm() < kDependent) {
      ++out.dropped;
      continue;
    }
    a.normalize();
    Eigen::VectorXcd b = project_out(x.dn / nd, excl(x.sec_dn), basis[x.sec_dn]);
    if (x.sec_dn == x.sec_up) b -= a * a.dot(b);
    if (b.norm() < kDependent) {
      ++out.dropped;
      continue;
    }
    b.normalize();
    push(basis[x.sec_up], a);
    push(basis[x.sec_dn], b);
    out.pairs.push_back({x.sec_up, x.sec_dn, a, b});
  }
  return out;
}

namespace {

// Calls fn(pair, term indices, coefficients terms x 4) with <eta phi_a|psi_t>
// in column eta * 2 + a, grouping pairs by sector signature so the term scan
// is shared.
template <class Fn>
void for_each_pair_coefficients(const UnitTerms& u, const PairSet& p, Fn&& fn) {
  std::map<std::pair<int, int>, std::vector<int>> groups;
  for (int i = 0; i < static_cast<int>(p.pairs.size()); ++i)
    groups[{p.pairs[i].sec_up, p.pairs[i].sec_dn}].push_back(i);
  for (const auto& [sig, members] : groups) {
    const int su = sig.first, sd = sig.second;
    std::vector<int> terms;
    for (int t = 0; t < static_cast<int>(u.terms.size()); ++t) {
      const auto& x = u.terms[t];
      if (x.sec_up == su || x.sec_up == sd || x.sec_dn == su || x.sec_dn == sd) terms.push_back(t);
    }
    const int m = static_cast<int>(members.size());
    Eigen::MatrixXcd Pu(u.sector_dims[su], m), Pd(u.sector_dims[sd], m);
    for (int k = 0; k < m; ++k) {
      Pu.col(k) = p.pairs[members[k]].up;
      Pd.col(k) = p.pairs[members[k]].dn;
    }
    auto overlaps = [&](int eta, int slot_sec, const Eigen::MatrixXcd& P) {
      Eigen::MatrixXcd E = Eigen::MatrixXcd::Zero(u.sector_dims[slot_sec], terms.size());
      for (size_t r = 0; r < terms.size(); ++r) {
        const auto& x = u.terms[terms[r]];
        if (eta == 0 && x.sec_up == slot_sec) E.col(r) = x.up;
        if (eta == 1 && x.sec_dn == slot_sec) E.col(r) = x.dn;
      }
      return Eigen::MatrixXcd(P.adjoint() * E);  // m x terms
    };
    const Eigen::MatrixXcd c0 = overlaps(0, su, Pu), c1 = overlaps(0, sd, Pd);
    const Eigen::MatrixXcd c2 = overlaps(1, su, Pu), c3 = overlaps(1, sd, Pd);
    for (int k = 0; k < m; ++k) {
      Eigen::MatrixXcd C(terms.size(), 4);
      C.col(0) = c0.row(k).transpose();
      C.col(1) = c1.row(k).transpose();
      C.col(2) = c2.row(k).transpose();
      C.col(3) = c3.row(k).transpose();
      fn(members[k], terms, C);
    }
  }
}

}  // namespace

std::vector<Mat4c> pair_densities(const UnitTerms& u, const PairSet& p) {
  std::vector<Mat4c> rho(p.pairs.size(), Mat4c::Zero());
  for_each_pair_coefficients(u, p, [&](int i, const std::vector<int>& terms, const Eigen::MatrixXcd& C) {
    Eigen::VectorXd w(terms.size());
    for (size_t r = 0; r < terms.size(); ++r) w(r) = u.terms[terms[r]].weight;
    rho[i] = C.transpose() * w.asDiagonal() * C.conjugate();
  });
  return rho;
}

std::vector<Eigen::MatrixXcd> pair_coefficients(const UnitTerms& u, const PairSet& p) {
  std::vector<Eigen::MatrixXcd> out(p.pairs.size());
  for_each_pair_coefficients(u, p, [&](int i, const std::vector<int>& terms, const Eigen::MatrixXcd& C) {
    out[i] = Eigen::MatrixXcd::Zero(u.terms.size(), 4);
    for (size_t r = 0; r < terms.size(); ++r) out[i].row(terms[r]) = C.row(r);
  });
  return out;
}

UnitLowerBound unit_lower_bound(const UnitTerms& u, PairOrdering order, const WitnessOptions& opt) {
  UnitLowerBound lb;
  lb.ordering = order;
  lb.pairset = orthonormalize_bath_pairs(u, order);
  lb.pairs = static_cast<int>(lb.pairset.pairs.size());
  lb.dropped = lb.pairset.dropped;
  lb.rho = pair_densities(u, lb.pairset);
  auto& pairs = lb.pairset.pairs;

  // heaviest pairs take part in rotations and in the leakage diagnostic
  std::vector<int> heavy(pairs.size());
  std::iota(heavy.begin(), heavy.end(), 0);
  std::stable_sort(heavy.begin(), heavy.end(), [&](int a, int b) {
    return lb.rho[a].trace().real() > lb.rho[b].trace().real();
  });
  if (static_cast<int>(heavy.size()) > opt.improve_pairs) heavy.resize(opt.improve_pairs);
  std::vector<Eigen::MatrixXcd> C;
  for (int i : heavy) C.push_back(dense_coefficients(u, pairs[i]));
  Eigen::VectorXd w(u.terms.size());
  for (size_t t = 0; t < u.terms.size(); ++t) w(t) = u.terms[t].weight;

  if (opt.improve && heavy.size() > 1) {
    for (int sweep = 0; sweep < opt.max_sweeps; ++sweep) {
      int accepted = 0;
      for (size_t a = 0; a < heavy.size(); ++a)
        for (size_t b = a + 1; b < heavy.size(); ++b) {
          const int i = heavy[a], j = heavy[b];
          if (pairs[i].sec_up != pairs[j].sec_up || pairs[i].sec_dn != pairs[j].sec_dn) continue;
          Eigen::Matrix<cplx, Eigen::Dynamic, 8> J(u.terms.size(), 8);
          J.leftCols(4) = C[a];
          J.rightCols(4) = C[b];
          const Eigen::Matrix<cplx, 8, 8> joint = J.transpose() * w.asDiagonal() * J.conjugate();
          const double base = pair_value(lb.rho[i]) + pair_value(lb.rho[j]);
          const Rotation r = best_rotation(joint, base);
          if (r.gain <= 1e-12 * std::max(1.0, base)) continue;
          const double ct = std::cos(r.theta), st = std::sin(r.theta);
          const double cc = std::cos(r.chi), sc = std::sin(r.chi);
          auto rot = [](Eigen::VectorXcd& x, Eigen::VectorXcd& y, double c, double s) {
            Eigen::VectorXcd nx = c * x + s * y, ny = -s * x + c * y;
            x.swap(nx);
            y.swap(ny);
          };
          rot(pairs[i].up, pairs[j].up, ct, st);
          rot(pairs[i].dn, pairs[j].dn, cc, sc);
          const auto Ri = mixing(r.theta, r.chi, true), Rj = mixing(r.theta, r.chi, false);
          const Eigen::MatrixXcd Ci = J * Ri.transpose(), Cj = J * Rj.transpose();
          C[a] = Ci;
          C[b] = Cj;
          lb.rho[i] = Ri * joint * Ri.adjoint();
          lb.rho[j] = Rj * joint * Rj.adjoint();
          ++accepted;
        }
      lb.sweeps = sweep + 1;
      lb.rotations += accepted;
      if (accepted == 0) break;
    }
  }

  if (heavy.size() > 1) {
    Eigen::MatrixXcd all(u.terms.size(), 4 * heavy.size());
    for (size_t a = 0; a < heavy.size(); ++a) all.middleCols(4 * a, 4) = C[a];
    const Eigen::MatrixXcd M = all.transpose() * w.asDiagonal() * all.conjugate();
    double off = 0.0;
    for (size_t a = 0; a < heavy.size(); ++a)
      for (size_t b = 0; b < heavy.size(); ++b)
        if (a != b) off += M.block(4 * a, 4 * b, 4, 4).squaredNorm();
    lb.leakage = std::sqrt(off);
  }

  lb.value = 0.0;
  for (size_t i = 0; i < pairs.size(); ++i) {
    if (opt.certify) {
      if (lb.rho[i].trace().real() <= 0.0) continue;
      const auto X = eof_witness_from(best_concurrence_witness(lb.rho[i], opt.slocc), lb.rho[i]);
      lb.value += (X.matrix * lb.rho[i]).trace().real();
    } else {
      lb.value += pair_value(lb.rho[i]);
    }
  }
  return lb;
}

UnitLowerBound best_unit_lower_bound(const UnitTerms& u, const WitnessOptions& opt) {
  auto a = unit_lower_bound(u, PairOrdering::weight, opt);
  auto b = unit_lower_bound(u, PairOrdering::energy, opt);
  return b.value > a.value ? b : a;
}

std::vector<SubspaceWitness> global_witness(const UnitLowerBound& lb, const SloccOptions& opt) {
  std::vector<SubspaceWitness> out;
  for (size_t i = 0; i < lb.pairset.pairs.size(); ++i) {
    SubspaceWitness s;
    s.pair = lb.pairset.pairs[i];
    if (lb.rho[i].trace().real() > 0.0)
      s.X = eof_witness_from(best_concurrence_witness(lb.rho[i], opt), lb.rho[i]);
    out.push_back(std::move(s));
  }
  return out;
}

double witness_expectation(const std::vector<SubspaceWitness>& X, const Eigen::VectorXcd& psi) {
  const Eigen::Index d = psi.size() / 2;
  double v = 0.0;
  for (const auto& s : X) {
    Eigen::Vector4cd c;
    c(0) = s.pair.up.dot(psi.head(d));
    c(1) = s.pair.dn.dot(psi.head(d));
    c(2) = s.pair.up.dot(psi.tail(d));
    c(3) = s.pair.dn.dot(psi.tail(d));
    v += (c.adjoint() * s.X.matrix * c)(0, 0).real();
  }
  return v;
}

}  // namespace kondo_eof
