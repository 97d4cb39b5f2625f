#include "kondo_eof/upper_bound.hpp"

#include <algorithm>
#include <boost/math/tools/minima.hpp>
#include <cmath>
#include <numeric>

namespace kondo_eof {

std::vector<Target> witness_targets(const std::vector<Mat4c>& rho, double cutoff) {
  std::vector<Target> out;
  for (int i = 0; i < static_cast<int>(rho.size()); ++i) {
    const double tr = rho[i].trace().real();
    if (tr <= 0.0) continue;
    for (const auto& c : saturating_states(rho[i]))
      if (c.weight > cutoff * tr) out.push_back({i, c.weight, c.state});
  }
  return out;
}

Eigen::MatrixXcd w_matrix(const std::vector<Target>& targets, const std::vector<Eigen::MatrixXcd>& coeffs,
                          const Eigen::VectorXd& pbar, double y1, double y2) {
  const int D = static_cast<int>(pbar.size());
  Eigen::MatrixXcd W(targets.size(), D);
  const Eigen::VectorXd right = pbar.array().pow(y2);
  for (size_t l = 0; l < targets.size(); ++l) {
    const auto& t = targets[l];
    // <psi_d|psi_l> = sum_k z_k conj(c_dk)
    const Eigen::VectorXcd ov = coeffs[t.pair].conjugate() * t.z;
    W.row(l) = (std::pow(t.weight, y1) * ov.cwiseProduct(right.cast<cplx>())).transpose();
  }
  return W;
}

Eigen::MatrixXcd left_unitary(const Eigen::MatrixXcd& W) {
  const Eigen::Index L = W.rows(), D = W.cols();
  if (L > D) {
    // tall: W = QR, polar factor of the square R
    Eigen::HouseholderQR<Eigen::MatrixXcd> qr(W);
    const Eigen::MatrixXcd Q = qr.householderQ() * Eigen::MatrixXcd::Identity(L, D);
    const Eigen::MatrixXcd R = qr.matrixQR().topRows(D).triangularView<Eigen::Upper>();
    Eigen::BDCSVD<Eigen::MatrixXcd> svd(R, Eigen::ComputeFullU | Eigen::ComputeFullV);
    return Q * (svd.matrixU() * svd.matrixV().adjoint());
  }
  Eigen::BDCSVD<Eigen::MatrixXcd> svd(W, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const Eigen::MatrixXcd& A = svd.matrixU();
  const Eigen::MatrixXcd& B = svd.matrixV();
  if (L >= D) return A.leftCols(D) * B.adjoint();
  // pad with the orthogonal complement of the row space
  Eigen::MatrixXcd U(D, D);
  U.topRows(L) = A * B.leftCols(L).adjoint();
  U.bottomRows(D - L) = B.rightCols(D - L).adjoint();
  return U;
}

double term_entanglement(const BathTerm& t) {
  const double a = t.sec_up >= 0 ? t.up.squaredNorm() : 0.0;
  const double b = t.sec_dn >= 0 ? t.dn.squaredNorm() : 0.0;
  const double c = (t.sec_up >= 0 && t.sec_up == t.sec_dn) ? std::abs(t.dn.dot(t.up)) : 0.0;
  const double p = a + b;
  if (p <= 0.0) return 0.0;
  const double lam = 0.5 * p + std::sqrt(0.25 * (a - b) * (a - b) + c * c);
  return binary_entropy(std::clamp(lam / p, 0.0, 1.0));
}

namespace {

// Bath Grams of the term components: uu(d,d') = <up_d|up_d'>, dd likewise,
// du(d,d') = <dn_d|up_d'>.
struct Grams {
  Eigen::MatrixXcd uu, dd, du;
  Eigen::VectorXd sqrt_w;
};

Grams impurity_grams(const UnitTerms& u) {
  const int D = static_cast<int>(u.terms.size());
  Grams g;
  g.uu = g.dd = g.du = Eigen::MatrixXcd::Zero(D, D);
  g.sqrt_w.resize(D);
  for (int d = 0; d < D; ++d) g.sqrt_w(d) = std::sqrt(u.terms[d].weight);
  for (int s = 0; s < static_cast<int>(u.sector_dims.size()); ++s) {
    Eigen::MatrixXcd E = Eigen::MatrixXcd::Zero(u.sector_dims[s], D), F = E;
    bool any_e = false, any_f = false;
    for (int d = 0; d < D; ++d) {
      const auto& t = u.terms[d];
      if (t.sec_up == s) E.col(d) = t.up, any_e = true;
      if (t.sec_dn == s) F.col(d) = t.dn, any_f = true;
    }
    if (any_e) g.uu += E.adjoint() * E;
    if (any_f) g.dd += F.adjoint() * F;
    if (any_e && any_f) g.du += F.adjoint() * E;
  }
  return g;
}

double average(const Grams& g, const Eigen::MatrixXcd& U) {
  const Eigen::MatrixXcd A = U * g.sqrt_w.asDiagonal();
  const Eigen::MatrixXcd Ac = A.conjugate();
  const Eigen::VectorXd a = (Ac * g.uu).cwiseProduct(A).rowwise().sum().real();
  const Eigen::VectorXd b = (Ac * g.dd).cwiseProduct(A).rowwise().sum().real();
  const Eigen::VectorXcd c = (Ac * g.du).cwiseProduct(A).rowwise().sum();
  double total = 0.0;
  for (Eigen::Index l = 0; l < A.rows(); ++l) {
    const double p = a(l) + b(l);
    if (p <= 0.0) continue;
    const double lam = 0.5 * p + std::sqrt(0.25 * (a(l) - b(l)) * (a(l) - b(l)) + std::norm(c(l)));
    total += p * binary_entropy(std::clamp(lam / p, 0.0, 1.0));
  }
  return total;
}

double unitarity_defect(const Eigen::MatrixXcd& U) {
  const Eigen::MatrixXcd G = U.adjoint() * U;
  return (G - Eigen::MatrixXcd::Identity(G.rows(), G.cols())).cwiseAbs().maxCoeff();
}

}  // namespace

double decomposition_average(const UnitTerms& u, const Eigen::MatrixXcd& U) {
  if (U.cols() != static_cast<Eigen::Index>(u.terms.size())) throw std::invalid_argument("U columns must match terms");
  return average(impurity_grams(u), U);
}

BlockUpperBound block_upper_bound(const UnitTerms& block, const UpperBoundOptions& opt) {
  BlockUpperBound out;
  out.trace = block.trace();
  if (out.trace <= 0.0) return out;

  std::vector<int> idx(block.terms.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(),
                   [&](int a, int b) { return block.terms[a].weight > block.terms[b].weight; });

  UnitTerms S;
  S.sector_dims = block.sector_dims;
  double rest = out.trace, rest_value = 0.0, kept_value = 0.0;
  for (int i : idx) {
    const auto& t = block.terms[i];
    const double e = term_entanglement(t);
    const bool take = static_cast<int>(S.terms.size()) < opt.max_states && rest >= opt.tail_weight * out.trace &&
                      t.weight > opt.rank_cutoff * out.trace;
    rest -= t.weight;
    if (take) {
      S.terms.push_back(t);
      kept_value += t.weight * e;
    } else {
      rest_value += t.weight * e;
    }
  }
  out.states = static_cast<int>(S.terms.size());
  out.trivial = kept_value + rest_value;
  out.value = out.trivial;
  if (!opt.search || S.terms.size() < 2) return out;

  const auto pairs = orthonormalize_bath_pairs(S, opt.order);
  const auto targets = witness_targets(pair_densities(S, pairs));
  out.targets = static_cast<int>(targets.size());
  if (targets.empty()) return out;
  const auto coeffs = pair_coefficients(S, pairs);
  const Grams g = impurity_grams(S);
  Eigen::VectorXd pbar(S.terms.size());
  for (size_t d = 0; d < S.terms.size(); ++d) pbar(d) = S.terms[d].weight;

  auto eval = [&](double y1, double y2) {
    ++out.evaluations;
    const Eigen::MatrixXcd U = left_unitary(w_matrix(targets, coeffs, pbar, y1, y2));
    const double defect = unitarity_defect(U);
    if (!(defect <= 1e-10)) throw ReconstructionError("mixing matrix is not left-unitary");
    return average(g, U);
  };

  double best = kept_value + 1.0, b1 = 0.0, b2 = 0.0;
  for (double y1 : opt.grid)
    for (double y2 : opt.grid) {
      const double v = eval(y1, y2);
      if (v < best) best = v, b1 = y1, b2 = y2;
    }
  const double lo = *std::min_element(opt.grid.begin(), opt.grid.end());
  const double hi = *std::max_element(opt.grid.begin(), opt.grid.end());
  const double h = opt.grid.size() > 1 ? (hi - lo) / (opt.grid.size() - 1) : 0.5;
  for (int round = 0; round < opt.refine_rounds && h > 0; ++round) {
    auto r1 = boost::math::tools::brent_find_minima([&](double y) { return eval(y, b2); }, std::max(lo, b1 - h),
                                                    std::min(hi, b1 + h), opt.refine_bits);
    if (r1.second < best) best = r1.second, b1 = r1.first;
    auto r2 = boost::math::tools::brent_find_minima([&](double y) { return eval(b1, y); }, std::max(lo, b2 - h),
                                                    std::min(hi, b2 + h), opt.refine_bits);
    if (r2.second < best) best = r2.second, b2 = r2.first;
  }
  out.y1 = b1;
  out.y2 = b2;
  out.boundary = std::abs(b1 - lo) < 1e-6 || std::abs(b1 - hi) < 1e-6 || std::abs(b2 - lo) < 1e-6 ||
                 std::abs(b2 - hi) < 1e-6;
  out.unitarity = unitarity_defect(left_unitary(w_matrix(targets, coeffs, pbar, b1, b2)));
  if (best < kept_value) {
    out.mixed = true;
    out.value = best + rest_value;
  }
  return out;
}

}  // namespace kondo_eof
