#include "kondo_eof/two_qubit.hpp"

#include <algorithm>
#include <array>
#include <boost/math/tools/minima.hpp>
#include <cmath>
#include <numeric>
#include <random>

namespace kondo_eof {

namespace {

constexpr double kLn2 = 0.69314718055994530942;
const cplx I1(0.0, 1.0);

Mat4c flip_matrix() {
  // sigma_y (x) sigma_y, real
  Mat4c s = Mat4c::Zero();
  s(0, 3) = -1.0;
  s(1, 2) = 1.0;
  s(2, 1) = 1.0;
  s(3, 0) = -1.0;
  return s;
}

Mat4c kron(const Mat2c& a, const Mat2c& b) {
  Mat4c out;
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 2; ++j) out.block<2, 2>(2 * i, 2 * j) = a(i, j) * b;
  return out;
}

// Takagi factorization tau = V diag(s) V^T of a complex symmetric matrix,
// via the real symmetric embedding [[Re, Im], [Im, -Re]].
void takagi(const Eigen::MatrixXcd& tau, Eigen::MatrixXcd& V, Eigen::VectorXd& s) {
  const int n = static_cast<int>(tau.rows());
  Eigen::MatrixXd H(2 * n, 2 * n);
  H << tau.real(), tau.imag(), tau.imag(), -tau.real();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(H);
  const double scale = std::max(1.0, es.eigenvalues().cwiseAbs().maxCoeff());
  const double tol = 1e-13 * scale;
  V.setZero(n, n);
  s.setZero(n);
  int found = 0;
  for (int k = 2 * n - 1; k >= 0 && found < n; --k) {
    if (es.eigenvalues()(k) <= tol) break;
    Eigen::VectorXcd u(n);
    for (int r = 0; r < n; ++r) u(r) = cplx(es.eigenvectors()(r, k), es.eigenvectors()(n + r, k));
    V.col(found) = u.normalized();
    s(found) = es.eigenvalues()(k);
    ++found;
  }
  // null space: any complex vector orthogonal to the rest will do
  for (int k = 0; k < 2 * n && found < n; ++k) {
    if (std::abs(es.eigenvalues()(k)) > tol) continue;
    Eigen::VectorXcd u(n);
    for (int r = 0; r < n; ++r) u(r) = cplx(es.eigenvectors()(r, k), es.eigenvectors()(n + r, k));
    for (int j = 0; j < found; ++j) u -= V.col(j) * V.col(j).dot(u);
    const double nu = u.norm();
    if (nu < 0.5) continue;
    V.col(found) = u / nu;
    s(found) = 0.0;
    ++found;
  }
  if (found < n) throw InvalidStateError("takagi factorization failed");
}

// Subnormalized eigenvectors of rho, columns v_i = sqrt(lambda_i) e_i.
Eigen::Matrix4cd scaled_eigenvectors(const Mat4c& rho, double cutoff = 0.0) {
  Eigen::SelfAdjointEigenSolver<Mat4c> es(rho);
  Eigen::Matrix4cd v;
  for (int i = 0; i < 4; ++i) {
    const double l = es.eigenvalues()(i);
    v.col(i) = (l > cutoff ? std::sqrt(l) : 0.0) * es.eigenvectors().col(i);
  }
  return v;
}

Eigen::Matrix4cd preconcurrence_matrix(const Eigen::Matrix4cd& v) {
  return v.adjoint() * flip_matrix() * v.conjugate();
}

double pauli_expect(const Mat4c& m, int a, int b) {
  static const std::array<Mat2c, 3> s = [] {
    std::array<Mat2c, 3> p;
    p[0] << 0, 1, 1, 0;
    p[1] << 0, -I1, I1, 0;
    p[2] << 1, 0, 0, -1;
    return p;
  }();
  return (m * kron(s[a], s[b])).trace().real();
}

// SU(2) element U with U^dag s_i U = sum_k R_ik s_k for a proper rotation R.
Mat2c su2_from_rotation(const Eigen::Matrix3d& R) {
  // quaternion of the active rotation R
  double w, x, y, z;
  const double tr = R.trace();
  if (tr > 0) {
    double s = 0.5 / std::sqrt(tr + 1.0);
    w = 0.25 / s;
    x = (R(2, 1) - R(1, 2)) * s;
    y = (R(0, 2) - R(2, 0)) * s;
    z = (R(1, 0) - R(0, 1)) * s;
  } else if (R(0, 0) > R(1, 1) && R(0, 0) > R(2, 2)) {
    double s = 2.0 * std::sqrt(1.0 + R(0, 0) - R(1, 1) - R(2, 2));
    w = (R(2, 1) - R(1, 2)) / s;
    x = 0.25 * s;
    y = (R(0, 1) + R(1, 0)) / s;
    z = (R(0, 2) + R(2, 0)) / s;
  } else if (R(1, 1) > R(2, 2)) {
    double s = 2.0 * std::sqrt(1.0 + R(1, 1) - R(0, 0) - R(2, 2));
    w = (R(0, 2) - R(2, 0)) / s;
    x = (R(0, 1) + R(1, 0)) / s;
    y = 0.25 * s;
    z = (R(1, 2) + R(2, 1)) / s;
  } else {
    double s = 2.0 * std::sqrt(1.0 + R(2, 2) - R(0, 0) - R(1, 1));
    w = (R(1, 0) - R(0, 1)) / s;
    x = (R(0, 2) + R(2, 0)) / s;
    y = (R(1, 2) + R(2, 1)) / s;
    z = 0.25 * s;
  }
  Mat2c U;
  U << cplx(w, -z), cplx(-y, -x), cplx(y, -x), cplx(w, z);
  return U;
}

Mat2c partial_trace_second(const Mat4c& m) {
  Mat2c r;
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 2; ++j) r(i, j) = m(2 * i, 2 * j) + m(2 * i + 1, 2 * j + 1);
  return r;
}

Mat2c partial_trace_first(const Mat4c& m) {
  Mat2c r;
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 2; ++j) r(i, j) = m(i, j) + m(2 + i, 2 + j);
  return r;
}

// det-1 filter A ~ r^{-1/2}; returns false when r is (nearly) singular
bool normalizing_filter(const Mat2c& r, Mat2c& A) {
  Eigen::SelfAdjointEigenSolver<Mat2c> es(r);
  const double l0 = es.eigenvalues()(0), l1 = es.eigenvalues()(1);
  if (l0 <= 1e-14 * l1) return false;
  const double g = std::pow(l0 * l1, 0.25);
  Eigen::Vector2d d(g / std::sqrt(l0), g / std::sqrt(l1));
  A = es.eigenvectors() * d.asDiagonal() * es.eigenvectors().adjoint();
  return true;
}

// Seed for the SLOCC search: local filtering toward maximally mixed marginals,
// then local unitaries that make the state Bell diagonal with |Psi> on top.
// Returns G = O^dag.
void normal_form_seed(const Mat4c& rho, Mat2c& G1, Mat2c& G2) {
  G1.setIdentity();
  G2.setIdentity();
  Mat4c s = rho / rho.trace().real();
  for (int it = 0; it < 300; ++it) {
    Mat2c ra = partial_trace_second(s), rb = partial_trace_first(s);
    double dev = (ra - 0.5 * Mat2c::Identity()).norm() + (rb - 0.5 * Mat2c::Identity()).norm();
    if (dev < 1e-13) break;
    Mat2c A, B;
    if (!normalizing_filter(ra, A) || !normalizing_filter(rb, B)) break;
    Mat2c nG1 = A * G1, nG2 = B * G2;
    if (nG1.norm() > 1e6 || nG2.norm() > 1e6) break;
    G1 = nG1;
    G2 = nG2;
    Mat4c F = kron(A, B);
    s = F * s * F.adjoint();
    s /= s.trace().real();
  }
  Eigen::Matrix3d T;
  for (int a = 0; a < 3; ++a)
    for (int b = 0; b < 3; ++b) T(a, b) = pauli_expect(s, a, b);
  Eigen::JacobiSVD<Eigen::Matrix3d> svd(T, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Eigen::Matrix3d P = svd.matrixU(), Q = svd.matrixV();
  Eigen::Vector3d d = svd.singularValues();
  if (P.determinant() < 0) {
    P.col(2) *= -1.0;
    d(2) *= -1.0;
  }
  if (Q.determinant() < 0) {
    Q.col(2) *= -1.0;
    d(2) *= -1.0;
  }
  Mat2c U1 = su2_from_rotation(P.transpose()), U2 = su2_from_rotation(Q.transpose());
  // U^dag s_i U = sum_k R_ik s_k and we want sigma' = V sigma V^dag with V = U^dag
  Mat2c V1 = U1.adjoint(), V2 = U2.adjoint();
  std::array<double, 4> w = {1 + d(0) - d(1) + d(2), 1 - d(0) + d(1) + d(2),
                             1 + d(0) + d(1) - d(2), 1 - d(0) - d(1) - d(2)};
  int best = static_cast<int>(std::max_element(w.begin(), w.end()) - w.begin());
  Mat2c P2 = Mat2c::Identity();
  if (best == 1) P2 << I1, 0, 0, -I1;           // i Z
  else if (best == 2) P2 << 0, I1, I1, 0;       // i X
  else if (best == 3) P2 << 0, 1, -1, 0;        // i X Z up to sign
  G1 = V1 * G1;
  G2 = P2.adjoint() * V2 * G2;
}

Mat2c su2(double a, double b, double c) {
  const double th = std::sqrt(a * a + b * b + c * c);
  Mat2c m = Mat2c::Identity();
  if (th < 1e-300) return m;
  const double sn = std::sin(th) / th;
  m(0, 0) = cplx(std::cos(th), sn * c);
  m(1, 1) = cplx(std::cos(th), -sn * c);
  m(0, 1) = cplx(sn * b, sn * a);
  m(1, 0) = cplx(-sn * b, sn * a);
  return m;
}

Mat2c factor(const Mat2c& seed, const double* p) {
  Mat2c f = Mat2c::Zero();
  f(0, 0) = std::exp(0.5 * p[3]);
  f(1, 1) = std::exp(-0.5 * p[3]);
  return seed * su2(p[0], p[1], p[2]) * f * su2(p[4], p[5], p[6]);
}

Mat2c random_sl2(std::mt19937_64& rng) {
  std::normal_distribution<double> g;
  Mat2c m;
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 2; ++j) m(i, j) = cplx(g(rng), g(rng));
  cplx det = m.determinant();
  return m / std::sqrt(det);
}

double witness_value(const Mat4c& rho, const Mat4c& O) {
  Mat4c t = O.adjoint() * rho * O;
  // tr((2|Psi><Psi| - I) t), |Psi> = (|00>+|11>)/sqrt2
  cplx bell = 0.5 * (t(0, 0) + t(0, 3) + t(3, 0) + t(3, 3));
  return 2.0 * bell.real() - t.trace().real();
}

struct SearchOutcome {
  double value;
  Mat2c o1, o2;
  int iterations;
  bool converged;
};

SearchOutcome coordinate_ascent(const Mat4c& rho, const Mat2c& s1, const Mat2c& s2,
                                const SloccOptions& opt, double ceiling) {
  std::array<double, 14> p{};
  auto eval = [&](const std::array<double, 14>& q) {
    Mat2c a = factor(s1, q.data()), b = factor(s2, q.data() + 7);
    return witness_value(rho, kron(a, b));
  };
  double best = eval(p);
  std::array<double, 14> step;
  step.fill(0.5);
  std::vector<double> history{best};
  int it = 0;
  bool converged = false;
  const double tr = rho.trace().real();
  while (it < opt.max_iterations) {
    const int k = it % 14;
    ++it;
    auto f = [&](double x) {
      auto q = p;
      q[k] = x;
      return -eval(q);
    };
    const double lo = p[k] - step[k], hi = p[k] + step[k];
    auto r = boost::math::tools::brent_find_minima(f, lo, hi, 40);
    if (-r.second > best) {
      best = -r.second;
      const double moved = std::abs(r.first - p[k]);
      p[k] = r.first;
      step[k] = (moved > 0.8 * step[k]) ? std::min(4.0 * step[k], 50.0) : std::max(2.0 * moved, 1e-3);
    } else {
      step[k] = std::max(0.5 * step[k], 1e-4);
    }
    history.push_back(best);
    if (best >= ceiling - 1e-14 * tr) {
      converged = true;
      break;
    }
    const int w = opt.window;
    if (static_cast<int>(history.size()) > w &&
        best - history[history.size() - 1 - w] < opt.improvement_tol * std::max(tr, 1e-300)) {
      converged = true;
      break;
    }
  }
  return {best, factor(s1, p.data()), factor(s2, p.data() + 7), it, converged};
}

}  // namespace

Mat4c SloccOperator::full() const { return kron(o1, o2); }

double binary_entropy(double p) {
  if (p <= 0.0 || p >= 1.0) return 0.0;
  return -p * std::log2(p) - (1.0 - p) * std::log2(1.0 - p);
}

double eof_from_concurrence(double x) {
  if (x < -1e-12 || x > 1.0 + 1e-12) throw DomainError("normalized concurrence outside [0,1]");
  x = std::clamp(x, 0.0, 1.0);
  return binary_entropy(0.5 * (1.0 + std::sqrt(1.0 - x * x)));
}

double eof_slope(double x) {
  if (x < -1e-12 || x > 1.0 + 1e-12) throw DomainError("normalized concurrence outside [0,1]");
  x = std::clamp(x, 0.0, 1.0);
  if (x == 0.0) return 0.0;
  const double s = std::sqrt((1.0 - x) * (1.0 + x));
  // f'(x) = x atanh(s) / (s ln 2)
  double ratio;
  if (x > 1.0 - 1e-6) {
    const double s2 = s * s;
    ratio = 1.0 + s2 / 3.0 + s2 * s2 / 5.0 + s2 * s2 * s2 / 7.0;
  } else {
    ratio = std::atanh(s) / s;
  }
  return x * ratio / kLn2;
}

Mat4c sanitize_density(const Mat4c& rho) {
  const double scale = std::max(rho.cwiseAbs().maxCoeff(), 1e-300);
  if ((rho - rho.adjoint()).cwiseAbs().maxCoeff() > 1e-10 * scale)
    throw InvalidStateError("density matrix is not Hermitian");
  Mat4c h = 0.5 * (rho + rho.adjoint());
  Eigen::SelfAdjointEigenSolver<Mat4c> es(h);
  const double tr = std::max(h.trace().real(), 0.0);
  const double eps = 1e-10 * std::max(tr, 1e-300);
  Eigen::Vector4d ev = es.eigenvalues();
  if (ev.minCoeff() < -eps) throw InvalidStateError("density matrix has a negative eigenvalue");
  if (ev.minCoeff() >= 0.0) return h;
  ev = ev.cwiseMax(0.0);
  return es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().adjoint();
}

double concurrence(const Mat4c& rho_in) {
  Mat4c rho = sanitize_density(rho_in);
  Eigen::Matrix4cd tau = preconcurrence_matrix(scaled_eigenvectors(rho));
  Eigen::JacobiSVD<Eigen::Matrix4cd> svd(tau);
  Eigen::Vector4d l = svd.singularValues();
  return std::max(0.0, l(0) - l(1) - l(2) - l(3));
}

double eof(const Mat4c& rho) {
  const double tr = rho.trace().real();
  if (tr <= 0.0) return 0.0;
  return tr * eof_from_concurrence(std::min(1.0, concurrence(rho) / tr));
}

double pure_state_eof(const Eigen::VectorXcd& a, const Eigen::VectorXcd& b) {
  const double na = a.squaredNorm(), nb = b.squaredNorm();
  if (std::abs(na + nb - 1.0) > 1e-8) throw InvalidStateError("pure state is not normalized");
  Mat2c r;
  r << na, a.dot(b), b.dot(a), nb;
  Eigen::SelfAdjointEigenSolver<Mat2c> es(r);
  return binary_entropy(std::clamp(es.eigenvalues()(0) / (na + nb), 0.0, 1.0));
}

double pure_state_eof(const Vec4c& psi) {
  return pure_state_eof(Eigen::VectorXcd(psi.head<2>()), Eigen::VectorXcd(psi.tail<2>()));
}

Mat4c bell_projector() {
  Vec4c psi(1.0 / std::sqrt(2.0), 0.0, 0.0, 1.0 / std::sqrt(2.0));
  return psi * psi.adjoint();
}

Mat4c spin_flip(const Mat4c& rho) {
  Mat4c s = flip_matrix();
  return s * rho.conjugate() * s;
}

ConcurrenceWitnessResult best_concurrence_witness(const Mat4c& rho_in, const SloccOptions& opt) {
  Mat4c rho = sanitize_density(rho_in);
  ConcurrenceWitnessResult out;
  const double tr = rho.trace().real();
  const double c = concurrence(rho);
  if (tr <= 0.0 || c < 1e-12 * tr) return out;  // null witness

  Mat2c g1, g2;
  normal_form_seed(rho, g1, g2);
  std::mt19937_64 rng(opt.seed);
  SearchOutcome best{-1e300, Mat2c::Identity(), Mat2c::Identity(), 0, false};
  for (int start = 0; start <= opt.random_starts; ++start) {
    Mat2c s1 = start == 0 ? Mat2c(g1.adjoint()) : random_sl2(rng);
    Mat2c s2 = start == 0 ? Mat2c(g2.adjoint()) : random_sl2(rng);
    SearchOutcome r = coordinate_ascent(rho, s1, s2, opt, c);
    out.iterations += r.iterations;
    ++out.starts_used;
    if (r.value > best.value) best = r;
    if (opt.stop_at_closed_form && best.value >= c - 1e-12 * tr) break;
  }
  out.slocc.o1 = best.o1;
  out.slocc.o2 = best.o2;
  Mat4c O = out.slocc.full();
  Mat4c W = 2.0 * bell_projector() - Mat4c::Identity();
  out.witness.matrix = O * W * O.adjoint();
  out.witness.kind = WitnessKind::concurrence_witness;
  out.witness.value = witness_value(rho, O);
  out.converged = best.converged;
  return out;
}

ConcurrenceWitnessResult optimal_concurrence_witness(const Mat4c& rho, const SloccOptions& opt) {
  ConcurrenceWitnessResult r = best_concurrence_witness(rho, opt);
  if (!r.converged)
    throw ConvergenceError("SLOCC search did not converge", r.witness.value);
  return r;
}

TwoQubitWitness eof_witness_from(const ConcurrenceWitnessResult& cw, const Mat4c& rho) {
  TwoQubitWitness w;
  const double tr = rho.trace().real();
  if (cw.witness.kind == WitnessKind::null || tr <= 0.0 || cw.witness.value <= 0.0) return w;
  const double x = std::clamp(cw.witness.value / tr, 0.0, 1.0);
  const double fx = eof_from_concurrence(x), df = eof_slope(x);
  w.matrix = fx * Mat4c::Identity() + df * (cw.witness.matrix - x * Mat4c::Identity());
  w.kind = WitnessKind::eof_witness;
  w.value = (w.matrix * rho).trace().real();
  return w;
}

TwoQubitWitness optimal_eof_witness(const Mat4c& rho, const SloccOptions& opt) {
  return eof_witness_from(optimal_concurrence_witness(rho, opt), sanitize_density(rho));
}

namespace {

// Real orthogonal O making diag(O M O^T) vanish; M real symmetric, trace zero.
Eigen::MatrixXd zero_diagonal_rotation(Eigen::MatrixXd M, double scale) {
  const int n = static_cast<int>(M.rows());
  Eigen::MatrixXd O = Eigen::MatrixXd::Identity(n, n);
  std::vector<int> rem(n);
  std::iota(rem.begin(), rem.end(), 0);
  while (rem.size() > 1) {
    auto it = std::max_element(rem.begin(), rem.end(),
                               [&](int a, int b) { return std::abs(M(a, a)) < std::abs(M(b, b)); });
    const int i = *it;
    if (std::abs(M(i, i)) < 1e-15 * scale) break;
    int j = -1;
    for (int k : rem)
      if (M(k, k) * M(i, i) < 0 && (j < 0 || std::abs(M(k, k)) > std::abs(M(j, j)))) j = k;
    if (j < 0) break;
    const double a = M(j, j), b = M(i, j), c = M(i, i);
    const double disc = std::sqrt(b * b - a * c);
    const double t = (-b + (b >= 0 ? disc : -disc)) / a;
    const double cs = 1.0 / std::sqrt(1.0 + t * t), sn = t * cs;
    Eigen::MatrixXd G = Eigen::MatrixXd::Identity(n, n);
    G(i, i) = cs;
    G(i, j) = sn;
    G(j, i) = -sn;
    G(j, j) = cs;
    M = G * M * G.transpose();
    O = G * O;
    rem.erase(it);
  }
  return O;
}

}  // namespace

std::vector<PureComponent> saturating_states(const Mat4c& rho_in) {
  const double scale = rho_in.trace().real();
  std::vector<PureComponent> out;
  if (!(scale > 0.0)) return out;
  // work at unit trace, weights are scaled back at the end
  Mat4c rho = sanitize_density(rho_in / scale);
  const double tr = rho.trace().real();
  Eigen::Matrix4cd v = scaled_eigenvectors(rho, 1e-13 * tr);
  Eigen::MatrixXcd tau = preconcurrence_matrix(v);
  Eigen::MatrixXcd V;
  Eigen::VectorXd lam;
  takagi(tau, V, lam);
  Eigen::Matrix4cd x = v * V;
  const double c = std::max(0.0, lam(0) - lam(1) - lam(2) - lam(3));
  const double xn = c / tr;

  std::vector<Vec4c> z;
  if (xn < 1e-12) {
    // phases closing the polygon lam1 + sum_k w_k = 0
    std::array<cplx, 4> w;
    w[0] = lam(0);
    const double l1 = lam(0), l2 = lam(1), l3 = lam(2), l4 = lam(3);
    const double r = std::clamp(l1 - l2, std::abs(l3 - l4), l3 + l4);
    auto place = [](double a, double b, double cc) {
      // angle between sides a and b of a triangle with third side cc
      if (a <= 0 || b <= 0) return 0.0;
      return std::acos(std::clamp((a * a + b * b - cc * cc) / (2 * a * b), -1.0, 1.0));
    };
    cplx target = -l1;
    cplx u = l2 * std::polar(1.0, std::arg(target) + place(l2, l1, r));
    cplx vv = target - u;
    cplx w3 = std::abs(vv) > 0 ? l3 * std::polar(1.0, std::arg(vv) + place(l3, std::abs(vv), l4)) : cplx(l3);
    cplx w4 = vv - w3;
    w[1] = u;
    w[2] = w3;
    w[3] = w4;
    Eigen::Matrix4cd y = x;
    for (int k = 1; k < 4; ++k) {
      if (lam(k) <= 0) continue;
      cplx ph = std::sqrt(std::conj(w[k] / lam(k)));
      y.col(k) *= ph;
    }
    const double H[4][4] = {{1, 1, 1, 1}, {1, 1, -1, -1}, {1, -1, 1, -1}, {1, -1, -1, 1}};
    for (int i = 0; i < 4; ++i) {
      Vec4c zi = Vec4c::Zero();
      for (int k = 0; k < 4; ++k) zi += 0.5 * H[i][k] * y.col(k);
      z.push_back(zi);
    }
  } else {
    Eigen::Matrix4cd y = x;
    for (int k = 1; k < 4; ++k) y.col(k) *= I1;
    Eigen::Matrix4d G = (y.adjoint() * y).real();
    Eigen::Matrix4d M = -xn * G;
    M(0, 0) += lam(0);
    for (int k = 1; k < 4; ++k) M(k, k) -= lam(k);
    Eigen::MatrixXd O = zero_diagonal_rotation(M, tr);
    for (int i = 0; i < 4; ++i) {
      Vec4c zi = Vec4c::Zero();
      for (int k = 0; k < 4; ++k) zi += O(i, k) * y.col(k);
      z.push_back(zi);
    }
  }
  for (const Vec4c& zi : z) {
    const double p = zi.squaredNorm();
    if (p < 1e-11 * tr) continue;
    PureComponent pc{p, zi / std::sqrt(p)};
    Mat4c proj = pc.state * pc.state.adjoint();
    const double ci = concurrence(proj);
    if (p > 1e-6 * tr && std::abs(ci - xn) > 1e-6) throw InvalidStateError("inconsistent optimal decomposition");
    pc.weight *= scale;
    out.push_back(pc);
  }
  return out;
}

}  // namespace kondo_eof
