#include <doctest.h>

#include <kondo_eof/upper_bound.hpp>
#include <random>

using namespace kondo_eof;

namespace {

Eigen::MatrixXcd random_matrix(int r, int c, std::mt19937_64& rng) {
  std::normal_distribution<double> g;
  Eigen::MatrixXcd A(r, c);
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < c; ++j) A(i, j) = {g(rng), g(rng)};
  return A;
}

Eigen::MatrixXcd random_density(int dim, int rank, std::mt19937_64& rng) {
  Eigen::MatrixXcd A = random_matrix(dim, rank, rng);
  Eigen::MatrixXcd rho = A * A.adjoint();
  return rho / rho.trace().real();
}

// impurity x bath with the two-qubit state placed on bath vectors g0, g1
Eigen::MatrixXcd embed_pair(const Mat4c& r, const Eigen::MatrixXcd& g) {
  const int d = static_cast<int>(g.rows());
  Eigen::MatrixXcd V = Eigen::MatrixXcd::Zero(2 * d, 4);
  for (int eta = 0; eta < 2; ++eta)
    for (int a = 0; a < 2; ++a) V.block(eta * d, eta * 2 + a, d, 1) = g.col(a);
  return V * r * V.adjoint();
}

}  // namespace

TEST_CASE("left-unitary completion") {
  std::mt19937_64 rng(1);
  for (auto [L, D] : {std::pair{7, 4}, {3, 6}, {5, 5}}) {
    Eigen::MatrixXcd W = random_matrix(L, D, rng);
    if (L == 5) W.col(2).setZero();  // rank deficient
    auto U = left_unitary(W);
    CHECK(U.cols() == D);
    CHECK(U.rows() == std::max(L, D));
    const Eigen::MatrixXcd G = U.adjoint() * U;
    CHECK((G - Eigen::MatrixXcd::Identity(D, D)).cwiseAbs().maxCoeff() < 1e-10);
  }
}

TEST_CASE("raw overlaps at zero exponents") {
  std::mt19937_64 rng(2);
  Eigen::MatrixXcd rho = random_density(4, 3, rng);
  auto u = terms_from_density(rho, 2);
  auto pairs = orthonormalize_bath_pairs(u, PairOrdering::weight);
  auto targets = witness_targets(pair_densities(u, pairs));
  auto coeffs = pair_coefficients(u, pairs);
  Eigen::VectorXd pbar(u.terms.size());
  for (size_t d = 0; d < u.terms.size(); ++d) pbar(d) = u.terms[d].weight;
  auto W = w_matrix(targets, coeffs, pbar, 0.0, 0.0);
  // <psi_d|psi_l> computed directly in the full space
  for (size_t l = 0; l < targets.size(); ++l)
    for (size_t d = 0; d < u.terms.size(); ++d) {
      Eigen::VectorXcd psi(4), tl(4);
      psi << u.terms[d].up, u.terms[d].dn;
      const auto& p = pairs.pairs[0];
      const auto& z = targets[l].z;
      tl << z(0) * p.up + z(1) * p.dn, z(2) * p.up + z(3) * p.dn;
      CHECK(std::abs(W(l, d) - psi.dot(tl)) < 1e-12);
    }
}

TEST_CASE("any left-unitary mixing reconstructs the state") {
  std::mt19937_64 rng(3);
  Eigen::MatrixXcd rho = random_density(4, 4, rng);
  auto u = terms_from_density(rho, 2);
  const int D = static_cast<int>(u.terms.size());
  auto U = left_unitary(random_matrix(9, D, rng));
  Eigen::MatrixXcd back = Eigen::MatrixXcd::Zero(4, 4);
  for (int l = 0; l < U.rows(); ++l) {
    Eigen::VectorXcd v = Eigen::VectorXcd::Zero(4);
    for (int d = 0; d < D; ++d) {
      Eigen::VectorXcd psi(4);
      psi << u.terms[d].up, u.terms[d].dn;
      v += U(l, d) * std::sqrt(u.terms[d].weight) * psi;
    }
    back += v * v.adjoint();
  }
  CHECK((back - rho).cwiseAbs().maxCoeff() < 1e-10);
  CHECK(decomposition_average(u, U) >= eof(Mat4c(rho)) - 1e-10);
}

TEST_CASE("pure state bound is its entanglement entropy") {
  std::mt19937_64 rng(4);
  Eigen::VectorXcd psi = random_matrix(10, 1, rng).col(0).normalized();
  auto u = terms_from_density(psi * psi.adjoint(), 5);
  auto ub = block_upper_bound(u);
  CHECK(ub.value == doctest::Approx(pure_state_eof(Eigen::VectorXcd(psi.head(5)), Eigen::VectorXcd(psi.tail(5)))));
}

TEST_CASE("single subspace support reproduces the closed form") {
  std::mt19937_64 rng(5);
  for (int k = 0; k < 30; ++k) {
    const Mat4c r = random_density(4, 2 + k % 3, rng);
    const int d = k % 2 ? 2 : 5;
    Eigen::HouseholderQR<Eigen::MatrixXcd> qr(random_matrix(d, 2, rng));
    const Eigen::MatrixXcd g = qr.householderQ() * Eigen::MatrixXcd::Identity(d, 2);
    auto u = terms_from_density(embed_pair(r, g), d);
    auto ub = block_upper_bound(u);
    auto lb = best_unit_lower_bound(u);
    CHECK(ub.value == doctest::Approx(eof(r)).epsilon(1e-6));
    CHECK(lb.value == doctest::Approx(eof(r)).epsilon(1e-6));
    CHECK(ub.unitarity < 1e-10);
  }
}

TEST_CASE("screened mixture is tight at one minus p") {
  for (int k = 0; k <= 10; ++k) {
    const double p = 0.1 * k;
    // bath: |empty>, |up>, |dn>
    Eigen::MatrixXcd rho = Eigen::MatrixXcd::Zero(6, 6);
    Eigen::VectorXcd s = Eigen::VectorXcd::Zero(6);
    s(2) = 1.0 / std::sqrt(2.0);   // imp up, bath dn
    s(4) = -1.0 / std::sqrt(2.0);  // imp dn, bath up
    rho += (1 - p) * s * s.adjoint();
    rho(0, 0) += p / 2;
    rho(3, 3) += p / 2;
    auto u = terms_from_density(rho, 3);
    WitnessOptions wo;
    wo.certify = true;
    auto lb = best_unit_lower_bound(u, wo);
    auto ub = block_upper_bound(u);
    CHECK(lb.value == doctest::Approx(1 - p).epsilon(1e-8));
    CHECK(ub.value == doctest::Approx(1 - p).epsilon(1e-8));
  }
}

TEST_CASE("random multi-subspace states stay sandwiched") {
  std::mt19937_64 rng(6);
  for (int k = 0; k < 6; ++k) {
    Eigen::MatrixXcd rho = random_density(12, 3 + k, rng);
    auto u = terms_from_density(rho, 6);
    auto lb = best_unit_lower_bound(u);
    auto ub = block_upper_bound(u);
    CHECK(lb.value <= ub.value + 1e-9);
    CHECK(ub.value <= ub.trivial + 1e-12);
    CHECK(ub.value <= 1.0 + 1e-12);
    CHECK(ub.evaluations > 25);
  }
}
