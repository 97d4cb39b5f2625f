#include <doctest.h>

#include <kondo_eof/subspace_witness.hpp>
#include <random>

using namespace kondo_eof;

namespace {

Eigen::MatrixXcd random_orthonormal(int d, int k, std::mt19937_64& rng) {
  std::normal_distribution<double> g;
  Eigen::MatrixXcd A(d, k);
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < k; ++j) A(i, j) = {g(rng), g(rng)};
  Eigen::HouseholderQR<Eigen::MatrixXcd> qr(A);
  return qr.householderQ() * Eigen::MatrixXcd::Identity(d, k);
}

Eigen::VectorXcd embed(const Eigen::VectorXcd& up, const Eigen::VectorXcd& dn) {
  Eigen::VectorXcd psi(up.size() + dn.size());
  psi << up, dn;
  return psi;
}

Eigen::MatrixXcd random_density(int dim, int rank, std::mt19937_64& rng) {
  std::normal_distribution<double> g;
  Eigen::MatrixXcd A(dim, rank);
  for (int i = 0; i < dim; ++i)
    for (int j = 0; j < rank; ++j) A(i, j) = {g(rng), g(rng)};
  Eigen::MatrixXcd rho = A * A.adjoint();
  return rho / rho.trace().real();
}

}  // namespace

TEST_CASE("singlet projector gives one ebit") {
  std::mt19937_64 rng(1);
  for (int d : {2, 5}) {
    auto g = random_orthonormal(d, 2, rng);
    Eigen::VectorXcd psi = embed(g.col(1), -g.col(0)) / std::sqrt(2.0);
    auto u = terms_from_density(psi * psi.adjoint(), d);
    auto lb = best_unit_lower_bound(u);
    CHECK(lb.value == doctest::Approx(1.0).epsilon(1e-10));
    CHECK(lb.pairs == 1);
  }
}

TEST_CASE("two-channel ground doublet") {
  std::mt19937_64 rng(2);
  auto g = random_orthonormal(6, 4, rng);
  Eigen::VectorXcd plus = embed(g.col(0), g.col(1)) / std::sqrt(2.0);
  Eigen::VectorXcd minus = embed(g.col(2), g.col(3)) / std::sqrt(2.0);
  Eigen::MatrixXcd rho = 0.5 * (plus * plus.adjoint() + minus * minus.adjoint());
  auto u = terms_from_density(rho, 6);
  WitnessOptions opt;
  opt.certify = true;
  for (auto order : {PairOrdering::weight, PairOrdering::energy}) {
    auto lb = unit_lower_bound(u, order, opt);
    CHECK(lb.value == doctest::Approx(1.0).epsilon(1e-8));
    CHECK(lb.pairs == 2);
  }
}

TEST_CASE("two-qubit densities reproduce the closed form") {
  std::mt19937_64 rng(3);
  WitnessOptions opt;
  opt.certify = true;
  for (int k = 0; k < 40; ++k) {
    Eigen::MatrixXcd rho = random_density(4, 1 + k % 4, rng);
    auto lb = best_unit_lower_bound(terms_from_density(rho, 2), opt);
    CHECK(lb.value == doctest::Approx(eof(Mat4c(rho))).epsilon(1e-6));
  }
}

TEST_CASE("block-diagonal toy adds the per-block values") {
  std::mt19937_64 rng(4);
  Eigen::MatrixXcd a = random_density(4, 2, rng), b = random_density(4, 3, rng);
  // impurity x (bath A + bath B), bath dim 4
  Eigen::MatrixXcd rho = Eigen::MatrixXcd::Zero(8, 8);
  auto place = [&](const Eigen::MatrixXcd& r, int off, double w) {
    for (int e1 = 0; e1 < 2; ++e1)
      for (int e2 = 0; e2 < 2; ++e2)
        rho.block(e1 * 4 + off, e2 * 4 + off, 2, 2) += w * r.block(e1 * 2, e2 * 2, 2, 2);
  };
  place(a, 0, 0.6);
  place(b, 2, 0.4);
  auto lb = best_unit_lower_bound(terms_from_density(rho, 4));
  CHECK(lb.value == doctest::Approx(0.6 * eof(Mat4c(a)) + 0.4 * eof(Mat4c(b))).epsilon(1e-8));
  CHECK(lb.leakage < 1e-10);
}

TEST_CASE("subspaces are orthonormal") {
  std::mt19937_64 rng(5);
  Eigen::MatrixXcd rho = random_density(16, 6, rng);
  auto u = terms_from_density(rho, 8);
  for (auto order : {PairOrdering::weight, PairOrdering::energy}) {
    auto p = orthonormalize_bath_pairs(u, order);
    Eigen::MatrixXcd V(8, 2 * p.pairs.size());
    for (size_t i = 0; i < p.pairs.size(); ++i) {
      V.col(2 * i) = p.pairs[i].up;
      V.col(2 * i + 1) = p.pairs[i].dn;
    }
    const Eigen::MatrixXcd G = V.adjoint() * V;
    CHECK((G - Eigen::MatrixXcd::Identity(G.rows(), G.cols())).cwiseAbs().maxCoeff() < 1e-10);
  }
  // two pairs with overlap 0.1
  UnitTerms t;
  t.sector_dims = {4};
  t.excluded.assign(1, Eigen::MatrixXcd());
  Eigen::VectorXcd e0 = Eigen::VectorXcd::Unit(4, 0), e1 = Eigen::VectorXcd::Unit(4, 1);
  Eigen::VectorXcd e2 = Eigen::VectorXcd::Unit(4, 2), e3 = Eigen::VectorXcd::Unit(4, 3);
  t.terms.push_back({0.6, 0, 0, true, 0, 0, e0 / std::sqrt(2.0), e1 / std::sqrt(2.0)});
  Eigen::VectorXcd f = (0.1 * e0 + std::sqrt(0.99) * e2) / std::sqrt(2.0);
  t.terms.push_back({0.4, 0, 0, true, 0, 0, f, e3 / std::sqrt(2.0)});
  auto p = orthonormalize_bath_pairs(t, PairOrdering::weight);
  REQUIRE(p.pairs.size() == 2);
  CHECK(std::abs(p.pairs[0].up.dot(p.pairs[1].up)) < 1e-12);
  CHECK((p.pairs[0].up - e0).norm() < 1e-12);
}

TEST_CASE("witness validity on random pure states") {
  std::mt19937_64 rng(6);
  const int d = 6;
  Eigen::MatrixXcd rho = random_density(2 * d, 5, rng);
  auto lb = best_unit_lower_bound(terms_from_density(rho, d));
  auto X = global_witness(lb);
  double worst = -1.0;
  std::normal_distribution<double> g;
  for (int k = 0; k < 10000; ++k) {
    Eigen::VectorXcd psi(2 * d);
    for (int i = 0; i < 2 * d; ++i) psi(i) = {g(rng), g(rng)};
    // concentrate some samples on a single subspace where the witness is tight
    if (k % 2) {
      const auto& p = X[k % X.size()].pair;
      Eigen::Vector4cd c;
      for (int i = 0; i < 4; ++i) c(i) = {g(rng), g(rng)};
      psi = embed(c(0) * p.up + c(1) * p.dn, c(2) * p.up + c(3) * p.dn);
    }
    psi.normalize();
    const double e = pure_state_eof(Eigen::VectorXcd(psi.head(d)), Eigen::VectorXcd(psi.tail(d)));
    worst = std::max(worst, witness_expectation(X, psi) - e);
  }
  CHECK(worst <= 1e-9);
  // and the witness reproduces the bound on the state itself
  double tr = 0.0;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(rho);
  for (int k = 0; k < 2 * d; ++k)
    tr += es.eigenvalues()(k) * witness_expectation(X, es.eigenvectors().col(k));
  CHECK(tr == doctest::Approx(lb.value).epsilon(1e-6));
}

TEST_CASE("improvement pass never lowers the bound") {
  std::mt19937_64 rng(7);
  for (int k = 0; k < 5; ++k) {
    Eigen::MatrixXcd rho = random_density(12, 4, rng);
    auto u = terms_from_density(rho, 6);
    WitnessOptions off;
    off.improve = false;
    const double plain = unit_lower_bound(u, PairOrdering::weight, off).value;
    const double better = unit_lower_bound(u, PairOrdering::weight).value;
    CHECK(better >= plain - 1e-12);
  }
}
