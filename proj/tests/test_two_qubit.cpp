#include <doctest.h>

#include <kondo_eof/two_qubit.hpp>
#include <random>

using namespace kondo_eof;

namespace {

Mat4c random_density(std::mt19937_64& rng, int rank) {
  std::normal_distribution<double> g;
  Eigen::Matrix<cplx, 4, Eigen::Dynamic> a(4, rank);
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < rank; ++j) a(i, j) = cplx(g(rng), g(rng));
  Mat4c r = a * a.adjoint();
  return r / r.trace().real();
}

Vec4c random_pure(std::mt19937_64& rng) {
  std::normal_distribution<double> g;
  Vec4c v;
  for (int i = 0; i < 4; ++i) v(i) = cplx(g(rng), g(rng));
  return v.normalized();
}

}  // namespace

TEST_CASE("concurrence of simple states") {
  CHECK(concurrence(bell_projector()) == doctest::Approx(1.0).epsilon(1e-12));
  Mat4c prod = Mat4c::Zero();
  prod(0, 0) = 1.0;
  CHECK(concurrence(prod) == doctest::Approx(0.0));
  // Werner state: C = (3p - 1) / 2
  const double p = 0.8;
  Mat4c w = p * bell_projector() + (1 - p) / 4.0 * Mat4c::Identity();
  CHECK(concurrence(w) == doctest::Approx(0.7).epsilon(1e-12));
  CHECK(concurrence(3.0 * w) == doctest::Approx(2.1).epsilon(1e-12));
}

TEST_CASE("invalid states are rejected") {
  Mat4c m = Mat4c::Zero();
  m(0, 1) = 1.0;
  CHECK_THROWS_AS(concurrence(m), InvalidStateError);
  Mat4c neg = Mat4c::Identity();
  neg(3, 3) = -0.5;
  CHECK_THROWS_AS(concurrence(neg), InvalidStateError);
}

TEST_CASE("eof from concurrence") {
  CHECK(eof_from_concurrence(1.0) == doctest::Approx(1.0));
  CHECK(eof_from_concurrence(0.0) == doctest::Approx(0.0));
  const double u = (1.0 + std::sqrt(0.75)) / 2.0;
  CHECK(u == doctest::Approx(0.93301).epsilon(1e-5));
  const double h = -u * std::log2(u) - (1 - u) * std::log2(1 - u);
  CHECK(eof_from_concurrence(0.5) == doctest::Approx(h).epsilon(1e-14));
  CHECK_THROWS_AS(eof_from_concurrence(1.1), DomainError);
  // convex and monotone
  const int n = 400;
  for (int i = 1; i < n; ++i) {
    double x = double(i) / n, d = 1.0 / n;
    double f0 = eof_from_concurrence(x - d), f1 = eof_from_concurrence(x), f2 = eof_from_concurrence(x + d);
    CHECK(f2 - 2 * f1 + f0 >= -1e-8);
    CHECK(f1 >= f0);
  }
  // slope against finite differences, including near x = 1
  for (double x : {0.1, 0.5, 0.9, 0.999, 1.0 - 1e-7}) {
    double d = std::min(1e-6, (1 - x) / 2);
    double fd = (eof_from_concurrence(x + d) - eof_from_concurrence(x - d)) / (2 * d);
    CHECK(eof_slope(x) == doctest::Approx(fd).epsilon(1e-4));
  }
  CHECK(eof_slope(1.0) == doctest::Approx(1.0 / std::log(2.0)));
}

TEST_CASE("pure state entanglement") {
  CHECK(pure_state_eof(Vec4c(1, 0, 0, 0)) == doctest::Approx(0.0));
  Vec4c singlet(0, -1 / std::sqrt(2.0), 1 / std::sqrt(2.0), 0);
  CHECK(pure_state_eof(singlet) == doctest::Approx(1.0));
  CHECK(pure_state_eof(Vec4c(0.6, 0, 0, 0.8)) == doctest::Approx(0.94268).epsilon(1e-5));
  CHECK_THROWS_AS(pure_state_eof(Vec4c(1, 1, 0, 0)), InvalidStateError);
  std::mt19937_64 rng(7);
  for (int i = 0; i < 200; ++i) {
    Vec4c psi = random_pure(rng);
    Mat4c r = psi * psi.adjoint();
    CHECK(pure_state_eof(psi) == doctest::Approx(eof_from_concurrence(std::min(1.0, concurrence(r)))).epsilon(1e-9));
  }
}

TEST_CASE("concurrence witness reaches the closed form") {
  auto bell = optimal_concurrence_witness(bell_projector());
  CHECK(bell.witness.value == doctest::Approx(1.0).epsilon(1e-10));
  Mat4c prod = Mat4c::Zero();
  prod(0, 0) = 1.0;
  auto nw = optimal_concurrence_witness(prod);
  CHECK(nw.witness.kind == WitnessKind::null);
  CHECK(nw.witness.matrix.norm() == 0.0);

  std::mt19937_64 rng(11);
  SloccOptions opt;
  opt.stop_at_closed_form = false;
  for (int i = 0; i < 50; ++i) {
    Mat4c r = random_density(rng, 4);
    double c = concurrence(r);
    auto w = optimal_concurrence_witness(r, opt);
    if (c < 1e-12) {
      CHECK(w.witness.kind == WitnessKind::null);
      continue;
    }
    CHECK(std::abs(w.witness.value - c) < 1e-6);
    CHECK(std::abs(w.slocc.o1.determinant() - 1.0) < 1e-10);
    CHECK(std::abs(w.slocc.o2.determinant() - 1.0) < 1e-10);
  }
}

TEST_CASE("eof witness") {
  auto x = optimal_eof_witness(bell_projector());
  const double a = 2.0 / std::log(2.0);
  Mat4c expect = a * bell_projector() - (a - 1.0) * Mat4c::Identity();
  CHECK((x.matrix - expect).norm() < 1e-8);
  CHECK(x.value == doctest::Approx(1.0));

  Mat4c sep = Mat4c::Zero();
  sep(0, 0) = 0.5;
  sep(3, 3) = 0.5;
  CHECK(optimal_eof_witness(sep).value == doctest::Approx(0.0));

  std::mt19937_64 rng(3);
  for (int i = 0; i < 50; ++i) {
    Mat4c r = 0.3 * random_density(rng, 1 + i % 4);
    auto w = optimal_eof_witness(r);
    CHECK(std::abs(w.value - eof(r)) < 1e-6);
    if (w.kind == WitnessKind::null) continue;
    double worst = -1;
    for (int k = 0; k < 10000; ++k) {
      Vec4c psi = random_pure(rng);
      double lhs = (psi.adjoint() * w.matrix * psi)(0, 0).real();
      worst = std::max(worst, lhs - pure_state_eof(psi));
    }
    CHECK(worst <= 1e-9);
  }
}

TEST_CASE("saturating states") {
  auto b = saturating_states(bell_projector());
  REQUIRE(b.size() == 1);
  CHECK(b[0].weight == doctest::Approx(1.0));
  std::mt19937_64 rng(5);
  for (int rank = 1; rank <= 4; ++rank) {
    for (int i = 0; i < 20; ++i) {
      Mat4c r = random_density(rng, rank);
      auto comps = saturating_states(r);
      Mat4c rec = Mat4c::Zero();
      double avg = 0;
      for (auto& c : comps) {
        rec += c.weight * c.state * c.state.adjoint();
        avg += c.weight * pure_state_eof(c.state);
      }
      CHECK((rec - r).norm() < 1e-10);
      CHECK(avg == doctest::Approx(eof(r)).epsilon(1e-9));
      auto w = optimal_eof_witness(r);
      for (auto& c : comps) {
        double lhs = (c.state.adjoint() * w.matrix * c.state)(0, 0).real();
        CHECK(std::abs(lhs - pure_state_eof(c.state)) < 1e-8);
      }
    }
  }
  // mixture of two Bell states
  Mat4c two = 0.7 * bell_projector();
  Vec4c psim(1 / std::sqrt(2.0), 0, 0, -1 / std::sqrt(2.0));
  two += 0.3 * psim * psim.adjoint();
  auto comps = saturating_states(two);
  for (auto& c : comps) CHECK(concurrence(c.state * c.state.adjoint()) == doctest::Approx(0.4).epsilon(1e-9));
}
