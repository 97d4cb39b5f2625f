#include <doctest.h>

#include <kondo_eof/yosida.hpp>

using namespace kondo_eof;

TEST_CASE("Yosida wave function is normalized") {
  ModelSpec spec;
  auto s = yosida_state(spec);
  CHECK(s.E_Y == doctest::Approx(std::exp(-4.0 / 0.45)));
  CHECK(yosida_norm(s) == doctest::Approx(1.0).epsilon(1e-6));
  CHECK(yosida_norm(yosida_state(1e-2)) == doctest::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("outside probability limits and tail") {
  auto s = yosida_state(ModelSpec{});
  CHECK(outside_probability(1e-9, s).p == doctest::Approx(1.0).epsilon(1e-6));
  CHECK(outside_probability(1e6 * s.xi, s).p < 1e-6);
  auto far = outside_probability(100.0 * s.xi, s);
  CHECK(far.asymptotic == doctest::Approx(1.0 / (100.0 * M_PI)));
  CHECK(std::abs(far.p / far.asymptotic - 1.0) < 0.1);
  // relative error shrinks with L down to a floor of order E_Y / D
  double prev = 1.0;
  for (double r : {3.0, 10.0, 20.0, 50.0, 200.0, 1000.0}) {
    auto o = outside_probability(r * s.xi, s);
    const double e = std::abs(o.p / o.asymptotic - 1.0);
    if (r >= 20.0) CHECK(e < 0.1);
    CHECK((e < prev || e < 2.0 * s.E_Y / s.D));
    prev = e;
  }
  // monotone in L
  CHECK(outside_probability(s.xi, s).p > outside_probability(2.0 * s.xi, s).p);
}

TEST_CASE("Yosida mixture and its witness") {
  for (double p : {0.0, 0.3, 1.0}) CHECK(yosida_reduced_state(p).trace() == doctest::Approx(1.0));
  // the witness is exact on the singlet and on both empty states
  const Eigen::MatrixXd X = yosida_witness();
  CHECK((X * yosida_reduced_state(0.0)).trace() == doctest::Approx(1.0));
  CHECK((X * yosida_reduced_state(1.0)).trace() == doctest::Approx(0.0).epsilon(1e-12));
  for (int i = 0; i <= 10; ++i) {
    const double p = 0.1 * i;
    CHECK(yosida_eof(p) == doctest::Approx(1.0 - p).epsilon(1e-12));
  }
  auto s = yosida_state(ModelSpec{});
  const double p = outside_probability(30.0 * s.xi, s).p;
  CHECK(1.0 - yosida_eof(p) == doctest::Approx(1.0 / (30.0 * M_PI)).epsilon(0.1));
}
