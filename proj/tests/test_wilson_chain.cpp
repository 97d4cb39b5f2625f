#include <doctest.h>

#include <kondo_eof/wilson_chain.hpp>

using namespace kondo_eof;

TEST_CASE("kondo temperature") {
  ModelSpec s;
  CHECK(kondo_temperature_1ck(s) == doctest::Approx(std::sqrt(0.15) * std::exp(-1.0 / 0.15)).epsilon(1e-14));
  CHECK(kondo_temperature_1ck(s) == doctest::Approx(4.9228e-4).epsilon(1e-4));
  s.J = 2.0;  // nu J = 1
  CHECK(kondo_temperature_1ck(s) == doctest::Approx(std::exp(-1.0)));
  s.J = 0.01;
  CHECK(kondo_temperature_1ck(s) < 1e-40);
}

TEST_CASE("z = 0 chain matches the closed form") {
  auto ch = build_wilson_chain({}, 4.0, 0.0, 40);
  REQUIRE(ch.hoppings.size() == 40);
  for (int n = 0; n < 40; ++n)
    CHECK(ch.hoppings[n] == doctest::Approx(wilson_hopping_closed_form(4.0, n)).epsilon(1e-10));
  for (double e : ch.onsite) CHECK(std::abs(e) < 1e-14);
}

TEST_CASE("asymptotic hopping ratio") {
  for (double z : {0.0, 0.25, 0.5}) {
    auto c4 = build_wilson_chain({}, 4.0, z, 30);
    auto c8 = build_wilson_chain({}, 8.0, z, 30);
    for (int n = 0; n < 30; ++n) CHECK(c4.hoppings[n] > 0.0);
    CHECK(c4.hoppings[25] / c4.hoppings[26] == doctest::Approx(2.0).epsilon(0.05));
    CHECK(c8.hoppings[25] / c8.hoppings[26] == doctest::Approx(std::sqrt(8.0)).epsilon(0.05));
  }
  auto c1 = build_wilson_chain({}, 4.0, 0.0, 1);
  CHECK(c1.hoppings.size() == 1);
  CHECK(c1.hoppings[0] > 0.1);
  CHECK(c1.hoppings[0] < 1.0);
}

TEST_CASE("lanczos vectors are orthonormal") {
  auto ch = build_wilson_chain({}, 4.0, 0.5, 30);
  Eigen::MatrixXd g = ch.lanczos * ch.lanczos.transpose();
  CHECK((g - Eigen::MatrixXd::Identity(31, 31)).cwiseAbs().maxCoeff() < 1e-12);
}
