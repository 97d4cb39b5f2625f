#include <doctest.h>

#include <cmath>
#include <kondo_eof/scaling.hpp>

using namespace kondo_eof;

namespace {

std::vector<double> logspace(double a, double b, int n) {
  std::vector<double> x(n);
  for (int i = 0; i < n; ++i) x[i] = std::pow(10.0, a + (b - a) * i / (n - 1));
  return x;
}

}  // namespace

TEST_CASE("power laws are recovered from noiseless data") {
  auto x = logspace(-2, -0.5, 9);
  std::vector<double> y2, y1;
  for (double v : x) y2.push_back(1.0 - 0.2 * v * v), y1.push_back(1.0 - 0.5 * v);
  auto f2 = fit_power_law(x, y2, 1e-2, std::pow(10.0, -0.5));
  CHECK(f2.exponent == doctest::Approx(2.0).epsilon(1e-6));
  CHECK(f2.prefactor == doctest::Approx(0.2).epsilon(1e-6));
  CHECK(f2.points == 9);
  CHECK(f2.residual < 1e-10);
  auto f1 = fit_power_law(x, y1, 0.0, 1.0);
  CHECK(std::abs(f1.exponent - 1.0) < 1e-3);
  CHECK(f1.window_lo == doctest::Approx(1e-2));
  CHECK_THROWS_AS(fit_power_law(x, y1, 0.05, 0.1), InsufficientDataError);
  std::vector<double> bad = y1;
  bad[3] = 1.0;
  CHECK_THROWS_AS(fit_power_law(x, bad, 0.0, 1.0), InsufficientDataError);
}

TEST_CASE("series checks and z averaging") {
  ScalingSeries a;
  a.x = {1, 2, 3};
  a.lower = {0.1, 0.2, 0.3};
  a.upper = {0.2, 0.3, 0.4};
  a.z = {0.0};
  ScalingSeries b = a;
  b.lower = {0.3, 0.4, 0.5};
  b.upper = {0.4, 0.5, 0.6};
  b.z = {0.5};
  auto m = z_average({a, b});
  CHECK(m.lower[1] == doctest::Approx(0.3));
  CHECK(m.upper[2] == doctest::Approx(0.5));
  CHECK(m.z.size() == 2);
  ScalingSeries bad = a;
  bad.x = {1, 1, 2};
  CHECK_THROWS(bad.validate());
  bad = a;
  bad.lower[0] = 0.5;
  CHECK_THROWS(bad.validate());
}

TEST_CASE("additivity residuals") {
  PowerLawFit th{2.0, 0.5}, sp{1.0, 0.3};
  std::vector<GridPoint> exact, mult;
  for (double t : logspace(-1.75, -0.75, 5))
    for (double ell : logspace(1, 2, 5)) {
      exact.push_back({t, ell, 1.0 - 0.5 * t * t - 0.3 / ell});
      mult.push_back({t, ell, (1.0 - 0.5 * t * t) * (1.0 - 0.3 / ell)});
    }
  auto r0 = check_additivity(exact, th, sp, 0, 1, 1, 1e3);
  CHECK(r0.points == 25);
  CHECK(r0.max_relative < 1e-12);
  auto r1 = check_additivity(mult, th, sp, 0, 1, 1, 1e3);
  for (size_t i = 0; i < mult.size(); ++i) {
    const auto& g = mult[i];
    const double cross = 0.5 * 0.3 * g.t * g.t / g.ell;
    CHECK(r1.relative[i] * (1.0 - g.value) == doctest::Approx(cross).epsilon(1e-9));
  }
  CHECK(r1.mean_relative < 0.01);
  CHECK_THROWS_AS(check_additivity(exact, th, sp, 10, 20, 1, 2), InsufficientDataError);
}

TEST_CASE("cloud size under the 10 percent convention") {
  // Yosida tail E = 1 - xi / (pi L), xi = 1
  auto L = logspace(-1, 8, 400);
  std::vector<double> e;
  for (double l : L) e.push_back(std::max(0.0, 1.0 - 1.0 / (M_PI * l)));
  auto c = cloud_size(L, e);
  CHECK(c.L == doctest::Approx(10.0 / M_PI).epsilon(1e-3));
  std::vector<double> flat(L.size(), 0.95);
  CHECK_THROWS_AS(cloud_size(L, flat), OutOfRangeError);
}
