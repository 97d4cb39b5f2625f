#include "kondo_eof/yosida.hpp"

#include <gsl/gsl_errno.h>
#include <gsl/gsl_integration.h>
#include <gsl/gsl_sf_expint.h>

#include <cmath>
#include <functional>
#include <memory>
#include <string>

#include "kondo_eof/subspace_witness.hpp"
#include "kondo_eof/upper_bound.hpp"

namespace kondo_eof {

YosidaState yosida_state(double E_Y, double D) {
  if (!(E_Y > 0.0) || !(D > 0.0)) throw std::invalid_argument("E_Y and D must be positive");
  YosidaState s;
  s.D = D;
  s.E_Y = E_Y;
  s.xi = 1.0 / E_Y;
  s.norm2 = 1.0 / (1.0 / E_Y - 1.0 / (D + E_Y));
  return s;
}

YosidaState yosida_state(const ModelSpec& spec) {
  validate(spec);
  return yosida_state(spec.D * std::exp(-4.0 / (3.0 * spec.J * spec.nu())), spec.D);
}

namespace {

constexpr double kPi = 3.14159265358979323846;

// |int_a^b e^{iux} / u du|^2 with a = E_Y, b = D + E_Y
double envelope2(double x, double a, double b) {
  if (b * x < 1e-7) return std::pow(std::log(b / a), 2);
  const double re = gsl_sf_Ci(b * x) - gsl_sf_Ci(a * x);
  const double im = gsl_sf_Si(b * x) - gsl_sf_Si(a * x);
  return re * re + im * im;
}

// |Ci(y) + i (Si(y) - pi/2)|^2, the part of the envelope set by E_Y alone
double slow2(double y) {
  const double re = gsl_sf_Ci(y), im = gsl_sf_Si(y) - 0.5 * kPi;
  return re * re + im * im;
}

class Integrator {
 public:
  Integrator() : ws_(gsl_integration_workspace_alloc(kLimit), gsl_integration_workspace_free) {}

  double operator()(const std::function<double(double)>& f, double lo, double hi) {
    if (hi <= lo) return 0.0;
    gsl_function g;
    g.function = [](double x, void* p) { return (*static_cast<const std::function<double(double)>*>(p))(x); };
    g.params = const_cast<std::function<double(double)>*>(&f);
    double r = 0.0, err = 0.0;
    const int status = gsl_integration_qag(&g, lo, hi, 0.0, 1e-10, kLimit, GSL_INTEG_GAUSS61, ws_.get(), &r, &err);
    if (status != GSL_SUCCESS && err > 1e-8 * std::abs(r))
      throw AccuracyError(std::string("envelope quadrature failed: ") + gsl_strerror(status));
    return r;
  }

 private:
  static constexpr size_t kLimit = 400;
  std::unique_ptr<gsl_integration_workspace, void (*)(gsl_integration_workspace*)> ws_;
};

struct GslQuiet {
  gsl_error_handler_t* old = gsl_set_error_handler_off();
  ~GslQuiet() { gsl_set_error_handler(old); }
};

// int_L^infinity |envelope|^2 dx
double envelope_tail(double L, const YosidaState& s) {
  GslQuiet quiet;
  Integrator integrate;
  const double a = s.E_Y, b = s.D + s.E_Y;
  // beyond x_s the band-edge part is 1/(b x)^2 and its cross term with the
  // rest averages to below 1e-8
  const double x_s = 1e4 / b;
  double total = 0.0;
  if (L < x_s) {
    auto f = [&](double x) { return envelope2(x, a, b); };
    double lo = L;
    if (lo < 1e-7 / b) {
      total += (1e-7 / b - lo) * std::pow(std::log(b / a), 2);
      lo = 1e-7 / b;
    }
    // logarithmic pieces up to x = 10 / b, then pieces of a few band-edge periods
    while (lo < x_s) {
      const double hi = lo < 10.0 / b ? std::min(lo * 1.5, 10.0 / b) : std::min(lo + 25.0 / b, x_s);
      total += integrate(f, lo, hi);
      lo = hi;
    }
  }
  const double X = std::max(L, x_s);
  total += 1.0 / (b * b * X);
  // int_X^infinity |Ci(a x) + i (Si(a x) - pi/2)|^2 dx in y = a x
  double y = a * X, slow = 0.0;
  const double y_end = 1e8;
  while (y < y_end) {
    const double hi = std::min(y * 2.0, y_end);
    slow += integrate(slow2, y, hi);
    y = hi;
  }
  slow += 1.0 / std::max(y_end, a * X);
  return total + slow / a;
}

}  // namespace

double yosida_density(double x, const YosidaState& s) {
  return s.norm2 / kPi * envelope2(x, s.E_Y, s.D + s.E_Y);
}

double yosida_norm(const YosidaState& s) { return s.norm2 / kPi * envelope_tail(0.0, s); }

OutsideProbability outside_probability(double L, const YosidaState& s) {
  if (!(L > 0.0)) throw std::invalid_argument("L must be positive");
  OutsideProbability out;
  out.p = std::clamp(s.norm2 / kPi * envelope_tail(L, s), 0.0, 1.0);
  out.asymptotic = s.xi / (kPi * L);
  return out;
}

Eigen::MatrixXd yosida_reduced_state(double p) {
  if (!(p >= 0.0 && p <= 1.0)) throw std::invalid_argument("p must lie in [0, 1]");
  Eigen::VectorXd singlet = Eigen::VectorXd::Zero(6);
  singlet(0 * 3 + 2) = std::sqrt(0.5);
  singlet(1 * 3 + 1) = -std::sqrt(0.5);
  Eigen::MatrixXd rho = (1.0 - p) * singlet * singlet.transpose();
  rho(3, 3) += 0.5 * p;  // impurity down, nothing inside
  rho(0, 0) += 0.5 * p;  // impurity up, nothing inside
  return rho;
}

Eigen::MatrixXd yosida_witness() {
  Eigen::VectorXd singlet = Eigen::VectorXd::Zero(6);
  singlet(0 * 3 + 2) = std::sqrt(0.5);
  singlet(1 * 3 + 1) = -std::sqrt(0.5);
  const double c = 2.0 / std::log(2.0);
  Eigen::MatrixXd I = Eigen::MatrixXd::Zero(6, 6);
  for (int eta = 0; eta < 2; ++eta)
    for (int k = 1; k < 3; ++k) I(eta * 3 + k, eta * 3 + k) = 1.0;
  return c * singlet * singlet.transpose() - (c - 1.0) * I;
}

double yosida_eof(double p) {
  const Eigen::MatrixXd rho = yosida_reduced_state(p);
  const double value = 1.0 - p;
  const double witness = (yosida_witness() * rho).trace();
  const UnitTerms u = terms_from_density(rho.cast<cplx>(), 3);
  const double lower = best_unit_lower_bound(u).value;
  const double upper = block_upper_bound(u).value;
  for (double v : {witness, lower, upper})
    if (std::abs(v - value) > 1e-9)
      throw InconsistencyError("Yosida mixture: witness " + std::to_string(witness) + ", bounds " +
                               std::to_string(lower) + " / " + std::to_string(upper) + ", expected " +
                               std::to_string(value));
  return value;
}

}  // namespace kondo_eof
