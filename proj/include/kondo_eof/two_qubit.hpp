#pragma once

#include <Eigen/Dense>
#include <complex>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace kondo_eof {

using cplx = std::complex<double>;
using Mat2c = Eigen::Matrix2cd;
using Mat4c = Eigen::Matrix4cd;
using Vec4c = Eigen::Vector4cd;

struct InvalidStateError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct DomainError : std::domain_error {
  using std::domain_error::domain_error;
};

// Thrown when the SLOCC search runs out of iterations while still improving.
struct ConvergenceError : std::runtime_error {
  double best_value;
  ConvergenceError(const std::string& what, double best)
      : std::runtime_error(what), best_value(best) {}
};

// Basis order: {|up>,|dn>} (impurity) x {|phi_up>,|phi_dn>} (bath pair).
struct TwoQubitDensity {
  Mat4c matrix = Mat4c::Zero();
  double trace_weight() const { return matrix.trace().real(); }
};

enum class WitnessKind { concurrence_witness, eof_witness, null };

struct TwoQubitWitness {
  Mat4c matrix = Mat4c::Zero();
  WitnessKind kind = WitnessKind::null;
  double value = 0.0;  // tr(X rho) for the density it was built for
};

struct SloccOperator {
  Mat2c o1 = Mat2c::Identity();
  Mat2c o2 = Mat2c::Identity();
  Mat4c full() const;
};

struct SloccOptions {
  int random_starts = 8;
  int window = 50;               // iterations without improvement before stopping
  double improvement_tol = 1e-10;
  int max_iterations = 4000;
  std::uint64_t seed = 12345;
  // Skip the random restarts once a start reaches the closed-form concurrence
  // (tr(X^C rho) can never exceed it, so nothing is left to gain).
  bool stop_at_closed_form = true;
};

struct PureComponent {
  double weight = 0.0;  // p_l
  Vec4c state;          // normalized
};

double binary_entropy(double p);
// f(x) = h((1 + sqrt(1 - x^2)) / 2)
double eof_from_concurrence(double x);
double eof_slope(double x);

// Checks Hermiticity and positivity (tolerance 1e-10 * trace) and clamps tiny
// negative eigenvalues.
Mat4c sanitize_density(const Mat4c& rho);

double concurrence(const Mat4c& rho);
inline double concurrence(const TwoQubitDensity& rho) { return concurrence(rho.matrix); }
// tr(rho) f(C / tr rho)
double eof(const Mat4c& rho);

double pure_state_eof(const Vec4c& psi);
// General bipartition: |psi> = |up>|a> + |dn>|b>, normalized overall.
double pure_state_eof(const Eigen::VectorXcd& a, const Eigen::VectorXcd& b);

Mat4c bell_projector();
Mat4c spin_flip(const Mat4c& rho);

struct ConcurrenceWitnessResult {
  TwoQubitWitness witness;
  SloccOperator slocc;
  int starts_used = 0;
  int iterations = 0;
  bool converged = true;
};

ConcurrenceWitnessResult optimal_concurrence_witness(const Mat4c& rho,
                                                     const SloccOptions& opt = {});
// Like above but never throws ConvergenceError: the best witness found is
// still a valid witness.
ConcurrenceWitnessResult best_concurrence_witness(const Mat4c& rho,
                                                  const SloccOptions& opt = {});
TwoQubitWitness optimal_eof_witness(const Mat4c& rho, const SloccOptions& opt = {});
TwoQubitWitness eof_witness_from(const ConcurrenceWitnessResult& cw, const Mat4c& rho);

// Optimal pure-state decomposition; every component has concurrence C/tr rho.
std::vector<PureComponent> saturating_states(const Mat4c& rho);

}  // namespace kondo_eof
