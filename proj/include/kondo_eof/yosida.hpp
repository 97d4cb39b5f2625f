#pragma once

#include <Eigen/Dense>
#include <stdexcept>

#include "kondo_eof/spatial_trace.hpp"
#include "kondo_eof/wilson_chain.hpp"

namespace kondo_eof {

struct InconsistencyError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Yosida's variational singlet: the bath electron bound to the impurity has
// amplitude 1 / (eps + E_Y) for 0 < eps < D above the Fermi level.
// Units hbar v_F = 1, lengths in 1/k_F as for the projector.
struct YosidaState {
  double D = 1.0;
  double E_Y = 0.0;
  double xi = 0.0;     // 1 / E_Y
  double norm2 = 0.0;  // squared normalization of the momentum amplitude
};

// E_Y = D exp(-4 / (3 J nu))
YosidaState yosida_state(const ModelSpec& spec);
YosidaState yosida_state(double E_Y, double D = 1.0);

// |phi_Y(x)|^2 with the 2 k_F oscillation averaged out.
double yosida_density(double x, const YosidaState& s);

// int_0^infinity |phi_Y|^2 dx (one, up to quadrature error).
double yosida_norm(const YosidaState& s);

struct OutsideProbability {
  double p = 0.0;
  double asymptotic = 0.0;  // xi / (pi L)
};

// Weight of phi_Y beyond L. Throws AccuracyError if the quadrature fails.
OutsideProbability outside_probability(double L, const YosidaState& s);

// (1 - p) |singlet><singlet| + p/2 (|dn,0><dn,0| + |up,0><up,0|) on
// impurity x {empty, phi_up, phi_dn}, index eta * 3 + k (eta = 0 for up).
Eigen::MatrixXd yosida_reduced_state(double p);

// The witness 2/ln2 |singlet><singlet| - (2/ln2 - 1) I_phi on the same space.
Eigen::MatrixXd yosida_witness();

// 1 - p, checked against tr(X rho) and the generic lower and upper bounds on
// the explicit mixture (InconsistencyError beyond 1e-9).
double yosida_eof(double p);

}  // namespace kondo_eof
