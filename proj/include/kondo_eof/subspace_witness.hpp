#pragma once

#include <Eigen/Dense>
#include <vector>

#include "kondo_eof/two_qubit.hpp"

namespace kondo_eof {

// One pure contribution w |psi><psi| with |psi> = |up>|up_bath> + |dn>|dn_bath>.
// The bath space is a direct sum of sectors; each component lives in one
// sector (index -1 when it vanishes) and is stored in sector coordinates.
struct BathTerm {
  double weight = 0.0;
  double energy = 0.0;  // ordering key only
  int sz2 = 0;
  bool own = true;      // false for weight carried over from earlier blocks
  int sec_up = -1, sec_dn = -1;
  Eigen::VectorXcd up, dn;
};

struct UnitTerms {
  std::vector<int> sector_dims;
  std::vector<BathTerm> terms;
  // Orthonormal columns per sector that the subspaces must avoid (the bath
  // support of everything that comes later). Empty matrices mean nothing.
  std::vector<Eigen::MatrixXcd> excluded;
  double trace() const;
};

// Eigen-decomposition of a density on C^2 (impurity) x C^d (bath), index
// eta * d + k, as a single-sector unit.
UnitTerms terms_from_density(const Eigen::MatrixXcd& rho, int bath_dim, double cutoff = 1e-14);
Eigen::MatrixXcd density_from_terms(const UnitTerms& u);  // single sector only

enum class PairOrdering { weight, energy };

struct BathPair {
  int sec_up = -1, sec_dn = -1;
  Eigen::VectorXcd up, dn;
};

struct PairSet {
  std::vector<BathPair> pairs;
  int dropped = 0;  // dependent components (norm < 1e-8 after projection)
};

// Gram-Schmidt over the bath components of the terms, in the given order.
// A term opens a subspace only if both components survive.
PairSet orthonormalize_bath_pairs(const UnitTerms& u, PairOrdering order);

// I_i rho I_i in the basis {up, dn} x {phi_up, phi_dn}.
std::vector<Mat4c> pair_densities(const UnitTerms& u, const PairSet& p);
// Per pair, a (terms x 4) matrix of <eta phi_a|psi_t>, column eta * 2 + a.
std::vector<Eigen::MatrixXcd> pair_coefficients(const UnitTerms& u, const PairSet& p);

struct WitnessOptions {
  bool improve = true;
  int max_sweeps = 3;
  int improve_pairs = 8;  // heaviest subspaces taking part in rotations
  bool certify = false;    // build every witness explicitly and use tr(X rho)
  SloccOptions slocc;
};

struct UnitLowerBound {
  double value = 0.0;
  PairOrdering ordering = PairOrdering::weight;
  int pairs = 0;
  int dropped = 0;
  int sweeps = 0;
  int rotations = 0;
  double leakage = 0.0;  // Frobenius norm of off-diagonal pair blocks (heaviest pairs)
  PairSet pairset;
  std::vector<Mat4c> rho;
};

UnitLowerBound unit_lower_bound(const UnitTerms& u, PairOrdering order, const WitnessOptions& opt = {});
// Best over both orderings.
UnitLowerBound best_unit_lower_bound(const UnitTerms& u, const WitnessOptions& opt = {});

struct SubspaceWitness {
  BathPair pair;
  TwoQubitWitness X;
};

std::vector<SubspaceWitness> global_witness(const UnitLowerBound& lb, const SloccOptions& opt = {});
// <psi|sum_i X_i|psi> for a vector on C^2 x (single-sector bath).
double witness_expectation(const std::vector<SubspaceWitness>& X, const Eigen::VectorXcd& psi);

}  // namespace kondo_eof
