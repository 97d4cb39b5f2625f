#pragma once

#include <Eigen/Dense>
#include <vector>

#include "kondo_eof/subspace_witness.hpp"

namespace kondo_eof {

struct ReconstructionError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Target pure state z (pair basis) of subspace `pair` with weight p_l.
struct Target {
  int pair = 0;
  double weight = 0.0;
  Vec4c z;
};

// Saturating states of every pair density, weights in the optimal proportions.
std::vector<Target> witness_targets(const std::vector<Mat4c>& rho, double cutoff = 1e-14);

// [W]_{ld} = <psi_d|psi_l> p_l^y1 pbar_d^y2; coeffs are per-pair (terms x 4).
Eigen::MatrixXcd w_matrix(const std::vector<Target>& targets, const std::vector<Eigen::MatrixXcd>& coeffs,
                          const Eigen::VectorXd& pbar, double y1, double y2);

// U = V_L V_R^dagger, completed to a left-unitary max(L, D) x D matrix.
Eigen::MatrixXcd left_unitary(const Eigen::MatrixXcd& W);

struct UpperBoundOptions {
  std::vector<double> grid{-1.0, -0.5, 0.0, 0.5, 1.0};
  bool search = true;
  int refine_rounds = 1;
  int refine_bits = 10;
  int max_states = 240;       // states of a block that enter the mixing
  double tail_weight = 1e-9;  // relative weight left to the eigen-decomposition
  double rank_cutoff = 1e-12;
  PairOrdering order = PairOrdering::weight;
};

struct BlockUpperBound {
  double value = 0.0;
  double trivial = 0.0;  // eigen-decomposition average
  double trace = 0.0;
  double y1 = 0.0, y2 = 0.0;
  bool boundary = false;
  bool mixed = false;  // the W decomposition beat the trivial one
  int states = 0, targets = 0, evaluations = 0;
  double unitarity = 0.0;  // |U^dagger U - 1| at the optimum
};

// Sum_l p'_l E(psi'_l) for psi'_l = sum_d U_ld sqrt(pbar_d) psi_d.
double decomposition_average(const UnitTerms& u, const Eigen::MatrixXcd& U);
double term_entanglement(const BathTerm& t);

BlockUpperBound block_upper_bound(const UnitTerms& block, const UpperBoundOptions& opt = {});

}  // namespace kondo_eof
