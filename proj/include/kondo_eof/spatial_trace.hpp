#pragma once

#include <Eigen/Dense>
#include <json.hpp>
#include <stdexcept>
#include <string>
#include <vector>

#include "kondo_eof/block_chain.hpp"
#include "kondo_eof/nrg.hpp"
#include "kondo_eof/wilson_chain.hpp"

namespace kondo_eof {

struct AccuracyError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct TruncationError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Projector onto 0 <= x <= L in the Wilson-site basis. Lengths in 1/k_F with
// hbar v_F = D = 1; the bath is the half line with cos(kx) modes.
struct SpatialProjector {
  double L = 0.0;
  Eigen::MatrixXd P;
  Eigen::VectorXd p;  // diagonal
  double n_L = 0.0;   // 2 log_Lambda(k_F L)
  double max_off_diagonal() const;
};

SpatialProjector projector_matrix(double L, const WilsonChain& chain);

// The same matrix from site wave functions on a logarithmic x grid, with the
// 2 k_F oscillation averaged out. The grid is doubled until no entry moves
// by more than tol (AccuracyError after max_doublings).
SpatialProjector projector_by_quadrature(double L, const WilsonChain& chain, int points_per_decade = 64,
                                         double tol = 1e-4, int max_doublings = 4);

// One site mode split as sqrt(p) in + sqrt(1 - p) out. For each site state
// s, the terms amp |o>_out |i>_in (out modes ordered before in modes).
struct SplitAmplitude {
  int in = 0, out = 0;
  double amp = 0.0;
};
std::vector<std::vector<SplitAmplitude>> split_site_basis(double p, int channels = 1);

// Occupation distribution of the inside part of a maximally mixed site.
Eigen::VectorXd inside_tail(double p, int channels = 1);

struct TraceOptions {
  double drop_weight = 1e-8;    // cumulative weight dropped per step from each basis
  double out_threshold = 1e-6;  // sites past the last p above this are traced whole
  int max_basis = 0;          // reduced kept states per step; 0 means the run's keep_max
  int max_env = 0;            // environment directions per step; 0 means 8 x max_basis
  double max_trace_loss = 1e-6;
};

// rho(T, L) in block form: the chain's steps hold reduced kept and discarded
// states over (reduced kept of the previous step) x inside site states.
// Truncating the kept and environment bases projects the later blocks; each
// block is scaled back to its thermal weight; projection_loss is the weight
// the projections removed in total. trace_loss counts dropped discarded weight.
struct ReducedState {
  BlockChain chain;
  double trace_loss = 0.0;
  double projection_loss = 0.0;
  std::vector<int> kept_dim, env_dim;
};

ReducedState partial_trace_out(const NrgRun& run, const BlockThermalState& rho, const std::vector<double>& p,
                               const TraceOptions& opt = {});

// Same header-plus-binary layout as the NRG checkpoints; meta is stored in
// the header verbatim.
void save_reduced_state(const ReducedState& s, const std::string& path, const nlohmann::json& meta = {});
ReducedState load_reduced_state(const std::string& path, nlohmann::json* meta = nullptr);

}  // namespace kondo_eof
