#pragma once

#include <Eigen/Dense>
#include <array>
#include <map>
#include <memory>
#include <vector>

#include "kondo_eof/nrg.hpp"
#include "kondo_eof/subspace_witness.hpp"
#include "kondo_eof/upper_bound.hpp"

namespace kondo_eof {

// A density written as a chain of blocks: block n holds the discarded states
// of step n with their weights, tensored with a product distribution over the
// site states of every later step. Step n expands the kept states of step
// n-1 (the impurity for n = 0) with one site.
struct BlockChain {
  int channels = 1;
  std::vector<QN> site_qn;
  std::vector<std::shared_ptr<const StepStates>> steps;
  std::vector<std::vector<double>> weights;  // per step, per discarded state
  std::vector<std::vector<double>> energy;   // ordering keys, same shape
  std::vector<Eigen::VectorXd> tail;         // per step, distribution over site states

  int size() const { return static_cast<int>(steps.size()); }
  double block_trace(int n) const;
};

BlockChain chain_from_nrg(const NrgRun& run, const BlockThermalState& rho);

// Bath symmetry sectors of some space.
struct BathSectors {
  std::vector<QN> qn;
  std::vector<int> dim;
  int find(const QN& q) const;
  int add(const QN& q, int d);
  int total() const;

 private:
  std::map<QN, int> index_;
};

// Sectors of (space) x (site). Rows of an out sector are the pairs
// (sector, site state) in blocks order.
struct SectorLayout {
  BathSectors out;
  std::vector<std::vector<int>> offset;  // [sector][site state] -> row offset in its out sector
  std::vector<std::vector<int>> target;  // [sector][site state] -> out sector
  std::vector<std::vector<std::array<int, 3>>> blocks;  // per out sector: (sector, site state, offset)
};
SectorLayout tensor_site(const BathSectors& in, const std::vector<QN>& site_qn);

// Impurity-resolved vector: |up>|up> + |dn>|dn> with components in sectors.
struct BathState {
  int su = -1, sd = -1;
  Eigen::VectorXd up, dn;
};

// One step in bath coordinates. V is (kept bath of the previous step) x site,
// K is the span of the bath parts of the kept states (inside V).
struct ResolvedStep {
  BathSectors V;
  std::vector<std::vector<int>> offset;  // [previous K sector][site state] -> offset in V sector
  std::vector<std::vector<std::array<int, 3>>> blocks;  // per V sector: (previous K sector, site state, offset)
  BathSectors K;
  std::vector<Eigen::MatrixXd> basis;  // per K sector: V-sector coordinates, orthonormal columns
  std::vector<BathState> kept;         // kept states in K coordinates
  std::vector<BathState> discarded;    // discarded states in V coordinates
};

// Bath of nothing (before the first site) and the impurity states in it.
BathSectors vacuum_sectors();
std::vector<BathState> impurity_states();

std::shared_ptr<ResolvedStep> resolve_step(const BlockChain& chain, int n, const BathSectors& prev_K,
                                           const std::vector<BathState>& prev_kept, double rank_tol = 1e-10);

struct BoundOptions {
  std::vector<int> unit_sizes{1, 2, 3};
  WitnessOptions witness;
  UpperBoundOptions upper;
  double skip_trace = 1e-14;      // blocks lighter than this contribute nothing to the lower bound
  double mix_min_trace = 1e-6;    // blocks lighter than this keep the eigen-decomposition upper bound
  double weight_cutoff = 1e-18;   // terms lighter than this are left out
  double memory_budget = 1.0e9;   // bytes of term vectors per unit
};

struct BlockRecord {
  int n = 0;
  double trace = 0.0;
  double leak = 0.0;   // weight carried in from earlier blocks
  double lower = 0.0;  // single-block units
  double upper = 0.0;
  double trivial = 0.0;
  double y1 = 0.0, y2 = 0.0;
  bool boundary = false;
  int pairs = 0, dropped = 0;
  double leakage = 0.0;
};

struct ChainBounds {
  double lower = 0.0;
  double upper = 0.0;
  int unit_size = 1;
  std::map<int, double> lower_by_unit_size;
  std::vector<int> skipped_unit_sizes;
  double leakage = 0.0;  // largest per-unit off-diagonal norm
  int dropped = 0;
  int boundary_blocks = 0;
  std::vector<BlockRecord> blocks;
};

// Terms of the unit holding blocks n0..n1, in the workspace
// (kept bath of n0-1) x sites n0..n1. Also returns the leak weight.
struct UnitBuild {
  UnitTerms terms;
  double own = 0.0, leak = 0.0;
  bool fits = true;
};

// Every unit of the given size, built in order (meant for small chains).
std::vector<UnitBuild> chain_units(const BlockChain& chain, int unit_size, const BoundOptions& opt = {});

ChainBounds chain_bounds(const BlockChain& chain, const BoundOptions& opt = {});

}  // namespace kondo_eof
