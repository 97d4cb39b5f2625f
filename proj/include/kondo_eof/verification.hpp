#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "kondo_eof/block_chain.hpp"

namespace kondo_eof {

struct Check {
  std::string name;
  bool passed = false;
  double value = 0.0;      // worst deviation found
  double tolerance = 0.0;
  std::string detail;
};

struct VerifyOptions {
  int two_qubit_states = 1000;
  int roof_states = 3;
  int roof_samples = 20000;
  std::uint64_t seed = 2024;
};

// Random density of the given rank, Gaussian (Ginibre) columns.
Eigen::MatrixXcd random_density(int dim, int rank, std::mt19937_64& rng);

// Density of a block chain on impurity x sites 0..size-1, indexed by Fock
// label (bit 0 impurity, set = down; mode k of site n at bit 1 + 2Mn + k).
Eigen::MatrixXd fock_density(const BlockChain& c);

// Individual cross-checks against exact references.
Check check_two_qubit(int states, std::uint64_t seed);
Check check_anchors(std::uint64_t seed);
Check check_nrg_spectra();
Check check_toy_partial_trace();
Check check_yosida();
Check check_convex_roof(int states, int samples, std::uint64_t seed);

std::vector<Check> verification_suite(const VerifyOptions& opt = {});

}  // namespace kondo_eof
