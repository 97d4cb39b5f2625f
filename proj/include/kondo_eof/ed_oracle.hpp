#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "kondo_eof/nrg.hpp"
#include "kondo_eof/wilson_chain.hpp"

namespace kondo_eof {

struct SizeError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Explicit Fock space of the impurity spin plus Wilson sites 0..sites-1.
// Bit 0 of a basis label is the impurity (set = down); fermion mode k of
// site n sits at bit 1 + 2*M*n + k and fermion signs follow that order.
struct FockSpace {
  int channels = 1;
  int sites = 1;
  int modes() const { return 2 * channels * sites; }
  std::uint64_t dim() const { return std::uint64_t(2) << modes(); }
  int bit(int site, int k) const { return 1 + 2 * channels * site + k; }
  QN qn(std::uint64_t state) const;
};

struct EdSector {
  QN qn;
  std::vector<std::uint64_t> states;
  Eigen::VectorXd energies;
  Eigen::MatrixXd vectors;
};

struct EdSpectrum {
  FockSpace space;
  std::vector<EdSector> sectors;
  double ground = 0.0;
  std::vector<double> relative() const;  // all levels minus the ground, ascending
};

// Kondo chain up to and including site `last_site`.
EdSpectrum exact_spectrum(const WilsonChain& chain, const ModelSpec& spec, int last_site,
                          std::uint64_t cap = 200000);

// Dense exp(-H/T)/Z over the full Fock space, indexed by basis label.
// T = 0 gives the uniform mixture of the ground multiplet.
Eigen::MatrixXd thermal_density(const EdSpectrum& ed, double T);

// Splits each fermion mode of site n as sqrt(p_n) in + sqrt(1 - p_n) out and
// traces out every out mode. The result lives on the in copy of the same
// Fock space (same labels).
Eigen::MatrixXd brute_force_partial_trace(const Eigen::MatrixXd& rho, const FockSpace& space,
                                          const std::vector<double>& p);

struct RoofOptions {
  int samples = 100000;
  int components = 0;  // 0: rank squared
  int descent_steps = 20000;
  std::uint64_t seed = 2024;
};

struct RoofResult {
  double value = 0.0;
  int samples = 0;
  std::uint64_t seed = 0;
};

// Entanglement entropy (bits) of a pure state on C^dA x C^dB, index a*dB + b.
double entanglement_entropy(const Eigen::VectorXcd& psi, int dA, int dB);

// Upper bound on the entanglement of formation from random decompositions
// generated by Haar isometries, followed by a local descent.
RoofResult stochastic_convex_roof(const Eigen::MatrixXcd& rho, int dA, int dB,
                                  const RoofOptions& opt = {});

}  // namespace kondo_eof
