#pragma once

#include <Eigen/Dense>
#include <compare>
#include <map>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "kondo_eof/wilson_chain.hpp"

namespace kondo_eof {

// Charge is counted relative to half filling of the bath sites; sz2 = 2 S_z.
struct QN {
  int charge = 0;
  int sz2 = 0;
  auto operator<=>(const QN&) const = default;
  QN operator+(const QN& o) const { return {charge + o.charge, sz2 + o.sz2}; }
  QN operator-(const QN& o) const { return {charge - o.charge, sz2 - o.sz2}; }
};

struct InvariantError : std::logic_error {
  using std::logic_error::logic_error;
};

struct NotConvergedError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct TemperatureRangeError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Occupation basis of one Wilson site with M channels; modes k = 2*alpha + sigma
// (sigma = 0 for up), Jordan-Wigner ordered within the site.
struct SiteBasis {
  int channels = 1;
  int dim = 4;
  std::vector<QN> qn;
  std::vector<int> occupancy;
  std::vector<Eigen::MatrixXd> annihilate;  // one dim x dim matrix per mode
  int modes() const { return 2 * channels; }
};

SiteBasis make_site(int channels);

struct StateRef {
  int sector = 0;
  int col = 0;
};

// Eigenstates of one symmetry sector, expanded over product states
// (prev[r], site[r]).
struct SectorBlock {
  QN qn;
  std::vector<int> prev;
  std::vector<int> site;
  Eigen::VectorXd energies;  // relative to the shell ground state
  Eigen::MatrixXd vectors;   // columns are eigenstates
};

struct StepStates {
  int n = 0;
  std::vector<QN> prev_qn;  // incoming basis labels (impurity for n = 0)
  std::vector<SectorBlock> sectors;
  std::vector<StateRef> kept;       // order defines the basis of step n+1
  std::vector<StateRef> discarded;  // ascending energy

  const SectorBlock& sector_of(const StateRef& r) const { return sectors[r.sector]; }
  double energy(const StateRef& r) const { return sectors[r.sector].energies(r.col); }
  QN qn(const StateRef& r) const { return sectors[r.sector].qn; }
  int dim() const;
};

struct EnergyShell {
  std::shared_ptr<const StepStates> states;
  double ground_energy = 0.0;  // absolute ground energy of H_n
  double scale = 1.0;          // characteristic energy of the shell
  std::vector<Eigen::MatrixXd> creation;  // <K'|f^dag_{n,k}|K> in the kept basis

  int n() const { return states->n; }
  std::vector<double> spectrum() const;  // all relative energies, ascending
};

struct NrgRun {
  ModelSpec spec;
  WilsonChain chain;
  int keep_max = 300;
  SiteBasis site;
  std::vector<EnergyShell> shells;  // shells 0..N
};

NrgRun iterative_diagonalization(const WilsonChain& chain, const ModelSpec& spec, int keep_max);

// Chain length so that Lambda^{-N/2} <= 1e-2 * energy (D = 1), at least 8.
int chain_length_for(double Lambda, double lowest_energy);

// First iteration n* from which the rescaled low-lying spectrum is
// stationary (< tol relative change of the lowest `levels` levels between
// n and n+2, for every later pair). Throws NotConvergedError.
int stationary_iteration(const std::vector<std::vector<double>>& rescaled, int levels = 20,
                         double tol = 0.01);
std::vector<std::vector<double>> rescaled_spectra(const NrgRun& run);
double kondo_temperature_2ck(const NrgRun& run, int* n_star = nullptr);

// Thermal weights of the discarded states. weights[n][i] belongs to
// shells[n].states->discarded[i] and already contains the 4^{M(N-n)}
// environment multiplicity, so the block traces add up to one. T = 0 puts
// all weight uniformly on the ground multiplet of the last shell.
struct BlockThermalState {
  double T = 0.0;
  std::vector<std::vector<double>> weights;
  std::vector<double> block_trace;
  double total() const;
};

BlockThermalState thermal_state(const NrgRun& run, double T);

// Reduced density of everything that happens after shell n, on the kept
// space of shell n: future[n] is keep x keep (zero for the last shell).
std::vector<Eigen::MatrixXd> future_density(const NrgRun& run, const BlockThermalState& rho);

// Checkpoint I/O: binary payload behind a one-line JSON header.
void save_checkpoint(const NrgRun& run, const std::string& path);
NrgRun load_checkpoint(const std::string& path);
// The JSON header line alone, for compatibility checks.
std::string checkpoint_header(const std::string& path);

}  // namespace kondo_eof
