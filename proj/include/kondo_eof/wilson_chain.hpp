#pragma once

#include <Eigen/Dense>
#include <vector>

namespace kondo_eof {

struct ModelSpec {
  int channels = 1;   // M
  double J = 0.3;     // in units of D
  double D = 1.0;
  double nu() const { return 0.5 / D; }
};

void validate(const ModelSpec& spec);

// D sqrt(nu J) exp(-1 / (nu J))
double kondo_temperature_1ck(const ModelSpec& spec);

// One star orbital: a flat-band energy interval [lo, hi] on one side of the
// Fermi level (sign = +1 particles, -1 holes).
struct StarOrbital {
  double lo = 0.0, hi = 0.0;
  int sign = 1;
  double energy() const { return sign * 0.5 * (lo + hi); }
  double weight() const { return 0.5 * (hi - lo); }  // |gamma|^2
};

struct WilsonChain {
  double Lambda = 4.0;
  double z = 0.0;
  int N = 0;                       // last site index; sites 0..N
  std::vector<double> hoppings;    // t_0 .. t_{N-1}
  std::vector<double> onsite;      // zero for a particle-hole symmetric band
  std::vector<StarOrbital> star;
  Eigen::MatrixXd lanczos;         // (N+1) x star.size(): f_n = sum_m L(n,m) a_m

  double energy_scale(int n) const;  // Lambda^{-n/2}, the shell scale
};

WilsonChain build_wilson_chain(const ModelSpec& spec, double Lambda, double z, int N);

// Closed form for z = 0 (infinite star).
double wilson_hopping_closed_form(double Lambda, int n);

}  // namespace kondo_eof
