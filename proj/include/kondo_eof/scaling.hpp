#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace kondo_eof {

struct InsufficientDataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct OutOfRangeError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// E_F bounds along one axis (T/T_K or L/xi), with how they were computed.
struct ScalingSeries {
  std::string abscissa;  // "T_over_TK", "xi_over_L", "L_over_xi"
  std::vector<double> x, lower, upper;
  std::vector<double> z;
  double Lambda = 4.0;
  int keep_max = 0;
  void validate() const;  // strictly monotone x, lower <= upper
};

enum class Bound { lower, upper };
const char* bound_name(Bound b);

struct PowerLawFit {
  double exponent = 0.0;
  double prefactor = 0.0;
  double window_lo = 0.0, window_hi = 0.0;  // data actually used
  double residual = 0.0;                    // rms of log residuals
  int points = 0;
  std::string bound;
};

// 1 - y = prefactor * x^exponent by least squares in log-log over lo <= x <= hi.
PowerLawFit fit_power_law(const std::vector<double>& x, const std::vector<double>& y, double lo, double hi,
                          const std::string& tag = "");
PowerLawFit fit_power_law(const ScalingSeries& s, Bound b, double lo, double hi);

// Largest exponent change when the window is cut to either log half
// (NaN when neither half holds enough points).
double fit_stability(const ScalingSeries& s, Bound b, double lo, double hi);

// Pointwise mean over discretization offsets (same abscissa required).
ScalingSeries z_average(const std::vector<ScalingSeries>& runs);

struct GridPoint {
  double t = 0.0;    // T / T_K
  double ell = 0.0;  // L / xi
  double value = 0.0;  // E_F (one bound)
};

struct AdditivityReport {
  double max_relative = 0.0, mean_relative = 0.0;
  int points = 0;
  std::vector<double> relative;  // per point in the region, input order
};

// Residual of 1 - E = thermal(t) + spatial(1/ell) over t_lo <= t <= t_hi,
// ell_lo <= ell <= ell_hi, using the marginal fits' prefactors and exponents.
AdditivityReport check_additivity(const std::vector<GridPoint>& grid, const PowerLawFit& thermal,
                                  const PowerLawFit& spatial, double t_lo, double t_hi, double ell_lo,
                                  double ell_hi);

struct CloudSize {
  double L = 0.0;
  double depletion = 0.1;
  std::string convention = "E_F(L) = E_F(L_max) - 0.1";
};

// L where E_F(L) first reaches E_F(L_max) - depletion, interpolated in log L.
CloudSize cloud_size(const std::vector<double>& L, const std::vector<double>& eof, double depletion = 0.1);

}  // namespace kondo_eof
