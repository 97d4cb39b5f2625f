#include "kondo_eof/scaling.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace kondo_eof {

void ScalingSeries::validate() const {
  if (x.size() != lower.size() || x.size() != upper.size()) throw std::invalid_argument("series columns differ in length");
  if (x.size() > 1) {
    const bool up = x[1] > x[0];
    for (size_t i = 1; i < x.size(); ++i)
      if (up ? !(x[i] > x[i - 1]) : !(x[i] < x[i - 1])) throw std::invalid_argument("abscissa is not strictly monotone");
  }
  for (size_t i = 0; i < x.size(); ++i)
    if (lower[i] > upper[i] + 1e-9) throw std::invalid_argument("lower bound above upper bound");
}

const char* bound_name(Bound b) { return b == Bound::lower ? "lower" : "upper"; }

PowerLawFit fit_power_law(const std::vector<double>& x, const std::vector<double>& y, double lo, double hi,
                          const std::string& tag) {
  if (x.size() != y.size()) throw std::invalid_argument("x and y differ in length");
  std::vector<double> u, v;
  PowerLawFit f;
  f.bound = tag;
  f.window_lo = std::numeric_limits<double>::infinity();
  f.window_hi = -f.window_lo;
  const double slack = 1e-9;
  for (size_t i = 0; i < x.size(); ++i) {
    if (x[i] < lo * (1 - slack) || x[i] > hi * (1 + slack)) continue;
    const double d = 1.0 - y[i];
    if (!(d > 0.0) || !(x[i] > 0.0)) throw InsufficientDataError("1 - E_F must be positive inside the window");
    u.push_back(std::log(x[i]));
    v.push_back(std::log(d));
    f.window_lo = std::min(f.window_lo, x[i]);
    f.window_hi = std::max(f.window_hi, x[i]);
  }
  f.points = static_cast<int>(u.size());
  if (f.points < 5) throw InsufficientDataError("power-law fit needs at least 5 points, window has " + std::to_string(f.points));
  const double n = f.points;
  const double mu = std::accumulate(u.begin(), u.end(), 0.0) / n, mv = std::accumulate(v.begin(), v.end(), 0.0) / n;
  double suu = 0.0, suv = 0.0;
  for (int i = 0; i < f.points; ++i) {
    suu += (u[i] - mu) * (u[i] - mu);
    suv += (u[i] - mu) * (v[i] - mv);
  }
  if (suu <= 0.0) throw InsufficientDataError("window holds a single abscissa");
  f.exponent = suv / suu;
  const double c = mv - f.exponent * mu;
  f.prefactor = std::exp(c);
  double r2 = 0.0;
  for (int i = 0; i < f.points; ++i) r2 += std::pow(v[i] - c - f.exponent * u[i], 2);
  f.residual = std::sqrt(r2 / n);
  return f;
}

PowerLawFit fit_power_law(const ScalingSeries& s, Bound b, double lo, double hi) {
  s.validate();
  return fit_power_law(s.x, b == Bound::lower ? s.lower : s.upper, lo, hi, bound_name(b));
}

double fit_stability(const ScalingSeries& s, Bound b, double lo, double hi) {
  const double full = fit_power_law(s, b, lo, hi).exponent;
  const double mid = std::sqrt(lo * hi);
  double shift = std::numeric_limits<double>::quiet_NaN();
  for (auto [a, c] : {std::pair{lo, mid}, std::pair{mid, hi}}) {
    try {
      const double d = std::abs(fit_power_law(s, b, a, c).exponent - full);
      shift = std::isnan(shift) ? d : std::max(shift, d);
    } catch (const InsufficientDataError&) {
    }
  }
  return shift;
}

ScalingSeries z_average(const std::vector<ScalingSeries>& runs) {
  if (runs.empty()) throw InsufficientDataError("nothing to average");
  ScalingSeries out = runs.front();
  out.z.clear();
  std::fill(out.lower.begin(), out.lower.end(), 0.0);
  std::fill(out.upper.begin(), out.upper.end(), 0.0);
  for (const auto& r : runs) {
    if (r.x != out.x) throw std::invalid_argument("z runs use different abscissae");
    for (size_t i = 0; i < r.x.size(); ++i) {
      out.lower[i] += r.lower[i] / runs.size();
      out.upper[i] += r.upper[i] / runs.size();
    }
    out.z.insert(out.z.end(), r.z.begin(), r.z.end());
  }
  return out;
}

AdditivityReport check_additivity(const std::vector<GridPoint>& grid, const PowerLawFit& thermal,
                                  const PowerLawFit& spatial, double t_lo, double t_hi, double ell_lo,
                                  double ell_hi) {
  AdditivityReport r;
  double sum = 0.0;
  for (const auto& g : grid) {
    if (g.t < t_lo || g.t > t_hi || g.ell < ell_lo || g.ell > ell_hi) continue;
    const double model =
        thermal.prefactor * std::pow(g.t, thermal.exponent) + spatial.prefactor * std::pow(1.0 / g.ell, spatial.exponent);
    const double obs = 1.0 - g.value;
    const double rel = std::abs(obs - model) / std::max(std::abs(obs), 1e-300);
    r.relative.push_back(rel);
    r.max_relative = std::max(r.max_relative, rel);
    sum += rel;
  }
  r.points = static_cast<int>(r.relative.size());
  if (r.points == 0) throw InsufficientDataError("no grid points in the additivity region");
  r.mean_relative = sum / r.points;
  return r;
}

CloudSize cloud_size(const std::vector<double>& L, const std::vector<double>& eof, double depletion) {
  if (L.size() != eof.size() || L.size() < 2) throw InsufficientDataError("cloud size needs at least two points");
  std::vector<size_t> idx(L.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(), [&](size_t a, size_t b) { return L[a] < L[b]; });
  const double level = eof[idx.back()] - depletion;
  CloudSize c;
  c.depletion = depletion;
  // walk down from L_max to the first crossing
  for (size_t k = idx.size() - 1; k > 0; --k) {
    const size_t hi = idx[k], lo = idx[k - 1];
    if (eof[lo] <= level && eof[hi] >= level) {
      const double f = eof[hi] == eof[lo] ? 0.0 : (level - eof[lo]) / (eof[hi] - eof[lo]);
      c.L = std::exp(std::log(L[lo]) + f * (std::log(L[hi]) - std::log(L[lo])));
      return c;
    }
  }
  throw OutOfRangeError("E_F never drops by " + std::to_string(depletion) + " over the L range");
}

}  // namespace kondo_eof
