#include "kondo_eof/wilson_chain.hpp"

#include <boost/multiprecision/cpp_bin_float.hpp>
#include <cmath>
#include <stdexcept>

namespace kondo_eof {

using mp = boost::multiprecision::cpp_bin_float_100;

void validate(const ModelSpec& spec) {
  if (spec.channels != 1 && spec.channels != 2)
    throw std::invalid_argument("channel count must be 1 or 2");
  if (!(spec.J > 0.0)) throw std::invalid_argument("coupling must be antiferromagnetic (J > 0)");
  if (!(spec.D > 0.0)) throw std::invalid_argument("bandwidth must be positive");
}

double kondo_temperature_1ck(const ModelSpec& spec) {
  const double g = spec.nu() * spec.J;
  if (!(g > 0.0)) throw std::invalid_argument("nu J must be positive");
  return spec.D * std::sqrt(g) * std::exp(-1.0 / g);
}

double WilsonChain::energy_scale(int n) const { return std::pow(Lambda, -0.5 * n); }

double wilson_hopping_closed_form(double Lambda, int n) {
  const double li = 1.0 / Lambda;
  return 0.5 * (1.0 + li) * (1.0 - std::pow(li, n + 1)) /
         std::sqrt((1.0 - std::pow(li, 2 * n + 1)) * (1.0 - std::pow(li, 2 * n + 3))) *
         std::pow(Lambda, -0.5 * n);
}

WilsonChain build_wilson_chain(const ModelSpec& spec, double Lambda, double z, int N) {
  validate(spec);
  if (!(Lambda > 1.0)) throw std::invalid_argument("Lambda must exceed 1");
  if (N < 1) throw std::invalid_argument("chain needs at least one hopping");
  if (z < 0.0 || z >= 1.0) throw std::invalid_argument("z must lie in [0, 1)");

  WilsonChain ch;
  ch.Lambda = Lambda;
  ch.z = z;
  ch.N = N;

  // intervals on the positive side, hi > lo; the last one reaches down to 0
  const int m_max = N + 30;
  std::vector<std::pair<mp, mp>> ivals;
  const mp lam(Lambda), zz(z);
  if (z > 0.0) ivals.emplace_back(boost::multiprecision::pow(lam, -zz), mp(1));
  for (int m = 1; m <= m_max; ++m)
    ivals.emplace_back(boost::multiprecision::pow(lam, -(mp(m) + zz)),
                       boost::multiprecision::pow(lam, -(mp(m - 1) + zz)));
  ivals.emplace_back(mp(0), ivals.back().first);

  const int K = static_cast<int>(ivals.size());
  const int dim = 2 * K;
  std::vector<mp> eps(dim), v0(dim);
  for (int k = 0; k < K; ++k) {
    const mp e = (ivals[k].first + ivals[k].second) / 2;
    const mp g = boost::multiprecision::sqrt((ivals[k].second - ivals[k].first) / 2);
    eps[2 * k] = e;
    eps[2 * k + 1] = -e;
    v0[2 * k] = g;
    v0[2 * k + 1] = g;
    ch.star.push_back({static_cast<double>(ivals[k].first), static_cast<double>(ivals[k].second), +1});
    ch.star.push_back({static_cast<double>(ivals[k].first), static_cast<double>(ivals[k].second), -1});
  }
  mp nrm = 0;
  for (auto& x : v0) nrm += x * x;
  nrm = boost::multiprecision::sqrt(nrm);
  for (auto& x : v0) x /= nrm;

  std::vector<std::vector<mp>> basis{v0};
  ch.lanczos.resize(N + 1, dim);
  for (int n = 0; n <= N; ++n) {
    const auto& v = basis[n];
    for (int i = 0; i < dim; ++i) ch.lanczos(n, i) = static_cast<double>(v[i]);
    std::vector<mp> w(dim);
    for (int i = 0; i < dim; ++i) w[i] = eps[i] * v[i];
    mp a = 0;
    for (int i = 0; i < dim; ++i) a += v[i] * w[i];
    ch.onsite.push_back(static_cast<double>(a));
    if (n == N) break;
    // full reorthogonalization, twice
    for (int pass = 0; pass < 2; ++pass)
      for (const auto& u : basis) {
        mp ov = 0;
        for (int i = 0; i < dim; ++i) ov += u[i] * w[i];
        for (int i = 0; i < dim; ++i) w[i] -= ov * u[i];
      }
    mp b = 0;
    for (auto& x : w) b += x * x;
    b = boost::multiprecision::sqrt(b);
    ch.hoppings.push_back(static_cast<double>(b));
    for (auto& x : w) x /= b;
    basis.push_back(std::move(w));
  }
  return ch;
}

}  // namespace kondo_eof
