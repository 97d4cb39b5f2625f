#include "kondo_eof/verification.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "kondo_eof/ed_oracle.hpp"
#include "kondo_eof/spatial_trace.hpp"
#include "kondo_eof/subspace_witness.hpp"
#include "kondo_eof/two_qubit.hpp"
#include "kondo_eof/upper_bound.hpp"
#include "kondo_eof/yosida.hpp"

namespace kondo_eof {

Eigen::MatrixXcd random_density(int dim, int rank, std::mt19937_64& rng) {
  std::normal_distribution<double> g;
  Eigen::MatrixXcd A(dim, rank);
  for (int i = 0; i < dim; ++i)
    for (int j = 0; j < rank; ++j) A(i, j) = {g(rng), g(rng)};
  Eigen::MatrixXcd rho = A * A.adjoint();
  return rho / rho.trace().real();
}

Eigen::MatrixXd fock_density(const BlockChain& c) {
  const int N = c.size() - 1;
  const int d = static_cast<int>(c.site_qn.size());
  const int modes = 2 * c.channels;
  // kept states as vectors over impurity and sites 0..n-1
  std::vector<Eigen::VectorXd> prev = {Eigen::VectorXd::Unit(2, 0), Eigen::VectorXd::Unit(2, 1)};
  const int dim = 2 << (modes * (N + 1));
  Eigen::MatrixXd rho = Eigen::MatrixXd::Zero(dim, dim);
  int width = 2;
  for (int n = 0; n <= N; ++n) {
    const auto& st = *c.steps[n];
    auto expand = [&](const StateRef& r) {
      const auto& b = st.sectors[r.sector];
      Eigen::VectorXd v = Eigen::VectorXd::Zero(width * d);
      for (size_t k = 0; k < b.prev.size(); ++k)
        for (int x = 0; x < width; ++x) v(x + width * b.site[k]) += b.vectors(k, r.col) * prev[b.prev[k]](x);
      return v;
    };
    const int rest = dim / (width * d);
    for (size_t i = 0; i < st.discarded.size(); ++i) {
      const double w = c.weights[n][i];
      if (w <= 0.0) continue;
      const Eigen::VectorXd v = expand(st.discarded[i]);
      for (int t = 0; t < rest; ++t) {
        double pt = 1.0;
        for (int m = n + 1, u = t; m <= N; ++m, u /= d) pt *= c.tail[m](u % d);
        if (pt == 0.0) continue;
        const int hi = t * width * d;
        rho.block(hi, hi, width * d, width * d) += w * pt * v * v.transpose();
      }
    }
    std::vector<Eigen::VectorXd> next;
    for (const auto& r : st.kept) next.push_back(expand(r));
    prev = std::move(next);
    width *= d;
  }
  return rho;
}

namespace {

Check finish(Check c, double worst, double tol, const std::string& detail = "") {
  c.value = worst;
  c.tolerance = tol;
  c.passed = worst <= tol;
  c.detail = detail;
  return c;
}

Eigen::MatrixXcd random_isometry(int d, int k, std::mt19937_64& rng) {
  std::normal_distribution<double> g;
  Eigen::MatrixXcd A(d, k);
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < k; ++j) A(i, j) = {g(rng), g(rng)};
  Eigen::HouseholderQR<Eigen::MatrixXcd> qr(A);
  return qr.householderQ() * Eigen::MatrixXcd::Identity(d, k);
}

Eigen::VectorXcd stack(const Eigen::VectorXcd& up, const Eigen::VectorXcd& dn) {
  Eigen::VectorXcd psi(up.size() + dn.size());
  psi << up, dn;
  return psi;
}

}  // namespace

Check check_two_qubit(int states, std::uint64_t seed) {
  Check c;
  c.name = "two-qubit witness, decomposition and closed form agree";
  std::mt19937_64 rng(seed);
  double worst = 0.0;
  for (int k = 0; k < states; ++k) {
    const Eigen::MatrixXcd rho = random_density(4, 1 + k % 4, rng);
    const UnitTerms u = terms_from_density(rho, 2);
    const double w = eof(Mat4c(rho));
    const double lo = best_unit_lower_bound(u).value;
    const double up = block_upper_bound(u).value;
    worst = std::max({worst, std::abs(lo - w), std::abs(up - w), std::abs(up - lo)});
  }
  return finish(c, worst, 1e-6, std::to_string(states) + " states, ranks 1-4");
}

Check check_anchors(std::uint64_t seed) {
  Check c;
  c.name = "singlet and two-channel doublet give one ebit";
  std::mt19937_64 rng(seed);
  double worst = 0.0;
  // singlet with a random bath pair
  auto g = random_isometry(5, 2, rng);
  const Eigen::VectorXcd s = stack(g.col(1), -g.col(0)) / std::sqrt(2.0);
  // two-channel ground doublet on four orthonormal bath vectors
  auto h = random_isometry(6, 4, rng);
  const Eigen::VectorXcd plus = stack(h.col(0), h.col(1)) / std::sqrt(2.0);
  const Eigen::VectorXcd minus = stack(h.col(2), h.col(3)) / std::sqrt(2.0);
  const std::vector<std::pair<Eigen::MatrixXcd, int>> cases = {
      {s * s.adjoint(), 5}, {0.5 * (plus * plus.adjoint() + minus * minus.adjoint()), 6}};
  for (const auto& [rho, d] : cases) {
    const UnitTerms u = terms_from_density(rho, d);
    worst = std::max(worst, std::abs(best_unit_lower_bound(u).value - 1.0));
    worst = std::max(worst, std::abs(block_upper_bound(u).value - 1.0));
  }
  return finish(c, worst, 1e-8);
}

Check check_nrg_spectra() {
  Check c;
  c.name = "untruncated NRG shells match exact diagonalization";
  double worst = 0.0;
  std::ostringstream os;
  for (int M : {1, 2}) {
    ModelSpec s;
    s.channels = M;
    const int last = M == 1 ? 4 : 2;
    for (double z : {0.0, 0.5}) {
      const WilsonChain chain = build_wilson_chain(s, 4.0, z, last);
      const NrgRun run = iterative_diagonalization(chain, s, 1 << 20);
      for (int n = 0; n <= last; ++n) {
        const EdSpectrum ed = exact_spectrum(chain, s, n);
        const auto a = run.shells[n].spectrum();
        const auto b = ed.relative();
        if (a.size() != b.size()) return finish(c, INFINITY, 1e-8, "level count differs");
        for (size_t i = 0; i < a.size(); ++i) worst = std::max(worst, std::abs(a[i] - b[i]) / (1.0 + std::abs(b[i])));
        worst = std::max(worst, std::abs(run.shells[n].ground_energy - ed.ground) / (1.0 + std::abs(ed.ground)));
      }
    }
    os << (M == 1 ? "1CK sites 0-4" : ", 2CK sites 0-2");
  }
  return finish(c, worst, 1e-8, os.str() + ", z = 0 and 0.5");
}

Check check_toy_partial_trace() {
  Check c;
  c.name = "toy partial traces match the Fock-space trace";
  ModelSpec s;
  s.J = 1.0;
  const NrgRun run = iterative_diagonalization(build_wilson_chain(s, 4.0, 0.0, 2), s, 4096);
  const double T = 0.05;
  const BlockThermalState th = thermal_state(run, T);
  const EdSpectrum ed = exact_spectrum(run.chain, run.spec, 2);
  const Eigen::MatrixXd exact = thermal_density(ed, T);
  double worst = (fock_density(chain_from_nrg(run, th)) - exact).cwiseAbs().maxCoeff();
  TraceOptions opt;
  opt.drop_weight = 0.0;
  for (const auto& p : {std::vector<double>{1.0, 1.0, 1.0}, std::vector<double>{0.9, 0.4, 0.1},
                        std::vector<double>{0.3, 0.7, 0.0}, std::vector<double>{0.5, 0.5, 0.5}}) {
    const ReducedState red = partial_trace_out(run, th, p, opt);
    const Eigen::MatrixXd small = fock_density(red.chain);
    // sites past the last inside one are empty, so labels embed unchanged
    Eigen::MatrixXd a = Eigen::MatrixXd::Zero(exact.rows(), exact.cols());
    a.topLeftCorner(small.rows(), small.cols()) = small;
    worst = std::max(worst, (a - brute_force_partial_trace(exact, ed.space, p)).cwiseAbs().maxCoeff());
  }
  return finish(c, worst, 1e-10, "impurity + 3 sites, J = 1, T = 0.05, four splittings");
}

Check check_yosida() {
  Check c;
  c.name = "Yosida mixtures and outside probability";
  double worst = 0.0;
  for (int i = 0; i <= 10; ++i) worst = std::max(worst, std::abs(yosida_eof(0.1 * i) - (1.0 - 0.1 * i)));
  const YosidaState s = yosida_state(ModelSpec{});
  double tail = 0.0;
  for (double r : {20.0, 50.0, 200.0}) {
    const OutsideProbability o = outside_probability(r * s.xi, s);
    tail = std::max(tail, std::abs(o.p / o.asymptotic - 1.0));
  }
  Check out = finish(c, worst, 1e-8);
  out.passed = out.passed && tail <= 0.1;
  out.detail = "largest relative deviation from xi/(pi L) for L >= 20 xi: " + std::to_string(tail);
  return out;
}

Check check_convex_roof(int states, int samples, std::uint64_t seed) {
  Check c;
  c.name = "random decompositions bound the closed form from above";
  std::mt19937_64 rng(seed);
  RoofOptions opt;
  opt.samples = samples;
  opt.seed = seed;
  double worst = 0.0;
  bool below = false;
  for (int t = 0; t < states; ++t) {
    Eigen::MatrixXcd rho = random_density(4, 4, rng);
    Eigen::Vector4cd bell(1, 0, 0, 1);
    rho = 0.5 * rho + 0.25 * bell * bell.adjoint();
    const double exact = eof(Mat4c(rho));
    const double est = stochastic_convex_roof(rho, 2, 2, opt).value;
    below = below || est < exact - 1e-9;
    worst = std::max(worst, std::abs(est - exact));
  }
  Check out = finish(c, worst, 1e-3, "seed " + std::to_string(seed));
  out.passed = out.passed && !below;
  return out;
}

std::vector<Check> verification_suite(const VerifyOptions& opt) {
  return {check_two_qubit(opt.two_qubit_states, opt.seed),
          check_anchors(opt.seed),
          check_nrg_spectra(),
          check_toy_partial_trace(),
          check_yosida(),
          check_convex_roof(opt.roof_states, opt.roof_samples, opt.seed)};
}

}  // namespace kondo_eof
