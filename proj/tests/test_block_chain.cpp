#include <doctest.h>

#include <kondo_eof/block_chain.hpp>
#include <kondo_eof/ed_oracle.hpp>

using namespace kondo_eof;

namespace {

NrgRun small_run(int N, int keep, int channels = 1) {
  ModelSpec s;
  s.channels = channels;
  return iterative_diagonalization(build_wilson_chain(s, 4.0, 0.0, N), s, keep);
}

// Full density of a run, expanded state by state into impurity x all sites
// (index imp * 4^(N+1) + bath, bath = ((s0 * 4 + s1) * 4 + ...)).
Eigen::MatrixXd expanded_density(const NrgRun& run, const BlockThermalState& th) {
  const int N = static_cast<int>(run.shells.size()) - 1;
  const int d = run.site.dim;
  // kept states as vectors over (imp, bath prefix), imp-major
  std::vector<Eigen::VectorXd> prev = {Eigen::VectorXd::Unit(2, 0), Eigen::VectorXd::Unit(2, 1)};
  int bath = 1;
  const int full_bath = static_cast<int>(std::pow(d, N + 1));
  Eigen::MatrixXd rho = Eigen::MatrixXd::Zero(2 * full_bath, 2 * full_bath);
  for (int n = 0; n <= N; ++n) {
    const auto& st = *run.shells[n].states;
    auto expand = [&](const StateRef& r) {
      const auto& b = st.sectors[r.sector];
      Eigen::VectorXd v = Eigen::VectorXd::Zero(2 * bath * d);
      for (size_t k = 0; k < b.prev.size(); ++k) {
        const Eigen::VectorXd& p = prev[b.prev[k]];
        for (int eta = 0; eta < 2; ++eta)
          for (int x = 0; x < bath; ++x) v(eta * bath * d + x * d + b.site[k]) += b.vectors(k, r.col) * p(eta * bath + x);
      }
      return v;
    };
    const int rest = full_bath / (bath * d);
    for (size_t i = 0; i < st.discarded.size(); ++i) {
      const double w = th.weights[n][i];
      if (w <= 0.0) continue;
      const Eigen::VectorXd v = expand(st.discarded[i]);
      for (int t = 0; t < rest; ++t) {
        Eigen::VectorXd g = Eigen::VectorXd::Zero(2 * full_bath);
        for (int eta = 0; eta < 2; ++eta)
          for (int x = 0; x < bath * d; ++x) g(eta * full_bath + x * rest + t) = v(eta * bath * d + x);
        rho += (w / rest) * g * g.transpose();
      }
    }
    std::vector<Eigen::VectorXd> next;
    for (const auto& r : st.kept) next.push_back(expand(r));
    prev = std::move(next);
    bath *= d;
  }
  return rho;
}

Eigen::MatrixXcd unit_density(const UnitTerms& u) {
  std::vector<int> off(u.sector_dims.size(), 0);
  int total = 0;
  for (size_t s = 0; s < u.sector_dims.size(); ++s) off[s] = total, total += u.sector_dims[s];
  Eigen::MatrixXcd rho = Eigen::MatrixXcd::Zero(2 * total, 2 * total);
  for (const auto& t : u.terms) {
    Eigen::VectorXcd psi = Eigen::VectorXcd::Zero(2 * total);
    if (t.sec_up >= 0) psi.segment(off[t.sec_up], t.up.size()) = t.up;
    if (t.sec_dn >= 0) psi.segment(total + off[t.sec_dn], t.dn.size()) = t.dn;
    rho += t.weight * psi * psi.adjoint();
  }
  return rho;
}

Eigen::VectorXd spectrum(const Eigen::MatrixXcd& m) {
  return Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd>(m, Eigen::EigenvaluesOnly).eigenvalues();
}

}  // namespace

TEST_CASE("kept bath spans are orthonormal and hold the kept states") {
  auto run = small_run(8, 40);
  auto th = thermal_state(run, 1e-2);
  auto chain = chain_from_nrg(run, th);
  BathSectors K = vacuum_sectors();
  auto kept = impurity_states();
  for (int n = 0; n < chain.size(); ++n) {
    auto R = resolve_step(chain, n, K, kept);
    for (const auto& B : R->basis) {
      const Eigen::MatrixXd G = B.transpose() * B;
      CHECK((G - Eigen::MatrixXd::Identity(G.rows(), G.cols())).cwiseAbs().maxCoeff() < 1e-10);
    }
    // each kept state keeps its norm in K coordinates
    for (const auto& s : R->kept) {
      double nrm = 0.0;
      if (s.su >= 0) nrm += s.up.squaredNorm();
      if (s.sd >= 0) nrm += s.dn.squaredNorm();
      CHECK(nrm == doctest::Approx(1.0).epsilon(1e-10));
    }
    // discarded states are normalized in V coordinates
    for (const auto& s : R->discarded) {
      double nrm = 0.0;
      if (s.su >= 0) nrm += s.up.squaredNorm();
      if (s.sd >= 0) nrm += s.dn.squaredNorm();
      CHECK(nrm == doctest::Approx(1.0).epsilon(1e-10));
    }
    K = R->K;
    kept = R->kept;
  }
}

TEST_CASE("one unit over the whole chain is the full density") {
  auto run = small_run(3, 12);
  for (double T : {0.02, 0.3}) {
    auto th = thermal_state(run, T);
    auto chain = chain_from_nrg(run, th);
    BoundOptions opt;
    opt.weight_cutoff = 0.0;
    auto units = chain_units(chain, 4, opt);
    REQUIRE(units.size() == 1);
    const Eigen::MatrixXcd a = unit_density(units[0].terms);
    const Eigen::MatrixXd b = expanded_density(run, th);
    CHECK(a.trace().real() == doctest::Approx(1.0).epsilon(1e-10));
    const Eigen::VectorXd sa = spectrum(a), sb = spectrum(b.cast<cplx>());
    REQUIRE(sa.size() == sb.size());
    CHECK((sa - sb).cwiseAbs().maxCoeff() < 1e-10);
  }
}

TEST_CASE("unit sizes share the same weight bookkeeping") {
  auto run = small_run(10, 30);
  auto th = thermal_state(run, 3e-3);
  auto chain = chain_from_nrg(run, th);
  for (int u : {1, 2, 3}) {
    auto units = chain_units(chain, u);
    double own = 0.0;
    for (const auto& b : units) own += b.own;
    CHECK(own == doctest::Approx(1.0).epsilon(1e-10));
  }
}

TEST_CASE("untruncated chain against the exact density") {
  auto run = small_run(1, 1 << 12);
  auto th = thermal_state(run, 0.05);
  auto chain = chain_from_nrg(run, th);
  BoundOptions opt;
  auto b = chain_bounds(chain, opt);
  CHECK(b.lower <= b.upper + 1e-9);
  CHECK(b.lower > 0.0);
  auto ed = exact_spectrum(run.chain, run.spec, 1);
  Eigen::MatrixXd rho = thermal_density(ed, 0.05);
  // ED order has the impurity in bit 0; regroup to impurity-major
  const int dim = static_cast<int>(rho.rows());
  Eigen::MatrixXcd r(dim, dim);
  auto idx = [&](int i) { return (i & 1) * (dim / 2) + (i >> 1); };
  for (int i = 0; i < dim; ++i)
    for (int j = 0; j < dim; ++j) r(idx(i), idx(j)) = rho(i, j);
  // any explicit decomposition of the exact density bounds from above
  const double exact_upper = block_upper_bound(terms_from_density(r, dim / 2)).value;
  CHECK(b.lower <= exact_upper + 1e-9);
  CHECK(b.upper == doctest::Approx(exact_upper).epsilon(0.05));
  // impurity reduced density agrees with exact diagonalization
  double up = 0.0;
  for (int i = 0; i < dim / 2; ++i) up += r(i, i).real();
  auto units = chain_units(chain, 1);
  double up_nrg = 0.0;
  for (const auto& u : units)
    for (const auto& t : u.terms.terms)
      if (t.own && t.sec_up >= 0) up_nrg += t.weight * t.up.squaredNorm();
  CHECK(up_nrg == doctest::Approx(up).epsilon(1e-9));
}

TEST_CASE("ground state of the screened chain is one ebit") {
  auto run = small_run(30, 120);
  auto th = thermal_state(run, 0.0);
  auto b = chain_bounds(chain_from_nrg(run, th));
  CHECK(b.lower == doctest::Approx(1.0).epsilon(1e-6));
  CHECK(b.upper == doctest::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("thermal bounds are ordered") {
  auto run = small_run(20, 60);
  BoundOptions opt;
  opt.unit_sizes = {1, 2};
  for (double T : {1e-2, 1e-4}) {
    auto b = chain_bounds(chain_from_nrg(run, thermal_state(run, T)), opt);
    CHECK(b.lower <= b.upper + 1e-9);
    CHECK(b.upper <= 1.0 + 1e-9);
    CHECK(b.lower > 0.0);
    MESSAGE("T=" << T << " lower " << b.lower << " upper " << b.upper << " unit " << b.unit_size);
  }
}
