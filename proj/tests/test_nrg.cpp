#include <doctest.h>

#include <cstdio>
#include <kondo_eof/ed_oracle.hpp>
#include <kondo_eof/nrg.hpp>

using namespace kondo_eof;

namespace {

NrgRun full_run(int N, double z = 0.0, int channels = 1) {
  ModelSpec s;
  s.channels = channels;
  return iterative_diagonalization(build_wilson_chain(s, 4.0, z, N), s, 1 << 20);
}

}  // namespace

TEST_CASE("site basis") {
  auto s = make_site(1);
  CHECK(s.dim == 4);
  CHECK(s.annihilate.size() == 2);
  // anticommutation of the two modes
  Eigen::MatrixXd ac = s.annihilate[0] * s.annihilate[1].transpose() + s.annihilate[1].transpose() * s.annihilate[0];
  CHECK(ac.norm() < 1e-15);
  auto s2 = make_site(2);
  CHECK(s2.dim == 16);
  int neutral = 0;
  for (auto q : s2.qn) neutral += (q.charge == 0 && q.sz2 == 0);
  CHECK(neutral == 4);
}

TEST_CASE("first shell is a two-spin antiferromagnet") {
  auto run = full_run(3);
  const double J = run.spec.J;
  auto e = run.shells[0].spectrum();
  REQUIRE(e.size() == 8);
  CHECK(run.shells[0].ground_energy == doctest::Approx(-0.75 * J));
  CHECK(e[0] == doctest::Approx(0.0));
  for (int i = 1; i < 5; ++i) CHECK(e[i] == doctest::Approx(0.75 * J));
  for (int i = 5; i < 8; ++i) CHECK(e[i] == doctest::Approx(J));
}

TEST_CASE("untruncated shells match exact diagonalization") {
  for (double z : {0.0, 0.5}) {
    auto run = full_run(4, z);
    for (int n = 0; n <= 4; ++n) {
      auto ed = exact_spectrum(run.chain, run.spec, n);
      auto a = run.shells[n].spectrum();
      auto b = ed.relative();
      REQUIRE(a.size() == b.size());
      CHECK(run.shells[n].ground_energy == doctest::Approx(ed.ground).epsilon(1e-10));
      double worst = 0.0;
      for (size_t i = 0; i < a.size(); ++i) worst = std::max(worst, std::abs(a[i] - b[i]) / (1.0 + std::abs(b[i])));
      CHECK(worst < 1e-8);
    }
  }
}

TEST_CASE("two-channel shell against exact diagonalization") {
  auto run = full_run(2, 0.0, 2);
  for (int n = 0; n <= 2; ++n) {
    auto ed = exact_spectrum(run.chain, run.spec, n);
    auto a = run.shells[n].spectrum();
    auto b = ed.relative();
    REQUIRE(a.size() == b.size());
    double worst = 0.0;
    for (size_t i = 0; i < a.size(); ++i) worst = std::max(worst, std::abs(a[i] - b[i]));
    CHECK(worst < 1e-8);
  }
}

TEST_CASE("truncated shells: dimensions, labels, orthonormality") {
  ModelSpec s;
  auto run = iterative_diagonalization(build_wilson_chain(s, 4.0, 0.0, 20), s, 120);
  for (size_t n = 1; n < run.shells.size(); ++n) {
    const auto& prev = *run.shells[n - 1].states;
    const auto& st = *run.shells[n].states;
    CHECK(st.dim() == 4 * static_cast<int>(prev.kept.size()));
    CHECK(st.kept.size() + st.discarded.size() == static_cast<size_t>(st.dim()));
    for (const auto& b : st.sectors) {
      for (size_t r = 0; r < b.prev.size(); ++r) {
        const QN q = prev.qn(prev.kept[b.prev[r]]) + run.site.qn[b.site[r]];
        CHECK(q == b.qn);
      }
      const Eigen::MatrixXd g = b.vectors.transpose() * b.vectors;
      CHECK((g - Eigen::MatrixXd::Identity(g.rows(), g.cols())).cwiseAbs().maxCoeff() < 1e-10);
    }
  }
  CHECK(run.shells.back().states->kept.empty());
  // kept count never splits a multiplet
  for (size_t n = 0; n + 1 < run.shells.size(); ++n) {
    const auto& st = *run.shells[n].states;
    if (st.discarded.empty()) continue;
    double top = 0.0;
    for (auto r : st.kept) top = std::max(top, st.energy(r));
    CHECK(st.energy(st.discarded.front()) - top > 1e-8 * run.shells[n].scale);
  }
}

TEST_CASE("stationary iteration on synthetic spectra") {
  std::vector<std::vector<double>> seq;
  for (int n = 0; n < 30; ++n) {
    std::vector<double> lv;
    for (int i = 0; i < 25; ++i) {
      double x = (n % 2 ? 1.3 : 1.0) * (i + 1);
      if (n < 12) x *= 1.0 + 0.2 * (12 - n);
      lv.push_back(x);
    }
    seq.push_back(lv);
  }
  CHECK(stationary_iteration(seq) == 12);
  CHECK(std::pow(4.0, -0.5 * 12) == doctest::Approx(std::pow(4.0, -6)));

  for (int n = 0; n < 30; ++n)
    for (auto& x : seq[n]) x *= 1.0 + 0.05 * n;
  CHECK_THROWS_AS(stationary_iteration(seq), NotConvergedError);
}

TEST_CASE("one-channel flow becomes stationary") {
  ModelSpec s;
  auto run = iterative_diagonalization(build_wilson_chain(s, 4.0, 0.0, 40), s, 150);
  int n_star = -1;
  const double T = kondo_temperature_2ck(run, &n_star);
  CHECK(n_star > 0);
  CHECK(T == doctest::Approx(std::pow(4.0, -0.5 * n_star)));
}

TEST_CASE("thermal weights") {
  ModelSpec s;
  auto run = iterative_diagonalization(build_wilson_chain(s, 4.0, 0.0, 30), s, 120);
  for (double T : {1e-2, 1e-4, 1e-7}) {
    auto th = thermal_state(run, T);
    CHECK(th.total() == doctest::Approx(1.0).epsilon(1e-10));
    const int peak = static_cast<int>(std::max_element(th.block_trace.begin(), th.block_trace.end()) - th.block_trace.begin());
    const double nT = -2.0 * std::log(T) / std::log(4.0);
    CHECK(std::abs(peak - nT) < 4.0);
  }
  auto th0 = thermal_state(run, 0.0);
  CHECK(th0.total() == doctest::Approx(1.0));
  CHECK_THROWS_AS(thermal_state(run, -1.0), TemperatureRangeError);

  // very high temperature: weight per state ~ environment multiplicity
  auto toy = iterative_diagonalization(build_wilson_chain(s, 4.0, 0.0, 1), s, 4);
  auto hot = thermal_state(toy, 1e9);
  const auto& w0 = hot.weights[0];
  const auto& w1 = hot.weights[1];
  REQUIRE(!w0.empty());
  CHECK(w0[0] / w1[0] == doctest::Approx(4.0).epsilon(1e-6));
}

TEST_CASE("tiny chain thermal weights equal the exact Boltzmann mixture") {
  auto run = full_run(3);
  const double T = 0.05;
  auto th = thermal_state(run, T);
  auto ed = exact_spectrum(run.chain, run.spec, 3);
  auto lv = ed.relative();
  double z = 0.0;
  for (double e : lv) z += std::exp(-e / T);
  std::vector<double> exact, nrg = th.weights[3];
  for (double e : lv) exact.push_back(std::exp(-e / T) / z);
  std::sort(nrg.begin(), nrg.end());
  std::sort(exact.begin(), exact.end());
  REQUIRE(nrg.size() == exact.size());
  for (size_t i = 0; i < exact.size(); ++i) CHECK(nrg[i] == doctest::Approx(exact[i]).epsilon(1e-9));
}

TEST_CASE("future density carries the remaining weight") {
  ModelSpec s;
  auto run = iterative_diagonalization(build_wilson_chain(s, 4.0, 0.5, 24), s, 100);
  auto th = thermal_state(run, 1e-5);
  auto F = future_density(run, th);
  double later = 0.0;
  for (int n = static_cast<int>(run.shells.size()) - 1; n >= 0; --n) {
    CHECK(F[n].trace() == doctest::Approx(later).epsilon(1e-10));
    CHECK((F[n] - F[n].transpose()).norm() < 1e-12);
    later += th.block_trace[n];
  }
}

TEST_CASE("checkpoint round trip") {
  ModelSpec s;
  auto run = iterative_diagonalization(build_wilson_chain(s, 4.0, 0.0, 12), s, 64);
  const std::string path = "nrg_roundtrip.ckpt";
  save_checkpoint(run, path);
  auto back = load_checkpoint(path);
  CHECK(checkpoint_header(path).find("\"keep_max\":64") != std::string::npos);
  REQUIRE(back.shells.size() == run.shells.size());
  for (size_t n = 0; n < run.shells.size(); ++n) {
    CHECK(back.shells[n].spectrum() == run.shells[n].spectrum());
    CHECK(back.shells[n].ground_energy == run.shells[n].ground_energy);
  }
  auto a = thermal_state(run, 1e-3), b = thermal_state(back, 1e-3);
  CHECK(a.block_trace == b.block_trace);
  std::remove(path.c_str());
}
