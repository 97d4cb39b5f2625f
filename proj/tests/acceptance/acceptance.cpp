// End-to-end checks of the physics targets. Usage:
//   acceptance [criterion ...] [--data DIR]
// With no criterion every one runs. Each prints one PASS/FAIL line; the exit
// code is the number of failures. Expensive grids are cached in DIR by config
// hash, so criteria that share runs only pay once.
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <kondo_eof/experiment.hpp>
#include <kondo_eof/spatial_trace.hpp>
#include <kondo_eof/verification.hpp>
#include <map>
#include <sstream>

using namespace kondo_eof;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

fs::path data_dir = "acceptance_data";

struct Outcome {
  bool passed = false;
  std::string detail;
};

std::string num(double v, int prec = 4) {
  std::ostringstream os;
  os.precision(prec);
  os << v;
  return os.str();
}

RunConfig base(const std::string& name) {
  RunConfig c = preset("paper");
  c.output = (data_dir / name).string();
  c.checkpoint_dir = (data_dir / "nrg").string();
  return c;
}

// Result rows of a grid, from the cache when the configuration matches.
std::vector<SeriesRow> rows_of(const RunConfig& cfg) {
  const std::string manifest_path = cfg.output + ".json";
  if (fs::exists(manifest_path)) {
    std::ifstream is(manifest_path);
    const json m = json::parse(is, nullptr, false);
    if (!m.is_discarded() && m.value("config_hash", "") == cfg.hash()) return read_csv(cfg.output + ".csv");
  }
  const int workers = std::getenv("KONDO_EOF_WORKERS") ? std::atoi(std::getenv("KONDO_EOF_WORKERS")) : 1;
  return run_experiment(cfg, std::max(1, workers), [](const std::string& s) { std::cerr << "  " << s << "\n"; })
      .averaged;
}

const json* find_fit(const Analysis& a, const std::string& axis, const std::string& bound) {
  for (const auto& f : a.fits)
    if (f["axis"] == axis && f["bound"] == bound) return &f;
  return nullptr;
}

// exponents of both bounds along one axis, NaN when a fit is missing
std::pair<double, double> exponents(const Analysis& a, const std::string& axis) {
  auto get = [&](const char* b) {
    const json* f = find_fit(a, axis, b);
    return f ? (*f)["exponent"].get<double>() : std::nan("");
  };
  return {get("lower"), get("upper")};
}

bool in(double v, double lo, double hi) { return v >= lo && v <= hi; }

// ---------------------------------------------------------------------------

RunConfig thermal(const std::string& model, double Lambda) {
  RunConfig c = base("thermal_" + model + "_Lambda" + num(Lambda));
  c.model = model;
  c.Lambda = Lambda;
  c.T_grid = "log:-2:-0.5:7";
  c.L_grid = "inf";
  return c;
}

RunConfig spatial(double Lambda) {
  RunConfig c = base("spatial_1CK_Lambda" + num(Lambda));
  c.Lambda = Lambda;
  c.T_grid = "0";
  c.L_grid = "1,log:0.5:2:7";
  return c;
}

Outcome two_qubit() {
  const auto start = std::chrono::steady_clock::now();
  const Check c = check_two_qubit(1000, 2024);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return {c.passed && secs < 120.0,
          "1000 densities, worst pairwise difference " + num(c.value) + " (tol 1e-6), " + num(secs, 3) + " s (limit 120 s)"};
}

Outcome anchors() {
  const Check c = check_anchors(2024);
  return {c.passed, "singlet projector and two-channel doublet, worst |E - 1| = " + num(c.value) + " (tol 1e-8)"};
}

Outcome nrg_oracle() {
  const Check s = check_nrg_spectra(), t = check_toy_partial_trace();
  return {s.passed && t.passed, "spectra worst relative " + num(s.value) + " (tol 1e-8); toy traces worst " +
                                    num(t.value) + " (tol 1e-10)"};
}

Outcome projector() {
  ModelSpec s;
  const WilsonChain chain = build_wilson_chain(s, 4.0, 0.0, 30);
  const SpatialProjector P = projector_matrix(std::pow(4.0, 8.0), chain);
  std::vector<double> off;
  for (int i = 0; i < P.P.rows(); ++i)
    for (int j = 0; j < i; ++j) off.push_back(std::abs(P.P(i, j)));
  std::sort(off.rbegin(), off.rend());
  int cross = 0;  // last site still mostly inside
  for (int n = 0; n < P.p.size(); ++n)
    if (P.p(n) >= 0.5) cross = n;
  const bool largest = in(off[0], 0.04, 0.10);
  const bool others = off[1] <= 0.1 * off[0];
  const bool site = std::abs(cross - 16) <= 2;
  return {largest && others && site, "largest off-diagonal " + num(off[0]) + " (band [0.04, 0.10]), next " +
                                         num(off[1]) + " (needs <= " + num(0.1 * off[0]) + "), p_n crosses 1/2 at n = " +
                                         std::to_string(cross) + " (16 +- 2)"};
}

Outcome thermal_1ck() {
  const RunConfig cfg = thermal("1CK", 4.0);
  const auto rows = rows_of(cfg);
  const Analysis a = analyze(rows, cfg);
  const auto [lo, up] = exponents(a, "T_over_TK");
  double gap = 0.0;
  for (const auto& r : rows)
    if (r.T_over_TK >= cfg.fit_T.first * (1 - 1e-9) && r.T_over_TK <= cfg.fit_T.second * (1 + 1e-9))
      gap = std::max(gap, r.upper - r.lower);
  return {in(lo, 1.7, 2.3) && in(up, 1.7, 2.3) && gap <= 0.05,
          "exponents lower " + num(lo) + ", upper " + num(up) + " (band [1.7, 2.3]); largest bound gap " + num(gap) +
              " (limit 0.05)"};
}

Outcome thermal_2ck() {
  const RunConfig c2 = thermal("2CK", 4.0), c1 = thermal("1CK", 4.0);
  const auto [lo2, up2] = exponents(analyze(rows_of(c2), c2), "T_over_TK");
  const auto [lo1, up1] = exponents(analyze(rows_of(c1), c1), "T_over_TK");
  return {in(lo2, 0.8, 1.2) && in(up2, 0.8, 1.2) && lo2 < lo1 && up2 < up1,
          "2CK exponents lower " + num(lo2) + ", upper " + num(up2) + " (band [0.8, 1.2]); 1CK " + num(lo1) + ", " +
              num(up1)};
}

Outcome spatial_1ck() {
  const RunConfig cfg = spatial(4.0);
  const auto rows = rows_of(cfg);
  const auto [lo, up] = exponents(analyze(rows, cfg), "xi_over_L");
  double elo = NAN, eup = NAN;
  for (const auto& r : rows)
    if (r.T_over_TK == 0.0 && r.L_over_xi == 1.0) elo = r.lower, eup = r.upper;
  return {in(lo, 0.7, 1.3) && in(up, 0.7, 1.3) && elo >= 0.85 && eup >= 0.85,
          "exponents lower " + num(lo) + ", upper " + num(up) + " (band [0.7, 1.3]); E_F(L = xi) in [" + num(elo) +
              ", " + num(eup) + "] (needs >= 0.85)"};
}

Outcome yosida() {
  const Check c = check_yosida();
  return {c.passed, "largest |E - (1 - p)| = " + num(c.value) + " (tol 1e-8); " + c.detail};
}

Outcome additivity() {
  RunConfig grid = base("additivity_grid");
  grid.T_grid = "0,log:-1.75:-0.75:5";
  grid.L_grid = "log:1:2:5";
  std::vector<SeriesRow> rows = rows_of(grid);
  for (const auto& r : rows_of(thermal("1CK", 4.0))) rows.push_back(r);
  for (const auto& r : rows_of(spatial(4.0)))
    if (r.L_over_xi < grid.additivity_L.first || r.L_over_xi > grid.additivity_L.second) rows.push_back(r);
  const Analysis a = analyze(rows, grid);
  bool ok = true;
  std::string d;
  for (const char* b : {"lower", "upper"}) {
    if (!a.additivity.contains(b)) {
      ok = false;
      d += std::string(b) + ": no report; ";
      continue;
    }
    const json& r = a.additivity[b];
    const double mean = r["mean_relative"], spread = r["thermal_drop_spread"];
    ok = ok && mean < 0.2 && spread < 0.02;
    d += std::string(b) + " mean relative residual " + num(mean) + " (limit 0.2), spread over L of E(0,L) - E(T,L) " +
         num(spread) + " (limit 0.02); ";
  }
  return {ok, d.substr(0, d.size() - 2)};
}

Outcome cloud() {
  RunConfig c = base("cloud");
  c.T_grid = "0,0.1778279410038923,10";
  c.L_grid = "log:-1:2:7";
  const Analysis a = analyze(rows_of(c), c);
  std::map<double, std::pair<double, double>> size;  // T -> (lower, upper)
  for (const auto& e : a.cloud) {
    auto get = [&](const char* b) { return e[b].is_null() ? NAN : e[b]["L_over_xi"].get<double>(); };
    size[e["T_over_TK"].get<double>()] = {get("lower"), get("upper")};
  }
  bool ok = true;
  std::string d;
  for (int k = 0; k < 2; ++k) {
    auto pick = [&](double t) { return k == 0 ? size[t].first : size[t].second; };
    const double s0 = pick(0.0), s1 = pick(0.1778279410038923), s10 = pick(10.0);
    const bool agree = std::abs(s1 - s0) <= 0.2 * s0;
    const bool shrinks = s10 * 2.0 <= s0;
    ok = ok && agree && shrinks;
    d += std::string(k == 0 ? "lower" : "upper") + ": L/xi = " + num(s0) + " (T = 0), " + num(s1) +
         " (T = 10^-0.75 T_K), " + num(s10) + " (T = 10 T_K); ";
  }
  return {ok, d + "needs agreement within 20% and a factor 2 shrink"};
}

Outcome lambda_robust() {
  const auto t4 = exponents(analyze(rows_of(thermal("1CK", 4.0)), thermal("1CK", 4.0)), "T_over_TK");
  const auto t8 = exponents(analyze(rows_of(thermal("1CK", 8.0)), thermal("1CK", 8.0)), "T_over_TK");
  const auto s4 = exponents(analyze(rows_of(spatial(4.0)), spatial(4.0)), "xi_over_L");
  const auto s8 = exponents(analyze(rows_of(spatial(8.0)), spatial(8.0)), "xi_over_L");
  const double shifts[] = {std::abs(t8.first - t4.first), std::abs(t8.second - t4.second),
                           std::abs(s8.first - s4.first), std::abs(s8.second - s4.second)};
  double worst = 0.0;
  bool finite = true;
  for (double s : shifts) {
    finite = finite && std::isfinite(s);
    worst = std::max(worst, s);
  }
  return {finite && worst < 0.2, "thermal shifts " + num(shifts[0]) + ", " + num(shifts[1]) + "; spatial shifts " +
                                     num(shifts[2]) + ", " + num(shifts[3]) + " (limit 0.2)"};
}

struct Criterion {
  int id;
  const char* title;
  std::function<Outcome()> run;
};

}  // namespace

int main(int argc, char** argv) {
  const std::vector<Criterion> all = {
      {1, "two-qubit oracle equivalence", two_qubit},
      {2, "exact anchors", anchors},
      {3, "untruncated NRG and toy partial traces", nrg_oracle},
      {4, "projector structure", projector},
      {5, "1CK thermal scaling", thermal_1ck},
      {6, "2CK thermal scaling", thermal_2ck},
      {7, "1CK spatial scaling", spatial_1ck},
      {8, "Yosida exactness", yosida},
      {9, "additivity", additivity},
      {10, "finite-T cloud size", cloud},
      {11, "Lambda robustness", lambda_robust},
  };
  std::vector<int> chosen;
  for (int i = 1; i < argc; ++i) {
    const std::string a = argv[i];
    if (a == "--data" && i + 1 < argc)
      data_dir = argv[++i];
    else
      chosen.push_back(std::atoi(a.c_str()));
  }
  fs::create_directories(data_dir);
  int failures = 0;
  for (const auto& c : all) {
    if (!chosen.empty() && std::find(chosen.begin(), chosen.end(), c.id) == chosen.end()) continue;
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    std::cout << (o.passed ? "PASS" : "FAIL") << " criterion " << c.id << " (" << c.title << "): " << o.detail
              << std::endl;
    failures += !o.passed;
  }
  return failures;
}
