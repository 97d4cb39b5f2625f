#include "kondo_eof/experiment.hpp"

#include <gsl/gsl_version.h>

#include <Eigen/Core>
#include <algorithm>
#include <atomic>
#include <boost/version.hpp>
#include <charconv>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

#include "kondo_eof/binary_io.hpp"
#include "kondo_eof/block_chain.hpp"
#include "kondo_eof/nrg.hpp"
#include "kondo_eof/spatial_trace.hpp"

#ifndef KONDO_EOF_VERSION
#define KONDO_EOF_VERSION "0.0.0"
#endif

namespace kondo_eof {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string fmt(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, end);
}

std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  return s.substr(a, s.find_last_not_of(" \t\r\n") - a + 1);
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, sep)) out.push_back(trim(item));
  return out;
}

double number(const std::string& key, const std::string& text) {
  const std::string t = trim(text);
  if (t == "inf") return std::numeric_limits<double>::infinity();
  double v = 0.0;
  auto [end, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
  if (ec != std::errc() || end != t.data() + t.size() || t.empty())
    throw ConfigError(key + ": '" + text + "' is not a number");
  return v;
}

long integer(const std::string& key, const std::string& text) {
  const std::string t = trim(text);
  long v = 0;
  auto [end, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
  if (ec != std::errc() || end != t.data() + t.size() || t.empty())
    throw ConfigError(key + ": '" + text + "' is not an integer");
  return v;
}

std::vector<double> numbers(const std::string& key, const std::string& text) {
  std::vector<double> v;
  for (const auto& s : split(text, ',')) v.push_back(number(key, s));
  if (v.empty()) throw ConfigError(key + " is empty");
  return v;
}

std::pair<double, double> window(const std::string& key, const std::string& text) {
  auto v = numbers(key, text);
  if (v.size() != 2 || !(v[0] > 0.0) || !(v[1] > v[0])) throw ConfigError(key + " must be 'lo,hi' with 0 < lo < hi");
  return {v[0], v[1]};
}

template <class T>
std::string joined(const std::vector<T>& v, char sep = ',') {
  std::string s;
  for (size_t i = 0; i < v.size(); ++i) {
    if (i) s += sep;
    if constexpr (std::is_same_v<T, double>)
      s += fmt(v[i]);
    else
      s += std::to_string(v[i]);
  }
  return s;
}

bool physics_key(const std::string& k) { return k != "output" && k != "checkpoint_dir"; }

}  // namespace

std::vector<double> parse_grid(const std::string& text, bool allow_inf) {
  std::vector<double> v;
  for (const auto& item : split(text, ',')) {
    if (item.rfind("log:", 0) == 0) {
      auto f = split(item.substr(4), ':');
      if (f.size() != 3) throw ConfigError("grid run '" + item + "' must be log:a:b:n");
      const double a = number("grid", f[0]), b = number("grid", f[1]);
      const long n = integer("grid", f[2]);
      if (n < 1) throw ConfigError("grid run '" + item + "' needs n >= 1");
      for (long i = 0; i < n; ++i) v.push_back(std::pow(10.0, n == 1 ? a : a + (b - a) * i / (n - 1)));
    } else {
      v.push_back(number("grid", item));
    }
  }
  if (v.empty()) throw ConfigError("grid is empty");
  for (double x : v) {
    if (std::isnan(x) || x < 0.0) throw ConfigError("grid values must be >= 0");
    if (std::isinf(x) && !allow_inf) throw ConfigError("this grid does not take inf");
  }
  std::sort(v.begin(), v.end());
  v.erase(std::unique(v.begin(), v.end()), v.end());
  return v;
}

std::vector<double> RunConfig::T_values() const { return parse_grid(T_grid, false); }
std::vector<double> RunConfig::L_values() const { return parse_grid(L_grid, true); }

std::vector<std::string> config_keys() {
  return {"model", "Lambda",       "J",            "keep_max",     "z",          "N",
          "T_grid", "L_grid",      "unit_sizes",   "y_grid",       "y_search",   "fit_T",
          "fit_L", "additivity_T", "additivity_L", "cloud_drop",   "seed",       "output",
          "checkpoint_dir"};
}

void RunConfig::set(const std::string& key, const std::string& value) {
  const std::string v = trim(value);
  if (key == "model") {
    if (v != "1CK" && v != "2CK") throw ConfigError("model must be 1CK or 2CK");
    model = v;
  } else if (key == "Lambda") {
    Lambda = number(key, v);
  } else if (key == "J") {
    J = number(key, v);
  } else if (key == "keep_max") {
    keep_max = static_cast<int>(integer(key, v));
  } else if (key == "z") {
    z = numbers(key, v);
  } else if (key == "N") {
    N = static_cast<int>(integer(key, v));
  } else if (key == "T_grid") {
    parse_grid(v, false);
    T_grid = v;
  } else if (key == "L_grid") {
    parse_grid(v, true);
    L_grid = v;
  } else if (key == "unit_sizes") {
    unit_sizes.clear();
    for (const auto& s : split(v, ',')) unit_sizes.push_back(static_cast<int>(integer(key, s)));
  } else if (key == "y_grid") {
    y_grid = numbers(key, v);
  } else if (key == "y_search") {
    if (v == "true" || v == "1" || v == "yes" || v == "on")
      y_search = true;
    else if (v == "false" || v == "0" || v == "no" || v == "off")
      y_search = false;
    else
      throw ConfigError("y_search must be true or false");
  } else if (key == "fit_T") {
    fit_T = window(key, v);
  } else if (key == "fit_L") {
    fit_L = window(key, v);
  } else if (key == "additivity_T") {
    additivity_T = window(key, v);
  } else if (key == "additivity_L") {
    additivity_L = window(key, v);
  } else if (key == "cloud_drop") {
    cloud_drop = number(key, v);
  } else if (key == "seed") {
    const long s = integer(key, v);
    if (s < 0) throw ConfigError("seed must be >= 0");
    seed = static_cast<std::uint64_t>(s);
  } else if (key == "output") {
    if (v.empty()) throw ConfigError("output must not be empty");
    output = v;
  } else if (key == "checkpoint_dir") {
    checkpoint_dir = v;
  } else {
    throw ConfigError("unknown key '" + key + "'");
  }
}

std::vector<std::pair<std::string, std::string>> RunConfig::entries() const {
  auto pair = [](const std::pair<double, double>& p) { return fmt(p.first) + "," + fmt(p.second); };
  return {{"model", model},
          {"Lambda", fmt(Lambda)},
          {"J", fmt(J)},
          {"keep_max", std::to_string(keep_max)},
          {"z", joined(z)},
          {"N", std::to_string(N)},
          {"T_grid", T_grid},
          {"L_grid", L_grid},
          {"unit_sizes", joined(unit_sizes)},
          {"y_grid", joined(y_grid)},
          {"y_search", y_search ? "true" : "false"},
          {"fit_T", pair(fit_T)},
          {"fit_L", pair(fit_L)},
          {"additivity_T", pair(additivity_T)},
          {"additivity_L", pair(additivity_L)},
          {"cloud_drop", fmt(cloud_drop)},
          {"seed", std::to_string(seed)},
          {"output", output},
          {"checkpoint_dir", checkpoint_dir}};
}

void RunConfig::validate() const {
  if (model != "1CK" && model != "2CK") throw ConfigError("model must be 1CK or 2CK");
  if (!(Lambda > 1.0) || !std::isfinite(Lambda)) throw ConfigError("Lambda must be > 1");
  if (!(J > 0.0) || !std::isfinite(J)) throw ConfigError("J must be positive");
  if (keep_max < 4) throw ConfigError("keep_max must be >= 4");
  if (z.empty()) throw ConfigError("z list is empty");
  for (double v : z)
    if (!(v >= 0.0 && v < 1.0)) throw ConfigError("z values must lie in [0, 1)");
  if (N < 0 || (N > 0 && N < 10)) throw ConfigError("N must be 0 (automatic) or >= 10");
  T_values();
  for (double l : L_values())
    if (!(l > 0.0)) throw ConfigError("L grid values must be positive");
  if (unit_sizes.empty()) throw ConfigError("unit_sizes is empty");
  for (int u : unit_sizes)
    if (u < 1) throw ConfigError("unit sizes must be >= 1");
  if (y_grid.empty()) throw ConfigError("y_grid is empty");
  if (!(cloud_drop > 0.0 && cloud_drop < 1.0)) throw ConfigError("cloud_drop must lie in (0, 1)");
}

std::string RunConfig::hash() const {
  std::uint64_t h = 1469598103934665603ull;
  for (const auto& [k, v] : entries()) {
    if (!physics_key(k)) continue;
    for (char c : k + "=" + v + "\n") {
      h ^= static_cast<unsigned char>(c);
      h *= 1099511628211ull;
    }
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::vector<std::string> preset_names() { return {"paper", "fig2a", "fig2c"}; }

RunConfig preset(const std::string& name) {
  RunConfig c;
  c.model = "1CK";
  c.Lambda = 4.0;
  c.J = 0.3;
  c.keep_max = 300;
  c.z = {0.0, 0.5};
  if (name == "paper") {
    c.T_grid = "0,log:-2:-0.5:7";
    c.L_grid = "inf";
  } else if (name == "fig2a") {
    c.T_grid = "log:-3:1:17";
    c.L_grid = "inf";
    c.output = "fig2a";
  } else if (name == "fig2c") {
    c.T_grid = "0";
    c.L_grid = "log:-1:2:13";
    c.output = "fig2c";
  } else {
    throw ConfigError("unknown preset '" + name + "'");
  }
  return c;
}

void apply_config_file(RunConfig& cfg, const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot read config file " + path);
  std::string line;
  int no = 0;
  while (std::getline(is, line)) {
    ++no;
    if (auto h = line.find('#'); h != std::string::npos) line.erase(h);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError(path + ":" + std::to_string(no) + ": expected key = value");
    try {
      cfg.set(trim(line.substr(0, eq)), line.substr(eq + 1));
    } catch (const ConfigError& e) {
      throw ConfigError(path + ":" + std::to_string(no) + ": " + e.what());
    }
  }
}

// ---------------------------------------------------------------------------

std::string version_string() { return KONDO_EOF_VERSION; }

void write_atomically(const std::string& path, const std::string& content) {
  const fs::path target(path);
  if (target.has_parent_path()) fs::create_directories(target.parent_path());
  const std::string tmp = path + ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw io::CheckpointError("cannot open " + tmp + " for writing");
    os << content;
    os.flush();
    if (!os) throw io::CheckpointError("write failed for " + tmp);
  }
  fs::rename(tmp, target);
}

namespace {

struct Scale {
  double T_K = 0.0;
  int N = 0;
  std::string note;
};

ModelSpec model_spec(const RunConfig& cfg) {
  ModelSpec s;
  s.channels = cfg.channels();
  s.J = cfg.J;
  return s;
}

int length_for(const RunConfig& cfg, double T_K) {
  if (cfg.N > 0) return cfg.N;
  double lowest = T_K;
  for (double t : cfg.T_values())
    if (t > 0.0) lowest = std::min(lowest, t * T_K);
  for (double l : cfg.L_values())
    if (std::isfinite(l)) lowest = std::min(lowest, T_K / l);
  return chain_length_for(cfg.Lambda, lowest);
}

class RunCache {
 public:
  RunCache(const RunConfig& cfg, const Logger& log) : cfg_(cfg), log_(log) {}

  NrgRun get(double z, int N) {
    const ModelSpec spec = model_spec(cfg_);
    std::string path;
    if (!cfg_.checkpoint_dir.empty()) {
      path = (fs::path(cfg_.checkpoint_dir) /
              ("nrg_" + cfg_.model + "_Lambda" + fmt(cfg_.Lambda) + "_z" + fmt(z) + "_keep" +
               std::to_string(cfg_.keep_max) + "_N" + std::to_string(N) + ".ckpt"))
                 .string();
      if (fs::exists(path)) {
        const json h = json::parse(checkpoint_header(path));
        const bool same = h.at("Lambda").get<double>() == cfg_.Lambda && h.at("z").get<double>() == z &&
                          h.at("J").get<double>() == cfg_.J && h.at("M").get<int>() == spec.channels &&
                          h.at("keep_max").get<int>() == cfg_.keep_max && h.at("N").get<int>() == N;
        if (!same) throw io::CheckpointError("checkpoint " + path + " does not match the run parameters");
        if (log_) log_("loading " + path);
        return load_checkpoint(path);
      }
    }
    if (log_) log_("NRG " + cfg_.model + " z=" + fmt(z) + " N=" + std::to_string(N));
    NrgRun run = iterative_diagonalization(build_wilson_chain(spec, cfg_.Lambda, z, N), spec, cfg_.keep_max);
    if (!path.empty()) {
      fs::create_directories(cfg_.checkpoint_dir);
      save_checkpoint(run, path + ".tmp");
      fs::rename(path + ".tmp", path);
    }
    return run;
  }

 private:
  const RunConfig& cfg_;
  const Logger& log_;
};

Scale kondo_scale(const RunConfig& cfg, RunCache& cache) {
  Scale s;
  const ModelSpec spec = model_spec(cfg);
  const double T1 = kondo_temperature_1ck(spec);
  if (cfg.channels() == 1) {
    s.T_K = T1;
    s.note = "T_K = D sqrt(nu J) exp(-1/(nu J))";
  } else {
    // scale fixed once from a z = 0 reference run deep enough to flow to the fixed point
    const NrgRun ref = cache.get(0.0, chain_length_for(cfg.Lambda, 1e-3 * T1));
    int n_star = 0;
    s.T_K = kondo_temperature_2ck(ref, &n_star);
    s.note = "T_K = D Lambda^(-n*/2), n* = " + std::to_string(n_star) +
             " the first shell with stationary rescaled spectrum (lowest 20 levels within 1%)";
  }
  s.N = length_for(cfg, s.T_K);
  return s;
}

BoundOptions bound_options(const RunConfig& cfg) {
  BoundOptions o;
  o.unit_sizes = cfg.unit_sizes;
  o.upper.grid = cfg.y_grid;
  o.upper.search = cfg.y_search;
  o.witness.slocc.seed = cfg.seed;
  return o;
}

PointResult compute_point(const NrgRun& run, double T_K, double t, double ell, const BoundOptions& opt) {
  PointResult r;
  r.z = run.chain.z;
  r.T_over_TK = t;
  r.L_over_xi = ell;
  const auto start = std::chrono::steady_clock::now();
  const BlockThermalState rho = thermal_state(run, t * T_K);
  BlockChain chain;
  if (std::isinf(ell)) {
    chain = chain_from_nrg(run, rho);
  } else {
    const SpatialProjector P = projector_matrix(ell / T_K, run.chain);
    std::vector<double> p(P.p.size());
    for (size_t i = 0; i < p.size(); ++i) p[i] = std::clamp(P.p(i), 0.0, 1.0);
    ReducedState red = partial_trace_out(run, rho, p);
    r.trace_loss = red.trace_loss;
    r.projection_loss = red.projection_loss;
    chain = std::move(red.chain);
  }
  const ChainBounds b = chain_bounds(chain, opt);
  r.lower = b.lower;
  r.upper = b.upper;
  r.unit_size = b.unit_size;
  r.leakage = b.leakage;
  r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return r;
}

json point_json(const PointResult& p) {
  return {{"z", p.z},
          {"T_over_TK", p.T_over_TK},
          {"L_over_xi", fmt(p.L_over_xi)},
          {"lower", p.lower},
          {"upper", p.upper},
          {"unit_size", p.unit_size},
          {"trace_loss", p.trace_loss},
          {"projection_loss", p.projection_loss},
          {"leakage", p.leakage}};
}

PointResult point_from_json(const json& j) {
  PointResult p;
  p.z = j.at("z");
  p.T_over_TK = j.at("T_over_TK");
  p.L_over_xi = number("L_over_xi", j.at("L_over_xi").get<std::string>());
  p.lower = j.at("lower");
  p.upper = j.at("upper");
  p.unit_size = j.at("unit_size");
  p.trace_loss = j.at("trace_loss");
  p.projection_loss = j.at("projection_loss");
  p.leakage = j.at("leakage");
  return p;
}

auto point_key(const PointResult& p) { return std::tuple{p.z, p.T_over_TK, p.L_over_xi}; }

}  // namespace

std::vector<SeriesRow> z_averaged(const std::vector<PointResult>& points) {
  std::map<std::pair<double, double>, std::vector<const PointResult*>> groups;
  for (const auto& p : points) groups[{p.T_over_TK, p.L_over_xi}].push_back(&p);
  std::vector<SeriesRow> rows;
  for (const auto& [key, ps] : groups) {
    SeriesRow r{key.first, key.second, 0.0, 0.0};
    for (const auto* p : ps) {
      r.lower += p->lower / ps.size();
      r.upper += p->upper / ps.size();
    }
    rows.push_back(r);
  }
  return rows;
}

namespace {

json fit_json(const std::string& axis, const PowerLawFit& f, double stability) {
  return {{"axis", axis},          {"bound", f.bound},         {"exponent", f.exponent},
          {"prefactor", f.prefactor}, {"window", {f.window_lo, f.window_hi}}, {"residual", f.residual},
          {"points", f.points},    {"stability", stability}};
}

}  // namespace

Analysis analyze(const std::vector<SeriesRow>& rows, const RunConfig& cfg) {
  Analysis a;
  ScalingSeries thermal, spatial;
  thermal.abscissa = "T_over_TK";
  spatial.abscissa = "xi_over_L";
  thermal.Lambda = spatial.Lambda = cfg.Lambda;
  thermal.keep_max = spatial.keep_max = cfg.keep_max;
  thermal.z = spatial.z = cfg.z;
  std::vector<SeriesRow> sp;
  for (const auto& r : rows) {
    if (std::isinf(r.L_over_xi) && r.T_over_TK > 0.0) {
      thermal.x.push_back(r.T_over_TK);
      thermal.lower.push_back(r.lower);
      thermal.upper.push_back(r.upper);
    }
    if (r.T_over_TK == 0.0 && std::isfinite(r.L_over_xi)) sp.push_back(r);
  }
  std::sort(sp.begin(), sp.end(), [](auto& x, auto& y) { return x.L_over_xi > y.L_over_xi; });
  for (const auto& r : sp) {
    spatial.x.push_back(1.0 / r.L_over_xi);
    spatial.lower.push_back(r.lower);
    spatial.upper.push_back(r.upper);
  }

  std::map<std::string, PowerLawFit> fits;
  auto fit = [&](const ScalingSeries& s, double lo, double hi) {
    for (Bound b : {Bound::lower, Bound::upper}) {
      try {
        const PowerLawFit f = fit_power_law(s, b, lo, hi);
        fits[s.abscissa + ":" + f.bound] = f;
        a.fits.push_back(fit_json(s.abscissa, f, fit_stability(s, b, lo, hi)));
      } catch (const InsufficientDataError& e) {
        a.notes.push_back(s.abscissa + " " + bound_name(b) + " fit skipped: " + e.what());
      }
    }
  };
  fit(thermal, cfg.fit_T.first, cfg.fit_T.second);
  fit(spatial, 1.0 / cfg.fit_L.second, 1.0 / cfg.fit_L.first);

  std::map<double, std::vector<SeriesRow>> by_T;
  for (const auto& r : rows)
    if (std::isfinite(r.L_over_xi)) by_T[r.T_over_TK].push_back(r);
  for (const auto& [t, rs] : by_T) {
    if (rs.size() < 2) continue;
    std::vector<double> L, lo, up;
    for (const auto& r : rs) L.push_back(r.L_over_xi), lo.push_back(r.lower), up.push_back(r.upper);
    json entry = {{"T_over_TK", t}};
    for (auto [name, v] : {std::pair{"lower", &lo}, std::pair{"upper", &up}}) {
      try {
        const CloudSize c = cloud_size(L, *v, cfg.cloud_drop);
        entry[name] = {{"L_over_xi", c.L}, {"convention", c.convention}};
      } catch (const std::runtime_error& e) {
        entry[name] = nullptr;
        a.notes.push_back("cloud size at T/T_K = " + fmt(t) + " (" + name + "): " + e.what());
      }
    }
    a.cloud.push_back(entry);
  }

  std::map<std::pair<double, double>, SeriesRow> at;
  for (const auto& r : rows) at[{r.T_over_TK, r.L_over_xi}] = r;
  for (Bound b : {Bound::lower, Bound::upper}) {
    const std::string name = bound_name(b);
    auto ft = fits.find("T_over_TK:" + name), fl = fits.find("xi_over_L:" + name);
    if (ft == fits.end() || fl == fits.end()) continue;
    std::vector<GridPoint> grid;
    for (const auto& r : rows)
      if (r.T_over_TK > 0.0 && std::isfinite(r.L_over_xi))
        grid.push_back({r.T_over_TK, r.L_over_xi, b == Bound::lower ? r.lower : r.upper});
    try {
      const AdditivityReport rep = check_additivity(grid, ft->second, fl->second, cfg.additivity_T.first,
                                                    cfg.additivity_T.second, cfg.additivity_L.first,
                                                    cfg.additivity_L.second);
      // spread over L of E(0, L) - E(T, L), worst T
      double spread = 0.0;
      for (const auto& [t, rs] : by_T) {
        if (t < cfg.additivity_T.first || t > cfg.additivity_T.second) continue;
        double mn = INFINITY, mx = -INFINITY;
        for (const auto& r : rs) {
          if (r.L_over_xi < cfg.additivity_L.first || r.L_over_xi > cfg.additivity_L.second) continue;
          auto z0 = at.find({0.0, r.L_over_xi});
          if (z0 == at.end()) continue;
          const double d = b == Bound::lower ? z0->second.lower - r.lower : z0->second.upper - r.upper;
          mn = std::min(mn, d);
          mx = std::max(mx, d);
        }
        if (mx >= mn) spread = std::max(spread, mx - mn);
      }
      a.additivity[name] = {{"max_relative", rep.max_relative},
                            {"mean_relative", rep.mean_relative},
                            {"points", rep.points},
                            {"thermal_drop_spread", spread}};
    } catch (const InsufficientDataError& e) {
      a.notes.push_back("additivity (" + name + "): " + e.what());
    }
  }
  return a;
}

void write_csv(const std::string& path, const std::string& model, const std::vector<double>& z,
               const std::vector<SeriesRow>& rows) {
  std::string s = "model,z_avg,T_over_TK,L_over_xi,lower,upper\n";
  const std::string zs = joined(z, ';');
  for (const auto& r : rows)
    s += model + "," + zs + "," + fmt(r.T_over_TK) + "," + fmt(r.L_over_xi) + "," + fmt(r.lower) + "," +
         fmt(r.upper) + "\n";
  write_atomically(path, s);
}

std::vector<SeriesRow> read_csv(const std::string& path, std::string* model) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot read " + path);
  std::string line;
  std::getline(is, line);
  if (trim(line) != "model,z_avg,T_over_TK,L_over_xi,lower,upper")
    throw ConfigError(path + " is not a result table");
  std::vector<SeriesRow> rows;
  while (std::getline(is, line)) {
    if (trim(line).empty()) continue;
    auto f = split(line, ',');
    if (f.size() != 6) throw ConfigError(path + ": malformed row '" + line + "'");
    if (model) *model = f[0];
    rows.push_back({number("T_over_TK", f[2]), number("L_over_xi", f[3]), number("lower", f[4]),
                    number("upper", f[5])});
  }
  return rows;
}

json manifest(const ExperimentResult& r) {
  json cfg = json::object();
  for (const auto& [k, v] : r.config.entries()) cfg[k] = v;
  json points = json::array(), avg = json::array();
  for (const auto& p : r.points) points.push_back(point_json(p));
  for (const auto& s : r.averaged)
    avg.push_back({{"T_over_TK", s.T_over_TK}, {"L_over_xi", fmt(s.L_over_xi)}, {"lower", s.lower}, {"upper", s.upper}});
  return {{"config", cfg},
          {"config_hash", r.config.hash()},
          {"versions",
           {{"kondo_eof", version_string()},
            {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
                          std::to_string(EIGEN_MINOR_VERSION)},
            {"boost", BOOST_LIB_VERSION},
            {"gsl", GSL_VERSION},
            {"compiler", __VERSION__}}},
          {"scale", {{"T_K", r.T_K}, {"xi", r.xi}, {"N", r.N}, {"convention", r.scale_note}}},
          {"points", points},
          {"z_averaged", avg},
          {"fits", r.analysis.fits},
          {"cloud_size", r.analysis.cloud},
          {"additivity", r.analysis.additivity},
          {"notes", r.analysis.notes}};
}

ExperimentResult run_experiment(const RunConfig& cfg, int workers, const Logger& log) {
  cfg.validate();
  ExperimentResult res;
  res.config = cfg;
  RunCache cache(cfg, log);
  const Scale scale = kondo_scale(cfg, cache);
  res.T_K = scale.T_K;
  res.xi = 1.0 / scale.T_K;
  res.N = scale.N;
  res.scale_note = scale.note;
  if (log) log("T_K = " + fmt(res.T_K) + ", N = " + std::to_string(res.N));

  // earlier partial results of the same configuration
  const std::string partial = cfg.output + ".partial.jsonl";
  std::set<std::tuple<double, double, double>> done;
  if (fs::exists(partial)) {
    std::ifstream is(partial);
    std::string line;
    std::getline(is, line);
    const json head = json::parse(line, nullptr, false);
    if (head.is_discarded() || head.value("config_hash", "") != cfg.hash())
      throw io::CheckpointError(partial + " holds results of a different configuration");
    while (std::getline(is, line)) {
      const json j = json::parse(line, nullptr, false);
      if (j.is_discarded()) break;  // torn last line
      res.points.push_back(point_from_json(j));
      done.insert(point_key(res.points.back()));
    }
    if (log) log("resuming with " + std::to_string(res.points.size()) + " finished points");
  }
  {
    if (fs::path(partial).has_parent_path()) fs::create_directories(fs::path(partial).parent_path());
    std::ofstream os(partial, std::ios::trunc);
    if (!os) throw io::CheckpointError("cannot open " + partial);
    os << json{{"config_hash", cfg.hash()}}.dump() << '\n';
    for (const auto& p : res.points) os << point_json(p).dump() << '\n';
  }

  const std::vector<double> Ts = cfg.T_values(), Ls = cfg.L_values();
  const BoundOptions opt = bound_options(cfg);
  std::ofstream sink(partial, std::ios::app);
  std::mutex mu;
  for (double z : cfg.z) {
    std::vector<std::pair<double, double>> tasks;
    for (double t : Ts)
      for (double l : Ls)
        if (!done.count({z, t, l})) tasks.push_back({t, l});
    if (tasks.empty()) continue;
    const NrgRun run = cache.get(z, res.N);
    std::atomic<size_t> next{0};
    std::exception_ptr failure;
    auto worker = [&] {
      for (size_t i; (i = next++) < tasks.size();) {
        {
          std::lock_guard lock(mu);
          if (failure) return;
        }
        try {
          const PointResult p = compute_point(run, res.T_K, tasks[i].first, tasks[i].second, opt);
          std::lock_guard lock(mu);
          res.points.push_back(p);
          sink << point_json(p).dump() << '\n' << std::flush;
          if (log)
            log("z=" + fmt(z) + " T/T_K=" + fmt(p.T_over_TK) + " L/xi=" + fmt(p.L_over_xi) + ": [" +
                fmt(p.lower) + ", " + fmt(p.upper) + "] in " + fmt(std::round(p.seconds * 10) / 10) + " s");
        } catch (...) {
          std::lock_guard lock(mu);
          if (!failure) failure = std::current_exception();
        }
      }
    };
    const int n = std::max(1, std::min<int>(workers, static_cast<int>(tasks.size())));
    std::vector<std::thread> pool;
    for (int k = 1; k < n; ++k) pool.emplace_back(worker);
    worker();
    for (auto& th : pool) th.join();
    if (failure) std::rethrow_exception(failure);
  }
  sink.close();

  std::sort(res.points.begin(), res.points.end(),
            [](const PointResult& a, const PointResult& b) { return point_key(a) < point_key(b); });
  res.averaged = z_averaged(res.points);
  res.analysis = analyze(res.averaged, cfg);
  write_csv(cfg.output + ".csv", cfg.model, cfg.z, res.averaged);
  write_atomically(cfg.output + ".json", manifest(res).dump(2) + "\n");
  fs::remove(partial);
  return res;
}

}  // namespace kondo_eof
