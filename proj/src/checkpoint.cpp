#include <fstream>
#include <json.hpp>

#include "kondo_eof/binary_io.hpp"
#include "kondo_eof/nrg.hpp"
#include "kondo_eof/spatial_trace.hpp"

namespace kondo_eof {

namespace {

constexpr int kVersion = 1;

void write_qns(io::Writer& w, const std::vector<QN>& q) {
  std::vector<int> flat;
  for (const auto& x : q) {
    flat.push_back(x.charge);
    flat.push_back(x.sz2);
  }
  w.ints(flat);
}

std::vector<QN> read_qns(io::Reader& r) {
  auto flat = r.ints();
  std::vector<QN> q;
  for (size_t i = 0; i + 1 < flat.size(); i += 2) q.push_back({flat[i], flat[i + 1]});
  return q;
}

void write_refs(io::Writer& w, const std::vector<StateRef>& v) {
  std::vector<int> flat;
  for (const auto& x : v) {
    flat.push_back(x.sector);
    flat.push_back(x.col);
  }
  w.ints(flat);
}

std::vector<StateRef> read_refs(io::Reader& r) {
  auto flat = r.ints();
  std::vector<StateRef> v;
  for (size_t i = 0; i + 1 < flat.size(); i += 2) v.push_back({flat[i], flat[i + 1]});
  return v;
}

void write_step(io::Writer& w, const StepStates& st) {
  w.pod<std::int32_t>(st.n);
  write_qns(w, st.prev_qn);
  w.pod<std::int64_t>(static_cast<std::int64_t>(st.sectors.size()));
  for (const auto& b : st.sectors) {
    w.pod<std::int32_t>(b.qn.charge);
    w.pod<std::int32_t>(b.qn.sz2);
    w.ints(b.prev);
    w.ints(b.site);
    w.vector(b.energies);
    w.matrix(b.vectors);
  }
  write_refs(w, st.kept);
  write_refs(w, st.discarded);
}

std::shared_ptr<StepStates> read_step(io::Reader& r) {
  auto st = std::make_shared<StepStates>();
  st->n = r.pod<std::int32_t>();
  st->prev_qn = read_qns(r);
  const auto n_sec = r.pod<std::int64_t>();
  for (std::int64_t q = 0; q < n_sec; ++q) {
    SectorBlock b;
    b.qn.charge = r.pod<std::int32_t>();
    b.qn.sz2 = r.pod<std::int32_t>();
    b.prev = r.ints();
    b.site = r.ints();
    b.energies = r.vector();
    b.vectors = r.matrix();
    st->sectors.push_back(std::move(b));
  }
  st->kept = read_refs(r);
  st->discarded = read_refs(r);
  return st;
}

nlohmann::json read_header(std::istream& is, const std::string& path, const std::string& format) {
  std::string line;
  std::getline(is, line);
  nlohmann::json h;
  try {
    h = nlohmann::json::parse(line);
  } catch (const std::exception&) {
    throw io::CheckpointError("bad checkpoint header in " + path);
  }
  if (h.value("format", "") != format || h.value("version", 0) != kVersion)
    throw io::CheckpointError("unsupported checkpoint format in " + path);
  return h;
}

}  // namespace

void save_checkpoint(const NrgRun& run, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw io::CheckpointError("cannot open " + path + " for writing");
  nlohmann::json h = {{"format", "kondo_eof.nrg"}, {"version", kVersion},
                      {"Lambda", run.chain.Lambda}, {"z", run.chain.z},
                      {"J", run.spec.J},           {"M", run.spec.channels},
                      {"D", run.spec.D},           {"keep_max", run.keep_max},
                      {"N", run.chain.N}};
  os << h.dump() << '\n';
  io::Writer w(os);
  w.doubles(run.chain.hoppings);
  w.doubles(run.chain.onsite);
  std::vector<double> star;
  for (const auto& s : run.chain.star) {
    star.push_back(s.lo);
    star.push_back(s.hi);
    star.push_back(s.sign);
  }
  w.doubles(star);
  w.matrix(run.chain.lanczos);
  w.pod<std::int64_t>(static_cast<std::int64_t>(run.shells.size()));
  for (const auto& sh : run.shells) {
    w.pod<double>(sh.ground_energy);
    w.pod<double>(sh.scale);
    write_step(w, *sh.states);
    w.pod<std::int64_t>(static_cast<std::int64_t>(sh.creation.size()));
    for (const auto& c : sh.creation) w.matrix(c);
  }
  if (!os) throw io::CheckpointError("write failed for " + path);
}

std::string checkpoint_header(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw io::CheckpointError("cannot open " + path);
  std::string line;
  std::getline(is, line);
  return line;
}

NrgRun load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw io::CheckpointError("cannot open " + path);
  const nlohmann::json h = read_header(is, path, "kondo_eof.nrg");
  NrgRun run;
  run.spec.J = h["J"];
  run.spec.channels = h["M"];
  run.spec.D = h["D"];
  run.keep_max = h["keep_max"];
  run.chain.Lambda = h["Lambda"];
  run.chain.z = h["z"];
  run.chain.N = h["N"];
  run.site = make_site(run.spec.channels);
  io::Reader r(is);
  run.chain.hoppings = r.doubles();
  run.chain.onsite = r.doubles();
  auto star = r.doubles();
  for (size_t i = 0; i + 2 < star.size(); i += 3)
    run.chain.star.push_back({star[i], star[i + 1], static_cast<int>(star[i + 2])});
  run.chain.lanczos = r.matrix();
  const auto n_shells = r.pod<std::int64_t>();
  for (std::int64_t i = 0; i < n_shells; ++i) {
    EnergyShell sh;
    sh.ground_energy = r.pod<double>();
    sh.scale = r.pod<double>();
    auto st = read_step(r);
    const auto n_c = r.pod<std::int64_t>();
    for (std::int64_t k = 0; k < n_c; ++k) sh.creation.push_back(r.matrix());
    sh.states = st;
    run.shells.push_back(std::move(sh));
  }
  if (static_cast<int>(run.shells.size()) != run.chain.N + 1)
    throw io::CheckpointError("checkpoint shell count does not match its header");
  return run;
}

void save_reduced_state(const ReducedState& s, const std::string& path, const nlohmann::json& meta) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw io::CheckpointError("cannot open " + path + " for writing");
  nlohmann::json h = {{"format", "kondo_eof.reduced"}, {"version", kVersion}, {"meta", meta},
                      {"channels", s.chain.channels}, {"steps", s.chain.size()},
                      {"trace_loss", s.trace_loss}, {"projection_loss", s.projection_loss}};
  os << h.dump() << '\n';
  io::Writer w(os);
  write_qns(w, s.chain.site_qn);
  w.ints(s.kept_dim);
  w.ints(s.env_dim);
  for (int n = 0; n < s.chain.size(); ++n) {
    write_step(w, *s.chain.steps[n]);
    w.doubles(s.chain.weights[n]);
    w.doubles(s.chain.energy[n]);
    w.vector(s.chain.tail[n]);
  }
  if (!os) throw io::CheckpointError("write failed for " + path);
}

ReducedState load_reduced_state(const std::string& path, nlohmann::json* meta) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw io::CheckpointError("cannot open " + path);
  const nlohmann::json h = read_header(is, path, "kondo_eof.reduced");
  if (meta) *meta = h.value("meta", nlohmann::json::object());
  ReducedState s;
  s.chain.channels = h["channels"];
  s.trace_loss = h["trace_loss"];
  s.projection_loss = h["projection_loss"];
  const int steps = h["steps"];
  io::Reader r(is);
  s.chain.site_qn = read_qns(r);
  s.kept_dim = r.ints();
  s.env_dim = r.ints();
  for (int n = 0; n < steps; ++n) {
    s.chain.steps.push_back(read_step(r));
    s.chain.weights.push_back(r.doubles());
    s.chain.energy.push_back(r.doubles());
    s.chain.tail.push_back(r.vector());
  }
  return s;
}

}  // namespace kondo_eof
