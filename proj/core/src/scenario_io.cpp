#include "vmsim/scenario_io.hpp"

#include <zlib.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <nlohmann/json.hpp>
#include <numbers>
#include <set>
#include <sstream>

#include "vmsim/diagnostics.hpp"
#include "vmsim/error.hpp"

namespace vmsim {

using nlohmann::json;

namespace {

constexpr double kPi = std::numbers::pi;

[[noreturn]] void invalid(const std::string& msg) { throw Error(ErrorKind::ValidationError, msg); }

void allow_keys(const json& j, const std::string& where, std::initializer_list<const char*> keys) {
  if (!j.is_object()) invalid(where + " must be an object");
  std::set<std::string> ok(keys.begin(), keys.end());
  for (const auto& [k, v] : j.items()) {
    if (!ok.count(k)) invalid("unknown key '" + k + "' in " + where);
  }
}

template <class T>
T get_or(const json& j, const char* key, T fallback, const std::string& where) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    invalid(where + "." + key + ": " + e.what());
  }
}

Vec3 vec3_or(const json& j, const char* key, Vec3 fallback, const std::string& where) {
  if (!j.contains(key)) return fallback;
  const json& v = j.at(key);
  if (v.is_number()) {
    const double x = v.get<double>();
    return {x, x, x};
  }
  if (!v.is_array() || v.size() != 3) invalid(where + "." + key + " must be a number or a 3-array");
  try {
    return {v[0].get<double>(), v[1].get<double>(), v[2].get<double>()};
  } catch (const json::exception& e) {
    invalid(where + "." + key + ": " + e.what());
  }
}

Index3 index3_or(const json& j, const char* key, Index3 fallback, const std::string& where) {
  if (!j.contains(key)) return fallback;
  const json& v = j.at(key);
  if (!v.is_array() || v.size() != 3) invalid(where + "." + key + " must be a 3-array of integers");
  try {
    return {v[0].get<int>(), v[1].get<int>(), v[2].get<int>()};
  } catch (const json::exception& e) {
    invalid(where + "." + key + ": " + e.what());
  }
}

BoxSpec box_from(const json& j, const std::string& where) {
  allow_keys(j, where, {"lo", "hi"});
  return {index3_or(j, "lo", {0, 0, 0}, where), index3_or(j, "hi", {0, 0, 0}, where)};
}

json box_to(const BoxSpec& b) { return {{"lo", b.lo}, {"hi", b.hi}}; }

ProfileSpec profile_from(const json& j, const std::string& where) {
  allow_keys(j, where, {"kind", "density", "drift", "theta", "region", "velocity_lo", "velocity_hi", "path"});
  ProfileSpec p;
  p.kind = get_or<std::string>(j, "kind", p.kind, where);
  p.density = get_or<double>(j, "density", p.density, where);
  p.drift = vec3_or(j, "drift", p.drift, where);
  p.theta = get_or<double>(j, "theta", p.theta, where);
  if (j.contains("region") && !j.at("region").is_null()) p.region = box_from(j.at("region"), where + ".region");
  p.velocity_lo = vec3_or(j, "velocity_lo", p.velocity_lo, where);
  p.velocity_hi = vec3_or(j, "velocity_hi", p.velocity_hi, where);
  p.path = get_or<std::string>(j, "path", p.path, where);
  return p;
}

json profile_to(const ProfileSpec& p) {
  json j = {{"kind", p.kind},          {"density", p.density},         {"drift", p.drift},
            {"theta", p.theta},        {"velocity_lo", p.velocity_lo}, {"velocity_hi", p.velocity_hi},
            {"path", p.path}};
  j["region"] = p.region ? box_to(*p.region) : json(nullptr);
  return j;
}

Waveform waveform_from(const json& j, const std::string& where) {
  allow_keys(j, where, {"kind", "amplitude", "omega", "phase", "ramp_time"});
  Waveform w;
  const std::string kind = get_or<std::string>(j, "kind", "constant", where);
  if (kind == "constant") w.kind = WaveformKind::Constant;
  else if (kind == "sine") w.kind = WaveformKind::Sine;
  else if (kind == "ramp") w.kind = WaveformKind::Ramp;
  else invalid(where + ".kind must be constant, sine or ramp");
  w.amplitude = get_or<double>(j, "amplitude", w.amplitude, where);
  w.omega = get_or<double>(j, "omega", w.omega, where);
  w.phase = get_or<double>(j, "phase", w.phase, where);
  w.ramp_time = get_or<double>(j, "ramp_time", w.ramp_time, where);
  return w;
}

json waveform_to(const Waveform& w) {
  const char* kind = w.kind == WaveformKind::Sine ? "sine" : (w.kind == WaveformKind::Ramp ? "ramp" : "constant");
  return {{"kind", kind}, {"amplitude", w.amplitude}, {"omega", w.omega}, {"phase", w.phase}, {"ramp_time", w.ramp_time}};
}

bool box_inside(const BoxSpec& b, const Index3& lo, const Index3& hi) {
  for (int d = 0; d < 3; ++d)
    if (b.lo[d] < lo[d] || b.hi[d] > hi[d] || b.lo[d] >= b.hi[d]) return false;
  return true;
}

bool boxes_overlap(const BoxSpec& a, const BoxSpec& b) {
  for (int d = 0; d < 3; ++d)
    if (a.hi[d] <= b.lo[d] || b.hi[d] <= a.lo[d]) return false;
  return true;
}

void validate_profile(const ProfileSpec& p, const std::string& where) {
  static const std::set<std::string> kinds{"zero", "uniform_box", "maxwellian", "indicator", "tabulated"};
  if (!kinds.count(p.kind)) invalid(where + ".kind must be one of zero, uniform_box, maxwellian, indicator, tabulated");
  if (!(p.density >= 0.0)) invalid(where + ".density must be >= 0 (f0 >= 0)");
  if (p.kind == "maxwellian" && !(p.theta > 0.0)) invalid(where + ".theta must be positive");
  if (p.kind == "tabulated" && p.path.empty()) invalid(where + ": tabulated profile needs a path");
}

void validate_scenario(const Scenario& s) {
  PhaseGrid grid;
  try {
    grid = PhaseGrid(FieldGrid{s.cells, s.spacing, s.periodic}, CellBox{s.container.lo, s.container.hi},
                     s.velocity_cells, s.velocity_radius, s.mode);
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::ValidationError) throw;
    invalid(e.what());
  }
  for (std::size_t a = 0; a < s.species.size(); ++a) {
    const SpeciesSpec& sp = s.species[a];
    const std::string where = "species[" + std::to_string(a) + "]";
    sp.params.validate();
    if (!(sp.reflection >= 0.0 && sp.reflection <= 1.0)) invalid(where + ".reflection must lie in [0, 1]");
    validate_profile(sp.initial, where + ".initial");
    validate_profile(sp.inflow, where + ".inflow");
    if (sp.params.regime == BoundaryRegime::PurelyReflecting) {
      if (sp.reflection != 1.0 || !sp.reflection_path.empty()) invalid(where + ": reflecting species need reflection = 1");
      if (sp.inflow.kind != "zero") invalid(where + ": reflecting species cannot have an inflow source");
    } else if (sp.reflection_path.empty() && !(sp.reflection < 1.0)) {
      invalid(where + ": absorbing species need reflection < 1");
    }
    if (sp.initial.region && !box_inside(*sp.initial.region, s.container.lo, s.container.hi)) {
      invalid(where + ".initial.region must lie within the container");
    }
  }
  for (std::size_t r = 0; r < s.materials.size(); ++r) {
    const MaterialRegionSpec& m = s.materials[r];
    if (!box_inside(m.box, {0, 0, 0}, s.cells)) invalid("materials.regions[" + std::to_string(r) + "] lies outside the field box");
    for (int d = 0; d < 3; ++d)
      if (!(m.tensor.eps[d] > 0.0) || !(m.tensor.mu[d] > 0.0)) invalid("material tensors must be positive definite");
  }
  for (int d = 0; d < 3; ++d)
    if (!(s.background.eps[d] > 0.0) || !(s.background.mu[d] > 0.0)) invalid("background tensors must be positive definite");
  static const std::set<std::string> ext_kinds{"none", "loop", "box", "tabulated"};
  if (!ext_kinds.count(s.external.kind)) invalid("external_current.kind must be none, loop, box or tabulated");
  if (s.external.kind == "loop" || s.external.kind == "box") {
    if (!box_inside(s.external.region, {0, 0, 0}, s.cells)) invalid("external_current.region lies outside the field box");
    if (boxes_overlap(s.external.region, s.container)) invalid("external_current.region must be disjoint from the container");
  }
  static const std::set<std::string> field_kinds{"zero", "plane_wave", "tabulated"};
  if (!field_kinds.count(s.fields.kind)) invalid("fields.kind must be zero, plane_wave or tabulated");
  const RunSpec& r = s.run;
  if (!(r.dt >= 0.0)) invalid("run.dt must be >= 0");
  if (r.dt == 0.0 && !(r.cfl > 0.0 && r.cfl <= 1.0)) invalid("run.cfl must lie in (0, 1] when dt is derived");
  if (!(r.t_end >= 0.0)) invalid("run.t_end must be >= 0");
  if (r.cadence < 1) invalid("run.cadence must be >= 1");
  if (r.snapshot_cadence < 0) invalid("run.snapshot_cadence must be >= 0");
  if (r.k_max < 0) invalid("run.k_max must be >= 0");
  if (!(r.cutoff >= 0.0 && r.cutoff <= s.velocity_radius)) invalid("run.cutoff must lie in [0, velocity_radius]");
  for (double R : r.R_list)
    if (!(R > 0.0 && R <= s.velocity_radius)) invalid("run.R_list entries must lie in (0, velocity_radius]");
}

Scenario scenario_from_json(const json& j) {
  allow_keys(j, "scenario", {"name", "grid", "species", "materials", "external_current", "fields", "run"});
  Scenario s;
  s.name = get_or<std::string>(j, "name", s.name, "scenario");
  if (j.contains("grid")) {
    const json& g = j.at("grid");
    allow_keys(g, "grid", {"mode", "cells", "spacing", "periodic", "container", "velocity_cells", "velocity_radius"});
    const std::string mode = get_or<std::string>(g, "mode", "slab1d3v", "grid");
    if (mode == "slab1d3v") s.mode = GridMode::Slab1d3v;
    else if (mode == "full3d3v") s.mode = GridMode::Full3d3v;
    else invalid("grid.mode must be slab1d3v or full3d3v");
    s.cells = index3_or(g, "cells", s.cells, "grid");
    s.spacing = vec3_or(g, "spacing", s.spacing, "grid");
    if (g.contains("periodic")) {
      const json& p = g.at("periodic");
      if (!p.is_array() || p.size() != 3) invalid("grid.periodic must be a 3-array of booleans");
      for (int d = 0; d < 3; ++d) s.periodic[d] = p[d].get<bool>();
    }
    s.container = g.contains("container") ? box_from(g.at("container"), "grid.container") : BoxSpec{{0, 0, 0}, s.cells};
    s.velocity_cells = get_or<int>(g, "velocity_cells", s.velocity_cells, "grid");
    s.velocity_radius = get_or<double>(g, "velocity_radius", s.velocity_radius, "grid");
  } else {
    s.container = {{0, 0, 0}, s.cells};
  }
  if (j.contains("species")) {
    if (!j.at("species").is_array()) invalid("species must be an array");
    for (std::size_t a = 0; a < j.at("species").size(); ++a) {
      const json& x = j.at("species")[a];
      const std::string where = "species[" + std::to_string(a) + "]";
      allow_keys(x, where, {"name", "charge", "rest_mass", "regime", "reflection", "reflection_path", "inflow", "initial"});
      SpeciesSpec sp;
      sp.params.name = get_or<std::string>(x, "name", "species" + std::to_string(a), where);
      sp.params.charge = get_or<double>(x, "charge", 1.0, where);
      sp.params.rest_mass = get_or<double>(x, "rest_mass", 1.0, where);
      const std::string regime = get_or<std::string>(x, "regime", "absorbing", where);
      if (regime == "absorbing") sp.params.regime = BoundaryRegime::PartiallyAbsorbing;
      else if (regime == "reflecting") sp.params.regime = BoundaryRegime::PurelyReflecting;
      else invalid(where + ".regime must be absorbing or reflecting");
      sp.reflection = get_or<double>(x, "reflection", sp.params.regime == BoundaryRegime::PurelyReflecting ? 1.0 : 0.0, where);
      sp.reflection_path = get_or<std::string>(x, "reflection_path", "", where);
      if (x.contains("inflow")) sp.inflow = profile_from(x.at("inflow"), where + ".inflow");
      if (x.contains("initial")) sp.initial = profile_from(x.at("initial"), where + ".initial");
      s.species.push_back(sp);
    }
  }
  if (j.contains("materials")) {
    const json& m = j.at("materials");
    allow_keys(m, "materials", {"background", "regions"});
    if (m.contains("background")) {
      allow_keys(m.at("background"), "materials.background", {"eps", "mu"});
      s.background.eps = vec3_or(m.at("background"), "eps", s.background.eps, "materials.background");
      s.background.mu = vec3_or(m.at("background"), "mu", s.background.mu, "materials.background");
    }
    if (m.contains("regions")) {
      for (std::size_t r = 0; r < m.at("regions").size(); ++r) {
        const json& x = m.at("regions")[r];
        const std::string where = "materials.regions[" + std::to_string(r) + "]";
        allow_keys(x, where, {"box", "eps", "mu"});
        MaterialRegionSpec reg;
        if (!x.contains("box")) invalid(where + " needs a box");
        reg.box = box_from(x.at("box"), where + ".box");
        reg.tensor.eps = vec3_or(x, "eps", reg.tensor.eps, where);
        reg.tensor.mu = vec3_or(x, "mu", reg.tensor.mu, where);
        s.materials.push_back(reg);
      }
    }
  }
  if (j.contains("external_current")) {
    const json& e = j.at("external_current");
    allow_keys(e, "external_current", {"kind", "region", "axis", "direction", "waveform", "path"});
    s.external.kind = get_or<std::string>(e, "kind", s.external.kind, "external_current");
    if (e.contains("region")) s.external.region = box_from(e.at("region"), "external_current.region");
    s.external.axis = get_or<int>(e, "axis", s.external.axis, "external_current");
    s.external.direction = vec3_or(e, "direction", s.external.direction, "external_current");
    if (e.contains("waveform")) s.external.waveform = waveform_from(e.at("waveform"), "external_current.waveform");
    s.external.path = get_or<std::string>(e, "path", "", "external_current");
  }
  if (j.contains("fields")) {
    const json& f = j.at("fields");
    allow_keys(f, "fields", {"kind", "amplitude", "mode", "e_path", "h_path", "poisson"});
    s.fields.kind = get_or<std::string>(f, "kind", s.fields.kind, "fields");
    s.fields.amplitude = get_or<double>(f, "amplitude", s.fields.amplitude, "fields");
    s.fields.mode = get_or<int>(f, "mode", s.fields.mode, "fields");
    s.fields.e_path = get_or<std::string>(f, "e_path", "", "fields");
    s.fields.h_path = get_or<std::string>(f, "h_path", "", "fields");
    s.fields.poisson = get_or<bool>(f, "poisson", s.fields.poisson, "fields");
  }
  if (j.contains("run")) {
    const json& r = j.at("run");
    allow_keys(r, "run", {"dt", "cfl", "t_end", "cadence", "snapshot_cadence", "cutoff", "R_list", "k_max", "threshold"});
    RunSpec& run = s.run;
    run.dt = get_or<double>(r, "dt", run.dt, "run");
    run.cfl = get_or<double>(r, "cfl", run.cfl, "run");
    run.t_end = get_or<double>(r, "t_end", run.t_end, "run");
    run.cadence = get_or<int>(r, "cadence", run.cadence, "run");
    run.snapshot_cadence = get_or<int>(r, "snapshot_cadence", run.snapshot_cadence, "run");
    run.cutoff = get_or<double>(r, "cutoff", run.cutoff, "run");
    run.R_list = get_or<std::vector<double>>(r, "R_list", run.R_list, "run");
    run.k_max = get_or<int>(r, "k_max", run.k_max, "run");
    run.threshold = get_or<double>(r, "threshold", run.threshold, "run");
  }
  validate_scenario(s);
  return s;
}

json scenario_to_json(const Scenario& s) {
  json j;
  j["name"] = s.name;
  j["grid"] = {{"mode", to_string(s.mode)},
               {"cells", s.cells},
               {"spacing", s.spacing},
               {"periodic", s.periodic},
               {"container", box_to(s.container)},
               {"velocity_cells", s.velocity_cells},
               {"velocity_radius", s.velocity_radius}};
  j["species"] = json::array();
  for (const SpeciesSpec& sp : s.species) {
    j["species"].push_back({{"name", sp.params.name},
                            {"charge", sp.params.charge},
                            {"rest_mass", sp.params.rest_mass},
                            {"regime", to_string(sp.params.regime)},
                            {"reflection", sp.reflection},
                            {"reflection_path", sp.reflection_path},
                            {"inflow", profile_to(sp.inflow)},
                            {"initial", profile_to(sp.initial)}});
  }
  json regions = json::array();
  for (const MaterialRegionSpec& m : s.materials)
    regions.push_back({{"box", box_to(m.box)}, {"eps", m.tensor.eps}, {"mu", m.tensor.mu}});
  j["materials"] = {{"background", {{"eps", s.background.eps}, {"mu", s.background.mu}}}, {"regions", regions}};
  j["external_current"] = {{"kind", s.external.kind},
                           {"region", box_to(s.external.region)},
                           {"axis", s.external.axis},
                           {"direction", s.external.direction},
                           {"waveform", waveform_to(s.external.waveform)},
                           {"path", s.external.path}};
  j["fields"] = {{"kind", s.fields.kind},     {"amplitude", s.fields.amplitude}, {"mode", s.fields.mode},
                 {"e_path", s.fields.e_path}, {"h_path", s.fields.h_path},       {"poisson", s.fields.poisson}};
  j["run"] = {{"dt", s.run.dt},
              {"cfl", s.run.cfl},
              {"t_end", s.run.t_end},
              {"cadence", s.run.cadence},
              {"snapshot_cadence", s.run.snapshot_cadence},
              {"cutoff", s.run.cutoff},
              {"R_list", s.run.R_list},
              {"k_max", s.run.k_max},
              {"threshold", s.run.threshold}};
  return j;
}

std::filesystem::path resolve(const Scenario& s, const std::string& p) {
  const std::filesystem::path path(p);
  return path.is_absolute() ? path : s.base_dir / path;
}

double profile_value(const ProfileSpec& p, const Vec3& v) {
  if (p.kind == "maxwellian") {
    const Vec3 d{v[0] - p.drift[0], v[1] - p.drift[1], v[2] - p.drift[2]};
    return p.density * std::exp(-dot(d, d) / p.theta);
  }
  bool inside = true;
  for (int a = 0; a < 3; ++a) inside = inside && v[a] >= p.velocity_lo[a] && v[a] <= p.velocity_hi[a];
  if (!inside) return 0.0;
  return p.kind == "indicator" ? 1.0 : p.density;
}

bool in_region(const ProfileSpec& p, const PhaseGrid& g, std::size_t s) {
  if (!p.region) return true;
  const Index3 l = g.space_coords(s);
  const CellBox& c = g.container();
  return CellBox{p.region->lo, p.region->hi}.contains(l[0] + c.lo[0], l[1] + c.lo[1], l[2] + c.lo[2]);
}

void expect_dims(const SnapshotHeader& h, const std::vector<std::size_t>& dims, const std::string& what) {
  if (h.dims != dims) throw Error(ErrorKind::ShapeMismatch, what + ": tabulated dimensions do not match the grid");
}

Distribution initial_distribution(const Scenario& sc, const PhaseGrid& g, const ProfileSpec& p) {
  Distribution d = Distribution::zeros(g);
  const std::size_t nv = g.velocity_count();
  if (p.kind == "zero") return d;
  if (p.kind == "tabulated") {
    SnapshotHeader h;
    d.values = read_snapshot(resolve(sc, p.path), &h);
    const auto n = static_cast<std::size_t>(g.velocity_cells());
    expect_dims(h, {static_cast<std::size_t>(g.space_extent(0)), static_cast<std::size_t>(g.space_extent(1)),
                    static_cast<std::size_t>(g.space_extent(2)), n, n, n},
                "initial distribution");
    if (d.min() < 0.0) invalid("tabulated initial distribution has negative values");
    return d;
  }
  for (std::size_t s = 0; s < g.space_count(); ++s) {
    if (!in_region(p, g, s)) continue;
    for (std::size_t v = 0; v < nv; ++v) d.values[s * nv + v] = profile_value(p, g.velocity(v));
  }
  return d;
}

BoundarySpec boundary_for(const Scenario& sc, const PhaseGrid& g, const SpeciesSpec& sp) {
  BoundarySpec bc;
  bc.reflection = sp.reflection;
  const std::vector<WallCell> walls = wall_cells(g);
  const std::size_t nv = g.velocity_count();
  const auto n = static_cast<std::size_t>(g.velocity_cells());
  if (!sp.reflection_path.empty()) {
    SnapshotHeader h;
    bc.reflection_table = read_snapshot(resolve(sc, sp.reflection_path), &h);
    expect_dims(h, {walls.size(), n, n, n}, "reflection table");
  }
  if (sp.inflow.kind == "tabulated") {
    SnapshotHeader h;
    bc.inflow = read_snapshot(resolve(sc, sp.inflow.path), &h);
    expect_dims(h, {walls.size(), n, n, n}, "inflow table");
  } else if (sp.inflow.kind != "zero") {
    bc.inflow.assign(walls.size() * nv, 0.0);
    const Kinematics kin(g, sp.params.rest_mass);
    for (std::size_t w = 0; w < walls.size(); ++w) {
      if (!in_region(sp.inflow, g, walls[w].space)) continue;
      for (std::size_t v = 0; v < nv; ++v) {
        if (!(kin.v_hat[v][walls[w].axis] * walls[w].side < 0.0)) continue;
        bc.inflow[w * nv + v] = profile_value(sp.inflow, g.velocity(v));
      }
    }
  }
  return bc;
}

std::string fmt(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

void write_le(std::ostream& out, const std::vector<double>& data) {
  std::vector<unsigned char> bytes(data.size() * 8);
  for (std::size_t i = 0; i < data.size(); ++i) {
    std::uint64_t u = 0;
    std::memcpy(&u, &data[i], 8);
    for (int b = 0; b < 8; ++b) bytes[i * 8 + static_cast<std::size_t>(b)] = static_cast<unsigned char>((u >> (8 * b)) & 0xffu);
  }
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

std::uint32_t crc_of(const std::vector<unsigned char>& bytes) {
  uLong crc = crc32(0L, Z_NULL, 0);
  std::size_t off = 0;
  while (off < bytes.size()) {
    const std::size_t chunk = std::min<std::size_t>(bytes.size() - off, 1u << 30);
    crc = crc32(crc, bytes.data() + off, static_cast<uInt>(chunk));
    off += chunk;
  }
  return static_cast<std::uint32_t>(crc);
}

std::vector<unsigned char> le_bytes(const std::vector<double>& data) {
  std::ostringstream os(std::ios::binary);
  write_le(os, data);
  const std::string s = os.str();
  return {s.begin(), s.end()};
}

json tally_to(const TransportTally& t) {
  return {{"out_number", t.out_number}, {"in_number", t.in_number}, {"out_kin", t.out_kin},
          {"out_kin_R", t.out_kin_R},   {"in_kin", t.in_kin},       {"g_number", t.g_number},
          {"g_kin", t.g_kin},           {"out_pow", t.out_pow},     {"g_pow", t.g_pow},
          {"out_max", t.out_max},       {"g_max", t.g_max},         {"work_R", t.work_R},
          {"leak_number", t.leak_number}, {"leak_kin", t.leak_kin}};
}

TransportTally tally_from(const json& j) {
  TransportTally t;
  t.out_number = j.at("out_number").get<double>();
  t.in_number = j.at("in_number").get<double>();
  t.out_kin = j.at("out_kin").get<double>();
  t.out_kin_R = j.at("out_kin_R").get<double>();
  t.in_kin = j.at("in_kin").get<double>();
  t.g_number = j.at("g_number").get<double>();
  t.g_kin = j.at("g_kin").get<double>();
  t.out_pow = j.at("out_pow").get<std::array<double, 3>>();
  t.g_pow = j.at("g_pow").get<std::array<double, 3>>();
  t.out_max = j.at("out_max").get<double>();
  t.g_max = j.at("g_max").get<double>();
  t.work_R = j.at("work_R").get<double>();
  t.leak_number = j.at("leak_number").get<double>();
  t.leak_kin = j.at("leak_kin").get<double>();
  return t;
}

}  // namespace

bool Scenario::operator==(const Scenario& o) const {
  return name == o.name && mode == o.mode && cells == o.cells && spacing == o.spacing && periodic == o.periodic &&
         container == o.container && velocity_cells == o.velocity_cells && velocity_radius == o.velocity_radius &&
         species == o.species && background == o.background && materials == o.materials && external == o.external &&
         fields == o.fields && run == o.run;
}

void apply_overrides(std::string& json_text, const std::vector<std::string>& overrides) {
  if (overrides.empty()) return;
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw Error(ErrorKind::ParseError, "at byte " + std::to_string(e.byte) + ": " + e.what());
  }
  for (const std::string& o : overrides) {
    const auto eq = o.find('=');
    if (eq == std::string::npos || eq == 0) throw Error(ErrorKind::ParseError, "override '" + o + "' is not KEY=VALUE");
    std::string key = o.substr(0, eq);
    const std::string value = o.substr(eq + 1);
    if (key.find('.') == std::string::npos) key = "run." + key;
    std::string pointer;
    std::stringstream ks(key);
    for (std::string part; std::getline(ks, part, '.');) pointer += "/" + part;
    json parsed;
    try {
      parsed = json::parse(value);
    } catch (const json::parse_error&) {
      parsed = value;
    }
    try {
      j[json::json_pointer(pointer)] = parsed;
    } catch (const json::exception& e) {
      throw Error(ErrorKind::ParseError, "override '" + o + "': " + e.what());
    }
  }
  json_text = j.dump(2);
}

Scenario parse_scenario(const std::string& text, const std::vector<std::string>& overrides) {
  std::string body = text;
  apply_overrides(body, overrides);
  json j;
  try {
    j = json::parse(body);
  } catch (const json::parse_error& e) {
    throw Error(ErrorKind::ParseError, "at byte " + std::to_string(e.byte) + ": " + e.what());
  }
  return scenario_from_json(j);
}

Scenario load_scenario(const std::filesystem::path& path, const std::vector<std::string>& overrides) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::IoError, "cannot open scenario " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  Scenario s = parse_scenario(ss.str(), overrides);
  s.base_dir = path.parent_path();
  return s;
}

std::string serialize_scenario(const Scenario& s) { return scenario_to_json(s).dump(2); }

RunSetup build_setup(const Scenario& sc) {
  validate_scenario(sc);
  const FieldGrid fg{sc.cells, sc.spacing, sc.periodic};
  const CellBox container{sc.container.lo, sc.container.hi};
  RunSetup setup;
  setup.grid = PhaseGrid(fg, container, sc.velocity_cells, sc.velocity_radius, sc.mode);
  const PhaseGrid& g = setup.grid;

  for (const SpeciesSpec& sp : sc.species) {
    setup.species.push_back(sp.params);
    setup.boundaries.push_back(boundary_for(sc, g, sp));
    setup.f0.push_back(initial_distribution(sc, g, sp.initial));
  }

  std::vector<MaterialRegion> regions;
  auto tensor = [](const Vec3& d) { return Sym3::diagonal(d[0], d[1], d[2]); };
  regions.push_back({CellBox{{0, 0, 0}, fg.cells}, tensor(sc.background.eps), tensor(sc.background.mu)});
  // The container is vacuum regardless of the background.
  regions.push_back({container, Sym3::identity(), Sym3::identity()});
  for (const MaterialRegionSpec& m : sc.materials)
    regions.push_back({CellBox{m.box.lo, m.box.hi}, tensor(m.tensor.eps), tensor(m.tensor.mu)});
  double lo = 1.0, hi = 1.0;
  for (const MaterialRegion& r : regions)
    for (int d = 0; d < 3; ++d) {
      lo = std::min({lo, r.eps.diag(d), r.mu.diag(d)});
      hi = std::max({hi, r.eps.diag(d), r.mu.diag(d)});
    }
  setup.material = MaterialField::from_regions(fg, container, regions, lo, hi);
  validate_spd(setup.material);
  const YeeMaterial yee = yee_material(setup.material);

  const ExternalSpec& ex = sc.external;
  const CellBox ext_box{ex.region.lo, ex.region.hi};
  if (ex.kind == "none") setup.external = ExternalCurrent::none(fg);
  else if (ex.kind == "loop") setup.external = ExternalCurrent::loop(fg, ext_box, ex.axis, ex.waveform);
  else if (ex.kind == "box") setup.external = ExternalCurrent::box(fg, ext_box, ex.direction, ex.waveform);
  else {
    setup.external = ExternalCurrent::none(fg);
    SnapshotHeader h;
    const std::vector<double> flat = read_snapshot(resolve(sc, ex.path), &h);
    expect_dims(h, {3, static_cast<std::size_t>(fg.nodes(0)), static_cast<std::size_t>(fg.nodes(1)),
                    static_cast<std::size_t>(fg.nodes(2))},
                "external current");
    for (int m = 0; m < 3; ++m)
      std::copy_n(flat.begin() + static_cast<std::ptrdiff_t>(m * fg.node_count()), fg.node_count(),
                  setup.external.profile[m].begin());
    setup.external.waveform = ex.waveform;
  }

  EmField& fld = setup.field0;
  fld = EmField::zeros(fg);
  if (sc.fields.kind == "plane_wave") {
    // E_y = H_z = A cos(k x): a vacuum wave travelling towards +x.
    const double L = fg.cells[0] * fg.spacing[0];
    const double k = 2.0 * kPi * sc.fields.mode / L;
    for (int i = 0; i < fg.nodes(0); ++i)
      for (int j = 0; j < fg.nodes(1); ++j)
        for (int kk = 0; kk < fg.nodes(2); ++kk) {
          if (e_point_valid(fg, 1, i, j, kk)) fld.E[1][fg.node(i, j, kk)] = sc.fields.amplitude * std::cos(k * (i + 0.5) * fg.spacing[0]);
          if (h_point_valid(fg, 2, i, j, kk)) fld.H[2][fg.node(i, j, kk)] = sc.fields.amplitude * std::cos(k * i * fg.spacing[0]);
        }
  } else if (sc.fields.kind == "tabulated") {
    const std::vector<std::size_t> dims{3, static_cast<std::size_t>(fg.nodes(0)), static_cast<std::size_t>(fg.nodes(1)),
                                        static_cast<std::size_t>(fg.nodes(2))};
    for (int which = 0; which < 2; ++which) {
      const std::string& p = which == 0 ? sc.fields.e_path : sc.fields.h_path;
      if (p.empty()) continue;
      SnapshotHeader h;
      const std::vector<double> flat = read_snapshot(resolve(sc, p), &h);
      expect_dims(h, dims, which == 0 ? "initial E" : "initial H");
      StaggeredField& target = which == 0 ? fld.E : fld.H;
      for (int m = 0; m < 3; ++m)
        std::copy_n(flat.begin() + static_cast<std::ptrdiff_t>(m * fg.node_count()), fg.node_count(), target[m].begin());
    }
  }
  fld.H_prev = fld.H;

  if (sc.fields.poisson) {
    const Moments mom = moments(g, setup.f0, setup.species);
    std::vector<double> rho(fg.cell_count(), 0.0);
    for (std::size_t s = 0; s < g.space_count(); ++s) rho[g.field_cell(s)] += mom.rho[s];
    for (std::size_t c = 0; c < rho.size(); ++c) rho[c] += setup.external.rho_u_init[c];
    const StaggeredField Es = solve_poisson(yee, rho, 1e-10);
    for (int m = 0; m < 3; ++m)
      for (std::size_t n = 0; n < fg.node_count(); ++n) fld.E[m][n] += Es[m][n];
    double scale = 0.0;
    for (double x : rho) scale += 16.0 * kPi * kPi * x * x;
    scale = std::sqrt(scale * fg.cell_volume());
    const double res = divergence_residuals(fld, yee, rho).gauss_residual_norm;
    if (res > 1e-10 * std::max(1.0, scale)) {
      throw Error(ErrorKind::InitialConstraintViolation,
                  "initial Gauss residual " + fmt(res) + " after the constraint solve");
    }
  }

  setup.t_end = sc.run.t_end;
  setup.cadence = sc.run.cadence;
  setup.cutoff = sc.run.cutoff;
  if (sc.run.dt > 0.0) {
    setup.dt = sc.run.dt;
  } else {
    double dt = maxwell_stable_dt(yee);
    for (std::size_t a = 0; a < setup.species.size(); ++a) {
      const VlasovTransport tr(g, setup.species[a], setup.boundaries[a]);
      dt = std::min(dt, tr.stable_dt());
    }
    setup.dt = sc.run.cfl * dt;
  }
  return setup;
}

void write_snapshot(const std::filesystem::path& path, const std::vector<double>& data, SnapshotHeader header) {
  std::size_t n = 1;
  for (std::size_t d : header.dims) n *= d;
  if (header.dims.empty() || n != data.size()) throw Error(ErrorKind::ShapeMismatch, "snapshot dims do not match the data length");
  const std::vector<unsigned char> bytes = le_bytes(data);
  header.checksum = crc_of(bytes);
  {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorKind::IoError, "cannot write " + path.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error(ErrorKind::IoError, "write failed for " + path.string());
  }
  std::ofstream hdr(path.string() + ".hdr", std::ios::trunc);
  if (!hdr) throw Error(ErrorKind::IoError, "cannot write header for " + path.string());
  hdr << "format vmsim-snapshot 1\n";
  hdr << "dtype float64-le\n";
  hdr << "order C\n";
  hdr << "dims";
  for (std::size_t d : header.dims) hdr << ' ' << d;
  hdr << "\naxes";
  for (const std::string& a : header.axes) hdr << ' ' << a;
  hdr << "\ntime " << fmt(header.time) << "\n";
  hdr << "grid " << header.grid << "\n";
  char crc[16];
  std::snprintf(crc, sizeof crc, "%08x", header.checksum);
  hdr << "crc32 " << crc << "\n";
  if (!hdr) throw Error(ErrorKind::IoError, "write failed for " + path.string() + ".hdr");
}

std::vector<double> read_snapshot(const std::filesystem::path& path, SnapshotHeader* header) {
  std::ifstream hdr(path.string() + ".hdr");
  if (!hdr) throw Error(ErrorKind::IoError, "missing snapshot header " + path.string() + ".hdr");
  SnapshotHeader h;
  bool have_crc = false;
  for (std::string line; std::getline(hdr, line);) {
    std::istringstream ls(line);
    std::string key;
    ls >> key;
    if (key == "dims") {
      for (std::size_t d; ls >> d;) h.dims.push_back(d);
    } else if (key == "axes") {
      for (std::string a; ls >> a;) h.axes.push_back(a);
    } else if (key == "time") {
      std::string t;
      ls >> t;
      h.time = std::stod(t);
    } else if (key == "grid") {
      std::getline(ls >> std::ws, h.grid);
    } else if (key == "crc32") {
      std::string c;
      ls >> c;
      h.checksum = static_cast<std::uint32_t>(std::stoul(c, nullptr, 16));
      have_crc = true;
    }
  }
  if (!have_crc || h.dims.empty()) throw Error(ErrorKind::ShapeMismatch, "incomplete snapshot header " + path.string());
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::IoError, "cannot open snapshot " + path.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  std::size_t n = 1;
  for (std::size_t d : h.dims) n *= d;
  if (bytes.size() != n * 8) {
    throw Error(ErrorKind::ShapeMismatch, "snapshot " + path.string() + " holds " + std::to_string(bytes.size()) +
                                              " bytes, header dims require " + std::to_string(n * 8));
  }
  if (crc_of(bytes) != h.checksum) throw Error(ErrorKind::ChecksumMismatch, "checksum mismatch in " + path.string());
  std::vector<double> data(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::uint64_t u = 0;
    for (int b = 0; b < 8; ++b) u |= static_cast<std::uint64_t>(bytes[i * 8 + static_cast<std::size_t>(b)]) << (8 * b);
    std::memcpy(&data[i], &u, 8);
  }
  if (header != nullptr) *header = h;
  return data;
}

std::string diagnostics_header(const std::vector<SpeciesParams>& species) {
  std::string h = "t";
  for (const SpeciesParams& s : species) h += ",ke_" + s.name;
  h += ",em_energy,pnorm_1,pnorm_2,pnorm_inf,jint_l43,charge_int,boundary_out,boundary_in,S_total,T_total,"
       "divB_norm,gauss_residual,energy_bound_rhs,energy_slack,jint_slack";
  return h;
}

void append_diagnostics(const DiagnosticsRecord& r, std::ostream& out) {
  // Species norms combine as (sum ||f_a||_p^p)^{1/p}, and max for p = infinity.
  double p1 = 0.0, p2 = 0.0, pinf = 0.0;
  for (const SpeciesSample& s : r.species) {
    p1 += s.pnorm[0];
    p2 += s.pnorm[2] * s.pnorm[2];
    pinf = std::max(pinf, s.pnorm[3]);
  }
  std::string row = fmt(r.t);
  for (const SpeciesSample& s : r.species) row += "," + fmt(s.ke);
  for (double x : {r.em_energy, p1, std::sqrt(p2), pinf, r.jint_l43, r.charge_int, r.boundary_out, r.boundary_in,
                   r.S_total, r.T_total, r.divB_norm, r.gauss_residual, r.energy_bound_rhs, r.energy_slack,
                   r.jint_slack})
    row += "," + fmt(x);
  out << row << '\n';
  if (!out) throw Error(ErrorKind::IoError, "failed to append a diagnostics row");
}

std::string history_to_json(const RunHistory& h) {
  json j;
  j["grid"] = {{"mode", to_string(h.grid.mode())},
               {"cells", h.grid.field().cells},
               {"spacing", h.grid.field().spacing},
               {"periodic", h.grid.field().periodic},
               {"container", {{"lo", h.grid.container().lo}, {"hi", h.grid.container().hi}}},
               {"velocity_cells", h.grid.velocity_cells()},
               {"velocity_radius", h.grid.velocity_radius()}};
  j["species"] = json::array();
  for (const SpeciesParams& s : h.species)
    j["species"].push_back({{"name", s.name}, {"charge", s.charge}, {"rest_mass", s.rest_mass}, {"regime", to_string(s.regime)}});
  j["a0"] = h.a0;
  j["g_max"] = h.g_max;
  j["dt"] = h.dt;
  j["cutoff"] = h.cutoff;
  j["sigma_lo"] = h.sigma_lo;
  j["sigma_hi"] = h.sigma_hi;
  j["S_faces"] = h.S_faces;
  j["T_faces"] = h.T_faces;
  json recs = json::array();
  for (const DiagnosticsRecord& r : h.records) {
    json sp = json::array();
    for (const SpeciesSample& s : r.species)
      sp.push_back({{"mass", s.mass},
                    {"ke", s.ke},
                    {"ke_R", s.ke_R},
                    {"density_l43_R", s.density_l43_R},
                    {"f_min", s.f_min},
                    {"f_max", s.f_max},
                    {"pnorm", s.pnorm},
                    {"tally", tally_to(s.tally)},
                    {"trace_out", s.trace_out},
                    {"trace_in", s.trace_in}});
    recs.push_back({{"t", r.t},
                    {"step", r.step},
                    {"species", sp},
                    {"em_energy", r.em_energy},
                    {"field_norm", r.field_norm},
                    {"jint_l43", r.jint_l43},
                    {"charge_int", r.charge_int},
                    {"boundary_out", r.boundary_out},
                    {"boundary_in", r.boundary_in},
                    {"S_total", r.S_total},
                    {"T_total", r.T_total},
                    {"divB_norm", r.divB_norm},
                    {"gauss_residual", r.gauss_residual},
                    {"gauss_residual_no_layer", r.gauss_residual_no_layer},
                    {"gauss_interior", r.gauss_interior},
                    {"work_midpoint", r.work_midpoint},
                    {"work_trapezoid", r.work_trapezoid},
                    {"j_l1l2", r.j_l1l2},
                    {"u_l1l2", r.u_l1l2},
                    {"rho_u_total", r.rho_u_total},
                    {"energy_bound_rhs", r.energy_bound_rhs},
                    {"energy_slack", r.energy_slack},
                    {"jint_slack", r.jint_slack}});
  }
  j["records"] = recs;
  return j.dump();
}

RunHistory history_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw Error(ErrorKind::ParseError, "history at byte " + std::to_string(e.byte) + ": " + e.what());
  }
  try {
    RunHistory h;
    const json& g = j.at("grid");
    const FieldGrid fg{g.at("cells").get<Index3>(), g.at("spacing").get<Vec3>(), g.at("periodic").get<std::array<bool, 3>>()};
    const CellBox box{g.at("container").at("lo").get<Index3>(), g.at("container").at("hi").get<Index3>()};
    const GridMode mode = g.at("mode").get<std::string>() == "full3d3v" ? GridMode::Full3d3v : GridMode::Slab1d3v;
    h.grid = PhaseGrid(fg, box, g.at("velocity_cells").get<int>(), g.at("velocity_radius").get<double>(), mode);
    for (const json& s : j.at("species")) {
      SpeciesParams p;
      p.name = s.at("name").get<std::string>();
      p.charge = s.at("charge").get<double>();
      p.rest_mass = s.at("rest_mass").get<double>();
      p.regime = s.at("regime").get<std::string>() == "reflecting" ? BoundaryRegime::PurelyReflecting
                                                                   : BoundaryRegime::PartiallyAbsorbing;
      h.species.push_back(p);
    }
    h.a0 = j.at("a0").get<std::vector<double>>();
    h.g_max = j.at("g_max").get<std::vector<double>>();
    h.dt = j.at("dt").get<double>();
    h.cutoff = j.at("cutoff").get<double>();
    h.sigma_lo = j.at("sigma_lo").get<double>();
    h.sigma_hi = j.at("sigma_hi").get<double>();
    h.S_faces = j.at("S_faces").get<std::vector<std::vector<double>>>();
    h.T_faces = j.at("T_faces").get<std::vector<std::vector<double>>>();
    for (const json& x : j.at("records")) {
      DiagnosticsRecord r;
      r.t = x.at("t").get<double>();
      r.step = x.at("step").get<long>();
      for (const json& s : x.at("species")) {
        SpeciesSample ss;
        ss.mass = s.at("mass").get<double>();
        ss.ke = s.at("ke").get<double>();
        ss.ke_R = s.at("ke_R").get<double>();
        ss.density_l43_R = s.at("density_l43_R").get<double>();
        ss.f_min = s.at("f_min").get<double>();
        ss.f_max = s.at("f_max").get<double>();
        ss.pnorm = s.at("pnorm").get<std::array<double, kNormCount>>();
        ss.tally = tally_from(s.at("tally"));
        ss.trace_out = s.at("trace_out").get<double>();
        ss.trace_in = s.at("trace_in").get<double>();
        r.species.push_back(ss);
      }
      r.em_energy = x.at("em_energy").get<double>();
      r.field_norm = x.at("field_norm").get<double>();
      r.jint_l43 = x.at("jint_l43").get<double>();
      r.charge_int = x.at("charge_int").get<double>();
      r.boundary_out = x.at("boundary_out").get<double>();
      r.boundary_in = x.at("boundary_in").get<double>();
      r.S_total = x.at("S_total").get<double>();
      r.T_total = x.at("T_total").get<double>();
      r.divB_norm = x.at("divB_norm").get<double>();
      r.gauss_residual = x.at("gauss_residual").get<double>();
      r.gauss_residual_no_layer = x.at("gauss_residual_no_layer").get<double>();
      r.gauss_interior = x.at("gauss_interior").get<double>();
      r.work_midpoint = x.at("work_midpoint").get<double>();
      r.work_trapezoid = x.at("work_trapezoid").get<double>();
      r.j_l1l2 = x.at("j_l1l2").get<double>();
      r.u_l1l2 = x.at("u_l1l2").get<double>();
      r.rho_u_total = x.at("rho_u_total").get<double>();
      r.energy_bound_rhs = x.at("energy_bound_rhs").get<double>();
      r.energy_slack = x.at("energy_slack").get<double>();
      r.jint_slack = x.at("jint_slack").get<double>();
      h.records.push_back(std::move(r));
    }
    return h;
  } catch (const json::exception& e) {
    throw Error(ErrorKind::MissingHistory, std::string("history is incomplete: ") + e.what());
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::ValidationError) throw Error(ErrorKind::MissingHistory, e.what());
    throw;
  }
}

namespace {

std::string grid_meta(const FieldGrid& g) {
  std::ostringstream os;
  os << "cells=" << g.cells[0] << "x" << g.cells[1] << "x" << g.cells[2] << " spacing=" << fmt(g.spacing[0]) << ","
     << fmt(g.spacing[1]) << "," << fmt(g.spacing[2]) << " periodic=" << g.periodic[0] << g.periodic[1] << g.periodic[2];
  return os.str();
}

std::vector<double> flatten(const StaggeredField& f) {
  std::vector<double> out;
  for (const auto& c : f) out.insert(out.end(), c.begin(), c.end());
  return out;
}

void write_text(const std::filesystem::path& p, const std::string& s) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::IoError, "cannot write " + p.string());
  out << s;
  if (!out) throw Error(ErrorKind::IoError, "write failed for " + p.string());
}

}  // namespace

RunArtifacts run_to_directory(const Scenario& sc, const std::filesystem::path& out) {
  std::error_code ec;
  std::filesystem::create_directories(out, ec);
  if (ec) throw Error(ErrorKind::IoError, "cannot create " + out.string() + ": " + ec.message());
  const RunSetup setup = build_setup(sc);
  const PhaseGrid& g = setup.grid;
  const FieldGrid& fg = g.field();
  RunArtifacts art;
  art.csv = out / "diagnostics.csv";
  art.history = out / "history.json";
  art.manifest = out / "manifest.json";
  const long N = setup.steps();
  const int snap = sc.run.snapshot_cadence;
  const auto n = static_cast<std::size_t>(g.velocity_cells());
  const std::vector<std::size_t> fdims{static_cast<std::size_t>(g.space_extent(0)), static_cast<std::size_t>(g.space_extent(1)),
                                       static_cast<std::size_t>(g.space_extent(2)), n, n, n};
  const std::vector<std::size_t> edims{3, static_cast<std::size_t>(fg.nodes(0)), static_cast<std::size_t>(fg.nodes(1)),
                                       static_cast<std::size_t>(fg.nodes(2))};
  auto observer = [&](const DiagnosticsRecord& r, std::span<const Distribution> f, const EmField& fld) {
    const bool take = r.step == 0 || r.step == N || (snap > 0 && r.step % snap == 0);
    if (!take) return;
    char tag[32];
    std::snprintf(tag, sizeof tag, "%08ld", r.step);
    for (std::size_t a = 0; a < f.size(); ++a) {
      const auto p = out / ("snap_" + std::string(tag) + "_f_" + setup.species[a].name + ".bin");
      write_snapshot(p, f[a].values, {fdims, {"x", "y", "z", "vx", "vy", "vz"}, r.t, grid_meta(fg), 0});
      art.snapshots.push_back(p);
    }
    const auto pe = out / ("snap_" + std::string(tag) + "_E.bin");
    write_snapshot(pe, flatten(fld.E), {edims, {"component", "x", "y", "z"}, r.t, grid_meta(fg), 0});
    art.snapshots.push_back(pe);
    const auto ph = out / ("snap_" + std::string(tag) + "_H.bin");
    write_snapshot(ph, flatten(fld.H), {edims, {"component", "x", "y", "z"}, r.t + 0.5 * setup.dt, grid_meta(fg), 0});
    art.snapshots.push_back(ph);
  };
  RunResult res = coupled_run(setup, observer);
  annotate_history(res.history);

  std::ostringstream csv;
  csv << diagnostics_header(setup.species) << '\n';
  for (const DiagnosticsRecord& r : res.history.records) append_diagnostics(r, csv);
  write_text(art.csv, csv.str());
  write_text(art.history, history_to_json(res.history));

  json manifest;
  manifest["version"] = kVersion;
  manifest["command"] = "run";
  manifest["scenario"] = scenario_to_json(sc);
  manifest["resolved"] = {{"dt", setup.dt}, {"steps", N}, {"cadence", setup.cadence}, {"cutoff", setup.effective_cutoff()},
                          {"sigma_lo", setup.material.sigma_lo}, {"sigma_hi", setup.material.sigma_hi}};
  manifest["files"] = {{"diagnostics", art.csv.filename().string()}, {"history", art.history.filename().string()}};
  json snaps = json::array();
  for (const auto& p : art.snapshots) snaps.push_back(p.filename().string());
  manifest["files"]["snapshots"] = snaps;
  write_text(art.manifest, manifest.dump(2));
  return art;
}

RunHistory load_run(const std::filesystem::path& dir) {
  const auto manifest_path = dir / "manifest.json";
  const auto history_path = dir / "history.json";
  if (!std::filesystem::exists(manifest_path) || !std::filesystem::exists(history_path)) {
    throw Error(ErrorKind::MissingHistory, "no manifest.json/history.json in " + dir.string());
  }
  std::ifstream min(manifest_path);
  json manifest;
  try {
    manifest = json::parse(min);
  } catch (const json::parse_error& e) {
    throw Error(ErrorKind::MissingHistory, std::string("unreadable manifest: ") + e.what());
  }
  if (manifest.contains("files") && manifest["files"].contains("snapshots")) {
    for (const json& s : manifest["files"]["snapshots"]) read_snapshot(dir / s.get<std::string>());
  }
  std::ifstream hin(history_path);
  std::stringstream ss;
  ss << hin.rdbuf();
  return history_from_json(ss.str());
}

}  // namespace vmsim
