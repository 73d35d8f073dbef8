#include <gtest/gtest.h>

#include <algorithm>
#include <cstring>
#include <fstream>
#include <sstream>

#include "support.hpp"
#include "vmsim/diagnostics.hpp"
#include "vmsim/error.hpp"
#include "vmsim/scenario_io.hpp"

using namespace vmsim;
using vmsim::testing::scenario;
using vmsim::testing::scratch_dir;

namespace {

ErrorKind kind_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.kind();
  }
  ADD_FAILURE() << "no vmsim::Error thrown";
  return ErrorKind::InvalidArgument;
}

const char* kMinimalVacuum = R"({
  "name": "vacuum",
  "grid": {"mode": "slab1d3v", "cells": [8, 1, 1], "spacing": [0.125, 0.125, 0.125],
           "periodic": [true, true, true], "container": {"lo": [0, 0, 0], "hi": [8, 1, 1]},
           "velocity_cells": 2, "velocity_radius": 1.0},
  "species": []
})";

std::size_t count_columns(const std::string& line) { return 1 + std::count(line.begin(), line.end(), ','); }

std::vector<char> read_bytes(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_bytes(const std::filesystem::path& p, const std::vector<char>& bytes) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

}  // namespace

TEST(Scenario, MinimalVacuumIsValid) {
  const Scenario s = parse_scenario(kMinimalVacuum);
  EXPECT_TRUE(s.species.empty());
  EXPECT_EQ(s.cells, (Index3{8, 1, 1}));
  EXPECT_NO_THROW(build_setup(s));
}

TEST(Scenario, RoundTripIsStructurallyEqual) {
  for (const char* name : {"slab_beam_absorbing", "slab_reflecting", "two_material_step", "driven_box_current",
                           "full3d_smoke", "vacuum_plane_wave"}) {
    const Scenario a = scenario(name);
    const Scenario b = parse_scenario(serialize_scenario(a));
    EXPECT_TRUE(a == b) << name;
    EXPECT_EQ(serialize_scenario(a), serialize_scenario(b)) << name;
  }
}

TEST(Scenario, RestMassBelowOne) {
  EXPECT_EQ(kind_of([] { scenario("slab_beam_absorbing", {"species.0.rest_mass=0.5"}); }),
            ErrorKind::ValidationError);
}

TEST(Scenario, ValidationRules) {
  EXPECT_EQ(kind_of([] { scenario("slab_beam_absorbing", {"species.0.reflection=1.0"}); }),
            ErrorKind::ValidationError);
  EXPECT_EQ(kind_of([] { scenario("slab_reflecting", {"species.0.reflection=0.5"}); }), ErrorKind::ValidationError);
  EXPECT_EQ(kind_of([] { scenario("slab_beam_absorbing", {"cfl=1.5"}); }), ErrorKind::ValidationError);
  EXPECT_EQ(kind_of([] { scenario("slab_beam_absorbing", {"cutoff=5.0"}); }), ErrorKind::ValidationError);
  EXPECT_EQ(kind_of([] { scenario("driven_box_current", {R"(external_current.region.lo=[60,0,0])"}); }),
            ErrorKind::ValidationError);
  EXPECT_EQ(kind_of([] { scenario("slab_beam_absorbing", {"grid.velocity_cells=7"}); }),
            ErrorKind::ValidationError);
}

TEST(Scenario, UnknownKeyRejected) {
  std::string text = kMinimalVacuum;
  text.insert(text.rfind('}'), R"(, "colour": "blue")");
  EXPECT_EQ(kind_of([&] { parse_scenario(text); }), ErrorKind::ValidationError);
}

TEST(Scenario, ParseErrorReportsOffset) {
  try {
    parse_scenario(R"({"name": "x", "grid": {)");
    FAIL() << "expected ParseError";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::ParseError);
    EXPECT_NE(std::string(e.what()).find("at byte"), std::string::npos);
  }
}

TEST(Scenario, OverridesReachNestedAndRunKeys) {
  const Scenario s = scenario("slab_beam_absorbing", {"dt=0.001", "grid.velocity_cells=8"});
  EXPECT_EQ(s.run.dt, 0.001);
  EXPECT_EQ(s.velocity_cells, 8);
  EXPECT_EQ(kind_of([] { scenario("slab_beam_absorbing", {"novalue"}); }), ErrorKind::ParseError);
}

TEST(Scenario, SetupDerivesStableStep) {
  const RunSetup s = build_setup(scenario("slab_beam_absorbing"));
  EXPECT_EQ(s.dt, 0.5 / 64);
  EXPECT_EQ(s.steps(), 64);
  EXPECT_NO_THROW(s.validate());
  EXPECT_EQ(build_setup(scenario("slab_beam_absorbing", {"dt=0.002"})).dt, 0.002);
}

TEST(Scenario, ExplicitStepAboveLimitFailsAtRun) {
  const RunSetup s = build_setup(scenario("slab_beam_absorbing", {"dt=0.1"}));
  EXPECT_THROW(coupled_run(s), CflError);
}

TEST(Snapshot, RoundTripIsBitwise) {
  const auto dir = scratch_dir("snap_roundtrip");
  std::vector<double> data{0.0, -0.0, 1.0 / 3.0, 1e-310, 6.02e23, -2.5};
  SnapshotHeader h;
  h.dims = {2, 3};
  h.axes = {"x", "v"};
  h.time = 0.125;
  h.grid = "test";
  write_snapshot(dir / "a.bin", data, h);
  SnapshotHeader back;
  const std::vector<double> read = read_snapshot(dir / "a.bin", &back);
  ASSERT_EQ(read.size(), data.size());
  EXPECT_EQ(std::memcmp(read.data(), data.data(), data.size() * sizeof(double)), 0);
  EXPECT_EQ(back.dims, h.dims);
  EXPECT_EQ(back.axes, h.axes);
  EXPECT_EQ(back.time, 0.125);
  EXPECT_EQ(read_bytes(dir / "a.bin").size(), 48u);
}

TEST(Snapshot, CorruptedByte) {
  const auto dir = scratch_dir("snap_corrupt");
  SnapshotHeader h;
  h.dims = {4};
  write_snapshot(dir / "a.bin", {1, 2, 3, 4}, h);
  std::vector<char> bytes = read_bytes(dir / "a.bin");
  bytes[9] ^= 0x10;
  write_bytes(dir / "a.bin", bytes);
  EXPECT_EQ(kind_of([&] { read_snapshot(dir / "a.bin"); }), ErrorKind::ChecksumMismatch);
}

TEST(Snapshot, ShapeDisagreesWithPayload) {
  const auto dir = scratch_dir("snap_shape");
  SnapshotHeader h;
  h.dims = {5};
  EXPECT_EQ(kind_of([&] { write_snapshot(dir / "a.bin", {1, 2, 3, 4}, h); }), ErrorKind::ShapeMismatch);
  h.dims = {4};
  write_snapshot(dir / "b.bin", {1, 2, 3, 4}, h);
  std::vector<char> bytes = read_bytes(dir / "b.bin");
  bytes.resize(24);
  write_bytes(dir / "b.bin", bytes);
  EXPECT_EQ(kind_of([&] { read_snapshot(dir / "b.bin"); }), ErrorKind::ShapeMismatch);
  EXPECT_EQ(kind_of([&] { read_snapshot(dir / "missing.bin"); }), ErrorKind::IoError);
}

TEST(Diagnostics, HeaderMatchesSchema) {
  std::vector<SpeciesParams> sp(2);
  sp[0].name = "electron";
  sp[1].name = "ion";
  EXPECT_EQ(diagnostics_header(sp),
            "t,ke_electron,ke_ion,em_energy,pnorm_1,pnorm_2,pnorm_inf,jint_l43,charge_int,boundary_out,"
            "boundary_in,S_total,T_total,divB_norm,gauss_residual,energy_bound_rhs,energy_slack,jint_slack");
}

TEST(Diagnostics, ZeroRecordRowAndConstantColumns) {
  DiagnosticsRecord r;
  r.species.resize(2);
  std::ostringstream os;
  append_diagnostics(r, os);
  std::string row = os.str();
  if (!row.empty() && row.back() == '\n') row.pop_back();
  std::vector<SpeciesParams> sp(2);
  EXPECT_EQ(count_columns(row), count_columns(diagnostics_header(sp)));
  std::stringstream ss(row);
  std::string cell;
  while (std::getline(ss, cell, ',')) EXPECT_EQ(std::stod(cell), 0.0);
}

TEST(History, JsonRoundTrip) {
  RunHistory h = coupled_run(build_setup(scenario("slab_beam_absorbing", {"t_end=0.05"}))).history;
  annotate_history(h);
  const RunHistory back = history_from_json(history_to_json(h));
  EXPECT_EQ(history_to_json(back), history_to_json(h));
  ASSERT_EQ(back.records.size(), h.records.size());
  EXPECT_EQ(back.records.back().em_energy, h.records.back().em_energy);
  EXPECT_EQ(back.records.back().species[1].tally.g_kin, h.records.back().species[1].tally.g_kin);
  EXPECT_EQ(back.T_faces, h.T_faces);
  EXPECT_TRUE(back.grid == h.grid);
}

TEST(RunDirectory, WritesAndReloads) {
  const auto dir = scratch_dir("run_dir");
  const RunArtifacts art = run_to_directory(scenario("slab_beam_absorbing", {"t_end=0.05"}), dir);
  EXPECT_TRUE(std::filesystem::exists(art.csv));
  EXPECT_TRUE(std::filesystem::exists(art.manifest));
  EXPECT_FALSE(art.snapshots.empty());
  const RunHistory h = load_run(dir);
  EXPECT_EQ(h.species.size(), 2u);
  std::ifstream csv(art.csv);
  std::string header, line;
  std::getline(csv, header);
  EXPECT_EQ(header, diagnostics_header(h.species));
  std::size_t rows = 0;
  while (std::getline(csv, line)) {
    EXPECT_EQ(count_columns(line), count_columns(header));
    ++rows;
  }
  EXPECT_EQ(rows, h.records.size());
}

TEST(RunDirectory, TamperedSnapshotDetected) {
  const auto dir = scratch_dir("run_tamper");
  const RunArtifacts art = run_to_directory(scenario("slab_beam_absorbing", {"t_end=0.02"}), dir);
  std::vector<char> bytes = read_bytes(art.snapshots.front());
  bytes[bytes.size() / 2] ^= 0x01;
  write_bytes(art.snapshots.front(), bytes);
  EXPECT_EQ(kind_of([&] { load_run(dir); }), ErrorKind::ChecksumMismatch);
}

TEST(RunDirectory, EmptyDirectoryHasNoHistory) {
  EXPECT_EQ(kind_of([] { load_run(scratch_dir("run_empty")); }), ErrorKind::MissingHistory);
}
