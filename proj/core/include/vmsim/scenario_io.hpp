#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "vmsim/coupling.hpp"
#include "vmsim/history.hpp"

namespace vmsim {

inline constexpr const char* kVersion = "0.1.0";

struct BoxSpec {
  Index3 lo{0, 0, 0};
  Index3 hi{0, 0, 0};
  bool operator==(const BoxSpec&) const = default;
};

/// Phase-space profile of an initial density or an inflow source.
/// kind: "zero", "uniform_box", "maxwellian", "indicator" or "tabulated".
struct ProfileSpec {
  std::string kind = "zero";
  double density = 1.0;
  Vec3 drift{0.0, 0.0, 0.0};
  double theta = 1.0;                         ///< maxwellian width: exp(-|v - drift|^2 / theta)
  std::optional<BoxSpec> region;              ///< space cells (field box indices); default: whole container
  Vec3 velocity_lo{-1e300, -1e300, -1e300};   ///< velocity box for uniform_box / indicator
  Vec3 velocity_hi{1e300, 1e300, 1e300};
  std::string path;                           ///< snapshot file for tabulated data
  bool operator==(const ProfileSpec&) const = default;
};

struct SpeciesSpec {
  SpeciesParams params;
  double reflection = 0.0;
  std::string reflection_path;  ///< optional tabulated a, [wall][velocity]
  ProfileSpec inflow;           ///< g on incoming velocities of every wall cell
  ProfileSpec initial;
  bool operator==(const SpeciesSpec& o) const {
    return params.name == o.params.name && params.charge == o.params.charge &&
           params.rest_mass == o.params.rest_mass && params.regime == o.params.regime &&
           reflection == o.reflection && reflection_path == o.reflection_path && inflow == o.inflow &&
           initial == o.initial;
  }
};

struct TensorSpec {
  Vec3 eps{1.0, 1.0, 1.0};
  Vec3 mu{1.0, 1.0, 1.0};
  bool operator==(const TensorSpec&) const = default;
};

struct MaterialRegionSpec {
  BoxSpec box;
  TensorSpec tensor;
  bool operator==(const MaterialRegionSpec&) const = default;
};

struct ExternalSpec {
  std::string kind = "none";  ///< "none", "loop", "box" or "tabulated"
  BoxSpec region;
  int axis = 2;
  Vec3 direction{0.0, 0.0, 0.0};
  Waveform waveform;
  std::string path;
  bool operator==(const ExternalSpec&) const = default;
};

struct FieldSpec {
  std::string kind = "zero";  ///< "zero", "plane_wave" or "tabulated"
  double amplitude = 0.0;
  int mode = 1;               ///< wavelength = box length along x / mode
  std::string e_path, h_path;
  bool poisson = false;       ///< add the electrostatic field of the initial charge
  bool operator==(const FieldSpec&) const = default;
};

struct RunSpec {
  double dt = 0.0;     ///< 0: derive from `cfl`
  double cfl = 0.5;
  double t_end = 1.0;
  int cadence = 10;
  int snapshot_cadence = 0;  ///< 0: initial and final snapshots only
  double cutoff = 0.0;
  std::vector<double> R_list;
  int k_max = 5;
  double threshold = 0.0;
  bool operator==(const RunSpec&) const = default;
};

/// Resolved scenario: every default is explicit so serialisation round-trips.
struct Scenario {
  std::string name = "scenario";
  GridMode mode = GridMode::Slab1d3v;
  Index3 cells{1, 1, 1};
  Vec3 spacing{1.0, 1.0, 1.0};
  std::array<bool, 3> periodic{false, true, true};
  BoxSpec container;
  int velocity_cells = 2;
  double velocity_radius = 1.0;
  std::vector<SpeciesSpec> species;
  TensorSpec background;
  std::vector<MaterialRegionSpec> materials;
  ExternalSpec external;
  FieldSpec fields;
  RunSpec run;
  std::filesystem::path base_dir;  ///< directory tabulated paths are relative to (not serialised)

  bool operator==(const Scenario& o) const;
};

/// Parses scenario JSON text. Throws ParseError (with byte offset) or ValidationError.
Scenario parse_scenario(const std::string& text, const std::vector<std::string>& overrides = {});
Scenario load_scenario(const std::filesystem::path& path, const std::vector<std::string>& overrides = {});
std::string serialize_scenario(const Scenario& s);

/// Applies "a.b.c=value" overrides; a bare key is looked up in the run section.
void apply_overrides(std::string& json_text, const std::vector<std::string>& overrides);

/// Builds arrays, materials, currents and initial fields. With fields.poisson
/// the initial Gauss residual is verified and InitialConstraintViolation raised
/// if it exceeds 1e-10 relative to the charge.
RunSetup build_setup(const Scenario& s);

struct SnapshotHeader {
  std::vector<std::size_t> dims;
  std::vector<std::string> axes;
  double time = 0.0;
  std::string grid;          ///< free-form grid metadata
  std::uint32_t checksum = 0;
};

/// Writes `path` (little-endian float64, C order) and `path`.hdr.
void write_snapshot(const std::filesystem::path& path, const std::vector<double>& data, SnapshotHeader header);
/// Exact inverse of write_snapshot. Throws ShapeMismatch, ChecksumMismatch or IoError.
std::vector<double> read_snapshot(const std::filesystem::path& path, SnapshotHeader* header = nullptr);

/// Fixed diagnostics CSV header; one kinetic-energy column per species.
std::string diagnostics_header(const std::vector<SpeciesParams>& species);
void append_diagnostics(const DiagnosticsRecord& record, std::ostream& out);

/// Full history as JSON (records, tallies, S and T per wall cell).
std::string history_to_json(const RunHistory& h);
RunHistory history_from_json(const std::string& text);

/// Writes diagnostics.csv, history.json, snapshots and manifest.json into
/// `out` while running the coupled solver.
struct RunArtifacts {
  std::filesystem::path csv, history, manifest;
  std::vector<std::filesystem::path> snapshots;
};
RunArtifacts run_to_directory(const Scenario& s, const std::filesystem::path& out);

/// Reads history.json from a run directory and verifies every snapshot
/// listed in the manifest. Throws MissingHistory or ChecksumMismatch.
RunHistory load_run(const std::filesystem::path& dir);

}  // namespace vmsim
