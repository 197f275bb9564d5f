#pragma once

#include <nlohmann/json.hpp>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "qtp/detector.hpp"
#include "qtp/error.hpp"
#include "qtp/field.hpp"
#include "qtp/fock.hpp"
#include "qtp/probability.hpp"

namespace qtp {

inline constexpr int kSchemaVersion = 1;

/// Config error carrying the JSON path of the offending field (e.g. "detectors[1].sigma_e").
class SchemaError : public InvalidInput {
 public:
  SchemaError(const std::string& path, const std::string& msg) : InvalidInput(path + ": " + msg), path_(path) {}
  const std::string& path() const { return path_; }

 private:
  std::string path_;
};

enum class Stage { Wightman, Detect, Joint, Diagnostics, Oracle, Limits };

struct DetectorConfig {
  DetectorModel model;
  Window window;
};

struct UdwConfig {
  double gap = 1.0;
  double total_time = 1.0;
  FourVector base = FourVector(2);
  FourVector velocity = FourVector(1.0, 0.0);
};

struct Scenario {
  std::string name;
  FieldSpec field;
  std::optional<LatticeModel> lattice;
  FieldState state;
  std::vector<DetectorConfig> detectors;
  std::vector<Stage> pipeline;

  DensityOptions density;
  KernelForm kernel_form = KernelForm::SamplingIndependent;
  double kolmogorov_threshold = 1e-10;
  double oracle_tolerance = 1e-4;
  std::vector<std::pair<FourVector, FourVector>> wightman_pairs;
  std::optional<UdwConfig> udw;
  bool write_csv = true;

  nlohmann::json source;  // the config as read
  std::string hash;       // SHA-256 of the canonical form of `source`

  bool has(Stage s) const;
};

/// Validates and converts a parsed config; throws SchemaError with a field path.
Scenario parse_scenario(const nlohmann::json& config);
Scenario load_scenario(const std::filesystem::path& path);

/// Compact, key-sorted serialization used for hashing.
std::string canonical_json(const nlohmann::json& j);
std::string sha256_hex(const std::string& data);

/// Documented config schema (JSON Schema draft 2020-12).
const std::string& scenario_schema();

struct RunOptions {
  std::filesystem::path out_dir;
  int threads = 1;
  double tolerance_scale = 1.0;
  std::optional<std::filesystem::path> golden_dir;
  bool update_golden = false;
};

/// Thrown when a stage completes but misses its tolerance (exit code 3).
class ToleranceFailure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Executes the pipeline and writes grids, reports and the manifest into out_dir.
/// Returns the manifest.
nlohmann::json run_scenario(const Scenario& s, const RunOptions& opt);

struct GridComparison {
  std::string name;
  double max_relative_deviation = 0.0;
  bool pass = false;
};

/// Compares every binary grid present in both run directories.
/// Throws InvalidInput on shape mismatches or missing grids.
std::vector<GridComparison> compare_runs(const std::filesystem::path& a, const std::filesystem::path& b,
                                         double tolerance);

/// Grid binary format: row-major little-endian float64 values.
void write_grid(const std::filesystem::path& bin, const std::vector<double>& values);
std::vector<double> read_grid(const std::filesystem::path& bin);

}  // namespace qtp
