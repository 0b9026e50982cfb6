#pragma once

// Dataset loading, run configuration, result documents and the synthetic
// data generator used by the command-line tool and the test suites.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "alphareg/alpha_model.hpp"
#include "alphareg/inference.hpp"
#include "alphareg/model_selection.hpp"
#include "alphareg/spatial.hpp"

namespace alphareg {

using Json = nlohmann::ordered_json;

struct DatasetSpec {
  std::string path;
  std::vector<std::string> composition_columns;  // D >= 2
  std::vector<std::string> covariate_columns;    // p >= 1
  std::optional<std::string> lat_column;
  std::optional<std::string> lon_column;
};

struct Dataset {
  CompositionMatrix y;
  DesignMatrix x;  // intercept prepended
  std::optional<GeoCoordinates> coords;
  std::vector<std::string> composition_names;
  std::vector<std::string> covariate_names;  // without the intercept
};

// Header-only comma-separated table of numbers.
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  // Throws MissingColumn naming the column.
  std::size_t column(const std::string& name) const;
};

CsvTable read_csv(const std::string& path);

// Reads the listed columns. Rows whose composition sums deviate from 1 by
// more than 1e-6 are closed with a warning (sums near 100 are reported as
// percentages). Zeros are kept. Coordinates are read when both columns are named.
Dataset load_dataset(const DatasetSpec& spec);

// As load_dataset, but compositions are optional: when any composition column
// is absent the returned y is empty.
Dataset load_prediction_dataset(const DatasetSpec& spec);

enum class ModelKind { Alpha, Slx, Gwar };
enum class SeKind { None, Sandwich, Spherical, Bootstrap };

const char* to_string(ModelKind kind);
const char* to_string(SeKind kind);
ModelKind parse_model_kind(const std::string& s);
SeKind parse_se_kind(const std::string& s);

struct RunConfig {
  ModelKind model = ModelKind::Alpha;
  std::optional<double> alpha;  // unset: chosen by leave-one-out CV
  std::optional<int> k;         // slx only
  std::optional<double> h;      // gwar only
  CvGrid grid;                  // empty ks/hs fall back to defaults
  LmOptions solver;
  SeKind se = SeKind::None;
  int bootstrap_replicates = 200;
  std::uint64_t seed = 1;
  int threads = 0;  // <= 0: default count
  bool timing = false;

  // Throws InvalidParameters on inconsistent settings.
  void validate(const Dataset& data) const;
};

// Fills empty ks with 1..min(10, n-1) and empty hs with the median-heuristic grid.
CvGrid resolved_grid(const RunConfig& config, const Dataset& data);

// Runs CV when a hyper-parameter is unset, fits at the selected values and
// returns the result document.
Json run_fit(const RunConfig& config, const Dataset& data);

// CV scores only.
Json run_cv(const RunConfig& config, const Dataset& data);

// Per-observation marginal-effect tables for every covariate.
Json run_margins(const RunConfig& config, const Dataset& data);

// Fits on `train` and returns mean compositions for the rows of `target`.
Json run_predict(const RunConfig& config, const Dataset& train, const Dataset& target);

// Writes the tables of a result document as comma-separated files into dir.
void export_tables(const Json& doc, const std::string& dir);

std::string format_double(double v);

enum class SpatialMode { None, Slx, TwoCluster };

const char* to_string(SpatialMode mode);
SpatialMode parse_spatial_mode(const std::string& s);

struct SyntheticOptions {
  int n = 200;
  int parts = 3;       // D
  int covariates = 2;  // p
  double alpha = 0.5;
  double noise_scale = 0.0;
  SpatialMode spatial_mode = SpatialMode::None;
  int k = 5;  // contiguity neighbours for the slx generator
  std::uint64_t seed = 1;
};

struct SyntheticData {
  SyntheticOptions options;
  CompositionMatrix y;
  DesignMatrix x;
  GeoCoordinates coords;
  CoefficientMatrix b;      // (p+1) x d; cluster 0 coefficients under two_cluster
  CoefficientMatrix gamma;  // p x d, nonzero only for slx
  std::vector<int> cluster;  // two_cluster only
  std::vector<CoefficientMatrix> row_coefficients() const;
};

// Covariates ~ N(0, 1); coefficients drawn per seed; responses are the model
// means, perturbed in transformed space by N(0, noise_scale^2) and mapped back
// (draws leaving the image of the transform are redrawn). Under two_cluster the
// second cluster flips the signs of the slope coefficients.
SyntheticData generate_synthetic(const SyntheticOptions& options);

// Writes columns y1..yD, x1..xp, lat, lon with 17 significant digits.
void write_synthetic_csv(const SyntheticData& data, const std::string& path);
Json synthetic_truth(const SyntheticData& data);

DatasetSpec synthetic_spec(const std::string& path, int parts, int covariates);

}  // namespace alphareg
