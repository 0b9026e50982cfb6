#include "alphareg/io.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>
#include <set>
#include <sstream>

#include "alphareg/error.hpp"

namespace alphareg {

namespace {

std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(first, last - first + 1));
}

// Splits one line on commas; double quotes protect commas and "" escapes a quote.
std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cell.push_back('"');
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        cell.push_back(c);
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.push_back(trim(cell));
      cell.clear();
    } else {
      cell.push_back(c);
    }
  }
  out.push_back(trim(cell));
  return out;
}

double parse_cell(const CsvTable& table, std::size_t row, std::size_t col) {
  const std::string& s = table.rows[row][col];
  double v = 0.0;
  const char* begin = s.data();
  const char* end = s.data() + s.size();
  if (!s.empty() && *begin == '+') ++begin;
  const auto [ptr, ec] = std::from_chars(begin, end, v);
  if (s.empty() || ec != std::errc() || ptr != end || !std::isfinite(v)) {
    std::ostringstream os;
    os << "cell at data row " << row + 1 << ", column '" << table.header[col] << "' is '" << s << "'";
    throw Error(ErrorCode::NonNumericCell, os.str());
  }
  return v;
}

MatrixXd read_columns(const CsvTable& table, const std::vector<std::string>& names) {
  std::vector<std::size_t> idx;
  idx.reserve(names.size());
  for (const auto& name : names) idx.push_back(table.column(name));
  MatrixXd out(static_cast<Eigen::Index>(table.rows.size()), static_cast<Eigen::Index>(names.size()));
  for (std::size_t i = 0; i < table.rows.size(); ++i) {
    for (std::size_t j = 0; j < idx.size(); ++j) {
      out(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = parse_cell(table, i, idx[j]);
    }
  }
  return out;
}

CompositionMatrix close_with_warning(MatrixXd raw) {
  if (raw.cols() < 2) throw Error(ErrorCode::InvalidDimension, "need at least two composition columns");
  int closed = 0;
  int percent = 0;
  for (Eigen::Index i = 0; i < raw.rows(); ++i) {
    for (Eigen::Index j = 0; j < raw.cols(); ++j) {
      if (raw(i, j) < 0.0) {
        std::ostringstream os;
        os << "composition cell at data row " << i + 1 << ", part " << j + 1 << " is " << raw(i, j);
        throw Error(ErrorCode::NegativeEntry, os.str());
      }
    }
    const double s = raw.row(i).sum();
    if (!(s > 0.0)) {
      std::ostringstream os;
      os << "composition at data row " << i + 1 << " sums to zero";
      throw Error(ErrorCode::ZeroRow, os.str());
    }
    if (std::abs(s - 1.0) > kRowSumTolerance) {
      ++closed;
      if (std::abs(s - 100.0) <= 1.0) ++percent;
      raw.row(i) /= s;
    }
  }
  if (closed > 0) {
    std::ostringstream os;
    os << closed << " composition row(s) did not sum to 1 and were closed";
    if (percent > 0) os << " (" << percent << " look like percentages)";
    warn(os.str());
  }
  return CompositionMatrix(std::move(raw));
}

Json matrix_json(const MatrixXd& m) {
  Json rows = Json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    Json row = Json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}


// Infinite scores become null in JSON; keep them readable instead.
Json score_json(double v) {
  if (std::isfinite(v)) return v;
  return "inf";
}

std::vector<std::string> coefficient_rows(const Dataset& data) {
  std::vector<std::string> out{"(intercept)"};
  out.insert(out.end(), data.covariate_names.begin(), data.covariate_names.end());
  return out;
}

std::vector<std::string> lagged_rows(const Dataset& data) {
  std::vector<std::string> out;
  for (const auto& name : data.covariate_names) out.push_back("W." + name);
  return out;
}

std::vector<std::string> contrast_columns(const Dataset& data) {
  return {data.composition_names.begin() + 1, data.composition_names.end()};
}

Json table_json(const std::vector<std::string>& rows, const std::vector<std::string>& cols, const MatrixXd& m) {
  Json out;
  out["rows"] = rows;
  out["columns"] = cols;
  out["values"] = matrix_json(m);
  return out;
}

struct Selection {
  double alpha = 0.0;
  std::optional<int> k;
  std::optional<double> h;
  std::optional<CvResult> cv;
};

struct Fitted {
  Selection selection;
  ModelKind kind = ModelKind::Alpha;
  std::optional<FitResult> plain;
  std::optional<SlxFit> slx;
  std::optional<SpatialWeightMatrix> w;
  std::optional<GwarFit> gwar;
  DesignMatrix design;  // augmented for slx
  CompositionMatrix fitted;
  double kld = 0.0;
  std::vector<int> iterations;
};

Selection select_hyperparameters(const RunConfig& config, const Dataset& data, const CvGrid& grid) {
  Selection sel;
  CvGrid g = grid;
  if (config.alpha) g.alphas = {*config.alpha};
  if (config.k) g.ks = {*config.k};
  if (config.h) g.hs = {*config.h};
  CvOptions opts;
  opts.solver = config.solver;
  opts.threads = config.threads;

  bool need_cv = !config.alpha;
  if (config.model == ModelKind::Slx && !config.k) need_cv = true;
  if (config.model == ModelKind::Gwar && !config.h) need_cv = true;
  if (!need_cv) {
    sel.alpha = *config.alpha;
    sel.k = config.k;
    sel.h = config.h;
    return sel;
  }
  CvResult cv;
  switch (config.model) {
    case ModelKind::Alpha: cv = loocv_alpha(data.y, data.x, g, opts); break;
    case ModelKind::Slx: cv = loocv_slx(data.y, data.x, *data.coords, g, opts); break;
    case ModelKind::Gwar: cv = loocv_gwar(data.y, data.x, *data.coords, g, opts); break;
  }
  if (!std::isfinite(cv.scores(cv.best_alpha_index, cv.best_second_index))) {
    throw Error(ErrorCode::NonFiniteResidual, "no grid point produced a finite cross-validation score");
  }
  sel.alpha = cv.best_alpha;
  if (config.model == ModelKind::Slx) sel.k = static_cast<int>(*cv.best_second);
  if (config.model == ModelKind::Gwar) sel.h = *cv.best_second;
  sel.cv = std::move(cv);
  return sel;
}

Fitted fit_model(const RunConfig& config, const Dataset& data) {
  config.validate(data);
  const CvGrid grid = resolved_grid(config, data);
  Fitted out;
  out.kind = config.model;
  out.selection = select_hyperparameters(config, data, grid);
  const double alpha = out.selection.alpha;
  switch (config.model) {
    case ModelKind::Alpha: {
      out.plain = fit_alpha_regression(data.y, data.x, alpha, config.solver);
      out.design = data.x;
      out.fitted = out.plain->fitted;
      out.kld = out.plain->kld;
      out.iterations = {out.plain->lm.iterations};
      break;
    }
    case ModelKind::Slx: {
      out.w = contiguity_matrix(*data.coords, *out.selection.k);
      out.slx = fit_alpha_slx(data.y, data.x, *out.w, alpha, config.solver);
      out.design = data.x.augmented(spatial_lag(*out.w, data.x));
      out.fitted = out.slx->fit.fitted;
      out.kld = out.slx->fit.kld;
      out.iterations = {out.slx->fit.lm.iterations};
      break;
    }
    case ModelKind::Gwar: {
      out.gwar = fit_gwar(data.y, data.x, *data.coords, alpha, *out.selection.h, config.solver, config.threads);
      out.design = data.x;
      out.fitted = out.gwar->fitted;
      out.kld = out.gwar->kld;
      out.iterations = out.gwar->iterations;
      break;
    }
  }
  return out;
}

Json config_json(const RunConfig& config, const Dataset& data) {
  Json c;
  c["model"] = to_string(config.model);
  c["alpha"] = config.alpha ? Json(*config.alpha) : Json(nullptr);
  if (config.model == ModelKind::Slx) c["k"] = config.k ? Json(*config.k) : Json(nullptr);
  if (config.model == ModelKind::Gwar) c["h"] = config.h ? Json(*config.h) : Json(nullptr);
  c["se"] = to_string(config.se);
  if (config.se == SeKind::Bootstrap) c["bootstrap_replicates"] = config.bootstrap_replicates;
  c["seed"] = config.seed;
  Json solver;
  solver["max_iterations"] = config.solver.max_iterations;
  solver["sse_rel_tol"] = config.solver.sse_rel_tol;
  solver["grad_inf_tol"] = config.solver.grad_inf_tol;
  solver["initial_damping_scale"] = config.solver.initial_damping_scale;
  solver["damping_increase"] = config.solver.damping_increase;
  solver["damping_decrease"] = config.solver.damping_decrease;
  c["solver"] = solver;
  Json d;
  d["n"] = data.y.rows();
  d["compositions"] = data.composition_names;
  d["covariates"] = data.covariate_names;
  d["has_coordinates"] = data.coords.has_value();
  c["data"] = d;
  return c;
}

Json cv_json(const CvResult& cv, ModelKind kind) {
  Json out;
  out["alphas"] = cv.alphas;
  if (kind == ModelKind::Slx) out["ks"] = cv.second;
  if (kind == ModelKind::Gwar) out["hs"] = cv.second;
  Json scores = Json::array();
  for (Eigen::Index a = 0; a < cv.scores.rows(); ++a) {
    Json row = Json::array();
    for (Eigen::Index s = 0; s < cv.scores.cols(); ++s) row.push_back(score_json(cv.scores(a, s)));
    scores.push_back(std::move(row));
  }
  out["scores"] = std::move(scores);
  return out;
}

Json hyper_json(const Selection& sel) {
  Json out;
  out["alpha"] = sel.alpha;
  if (sel.k) out["k"] = *sel.k;
  if (sel.h) out["h"] = *sel.h;
  out["selected_by"] = sel.cv ? "loocv" : "fixed";
  return out;
}

Json correlations_json(const Dataset& data, const CompositionMatrix& fitted) {
  Json out;
  for (Eigen::Index j = 0; j < data.y.parts(); ++j) {
    const VectorXd a = data.y.values().col(j).array() - data.y.values().col(j).mean();
    const VectorXd b = fitted.values().col(j).array() - fitted.values().col(j).mean();
    const double denom = std::sqrt(a.squaredNorm() * b.squaredNorm());
    out[data.composition_names[static_cast<std::size_t>(j)]] = denom > 0.0 ? Json(a.dot(b) / denom) : Json(nullptr);
  }
  return out;
}

Json ame_row(const Dataset& data, const VectorXd& v) {
  Json out;
  for (Eigen::Index j = 0; j < v.size(); ++j) out[data.composition_names[static_cast<std::size_t>(j)]] = v[j];
  return out;
}

Json ame_json(const Fitted& f, const Dataset& data) {
  Json out;
  for (int k = 1; k <= data.x.covariates(); ++k) {
    const std::string& name = data.covariate_names[static_cast<std::size_t>(k - 1)];
    switch (f.kind) {
      case ModelKind::Alpha: out[name] = ame_row(data, average_marginal_effects(*f.plain, k)); break;
      case ModelKind::Slx: {
        const SlxEffects e = slx_effects(*f.slx, k);
        Json entry;
        entry["direct"] = ame_row(data, e.direct.values.colwise().mean().transpose());
        entry["indirect"] = ame_row(data, e.indirect.values.colwise().mean().transpose());
        entry["total"] = ame_row(data, e.total.values.colwise().mean().transpose());
        out[name] = std::move(entry);
        break;
      }
      case ModelKind::Gwar:
        out[name] = ame_row(data, gwar_marginal_effects(*f.gwar, k).values.colwise().mean().transpose());
        break;
    }
  }
  return out;
}

Json coefficients_json(const Fitted& f, const Dataset& data) {
  const auto rows = coefficient_rows(data);
  const auto cols = contrast_columns(data);
  Json out;
  switch (f.kind) {
    case ModelKind::Alpha: out = table_json(rows, cols, f.plain->coefficients); break;
    case ModelKind::Slx:
      out["beta"] = table_json(rows, cols, f.slx->beta);
      out["gamma"] = table_json(lagged_rows(data), cols, f.slx->gamma);
      break;
    case ModelKind::Gwar: {
      out["global"] = table_json(rows, cols, f.gwar->global_coefficients);
      Json local = Json::array();
      for (const auto& b : f.gwar->local_coefficients) local.push_back(matrix_json(b));
      out["local"] = std::move(local);
      out["local_rows"] = rows;
      out["local_columns"] = cols;
      break;
    }
  }
  return out;
}

Json standard_errors_json(const RunConfig& config, const Fitted& f, const Dataset& data) {
  const CoefficientMatrix& b = f.kind == ModelKind::Alpha ? f.plain->coefficients : f.slx->fit.coefficients;
  const Eigen::Index pp = b.rows();
  const Eigen::Index dd = b.cols();
  std::vector<std::string> rows = coefficient_rows(data);
  if (f.kind == ModelKind::Slx) {
    const auto lagged = lagged_rows(data);
    rows.insert(rows.end(), lagged.begin(), lagged.end());
  }
  Json out;
  out["kind"] = to_string(config.se);
  if (config.se == SeKind::Bootstrap) {
    const BootstrapDraws draws = bootstrap_coefficients(data.y, f.design, f.selection.alpha, config.solver,
                                                        config.bootstrap_replicates, config.seed, config.threads);
    const VectorXd se = empirical_covariance(draws.coefficients).diagonal().cwiseMax(0.0).cwiseSqrt();
    out["coefficients"] = table_json(rows, contrast_columns(data), unvectorize(se, pp, dd));
    out["replicates"] = static_cast<int>(draws.coefficients.rows());
    out["failed_replicates"] = draws.failed;
    if (f.kind == ModelKind::Alpha) {
      Json ame;
      for (int k = 1; k <= data.x.covariates(); ++k) {
        ame[data.covariate_names[static_cast<std::size_t>(k - 1)]] =
            ame_row(data, bootstrap_ame_standard_errors(draws, data.x, k));
      }
      out["ame"] = std::move(ame);
    }
    return out;
  }
  const CovarianceKind kind = config.se == SeKind::Sandwich ? CovarianceKind::Sandwich : CovarianceKind::Spherical;
  const CovarianceEstimate cov = sandwich_covariance(data.y, f.design, f.selection.alpha, b, kind);
  out["coefficients"] = table_json(rows, contrast_columns(data), unvectorize(cov.standard_errors(), pp, dd));
  return out;
}

using Clock = std::chrono::steady_clock;

void add_timing(Json& doc, const RunConfig& config, Clock::time_point start) {
  if (!config.timing) return;
  doc["timing"]["seconds"] = std::chrono::duration<double>(Clock::now() - start).count();
}

}  // namespace

std::size_t CsvTable::column(const std::string& name) const {
  const auto it = std::find(header.begin(), header.end(), name);
  if (it == header.end()) throw Error(ErrorCode::MissingColumn, "column '" + name + "' not found");
  return static_cast<std::size_t>(it - header.begin());
}

CsvTable read_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::InvalidParameters, "cannot open '" + path + "'");
  CsvTable table;
  std::string line;
  bool have_header = false;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!have_header && line_no == 1 && line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) line.erase(0, 3);
    if (trim(line).empty()) continue;
    auto cells = split_csv_line(line);
    if (!have_header) {
      table.header = std::move(cells);
      have_header = true;
      continue;
    }
    if (cells.size() != table.header.size()) {
      std::ostringstream os;
      os << "line " << line_no << " has " << cells.size() << " fields, header has " << table.header.size();
      throw Error(ErrorCode::ShapeMismatch, os.str());
    }
    table.rows.push_back(std::move(cells));
  }
  if (!have_header) throw Error(ErrorCode::InvalidDimension, "'" + path + "' has no header row");
  return table;
}

Dataset load_dataset(const DatasetSpec& spec) {
  if (spec.composition_columns.size() < 2) {
    throw Error(ErrorCode::InvalidDimension, "need at least two composition columns");
  }
  if (spec.covariate_columns.empty()) throw Error(ErrorCode::InvalidDimension, "need at least one covariate column");
  std::set<std::string> seen;
  auto claim = [&](const std::string& name) {
    if (!seen.insert(name).second) {
      throw Error(ErrorCode::InvalidParameters, "column '" + name + "' listed more than once");
    }
  };
  for (const auto& c : spec.composition_columns) claim(c);
  for (const auto& c : spec.covariate_columns) claim(c);
  if (spec.lat_column.has_value() != spec.lon_column.has_value()) {
    throw Error(ErrorCode::InvalidParameters, "latitude and longitude columns must be given together");
  }
  if (spec.lat_column) {
    claim(*spec.lat_column);
    claim(*spec.lon_column);
  }

  const CsvTable table = read_csv(spec.path);
  Dataset out;
  out.composition_names = spec.composition_columns;
  out.covariate_names = spec.covariate_columns;
  // Resolve every column before parsing so a missing name is reported first.
  for (const auto& c : seen) table.column(c);
  if (table.rows.empty()) throw Error(ErrorCode::InvalidDimension, "'" + spec.path + "' has no data rows");
  out.y = close_with_warning(read_columns(table, spec.composition_columns));
  out.x = DesignMatrix::with_intercept(read_columns(table, spec.covariate_columns));
  if (spec.lat_column) {
    const MatrixXd ll = read_columns(table, {*spec.lat_column, *spec.lon_column});
    out.coords = GeoCoordinates(ll.col(0), ll.col(1));
  }
  return out;
}

Dataset load_prediction_dataset(const DatasetSpec& spec) {
  const CsvTable table = read_csv(spec.path);
  const bool has_y = std::all_of(spec.composition_columns.begin(), spec.composition_columns.end(),
                                 [&](const std::string& c) {
                                   return std::find(table.header.begin(), table.header.end(), c) != table.header.end();
                                 });
  if (has_y) return load_dataset(spec);
  if (spec.covariate_columns.empty()) throw Error(ErrorCode::InvalidDimension, "need at least one covariate column");
  if (table.rows.empty()) throw Error(ErrorCode::InvalidDimension, "'" + spec.path + "' has no data rows");
  Dataset out;
  out.composition_names = spec.composition_columns;
  out.covariate_names = spec.covariate_columns;
  out.x = DesignMatrix::with_intercept(read_columns(table, spec.covariate_columns));
  if (spec.lat_column && spec.lon_column) {
    const MatrixXd ll = read_columns(table, {*spec.lat_column, *spec.lon_column});
    out.coords = GeoCoordinates(ll.col(0), ll.col(1));
  }
  return out;
}

const char* to_string(ModelKind kind) {
  switch (kind) {
    case ModelKind::Alpha: return "alpha";
    case ModelKind::Slx: return "slx";
    case ModelKind::Gwar: return "gwar";
  }
  return "unknown";
}

const char* to_string(SeKind kind) {
  switch (kind) {
    case SeKind::None: return "none";
    case SeKind::Sandwich: return "sandwich";
    case SeKind::Spherical: return "spherical";
    case SeKind::Bootstrap: return "bootstrap";
  }
  return "unknown";
}

ModelKind parse_model_kind(const std::string& s) {
  if (s == "alpha") return ModelKind::Alpha;
  if (s == "slx") return ModelKind::Slx;
  if (s == "gwar") return ModelKind::Gwar;
  throw Error(ErrorCode::InvalidParameters, "unknown model '" + s + "'");
}

SeKind parse_se_kind(const std::string& s) {
  if (s == "none") return SeKind::None;
  if (s == "sandwich") return SeKind::Sandwich;
  if (s == "spherical") return SeKind::Spherical;
  if (s == "bootstrap") return SeKind::Bootstrap;
  throw Error(ErrorCode::InvalidParameters, "unknown standard-error kind '" + s + "'");
}

void RunConfig::validate(const Dataset& data) const {
  solver.validate();
  if (model != ModelKind::Alpha && !data.coords) {
    throw Error(ErrorCode::MissingColumn, std::string("model ") + to_string(model) + " needs latitude and longitude columns");
  }
  if (k && model != ModelKind::Slx) throw Error(ErrorCode::InvalidParameters, "k applies to the slx model only");
  if (h && model != ModelKind::Gwar) throw Error(ErrorCode::InvalidParameters, "h applies to the gwar model only");
  if (se != SeKind::None && model == ModelKind::Gwar) {
    throw Error(ErrorCode::InvalidParameters, "standard errors are available for the alpha and slx models");
  }
  if (se == SeKind::Bootstrap && bootstrap_replicates < 2) {
    throw Error(ErrorCode::InvalidParameters, "bootstrap needs at least two replicates");
  }
  if (alpha) check_alpha(*alpha);
}

CvGrid resolved_grid(const RunConfig& config, const Dataset& data) {
  CvGrid g = config.grid;
  const Eigen::Index n = data.y.rows();
  if (config.model == ModelKind::Slx && g.ks.empty()) {
    for (int k = 1; k <= std::min<Eigen::Index>(10, n - 1); ++k) g.ks.push_back(k);
  }
  if (config.model == ModelKind::Gwar && g.hs.empty() && !config.h) g.hs = default_h_grid(*data.coords);
  return g;
}

Json run_fit(const RunConfig& config, const Dataset& data) {
  const auto start = Clock::now();
  const Fitted f = fit_model(config, data);
  Json doc;
  doc["config"] = config_json(config, data);
  if (f.selection.cv) doc["cv"] = cv_json(*f.selection.cv, config.model);
  doc["hyperparameters"] = hyper_json(f.selection);
  doc["coefficients"] = coefficients_json(f, data);
  doc["correlations"] = correlations_json(data, f.fitted);
  doc["kld"] = f.kld;
  doc["ame"] = ame_json(f, data);
  if (config.se != SeKind::None) doc["standard_errors"] = standard_errors_json(config, f, data);
  Json solver;
  solver["iterations"] = f.iterations;
  doc["solver"] = solver;
  add_timing(doc, config, start);
  return doc;
}

Json run_cv(const RunConfig& config, const Dataset& data) {
  const auto start = Clock::now();
  config.validate(data);
  RunConfig cv_config = config;
  // Fixed values narrow the grid; at least one dimension is searched.
  if (config.alpha && (config.model == ModelKind::Alpha || (config.model == ModelKind::Slx && config.k) ||
                       (config.model == ModelKind::Gwar && config.h))) {
    cv_config.alpha.reset();
    cv_config.grid.alphas = {*config.alpha};
  }
  const Selection sel = select_hyperparameters(cv_config, data, resolved_grid(cv_config, data));
  Json doc;
  doc["config"] = config_json(config, data);
  doc["cv"] = cv_json(*sel.cv, config.model);
  doc["hyperparameters"] = hyper_json(sel);
  add_timing(doc, config, start);
  return doc;
}

Json run_margins(const RunConfig& config, const Dataset& data) {
  const auto start = Clock::now();
  const Fitted f = fit_model(config, data);
  Json doc;
  doc["config"] = config_json(config, data);
  doc["hyperparameters"] = hyper_json(f.selection);
  Json tables;
  for (int k = 1; k <= data.x.covariates(); ++k) {
    const std::string& name = data.covariate_names[static_cast<std::size_t>(k - 1)];
    switch (f.kind) {
      case ModelKind::Alpha:
        tables[name] = matrix_json(marginal_effects(f.plain->coefficients, f.fitted, k).values);
        break;
      case ModelKind::Slx: {
        const SlxEffects e = slx_effects(*f.slx, k);
        tables[name]["direct"] = matrix_json(e.direct.values);
        tables[name]["indirect"] = matrix_json(e.indirect.values);
        tables[name]["total"] = matrix_json(e.total.values);
        break;
      }
      case ModelKind::Gwar: tables[name] = matrix_json(gwar_marginal_effects(*f.gwar, k).values); break;
    }
  }
  doc["columns"] = data.composition_names;
  doc["margins"] = std::move(tables);
  doc["ame"] = ame_json(f, data);
  add_timing(doc, config, start);
  return doc;
}

Json run_predict(const RunConfig& config, const Dataset& train, const Dataset& target) {
  const auto start = Clock::now();
  if (target.x.cols() != train.x.cols()) {
    throw Error(ErrorCode::DimensionMismatch, "prediction data has a different number of covariates");
  }
  if (config.model != ModelKind::Alpha && !target.coords) {
    throw Error(ErrorCode::MissingColumn, "prediction data needs latitude and longitude columns");
  }
  const Fitted f = fit_model(config, train);
  CompositionMatrix mu;
  switch (f.kind) {
    case ModelKind::Alpha: mu = fitted_mean(target.x, f.plain->coefficients); break;
    case ModelKind::Slx: {
      MatrixXd lag(target.x.rows(), target.x.covariates());
      for (Eigen::Index i = 0; i < target.x.rows(); ++i) {
        lag.row(i) = held_out_lag(*train.coords, train.x, target.coords->point(i), *f.selection.k);
      }
      mu = fitted_mean(target.x.augmented(lag), f.slx->fit.coefficients);
      break;
    }
    case ModelKind::Gwar: mu = predict_gwar(*f.gwar, target.x, *target.coords, config.threads); break;
  }
  Json doc;
  doc["config"] = config_json(config, train);
  doc["hyperparameters"] = hyper_json(f.selection);
  doc["columns"] = train.composition_names;
  doc["predictions"] = matrix_json(mu.values());
  if (target.y.rows() == target.x.rows() && target.y.parts() == mu.parts()) doc["kld"] = kld(target.y, mu);
  add_timing(doc, config, start);
  return doc;
}

namespace {

void write_rows_csv(const std::filesystem::path& path, const std::vector<std::string>& header,
                    const std::vector<std::string>& row_labels, const Json& values) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::InvalidParameters, "cannot write '" + path.string() + "'");
  if (!row_labels.empty()) out << "row";
  for (std::size_t j = 0; j < header.size(); ++j) out << (j == 0 && row_labels.empty() ? "" : ",") << header[j];
  out << "\n";
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (!row_labels.empty()) out << row_labels[i];
    for (std::size_t j = 0; j < values[i].size(); ++j) {
      const Json& v = values[i][j];
      out << (j == 0 && row_labels.empty() ? "" : ",");
      if (v.is_number()) {
        out << format_double(v.get<double>());
      } else if (v.is_string()) {
        out << v.get<std::string>();
      }
    }
    out << "\n";
  }
}

void write_table(const std::filesystem::path& path, const Json& table) {
  write_rows_csv(path, table["columns"].get<std::vector<std::string>>(), table["rows"].get<std::vector<std::string>>(),
                 table["values"]);
}

}  // namespace

void export_tables(const Json& doc, const std::string& dir) {
  const std::filesystem::path root(dir);
  std::filesystem::create_directories(root);
  if (doc.contains("coefficients")) {
    const Json& c = doc["coefficients"];
    if (c.contains("values")) write_table(root / "coefficients.csv", c);
    if (c.contains("beta")) write_table(root / "coefficients_beta.csv", c["beta"]);
    if (c.contains("gamma")) write_table(root / "coefficients_gamma.csv", c["gamma"]);
    if (c.contains("global")) write_table(root / "coefficients_global.csv", c["global"]);
  }
  if (doc.contains("ame")) {
    std::vector<std::string> labels;
    Json values = Json::array();
    std::vector<std::string> header;
    for (const auto& [name, entry] : doc["ame"].items()) {
      if (entry.contains("direct")) {
        for (const char* part : {"direct", "indirect", "total"}) {
          labels.push_back(name + "." + part);
          Json row = Json::array();
          header.clear();
          for (const auto& [comp, v] : entry[part].items()) {
            header.push_back(comp);
            row.push_back(v);
          }
          values.push_back(std::move(row));
        }
      } else {
        labels.push_back(name);
        Json row = Json::array();
        header.clear();
        for (const auto& [comp, v] : entry.items()) {
          header.push_back(comp);
          row.push_back(v);
        }
        values.push_back(std::move(row));
      }
    }
    write_rows_csv(root / "ame.csv", header, labels, values);
  }
  if (doc.contains("cv")) {
    const Json& cv = doc["cv"];
    std::vector<std::string> header;
    if (cv.contains("ks")) {
      for (const auto& k : cv["ks"]) header.push_back("k=" + format_double(k.get<double>()));
    } else if (cv.contains("hs")) {
      for (const auto& h : cv["hs"]) header.push_back("h=" + format_double(h.get<double>()));
    } else {
      header.push_back("score");
    }
    std::vector<std::string> labels;
    for (const auto& a : cv["alphas"]) labels.push_back("alpha=" + format_double(a.get<double>()));
    write_rows_csv(root / "cv_scores.csv", header, labels, cv["scores"]);
  }
  if (doc.contains("predictions")) {
    write_rows_csv(root / "predictions.csv", doc["columns"].get<std::vector<std::string>>(), {}, doc["predictions"]);
  }
  if (doc.contains("margins")) {
    const auto columns = doc["columns"].get<std::vector<std::string>>();
    for (const auto& [name, entry] : doc["margins"].items()) {
      if (entry.is_object()) {
        for (const auto& [part, table] : entry.items()) {
          write_rows_csv(root / ("margins_" + name + "_" + part + ".csv"), columns, {}, table);
        }
      } else {
        write_rows_csv(root / ("margins_" + name + ".csv"), columns, {}, entry);
      }
    }
  }
}

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

const char* to_string(SpatialMode mode) {
  switch (mode) {
    case SpatialMode::None: return "none";
    case SpatialMode::Slx: return "slx";
    case SpatialMode::TwoCluster: return "two_cluster";
  }
  return "unknown";
}

SpatialMode parse_spatial_mode(const std::string& s) {
  if (s == "none") return SpatialMode::None;
  if (s == "slx") return SpatialMode::Slx;
  if (s == "two_cluster") return SpatialMode::TwoCluster;
  throw Error(ErrorCode::InvalidParameters, "unknown spatial mode '" + s + "'");
}

std::vector<CoefficientMatrix> SyntheticData::row_coefficients() const {
  std::vector<CoefficientMatrix> out(static_cast<std::size_t>(x.rows()), b);
  if (options.spatial_mode == SpatialMode::TwoCluster) {
    for (std::size_t i = 0; i < out.size(); ++i) {
      if (cluster[i] == 1) out[i].bottomRows(b.rows() - 1) *= -1.0;
    }
  }
  return out;
}

namespace {

constexpr int kMaxRedraws = 1000;

double signed_uniform(std::mt19937_64& rng, double lo, double hi) {
  std::uniform_real_distribution<double> mag(lo, hi);
  std::bernoulli_distribution sign(0.5);
  const double m = mag(rng);
  return sign(rng) ? m : -m;
}

}  // namespace

SyntheticData generate_synthetic(const SyntheticOptions& options) {
  if (options.n < 10 || options.parts < 2 || options.covariates < 1) {
    throw Error(ErrorCode::InvalidParameters, "generator needs n >= 10, D >= 2 and p >= 1");
  }
  if (!(options.noise_scale >= 0.0) || !std::isfinite(options.noise_scale)) {
    throw Error(ErrorCode::InvalidParameters, "noise scale must be finite and nonnegative");
  }
  check_alpha(options.alpha);
  if (options.spatial_mode == SpatialMode::Slx && (options.k < 1 || options.k > options.n - 1)) {
    throw Error(ErrorCode::InvalidK, "generator k must lie in [1, n-1]");
  }
  const Eigen::Index n = options.n;
  const Eigen::Index p = options.covariates;
  const Eigen::Index d = options.parts - 1;

  std::seed_seq seq{static_cast<std::uint32_t>(options.seed), static_cast<std::uint32_t>(options.seed >> 32)};
  std::mt19937_64 rng(seq);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  SyntheticData out;
  out.options = options;
  MatrixXd cov(n, p);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < p; ++j) cov(i, j) = normal(rng);
  }
  out.x = DesignMatrix::with_intercept(cov);

  out.b = CoefficientMatrix(p + 1, d);
  for (Eigen::Index m = 0; m < d; ++m) {
    out.b(0, m) = -0.5 + unit(rng);
    for (Eigen::Index j = 1; j <= p; ++j) out.b(j, m) = signed_uniform(rng, 0.5, 1.5);
  }
  out.gamma = CoefficientMatrix::Zero(p, d);

  VectorXd lat(n);
  VectorXd lon(n);
  if (options.spatial_mode == SpatialMode::TwoCluster) {
    out.cluster.resize(static_cast<std::size_t>(n));
    std::bernoulli_distribution side(0.5);
    for (Eigen::Index i = 0; i < n; ++i) {
      const int c = side(rng) ? 1 : 0;
      out.cluster[static_cast<std::size_t>(i)] = c;
      lat[i] = 39.0 + 0.3 * normal(rng);
      lon[i] = (c == 0 ? 21.0 : 23.0) + 0.3 * normal(rng);
    }
  } else {
    for (Eigen::Index i = 0; i < n; ++i) {
      lat[i] = 30.0 + 30.0 * unit(rng);
      lon[i] = -10.0 + 40.0 * unit(rng);
    }
  }
  out.coords = GeoCoordinates(lat, lon);

  DesignMatrix design = out.x;
  CoefficientMatrix b_full = out.b;
  if (options.spatial_mode == SpatialMode::Slx) {
    for (Eigen::Index m = 0; m < d; ++m) {
      for (Eigen::Index j = 0; j < p; ++j) out.gamma(j, m) = signed_uniform(rng, 0.25, 0.75);
    }
    design = out.x.augmented(spatial_lag(contiguity_matrix(out.coords, options.k), out.x));
    b_full = CoefficientMatrix(2 * p + 1, d);
    b_full << out.b, out.gamma;
  }

  const std::vector<CoefficientMatrix> per_row = out.row_coefficients();
  MatrixXd y(n, options.parts);
  for (Eigen::Index i = 0; i < n; ++i) {
    CoefficientMatrix bi = b_full;
    bi.topRows(p + 1) = per_row[static_cast<std::size_t>(i)];
    const DesignMatrix xi = design.select_rows({i});
    if (options.noise_scale == 0.0) {
      y.row(i) = fitted_mean(xi, bi).values().row(0);
      continue;
    }
    const EuclideanScores centre = transformed_mean(xi, bi, options.alpha);
    bool drawn = false;
    for (int attempt = 0; attempt < kMaxRedraws && !drawn; ++attempt) {
      EuclideanScores z = centre;
      for (Eigen::Index m = 0; m < d; ++m) z(0, m) += options.noise_scale * normal(rng);
      try {
        const CompositionMatrix yi = alpha_transform_inverse(z, options.alpha);
        if ((yi.values().array() > 0.0).all()) {
          y.row(i) = yi.values().row(0);
          drawn = true;
        }
      } catch (const Error& e) {
        if (e.code() != ErrorCode::OutOfImage) throw;
      }
    }
    if (!drawn) throw Error(ErrorCode::InvalidParameters, "noise scale too large: draws keep leaving the simplex");
  }
  out.y = CompositionMatrix(std::move(y));
  return out;
}

void write_synthetic_csv(const SyntheticData& data, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::InvalidParameters, "cannot write '" + path + "'");
  const Eigen::Index parts = data.y.parts();
  const Eigen::Index p = data.x.covariates();
  for (Eigen::Index j = 0; j < parts; ++j) out << (j ? "," : "") << "y" << j + 1;
  for (Eigen::Index j = 0; j < p; ++j) out << ",x" << j + 1;
  out << ",lat,lon\n";
  for (Eigen::Index i = 0; i < data.y.rows(); ++i) {
    for (Eigen::Index j = 0; j < parts; ++j) out << (j ? "," : "") << format_double(data.y(i, j));
    for (Eigen::Index j = 1; j <= p; ++j) out << "," << format_double(data.x.values()(i, j));
    out << "," << format_double(data.coords.lat()[i]) << "," << format_double(data.coords.lon()[i]) << "\n";
  }
}

Json synthetic_truth(const SyntheticData& data) {
  Json doc;
  Json s;
  s["n"] = data.options.n;
  s["D"] = data.options.parts;
  s["p"] = data.options.covariates;
  s["alpha"] = data.options.alpha;
  s["noise_scale"] = data.options.noise_scale;
  s["spatial_mode"] = to_string(data.options.spatial_mode);
  if (data.options.spatial_mode == SpatialMode::Slx) s["k"] = data.options.k;
  s["seed"] = data.options.seed;
  doc["settings"] = s;
  doc["B"] = matrix_json(data.b);
  doc["Gamma"] = matrix_json(data.gamma);
  if (!data.cluster.empty()) doc["cluster"] = data.cluster;
  return doc;
}

DatasetSpec synthetic_spec(const std::string& path, int parts, int covariates) {
  DatasetSpec spec;
  spec.path = path;
  for (int j = 1; j <= parts; ++j) spec.composition_columns.push_back("y" + std::to_string(j));
  for (int j = 1; j <= covariates; ++j) spec.covariate_columns.push_back("x" + std::to_string(j));
  spec.lat_column = "lat";
  spec.lon_column = "lon";
  return spec;
}

}  // namespace alphareg
