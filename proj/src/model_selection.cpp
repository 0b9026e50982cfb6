#include "alphareg/model_selection.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "alphareg/error.hpp"
#include "alphareg/parallel.hpp"

namespace alphareg {

double kld_row(const Eigen::Ref<const Eigen::RowVectorXd>& observed, const Eigen::Ref<const Eigen::RowVectorXd>& fitted) {
  double total = 0.0;
  for (Eigen::Index j = 0; j < observed.size(); ++j) {
    if (!(fitted[j] > 0.0)) {
      std::ostringstream os;
      os << "fitted component " << j << " = " << fitted[j];
      throw Error(ErrorCode::NonpositiveFitted, os.str());
    }
    if (observed[j] > 0.0) total += observed[j] * std::log(observed[j] / fitted[j]);
  }
  return total;
}

double kld(const CompositionMatrix& observed, const CompositionMatrix& fitted) {
  if (observed.rows() != fitted.rows() || observed.parts() != fitted.parts()) {
    throw Error(ErrorCode::ShapeMismatch, "observed and fitted compositions differ in shape");
  }
  double total = 0.0;
  for (Eigen::Index i = 0; i < observed.rows(); ++i) total += kld_row(observed.values().row(i), fitted.values().row(i));
  return total;
}

double median_heuristic_bandwidth(const GeoCoordinates& coords) {
  const Eigen::Index n = coords.size();
  if (n < 2) throw Error(ErrorCode::InvalidParameters, "median heuristic needs at least two locations");
  std::vector<double> dist;
  dist.reserve(static_cast<std::size_t>(n * (n - 1) / 2));
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = i + 1; j < n; ++j) {
      dist.push_back(std::sqrt(chordal_distance_sq(coords.point(i), coords.point(j))));
    }
  }
  const std::size_t mid = dist.size() / 2;
  std::nth_element(dist.begin(), dist.begin() + static_cast<std::ptrdiff_t>(mid), dist.end());
  double median = dist[mid];
  if (dist.size() % 2 == 0) {
    const double lower = *std::max_element(dist.begin(), dist.begin() + static_cast<std::ptrdiff_t>(mid));
    median = 0.5 * (median + lower);
  }
  if (!(median > 0.0)) {
    throw Error(ErrorCode::AllCoincident, "median pairwise distance is zero; locations coincide");
  }
  return median;
}

std::vector<double> default_h_grid(const GeoCoordinates& coords) {
  const double median = median_heuristic_bandwidth(coords);
  std::vector<double> grid(10);
  for (int t = 0; t < 10; ++t) grid[static_cast<std::size_t>(t)] = median * std::exp2(-4.0 + 6.0 * t / 9.0);
  grid.front() = median / 16.0;
  grid.back() = median * 4.0;
  return grid;
}

Eigen::RowVectorXd held_out_lag(const GeoCoordinates& retained_coords, const DesignMatrix& retained_x,
                                const Vector3& focal, int k) {
  const VectorXd w = neighbour_weights(retained_coords, focal, k);
  return w.transpose() * retained_x.covariate_block();
}

namespace {

void check_grid_alphas(const std::vector<double>& alphas, const CompositionMatrix& y) {
  if (alphas.empty()) throw Error(ErrorCode::InvalidParameters, "alpha grid is empty");
  for (double a : alphas) {
    check_alpha(a);
    check_zeros_rule(y, a);
  }
}

void check_cv_inputs(const CompositionMatrix& y, const DesignMatrix& x) {
  if (y.rows() != x.rows()) throw Error(ErrorCode::DimensionMismatch, "response and design differ in length");
  if (x.rows() < 3) throw Error(ErrorCode::InvalidParameters, "leave-one-out needs at least three observations");
}

std::vector<Eigen::Index> all_but(Eigen::Index n, Eigen::Index skip) {
  std::vector<Eigen::Index> rows;
  rows.reserve(static_cast<std::size_t>(n - 1));
  for (Eigen::Index j = 0; j < n; ++j) {
    if (j != skip) rows.push_back(j);
  }
  return rows;
}

// Per-fold outcome for every grid point (alpha-major).
struct FoldOutcome {
  std::vector<double> scores;
  std::vector<Eigen::RowVectorXd> predictions;
};

CvResult reduce(const std::vector<double>& alphas, const std::vector<double>& second,
                const std::vector<FoldOutcome>& folds, Eigen::Index parts, bool keep) {
  const auto na = static_cast<Eigen::Index>(alphas.size());
  const auto ns = static_cast<Eigen::Index>(std::max<std::size_t>(1, second.size()));
  CvResult out;
  out.alphas = alphas;
  out.second = second;
  out.scores = MatrixXd::Zero(na, ns);
  for (const FoldOutcome& f : folds) {
    for (Eigen::Index a = 0; a < na; ++a) {
      for (Eigen::Index s = 0; s < ns; ++s) out.scores(a, s) += f.scores[static_cast<std::size_t>(a * ns + s)];
    }
  }
  if (keep) {
    out.predictions.assign(static_cast<std::size_t>(na * ns), MatrixXd(static_cast<Eigen::Index>(folds.size()), parts));
    for (std::size_t i = 0; i < folds.size(); ++i) {
      for (std::size_t g = 0; g < out.predictions.size(); ++g) {
        out.predictions[g].row(static_cast<Eigen::Index>(i)) = folds[i].predictions[g];
      }
    }
  }

  // Lowest score; ties go to the smaller alpha, then the smaller k or h.
  double best = std::numeric_limits<double>::infinity();
  bool found = false;
  for (Eigen::Index a = 0; a < na; ++a) {
    for (Eigen::Index s = 0; s < ns; ++s) {
      const double v = out.scores(a, s);
      const double av = alphas[static_cast<std::size_t>(a)];
      const double sv = second.empty() ? 0.0 : second[static_cast<std::size_t>(s)];
      const double bav = alphas[static_cast<std::size_t>(out.best_alpha_index)];
      const double bsv = second.empty() ? 0.0 : second[static_cast<std::size_t>(out.best_second_index)];
      if (!found || v < best || (v == best && (av < bav || (av == bav && sv < bsv)))) {
        best = v;
        out.best_alpha_index = a;
        out.best_second_index = s;
        found = true;
      }
    }
  }
  out.best_alpha = alphas[static_cast<std::size_t>(out.best_alpha_index)];
  if (!second.empty()) out.best_second = second[static_cast<std::size_t>(out.best_second_index)];
  return out;
}

std::vector<EuclideanScores> transform_per_alpha(const CompositionMatrix& y, const std::vector<double>& alphas) {
  std::vector<EuclideanScores> out;
  out.reserve(alphas.size());
  for (double a : alphas) out.push_back(alpha_transform(y, a));
  return out;
}

}  // namespace

CvResult loocv_alpha(const CompositionMatrix& y, const DesignMatrix& x, const CvGrid& grid, const CvOptions& opts) {
  check_cv_inputs(y, x);
  check_grid_alphas(grid.alphas, y);
  const Eigen::Index n = x.rows();
  const std::size_t na = grid.alphas.size();
  const std::vector<EuclideanScores> y_alpha = transform_per_alpha(y, grid.alphas);
  const CoefficientMatrix zero = CoefficientMatrix::Zero(x.cols(), y.parts() - 1);

  std::vector<FoldOutcome> folds(static_cast<std::size_t>(n));
  parallel_for(
      static_cast<std::size_t>(n),
      [&](std::size_t fi) {
        const auto i = static_cast<Eigen::Index>(fi);
        const std::vector<Eigen::Index> keep = all_but(n, i);
        const DesignMatrix xr = x.select_rows(keep);
        const DesignMatrix xi = x.select_rows({i});
        FoldOutcome& out = folds[fi];
        out.scores.assign(na, kFailedScore);
        out.predictions.assign(na, Eigen::RowVectorXd::Constant(y.parts(), std::nan("")));
        CoefficientMatrix start = zero;
        for (std::size_t a = 0; a < na; ++a) {
          try {
            const EuclideanScores yr = y_alpha[a](keep, Eigen::all);
            AlphaNlsSolution sol = solve_alpha_nls(yr, xr, grid.alphas[a], opts.solver, start);
            const Eigen::RowVectorXd mu = fitted_mean(xi, sol.coefficients).values().row(0);
            out.scores[a] = kld_row(y.values().row(i), mu);
            out.predictions[a] = mu;
            start = std::move(sol.coefficients);
          } catch (const Error&) {
            start = zero;
          }
        }
      },
      opts.threads);
  return reduce(grid.alphas, {}, folds, y.parts(), opts.keep_predictions);
}

CvResult loocv_slx(const CompositionMatrix& y, const DesignMatrix& x, const GeoCoordinates& coords,
                   const CvGrid& grid, const CvOptions& opts) {
  check_cv_inputs(y, x);
  check_grid_alphas(grid.alphas, y);
  const Eigen::Index n = x.rows();
  if (coords.size() != n) throw Error(ErrorCode::DimensionMismatch, "coordinates and design differ in length");
  if (grid.ks.empty()) throw Error(ErrorCode::InvalidParameters, "k grid is empty");
  for (int k : grid.ks) {
    if (k < 1 || k > n - 1) {
      std::ostringstream os;
      os << "k = " << k << " invalid for " << n << " locations";
      throw Error(ErrorCode::InvalidK, os.str());
    }
  }
  const std::size_t na = grid.alphas.size();
  const std::size_t nk = grid.ks.size();
  const std::vector<EuclideanScores> y_alpha = transform_per_alpha(y, grid.alphas);
  const CoefficientMatrix zero = CoefficientMatrix::Zero(2 * x.cols() - 1, y.parts() - 1);

  std::vector<FoldOutcome> folds(static_cast<std::size_t>(n));
  parallel_for(
      static_cast<std::size_t>(n),
      [&](std::size_t fi) {
        const auto i = static_cast<Eigen::Index>(fi);
        const std::vector<Eigen::Index> keep = all_but(n, i);
        const DesignMatrix xr = x.select_rows(keep);
        const GeoCoordinates cr = coords.select_rows(keep);
        FoldOutcome& out = folds[fi];
        out.scores.assign(na * nk, kFailedScore);
        out.predictions.assign(na * nk, Eigen::RowVectorXd::Constant(y.parts(), std::nan("")));
        for (std::size_t kk = 0; kk < nk; ++kk) {
          const int k = grid.ks[kk];
          // The retained points have n-2 candidate neighbours each.
          const int k_retained = std::min<int>(k, static_cast<int>(n - 2));
          DesignMatrix xa;
          DesignMatrix xi;
          try {
            const SpatialWeightMatrix w = contiguity_matrix(cr, k_retained);
            xa = xr.augmented(spatial_lag(w, xr));
            xi = x.select_rows({i}).augmented(held_out_lag(cr, xr, coords.point(i), k));
          } catch (const Error&) {
            continue;
          }
          CoefficientMatrix start = zero;
          for (std::size_t a = 0; a < na; ++a) {
            const std::size_t g = a * nk + kk;
            try {
              const EuclideanScores yr = y_alpha[a](keep, Eigen::all);
              AlphaNlsSolution sol = solve_alpha_nls(yr, xa, grid.alphas[a], opts.solver, start);
              const Eigen::RowVectorXd mu = fitted_mean(xi, sol.coefficients).values().row(0);
              out.scores[g] = kld_row(y.values().row(i), mu);
              out.predictions[g] = mu;
              start = std::move(sol.coefficients);
            } catch (const Error&) {
              start = zero;
            }
          }
        }
      },
      opts.threads);

  std::vector<double> ks(grid.ks.begin(), grid.ks.end());
  return reduce(grid.alphas, ks, folds, y.parts(), opts.keep_predictions);
}

CvResult loocv_gwar(const CompositionMatrix& y, const DesignMatrix& x, const GeoCoordinates& coords,
                    const CvGrid& grid, const CvOptions& opts) {
  check_cv_inputs(y, x);
  check_grid_alphas(grid.alphas, y);
  const Eigen::Index n = x.rows();
  if (coords.size() != n) throw Error(ErrorCode::DimensionMismatch, "coordinates and design differ in length");
  if (grid.hs.empty()) throw Error(ErrorCode::InvalidParameters, "bandwidth grid is empty");
  for (double h : grid.hs) {
    if (!(h > 0.0) || !std::isfinite(h)) {
      std::ostringstream os;
      os << "bandwidth must be positive, got " << h;
      throw Error(ErrorCode::NonpositiveBandwidth, os.str());
    }
  }
  const std::size_t na = grid.alphas.size();
  const std::size_t nh = grid.hs.size();
  // Bandwidths are visited from widest to narrowest so each local fit starts
  // from a smoother neighbour.
  std::vector<std::size_t> h_order(nh);
  std::iota(h_order.begin(), h_order.end(), 0);
  std::stable_sort(h_order.begin(), h_order.end(),
                   [&](std::size_t a, std::size_t b) { return grid.hs[a] > grid.hs[b]; });

  const std::vector<EuclideanScores> y_alpha = transform_per_alpha(y, grid.alphas);
  const CoefficientMatrix zero = CoefficientMatrix::Zero(x.cols(), y.parts() - 1);

  std::vector<FoldOutcome> folds(static_cast<std::size_t>(n));
  parallel_for(
      static_cast<std::size_t>(n),
      [&](std::size_t fi) {
        const auto i = static_cast<Eigen::Index>(fi);
        const std::vector<Eigen::Index> keep = all_but(n, i);
        const DesignMatrix xr = x.select_rows(keep);
        const DesignMatrix xi = x.select_rows({i});
        const GeoCoordinates cr = coords.select_rows(keep);
        const Vector3 focal = coords.point(i);
        FoldOutcome& out = folds[fi];
        out.scores.assign(na * nh, kFailedScore);
        out.predictions.assign(na * nh, Eigen::RowVectorXd::Constant(y.parts(), std::nan("")));
        CoefficientMatrix global = zero;
        for (std::size_t a = 0; a < na; ++a) {
          const EuclideanScores yr = y_alpha[a](keep, Eigen::all);
          try {
            global = solve_alpha_nls(yr, xr, grid.alphas[a], opts.solver, global).coefficients;
          } catch (const Error&) {
            global = zero;
          }
          CoefficientMatrix start = global;
          for (std::size_t hh : h_order) {
            const std::size_t g = a * nh + hh;
            try {
              AlphaNlsSolution sol =
                  fit_gwar_local(yr, xr, cr, focal, grid.alphas[a], grid.hs[hh], opts.solver, start);
              const Eigen::RowVectorXd mu = fitted_mean(xi, sol.coefficients).values().row(0);
              out.scores[g] = kld_row(y.values().row(i), mu);
              out.predictions[g] = mu;
              start = std::move(sol.coefficients);
            } catch (const Error&) {
              start = global;
            }
          }
        }
      },
      opts.threads);
  return reduce(grid.alphas, grid.hs, folds, y.parts(), opts.keep_predictions);
}

}  // namespace alphareg
