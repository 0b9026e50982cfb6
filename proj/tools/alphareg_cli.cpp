// alphareg: fit, cross-validate, predict and inspect alpha-regression models
// for compositional responses, and generate synthetic datasets.
//
// Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical failure.

#include <cstdint>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "alphareg/error.hpp"
#include "alphareg/io.hpp"

namespace {

using namespace alphareg;

struct CommonArgs {
  std::string data;
  std::vector<std::string> y;
  std::vector<std::string> x;
  std::string lat = "lat";
  std::string lon = "lon";
  std::string model = "alpha";
  std::optional<double> alpha;
  std::optional<int> k;
  std::optional<double> h;
  std::vector<double> alphas;
  std::vector<int> ks;
  std::vector<double> hs;
  std::string se = "none";
  int replicates = 200;
  std::uint64_t seed = 1;
  int threads = 0;
  int max_iter = LmOptions{}.max_iterations;
  double sse_tol = LmOptions{}.sse_rel_tol;
  double grad_tol = LmOptions{}.grad_inf_tol;
  double damping = LmOptions{}.initial_damping_scale;
  std::string out;
  std::string tables_dir;
  bool timing = false;
  bool quiet = false;
};

void add_common(CLI::App* cmd, CommonArgs& a, bool with_se) {
  cmd->add_option("--data", a.data, "input CSV with a header row")->required()->check(CLI::ExistingFile);
  cmd->add_option("--y", a.y, "composition columns, comma separated (D >= 2)")->required()->delimiter(',');
  cmd->add_option("--x", a.x, "covariate columns, comma separated (p >= 1)")->required()->delimiter(',');
  cmd->add_option("--lat", a.lat, "latitude column (slx, gwar)")->capture_default_str();
  cmd->add_option("--lon", a.lon, "longitude column (slx, gwar)")->capture_default_str();
  cmd->add_option("--model", a.model, "alpha, slx or gwar")
      ->check(CLI::IsMember({"alpha", "slx", "gwar"}))
      ->capture_default_str();
  cmd->add_option("--alpha", a.alpha, "fixed alpha in [-1, 1]; unset selects by leave-one-out CV");
  cmd->add_option("--k", a.k, "fixed number of neighbours (slx)");
  cmd->add_option("--h", a.h, "fixed kernel bandwidth (gwar)");
  cmd->add_option("--alphas", a.alphas, "alpha grid, comma separated")->delimiter(',');
  cmd->add_option("--ks", a.ks, "k grid, comma separated (default 1..10)")->delimiter(',');
  cmd->add_option("--hs", a.hs, "bandwidth grid, comma separated (default median heuristic)")->delimiter(',');
  if (with_se) {
    cmd->add_option("--se", a.se, "none, sandwich, spherical or bootstrap")
        ->check(CLI::IsMember({"none", "sandwich", "spherical", "bootstrap"}))
        ->capture_default_str();
    cmd->add_option("--replicates", a.replicates, "bootstrap replicates")->capture_default_str();
  }
  cmd->add_option("--seed", a.seed, "random seed")->capture_default_str();
  cmd->add_option("--threads", a.threads, "worker threads (0: ALPHAREG_THREADS or hardware)")->capture_default_str();
  cmd->add_option("--max-iter", a.max_iter, "solver iteration limit")->capture_default_str();
  cmd->add_option("--sse-tol", a.sse_tol, "relative SSE tolerance")->capture_default_str();
  cmd->add_option("--grad-tol", a.grad_tol, "gradient infinity-norm tolerance")->capture_default_str();
  cmd->add_option("--damping", a.damping, "initial damping scale")->capture_default_str();
  cmd->add_option("--out", a.out, "result document path (default: standard output)");
  cmd->add_option("--tables-dir", a.tables_dir, "also write result tables as CSV files here");
  cmd->add_flag("--timing", a.timing, "include wall-clock timing in the result document");
  cmd->add_flag("--quiet", a.quiet, "suppress warnings");
}

RunConfig make_config(const CommonArgs& a) {
  RunConfig c;
  c.model = parse_model_kind(a.model);
  c.alpha = a.alpha;
  c.k = a.k;
  c.h = a.h;
  if (!a.alphas.empty()) c.grid.alphas = a.alphas;
  c.grid.ks = a.ks;
  c.grid.hs = a.hs;
  c.solver.max_iterations = a.max_iter;
  c.solver.sse_rel_tol = a.sse_tol;
  c.solver.grad_inf_tol = a.grad_tol;
  c.solver.initial_damping_scale = a.damping;
  c.se = parse_se_kind(a.se);
  c.bootstrap_replicates = a.replicates;
  c.seed = a.seed;
  c.threads = a.threads;
  c.timing = a.timing;
  return c;
}

DatasetSpec make_spec(const CommonArgs& a, const std::string& path) {
  DatasetSpec s;
  s.path = path;
  s.composition_columns = a.y;
  s.covariate_columns = a.x;
  if (a.model != "alpha") {
    s.lat_column = a.lat;
    s.lon_column = a.lon;
  }
  return s;
}

void emit(const Json& doc, const CommonArgs& a) {
  const std::string text = doc.dump(2) + "\n";
  if (a.out.empty()) {
    std::cout << text;
  } else {
    std::ofstream f(a.out);
    if (!f) throw Error(ErrorCode::InvalidParameters, "cannot write '" + a.out + "'");
    f << text;
  }
  if (!a.tables_dir.empty()) export_tables(doc, a.tables_dir);
}

int exit_code(ErrorCode code) {
  switch (category(code)) {
    case ErrorCategory::Usage: return 1;
    case ErrorCategory::Data: return 2;
    case ErrorCategory::Numerical: return 3;
  }
  return 3;
}

void print_error(const std::string& code, const std::string& message) {
  Json err;
  err["error"]["code"] = code;
  err["error"]["message"] = message;
  std::cerr << err.dump() << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"alpha-regression for compositional responses"};
  // Subcommands inherit this; a bare -h would clash with the bandwidth flag --h.
  app.set_help_flag("--help", "print this help and exit");
  app.require_subcommand(1);

  CommonArgs fit_args;
  CommonArgs cv_args;
  CommonArgs margins_args;
  CommonArgs predict_args;
  std::string predict_new;

  auto* fit = app.add_subcommand("fit", "select hyper-parameters if unset, fit and report");
  add_common(fit, fit_args, true);
  auto* cv = app.add_subcommand("cv", "leave-one-out cross-validation scores over the grid");
  add_common(cv, cv_args, false);
  auto* margins = app.add_subcommand("margins", "per-observation marginal effects");
  add_common(margins, margins_args, false);
  auto* predict = app.add_subcommand("predict", "fit on --data and predict the rows of --new");
  add_common(predict, predict_args, false);
  predict->add_option("--new", predict_new, "CSV with covariates (and coordinates) to predict")
      ->required()
      ->check(CLI::ExistingFile);

  SyntheticOptions gen;
  std::string gen_mode = "none";
  std::string gen_out;
  std::string gen_truth;
  auto* generate = app.add_subcommand("generate", "write a synthetic dataset and its ground truth");
  generate->add_option("--n", gen.n, "observations (>= 10)")->capture_default_str();
  generate->add_option("--D", gen.parts, "components (>= 2)")->capture_default_str();
  generate->add_option("--p", gen.covariates, "covariates (>= 1)")->capture_default_str();
  generate->add_option("--alpha", gen.alpha, "alpha of the noise space")->capture_default_str();
  generate->add_option("--noise", gen.noise_scale, "noise scale in transformed space")->capture_default_str();
  generate->add_option("--spatial", gen_mode, "none, slx or two_cluster")
      ->check(CLI::IsMember({"none", "slx", "two_cluster"}))
      ->capture_default_str();
  generate->add_option("--k", gen.k, "neighbours for the slx generator")->capture_default_str();
  generate->add_option("--seed", gen.seed, "random seed")->capture_default_str();
  generate->add_option("--out", gen_out, "output CSV")->required();
  generate->add_option("--truth", gen_truth, "ground-truth JSON (default: <out>.truth.json)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  try {
    if (generate->parsed()) {
      gen.spatial_mode = parse_spatial_mode(gen_mode);
      const SyntheticData data = generate_synthetic(gen);
      write_synthetic_csv(data, gen_out);
      const std::string truth_path = gen_truth.empty() ? gen_out + ".truth.json" : gen_truth;
      std::ofstream f(truth_path);
      if (!f) throw Error(ErrorCode::InvalidParameters, "cannot write '" + truth_path + "'");
      f << synthetic_truth(data).dump(2) << "\n";
      return 0;
    }
    if (fit->parsed()) {
      set_warnings_enabled(!fit_args.quiet);
      const Dataset data = load_dataset(make_spec(fit_args, fit_args.data));
      emit(run_fit(make_config(fit_args), data), fit_args);
    } else if (cv->parsed()) {
      set_warnings_enabled(!cv_args.quiet);
      const Dataset data = load_dataset(make_spec(cv_args, cv_args.data));
      emit(run_cv(make_config(cv_args), data), cv_args);
    } else if (margins->parsed()) {
      set_warnings_enabled(!margins_args.quiet);
      const Dataset data = load_dataset(make_spec(margins_args, margins_args.data));
      emit(run_margins(make_config(margins_args), data), margins_args);
    } else if (predict->parsed()) {
      set_warnings_enabled(!predict_args.quiet);
      const Dataset train = load_dataset(make_spec(predict_args, predict_args.data));
      const Dataset target = load_prediction_dataset(make_spec(predict_args, predict_new));
      emit(run_predict(make_config(predict_args), train, target), predict_args);
    }
  } catch (const Error& e) {
    print_error(std::string(to_string(e.code())), e.what());
    return exit_code(e.code());
  } catch (const std::exception& e) {
    print_error("Internal", e.what());
    return 3;
  }
  return 0;
}
