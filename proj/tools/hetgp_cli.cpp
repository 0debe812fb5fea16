// hetgp_cli: fit/predict and the desk-scale benchmark runs.
//
// Every run writes <out>/manifest.json. Exit codes: 0 success, 1 a check
// reported failures, 2 validation, 3 convergence or factorization, 4 I/O.

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "hetgp/hetgp.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace hetgp;

namespace {

struct RunConfig {
  std::string command;
  std::string data;
  std::string out;
  std::optional<std::string> kernel;
  std::string model = "het";
  std::uint64_t seed = 1;
  int splits = 300;
  int max_iter = 100;
  std::string lower, upper;
  int restarts = 100;
  std::string model_file;
  std::string xnew;
  bool skip_full = false;

  json echo() const {
    json j;
    j["command"] = command;
    j["data"] = data;
    j["out"] = out;
    j["kernel"] = kernel ? json(*kernel) : json(nullptr);
    j["model"] = model;
    j["seed"] = seed;
    j["splits"] = splits;
    j["max_iter"] = max_iter;
    j["lower"] = lower;
    j["upper"] = upper;
    j["restarts"] = restarts;
    j["model_file"] = model_file;
    j["xnew"] = xnew;
    j["skip_full"] = skip_full;
    return j;
  }
};

class Run {
 public:
  explicit Run(RunConfig c) : c_(std::move(c)) {}

  int execute() {
    if (c_.out.empty()) {
      throw ValidationError("--out is required");
    }
    std::error_code ec;
    fs::create_directories(c_.out, ec);
    if (ec || !fs::is_directory(c_.out)) {
      throw IoError("cannot create output directory " + c_.out);
    }
    if (c_.command == "fit") return fit();
    if (c_.command == "predict") return predict();
    if (c_.command == "bench-motorcycle") return bench_motorcycle();
    if (c_.command == "bench-woodbury") return bench_woodbury();
    if (c_.command == "bench-init") return bench_init();
    if (c_.command == "sir-demo") return sir_demo();
    if (c_.command == "identity-check") return identity_check();
    throw ValidationError("unknown command '" + c_.command + "'");
  }

  json& results() { return results_; }
  const std::vector<std::string>& outputs() const { return outputs_; }

 private:
  std::string path(const std::string& name) {
    const std::string p = (fs::path(c_.out) / name).string();
    outputs_.push_back(p);
    return p;
  }

  KernelFamily family(KernelFamily fallback) const {
    return c_.kernel ? kernel_family_from_string(*c_.kernel) : fallback;
  }

  OptSettings optim() const {
    if (c_.max_iter < 1) {
      throw ValidationError("--max-iter must be positive");
    }
    OptSettings o;
    o.max_iter = c_.max_iter;
    return o;
  }

  static Eigen::VectorXd parse_list(const std::string& s, Eigen::Index d, const char* flag) {
    std::vector<double> v;
    std::stringstream ss(s);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
      try {
        std::size_t used = 0;
        v.push_back(std::stod(tok, &used));
        if (used != tok.size()) throw std::invalid_argument(tok);
      } catch (const std::exception&) {
        throw ValidationError(std::string(flag) + ": cannot parse '" + tok + "'");
      }
    }
    if (v.size() == 1) {
      return Eigen::VectorXd::Constant(d, v[0]);
    }
    if (static_cast<Eigen::Index>(v.size()) != d) {
      throw ValidationError(std::string(flag) + ": need 1 or " + std::to_string(d) + " values");
    }
    return Eigen::Map<const Eigen::VectorXd>(v.data(), d);
  }

  HomBounds bounds(const ReplicatedDesign& d, KernelFamily f) const {
    HomBounds b = default_hom_bounds(d, f);
    if (!c_.lower.empty()) b.theta_lower = parse_list(c_.lower, d.dim(), "--lower");
    if (!c_.upper.empty()) b.theta_upper = parse_list(c_.upper, d.dim(), "--upper");
    b.validate(d.dim());
    return b;
  }

  const std::string& need(const std::string& v, const char* flag) const {
    if (v.empty()) {
      throw ValidationError(std::string(flag) + " is required for " + c_.command);
    }
    return v;
  }

  int fit() {
    const auto [X, Y] = split_xy(read_csv(need(c_.data, "--data")));
    const ReplicatedDesign d = find_reps(X, Y);
    const KernelFamily f = family(KernelFamily::SquaredExponential);
    const HomBounds b = bounds(d, f);
    json model;
    if (c_.model == "hom") {
      HomSettings s;
      s.family = f;
      s.optim = optim();
      const HomModel m = hom_fit(d, b, s);
      model = to_json(m);
      results_["nll"] = m.nll();
    } else if (c_.model == "het") {
      HetSettings s;
      s.family = f;
      s.optim = optim();
      s.mean_bounds = b;
      const HetModel m = het_fit(d, s);
      model = to_json(m);
      results_["joint_loglik"] = m.joint_loglik();
      results_["fallback"] = m.fallback();
    } else if (c_.model == "sk") {
      HomSettings s;
      s.family = f;
      s.optim = optim();
      model = to_json(sk_fit(d, b, s));
    } else {
      throw ValidationError("--model must be hom, het or sk");
    }
    results_["n"] = d.n();
    results_["N"] = d.N;
    save_json(path("model.json"), model);
    return 0;
  }

  int predict() {
    const LoadedModel m = model_from_json(load_json(need(c_.model_file, "--model-file")));
    const CsvTable t = read_csv(need(c_.xnew, "--xnew"));
    const Predictions p = m.predict(t.data);
    const Eigen::Index d = t.data.cols();
    Eigen::MatrixXd out(t.data.rows(), d + 3);
    out << t.data, p.mean, p.sd2, p.nugs;
    std::vector<std::string> header = t.header;
    header.insert(header.end(), {"mean", "sd2", "nugs"});
    write_csv(path("predictions.csv"), header, out);
    results_["rows"] = t.data.rows();
    return 0;
  }

  int bench_motorcycle() {
    const auto [X, Y] = split_xy(read_csv(need(c_.data, "--data")));
    HetSettings s;
    s.family = family(KernelFamily::SquaredExponential);
    s.optim = optim();
    const bench::CvSummary cv = bench::cross_validate(X, Y, c_.splits, c_.seed, s);
    Eigen::MatrixXd rows(static_cast<Eigen::Index>(cv.splits.size()), 8);
    for (std::size_t i = 0; i < cv.splits.size(); ++i) {
      const auto& sc = cv.splits[i];
      rows.row(static_cast<Eigen::Index>(i)) << sc.split, sc.het_nmse, sc.het_nlpd, sc.het_score, sc.hom_nmse,
          sc.hom_nlpd, sc.hom_score, sc.fallback ? 1.0 : 0.0;
    }
    write_csv(path("motorcycle_splits.csv"),
              {"split", "whgp_nmse", "whgp_nlpd", "whgp_score", "wgp_nmse", "wgp_nlpd", "wgp_score", "fallback"},
              rows);
    auto col_mean = [&](Eigen::Index c) { return rows.col(c).mean(); };
    Eigen::MatrixXd agg(2, 7);
    agg.row(0) << 0, cv.het_nmse_mean, cv.het_nmse_sd, cv.het_nlpd_mean, cv.het_nlpd_sd, col_mean(3),
        static_cast<double>(cv.fallbacks);
    agg.row(1) << 1, cv.hom_nmse_mean, cv.hom_nmse_sd, cv.hom_nlpd_mean, cv.hom_nlpd_sd, col_mean(6), 0.0;
    write_csv(path("motorcycle_summary.csv"),
              {"model", "nmse_mean", "nmse_sd", "nlpd_mean", "nlpd_sd", "score_mean", "fallbacks"}, agg);
    results_["model_codes"] = {{"0", "whgp"}, {"1", "wgp"}};
    results_["whgp_nlpd"] = cv.het_nlpd_mean;
    results_["wgp_nlpd"] = cv.hom_nlpd_mean;
    return 0;
  }

  int bench_woodbury() {
    const bench::WoodburyResult r =
        bench::woodbury_bench(c_.seed, family(KernelFamily::SquaredExponential), !c_.skip_full);
    const Eigen::Index rows_n = c_.skip_full ? 1 : 2;
    Eigen::MatrixXd rows(rows_n, 3 + r.theta_unique.size());
    rows.row(0) << 0, static_cast<double>(r.n), r.theta_unique.transpose(), r.g_unique;
    if (!c_.skip_full) {
      rows.row(1) << 1, static_cast<double>(r.N), r.theta_full.transpose(), r.g_full;
    }
    std::vector<std::string> header{"path", "rows"};
    for (Eigen::Index k = 0; k < r.theta_unique.size(); ++k) {
      header.push_back("theta" + std::to_string(k + 1));
    }
    header.push_back("g");
    write_csv(path("woodbury.csv"), header, rows);
    // Timings vary run to run, so they live in the manifest only.
    results_["path_codes"] = {{"0", "unique"}, {"1", "full"}};
    results_["time_unique_s"] = r.time_unique;
    if (!c_.skip_full) {
      results_["time_full_s"] = r.time_full;
      results_["speedup"] = r.speedup();
    }
    return 0;
  }

  int bench_init() {
    const ReplicatedDesign d = load_motorcycle(need(c_.data, "--data"));
    HetSettings s;
    s.family = family(KernelFamily::SquaredExponential);
    s.optim = optim();
    const bench::InitStudy st = bench::init_study(d, c_.restarts, c_.seed, s);
    Eigen::MatrixXd rows(c_.restarts + 1, 4);
    rows.row(0) << -1, st.default_loglik, st.default_mean_loglik, st.default_nu_g;
    for (int r = 0; r < c_.restarts; ++r) {
      const auto i = static_cast<std::size_t>(r);
      rows.row(r + 1) << r, st.random_loglik[i], st.random_mean_loglik[i], st.random_nu_g[i];
    }
    write_csv(path("init.csv"), {"start", "joint_loglik", "mean_loglik", "nu_g"}, rows);
    results_["beaten_or_tied"] = st.beaten_or_tied();
    results_["winners_with_worse_fit"] = st.winners_with_worse_fit();
    return 0;
  }

  int sir_demo() {
    const bench::SirStudy st = bench::sir_study(c_.seed, {}, family(KernelFamily::Matern52));
    const Eigen::Index m = st.grid_x.rows();
    Eigen::MatrixXd rows(m, 9);
    rows << st.grid_x, st.train_reps.cast<double>(), st.ref_mean, st.ref_sd, st.het_mean, st.het_sd, st.sk_mean,
        st.sk_sd;
    write_csv(path("sir_grid.csv"), {"S", "I", "reps", "ref_mean", "ref_sd", "het_mean", "het_sd", "sk_mean", "sk_sd"},
              rows);
    Eigen::MatrixXd agg(1, 6);
    agg << st.het_spearman, st.sk_spearman, st.het_score, st.sk_score, st.boundary_ratio, st.het_fallback ? 1.0 : 0.0;
    write_csv(path("sir_summary.csv"),
              {"het_spearman", "sk_spearman", "het_score", "sk_score", "boundary_ratio", "het_fallback"}, agg);
    return 0;
  }

  int identity_check() {
    const auto checks = bench::identity_suite(c_.seed);
    json report = json::array();
    int failures = 0;
    for (const auto& c : checks) {
      report.push_back({{"instance", c.instance},
                        {"family", c.family},
                        {"quantity", c.quantity},
                        {"rel_error", c.rel_error},
                        {"pass", c.pass}});
      failures += c.pass ? 0 : 1;
    }
    save_json(path("identity.json"), {{"checks", report}, {"failures", failures}});
    results_["checks"] = checks.size();
    results_["failures"] = failures;
    std::cout << (failures == 0 ? "PASS" : "FAIL") << " identity-check: " << failures << " of " << checks.size()
              << " failed\n";
    return failures == 0 ? 0 : 1;
  }

  RunConfig c_;
  json results_ = json::object();
  std::vector<std::string> outputs_;
};

void write_manifest(const RunConfig& c, Run* run, int code, const std::string& error, double seconds) {
  if (c.out.empty() || !fs::is_directory(c.out)) {
    return;
  }
  json m;
  m["config"] = c.echo();
  m["version"] = {{"hetgp", kVersion},
                  {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
                                std::to_string(EIGEN_MINOR_VERSION)},
                  {"compiler", __VERSION__}};
  m["wall_time_s"] = seconds;
  m["exit_code"] = code;
  if (!error.empty()) m["error"] = error;
  if (run) {
    m["outputs"] = run->outputs();
    m["results"] = run->results();
  }
  try {
    save_json((fs::path(c.out) / "manifest.json").string(), m);
  } catch (const Error& e) {
    std::cerr << "warning: " << e.what() << '\n';
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Heteroskedastic GP fitting and benchmarks"};
  RunConfig c;
  app.add_option("--command", c.command, "What to run")
      ->required()
      ->check(CLI::IsMember({"fit", "predict", "bench-motorcycle", "bench-woodbury", "bench-init", "sir-demo",
                             "identity-check"}));
  app.add_option("--data", c.data, "Input CSV (inputs..., response)");
  app.add_option("--out", c.out, "Output directory")->required();
  app.add_option("--kernel", c.kernel, "sqexp or matern52");
  app.add_option("--model", c.model, "hom, het or sk")->check(CLI::IsMember({"hom", "het", "sk"}));
  app.add_option("--seed", c.seed, "Seed for stochastic commands");
  app.add_option("--splits", c.splits, "Cross-validation splits")->check(CLI::PositiveNumber);
  app.add_option("--max-iter", c.max_iter, "Optimizer iteration cap");
  app.add_option("--lower", c.lower, "Lengthscale lower bounds, comma-separated");
  app.add_option("--upper", c.upper, "Lengthscale upper bounds, comma-separated");
  app.add_option("--restarts", c.restarts, "Random starts for bench-init")->check(CLI::NonNegativeNumber);
  app.add_option("--model-file", c.model_file, "Model JSON for predict");
  app.add_option("--xnew", c.xnew, "CSV of prediction inputs (with header)");
  app.add_flag("--skip-full", c.skip_full, "bench-woodbury: skip the full-N fit");
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  const auto t0 = std::chrono::steady_clock::now();
  Run run(c);
  int code = 0;
  std::string error;
  try {
    code = run.execute();
  } catch (const ValidationError& e) {
    code = 2;
    error = e.what();
  } catch (const ConvergenceError& e) {
    code = 3;
    error = e.what();
  } catch (const FactorizationError& e) {
    code = 3;
    error = e.what();
  } catch (const IoError& e) {
    code = 4;
    error = e.what();
  } catch (const Error& e) {
    code = 2;
    error = e.what();
  }
  if (!error.empty()) {
    std::cerr << "error: " << error << '\n';
  }
  write_manifest(c, &run, code, error, bench::seconds_since(t0));
  return code;
}
