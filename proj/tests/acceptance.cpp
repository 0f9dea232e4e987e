// Acceptance runner: one PASS/FAIL line per criterion.
//
//   acceptance            run all criteria
//   acceptance 3 9 12     run the listed criteria
//
// Exit status is 0 iff every selected criterion passed.

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "vinn/vinn.hpp"

using namespace vinn;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool passed = false;
  std::string detail;
};

struct Criterion {
  int id;
  const char* name;
  double time_limit_s;  // 0 = no runtime bound
  std::function<Outcome()> run;
};

double mean_of(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

double stderr_of(const std::vector<double>& v) {
  const double m = mean_of(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(v.size() - 1)) / std::sqrt(static_cast<double>(v.size()));
}

double median_of(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

std::string fmt(const char* f, double a) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

fs::path work_dir() {
  const fs::path p = fs::temp_directory_path() / "vinn_acceptance";
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

/// Runs a plan into a fresh CSV and returns its rows.
std::vector<ResultRow> run_fresh(Plan plan, const std::string& file) {
  const fs::path out = work_dir() / file;
  fs::remove(out);
  plan.config.output = out.string();
  std::ostringstream log;
  run_plan(plan, {}, log);
  return read_results(out.string());
}

/// Final values of `metric` grouped by the run_id component starting with `key=`.
std::map<std::string, std::vector<double>> final_by(const std::vector<ResultRow>& rows, const std::string& metric,
                                                    const std::string& key, const std::string& loss = "") {
  std::map<std::string, std::vector<double>> out;
  for (const auto& r : rows) {
    if (r.metric_name != metric || r.epoch != "final" || (!loss.empty() && r.loss != loss)) continue;
    const auto pos = r.run_id.find("/" + key + "=");
    if (pos == std::string::npos) continue;
    const auto start = pos + key.size() + 2;
    out[r.run_id.substr(start, r.run_id.find('/', start) - start)].push_back(
        r.status == "ok" ? r.metric_value : std::nan(""));
  }
  return out;
}

Outcome from_suite(const CheckSuite& s) {
  std::string d;
  for (const auto& st : s.stats) d += (d.empty() ? "" : "; ") + st.name + "=" + fmt("%.3g", st.value);
  return {s.passed(), d};
}

// ---------------------------------------------------------------------------

Outcome mlp_kl_bound() {
  std::vector<double> est;
  for (std::uint64_t seed = 0; seed < 10; ++seed) est.push_back(kl_oracle_cell("mlp", 10000, seed)[1].value);
  const double m = mean_of(est), se = stderr_of(est);
  const bool ok = m >= 0.35 && m <= 0.55 && m <= 0.5 + 2.0 * se;
  return {ok, "mean=" + fmt("%.4f", m) + " stderr=" + fmt("%.4f", se) + " oracle=0.5"};
}

Outcome rkhs_kl() {
  const double radii[] = {0.5, 2.0, 8.0};
  std::vector<std::vector<double>> est(3);
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    Streams s = seed_everything(seed);
    Tensor p = s.data.normal_tensor(Shape{1000, 1}, 0.0, 1.0), q = s.data.normal_tensor(Shape{1000, 1}, 1.0, 1.0);
    for (int k = 0; k < 3; ++k) {
      DvOptions o;
      o.b = radii[k];
      est[k].push_back(dv_kl_estimate(p, q, o).estimate);
    }
  }
  bool ok = true;
  std::string d;
  for (int k = 0; k < 3; ++k) {
    d += "b=" + fmt("%g", radii[k]) + ":" + fmt("%.4f", mean_of(est[k])) + " ";
    if (k > 0 && mean_of(est[k]) < mean_of(est[k - 1]) - 2.0 * std::max(stderr_of(est[k]), stderr_of(est[k - 1])))
      ok = false;
  }
  const double last = mean_of(est[2]);
  ok = ok && last >= 0.30 && last <= 0.55;
  Rng rng = seed_everything(0).eval;
  Tensor p = rng.normal_tensor(Shape{1000, 1});
  const double same = dv_kl_estimate(p, p).estimate;
  ok = ok && std::abs(same) < 0.05;
  return {ok, d + "P==Q:" + fmt("%.2e", same)};
}

Outcome pareto_trend() {
  ExperimentConfig c = find_experiment("pareto-moments").defaults();
  c.alphas = {1.0, 2.0, 10.0};
  const auto w1 = final_by(run_fresh(plan_pareto_moments(c), "pareto.csv"), "w1", "alpha");
  const double a1 = median_of(w1.at("1")), a2 = median_of(w1.at("2")), a10 = median_of(w1.at("10"));
  return {a10 < a2 && a2 < a1,
          "median w1: alpha=1:" + fmt("%.4g", a1) + " alpha=2:" + fmt("%.4g", a2) + " alpha=10:" + fmt("%.4g", a10)};
}

Outcome support_ordering() {
  ExperimentConfig c = find_experiment("support-mismatch").defaults();
  c.supports = {{0.0, 1.0}, {3.0, 4.0}, {5.0, 6.0}};
  const auto rows = run_fresh(plan_support_mismatch(c), "support.csv");
  const auto kl = final_by(rows, "mmd", "support", "KL"), sk = final_by(rows, "mmd", "support", "sinkhorn");
  const double kl0 = median_of(kl.at("0:1")), kl3 = median_of(kl.at("3:4")), kl5 = median_of(kl.at("5:6"));
  const double sk0 = median_of(sk.at("0:1")), sk3 = median_of(sk.at("3:4")), sk5 = median_of(sk.at("5:6"));
  const bool ok = kl0 < kl5 && sk0 < sk5 && kl3 >= 1.5 * sk3;
  return {ok, "median MMD KL U(0,1)/U(3,4)/U(5,6)=" + fmt("%.3f", kl0) + "/" + fmt("%.3f", kl3) + "/" +
                  fmt("%.3f", kl5) + " sinkhorn=" + fmt("%.3f", sk0) + "/" + fmt("%.3f", sk3) + "/" +
                  fmt("%.3f", sk5) + " ratio@U(3,4)=" + fmt("%.2f", kl3 / sk3)};
}

Outcome ik_end_to_end() {
  ExperimentConfig c = find_experiment("prior-effect").defaults();
  c.priors = {PriorKind::gaussian};
  const auto rows = run_fresh(plan_prior_effect(c), "ik.csv");
  const auto resim = final_by(rows, "resim_error", "lambda_prime");
  const auto base = final_by(rows, "baseline_resim_error", "lambda_prime");
  const double b = base.at("0")[0], r0 = resim.at("0")[0], r1 = resim.at("1")[0], r100 = resim.at("100")[0];
  const bool ok = r0 < b / 5.0 && r1 <= 1.1 * r0 && r100 > r0;
  return {ok, "baseline=" + fmt("%.4f", b) + " lambda'=0:" + fmt("%.4f", r0) + " lambda'=1:" + fmt("%.4f", r1) +
                  " lambda'=100:" + fmt("%.4f", r100)};
}

Outcome determinism() {
  const ExperimentConfig sc = find_experiment("selfcheck").defaults();
  run_fresh(plan_selfcheck(sc), "det_self_a.csv");
  run_fresh(plan_selfcheck(sc), "det_self_b.csv");
  ExperimentConfig pc = find_experiment("pareto-moments").defaults();
  pc.alphas = {2.0};
  pc.seeds = {3};
  run_fresh(plan_pareto_moments(pc), "det_cell_a.csv");
  run_fresh(plan_pareto_moments(pc), "det_cell_b.csv");
  auto same = [](const char* a, const char* b) {
    const std::string x = slurp(work_dir() / a), y = slurp(work_dir() / b);
    return !x.empty() && strip_wall_time(x) == strip_wall_time(y);
  };
  const bool self_ok = same("det_self_a.csv", "det_self_b.csv");
  const bool cell_ok = same("det_cell_a.csv", "det_cell_b.csv");
  return {self_ok && cell_ok, std::string("selfcheck ") + (self_ok ? "identical" : "differs") + ", sweep cell " +
                                  (cell_ok ? "identical" : "differs")};
}

const std::vector<Criterion>& criteria() {
  static const std::vector<Criterion> list{
      {1, "invertibility", 10, [] { return from_suite(check_invertibility(0)); }},
      {2, "logdet oracle", 30, [] { return from_suite(check_logdet(0)); }},
      {3, "gradient suite", 60, [] { return from_suite(check_loss_gradients(0)); }},
      {4, "variational lower bound (MLP critic)", 120, mlp_kl_bound},
      {5, "RKHS critic", 120, rkhs_kl},
      {6, "sinkhorn consistency", 30, [] { return from_suite(check_sinkhorn_consistency(0)); }},
      {7, "exact OT oracle", 10, [] { return from_suite(check_exact_ot(0)); }},
      {8, "inequality witnesses", 60, [] { return from_suite(check_inequalities(0)); }},
      {9, "pareto moment trend", 900, pareto_trend},
      {10, "support-mismatch ordering", 900, support_ordering},
      {11, "IK end-to-end", 1200, ik_end_to_end},
      {12, "determinism", 0, determinism},
  };
  return list;
}

}  // namespace

int main(int argc, char** argv) {
  std::vector<int> selected;
  for (int i = 1; i < argc; ++i) selected.push_back(std::atoi(argv[i]));
  bool all_ok = true;
  for (const auto& c : criteria()) {
    if (!selected.empty() && std::find(selected.begin(), selected.end(), c.id) == selected.end()) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double t = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const bool in_time = c.time_limit_s <= 0.0 || t < c.time_limit_s;
    const bool ok = o.passed && in_time;
    all_ok = all_ok && ok;
    std::printf("criterion %2d %-38s %s  %s  [%.1fs%s]\n", c.id, c.name, ok ? "PASS" : "FAIL", o.detail.c_str(), t,
                c.time_limit_s > 0.0 ? (in_time ? (" < " + fmt("%g", c.time_limit_s) + "s").c_str()
                                                : (" exceeds " + fmt("%g", c.time_limit_s) + "s").c_str())
                                     : "");
    std::fflush(stdout);
  }
  return all_ok ? 0 : 1;
}
