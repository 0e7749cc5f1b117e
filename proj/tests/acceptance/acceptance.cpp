// Acceptance run: one PASS/FAIL line per criterion. Exit status is the number
// of failing criteria.
#include <spdlog/spdlog.h>

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include "oracles.hpp"
#include "srgan/checkpoint.hpp"
#include "srgan/harness.hpp"
#include "srgan/parallel.hpp"
#include "srgan/synth.hpp"
#include "srgan/trainer.hpp"

#include "CLI11.hpp"

namespace fs = std::filesystem;
using namespace srgan;
using nlohmann::json;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), f, v);
  return buf;
}

int run_criterion(int id, const std::string& title, const std::function<Outcome()>& body) {
  const auto t0 = std::chrono::steady_clock::now();
  Outcome o;
  try {
    o = body();
  } catch (const std::exception& e) {
    o = {false, std::string("exception: ") + e.what()};
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  std::printf("%s  criterion %d  %s: %s [%.1f s]\n", o.pass ? "PASS" : "FAIL", id, title.c_str(), o.detail.c_str(), secs);
  std::fflush(stdout);
  return o.pass ? 0 : 1;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

Outcome gradients() {
  const auto t0 = std::chrono::steady_clock::now();
  std::mt19937_64 rng(2024);
  double worst = 0;
  std::string worst_name;
  for (const auto& c : oracle::primitive_grad_cases()) {
    const double e = c.run(rng);
    if (!(e <= worst)) {
      worst = e;
      worst_name = c.name;
    }
  }
  const GradCheckResult composed = oracle::composed_generator_grad_check(11);
  const double secs = seconds_since(t0);
  const bool ok = worst < 1e-5 && composed.max_rel_error < 1e-2 && secs < 300;
  return {ok, "primitive max rel " + fmt("%.2e", worst) + " (" + worst_name + "), composed " +
                  fmt("%.2e", composed.max_rel_error) + ", " + fmt("%.1f", secs) + " s of 300"};
}

Outcome conv_oracle() {
  std::mt19937_64 rng(500);
  std::uniform_int_distribution<int> side(1, 16), ch(1, 8), kk(0, 2), st(1, 3), pd(0, 2), nb(1, 3);
  double worst = 0;
  int cases = 0;
  while (cases < 500) {
    const int k = 2 * kk(rng) + 1, stride = st(rng), pad = pd(rng);
    const int h = side(rng), w = side(rng);
    if (h + 2 * pad < k || w + 2 * pad < k) continue;
    const int cin = ch(rng), cout = ch(rng), n = nb(rng);
    const Tensor x = oracle::random_tensor<float>({n, cin, h, w}, rng);
    const Tensor wt = oracle::random_tensor<float>({cout, cin, k, k}, rng);
    const Tensor b = oracle::random_tensor<float>({cout}, rng);
    Shape expect;
    const auto ref = oracle::conv2d(x, wt, b, stride, pad, &expect);
    const Tensor y = conv2d(Var<float>(x), Var<float>(wt), Var<float>(b), stride, pad).value;
    if (y.shape() != expect) return {false, "shape mismatch on case " + std::to_string(cases)};
    for (std::size_t i = 0; i < ref.size(); ++i) worst = std::max(worst, std::abs(ref[i] - y[static_cast<std::int64_t>(i)]));
    ++cases;
  }
  return {worst < 1e-5, std::to_string(cases) + " cases, max abs error " + fmt("%.2e", worst)};
}

Outcome fid_checks() {
  using metrics::GaussianStats;
  std::mt19937_64 rng(3);
  std::normal_distribution<double> g;
  Eigen::MatrixXd feats(200, 16);
  for (Eigen::Index i = 0; i < feats.size(); ++i) feats.data()[i] = g(rng);
  const GaussianStats s = metrics::fit_gaussian(feats);
  const double a = metrics::fid(s, s);

  GaussianStats x1, g1;
  x1.mu = Eigen::VectorXd::Constant(1, 0.0);
  g1.mu = Eigen::VectorXd::Constant(1, 3.0);
  x1.sigma = Eigen::MatrixXd::Constant(1, 1, 1.0);
  g1.sigma = Eigen::MatrixXd::Constant(1, 1, 4.0);
  x1.n = g1.n = 2;
  const double b = metrics::fid(x1, g1);

  double worst_c = 0;
  for (int d : {1, 2, 8, 32, 64}) {
    GaussianStats xs, gs;
    xs.mu = gs.mu = Eigen::VectorXd::Zero(d);
    xs.sigma = Eigen::MatrixXd::Identity(d, d);
    gs.sigma = 4.0 * Eigen::MatrixXd::Identity(d, d);
    xs.n = gs.n = 2;
    worst_c = std::max(worst_c, std::abs(metrics::fid(xs, gs) - d));
  }

  std::uniform_int_distribution<int> dim(1, 64);
  double worst_d = 0;
  for (int t = 0; t < 1000; ++t) {
    const Eigen::MatrixXd m = oracle::random_spd(dim(rng), rng);
    const Eigen::MatrixXd ref = oracle::denman_beavers_sqrt(m);
    worst_d = std::max(worst_d, (metrics::matrix_sqrt_psd(m) - ref).norm() / ref.norm());
  }
  const bool ok = a < 1e-8 && std::abs(b - 10.0) < 1e-6 && worst_c < 1e-6 && worst_d < 1e-5;
  return {ok, "identical " + fmt("%.1e", a) + ", 1-D " + fmt("%.10f", b) + ", 4I worst " + fmt("%.1e", worst_c) +
                  ", sqrt vs Denman-Beavers worst " + fmt("%.2e", worst_d) + " over 1000"};
}

Outcome image_metrics() {
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<float> u(0.0f, 1.0f);
  bool ident = true;
  double asym = 0;
  for (int t = 0; t < 20; ++t) {
    data::ImageBuffer a(24 + t, 20, t % 2 ? 3 : 1), b(24 + t, 20, t % 2 ? 3 : 1);
    for (auto& v : a.pixels) v = u(rng);
    for (auto& v : b.pixels) v = u(rng);
    ident = ident && metrics::ssim(a, a) == 1.0 && metrics::psnr(a, a) == metrics::kPsnrInfinity;
    asym = std::max(asym, std::abs(metrics::ssim(a, b) - metrics::ssim(b, a)));
  }
  double closed = 0;
  for (float ca = 0.0f; ca <= 1.0f; ca += 0.25f)
    for (float cb = 0.0f; cb <= 1.0f; cb += 0.2f) {
      const data::ImageBuffer a(16, 16, 3, ca), b(16, 16, 3, cb);
      const double c1 = 1e-4;
      const double expect = (2.0 * ca * cb + c1) / (static_cast<double>(ca) * ca + static_cast<double>(cb) * cb + c1);
      closed = std::max(closed, std::abs(metrics::ssim(a, b) - expect));
    }
  const bool ok = ident && asym < 1e-9 && closed < 1e-9;
  return {ok, std::string("identity ") + (ident ? "exact" : "broken") + ", asymmetry " + fmt("%.1e", asym) +
                  ", constant closed form " + fmt("%.1e", closed)};
}

train::ExperimentConfig desk_config(const std::string& family, const std::string& task, int u, int train_count,
                                    int epochs, const fs::path& out_dir) {
  json j = {{"name", family + "-" + task + std::to_string(u)},
            {"task", task},
            {"upscale_exponent", u},
            {"dataset", {{"source", "synthetic:" + family}, {"train_count", train_count}, {"test_count", 8}, {"side", 64}, {"seed", 11}}},
            {"generator", {{"base_channels", 8}, {"n_residual_blocks", 2}}},
            {"discriminator", {{"base_channels", 8}, {"dense_hidden", 32}}},
            {"optimizer", {{"lr", 1e-3}}},
            {"epochs", epochs},
            {"batch_size", 8},
            {"seed", 5},
            {"out_dir", out_dir.string()}};
  return train::ExperimentConfig::from_json(j);
}

Outcome overfit(const fs::path& work) {
  const auto t0 = std::chrono::steady_clock::now();
  json j = train::ExperimentConfig::load(SRGAN_SOURCE_DIR "/configs/desk/disks.json").to_json();
  j["loss"]["perceptual_weight"] = 0.0;
  j["loss"]["adversarial_weight"] = 0.0;
  j["out_dir"] = (work / "overfit").string();
  const auto cfg = train::ExperimentConfig::from_json(j);
  train::TrainState st = train::init_state(cfg);
  const auto imgs = data::synth_dataset(data::Family::disks, cfg.batch_size, 1, cfg.dataset.side);
  std::vector<data::Pair> pairs;
  for (const auto& img : imgs) pairs.push_back(data::make_pair(img, cfg.task, cfg.upscale_exponent, cfg.canny));
  std::vector<const data::Pair*> ptrs;
  for (const auto& p : pairs) ptrs.push_back(&p);
  const auto batch = data::make_batch(ptrs, cfg.task, cfg.upscale_exponent, cfg.generator.input_channels);
  const auto feat = metrics::ConvFeatureNet<float>::tinyconv();
  double first = 0, last = 0;
  for (int i = 1; i <= 200; ++i) {
    train::StepLosses s;
    s.step = i;
    train::generator_step(st, batch, cfg.loss, feat, cfg.optimizer, s);
    if (i == 1) first = s.g_content;
    last = s.g_content;
  }
  const double secs = seconds_since(t0);
  const double ratio = last / first;
  return {ratio < 0.1 && secs < 120, "step-200/step-1 content loss " + fmt("%.4f", ratio) + " (" + fmt("%.4g", last) +
                                         " / " + fmt("%.4g", first) + "), " + fmt("%.1f", secs) + " s of 120"};
}

Outcome matrix(const fs::path& work) {
  const fs::path dir = work / "matrix";
  fs::remove_all(dir);
  fs::create_directories(dir);
  const fs::path cwd = fs::current_path();
  fs::current_path(dir);
  const auto t0 = std::chrono::steady_clock::now();
  harness::MatrixResult r;
  try {
    harness::MatrixOptions o;
    o.config = SRGAN_SOURCE_DIR "/configs/desk/matrix.json";
    r = harness::cmd_matrix(o);
  } catch (...) {
    fs::current_path(cwd);
    throw;
  }
  fs::current_path(cwd);
  const double secs = seconds_since(t0);
  bool ok = r.complete() && r.extractor == "tinyconv" && r.n == 32;
  std::string detail;
  const std::size_t k = r.cells.size();
  for (std::size_t col = 0; col < k; ++col) {
    const double diag = r.cells[col][col]->fid;
    double best_off = std::numeric_limits<double>::infinity();
    for (std::size_t row = 0; row < k; ++row)
      if (row != col) best_off = std::min(best_off, r.cells[row][col]->fid);
    const double margin = (best_off - diag) / best_off;
    ok = ok && diag < best_off && margin >= 0.2;
    detail += r.eval_labels[col] + " " + fmt("%.4f", diag) + " vs " + fmt("%.4f", best_off) + " (" +
              fmt("%.0f", 100 * margin) + "%), ";
  }
  ok = ok && secs < 45 * 60;
  return {ok, detail + fmt("%.1f", secs / 60) + " min of 45 on " + std::to_string(num_threads()) + " thread(s)"};
}

bool history_finite(const std::vector<train::StepLosses>& h) {
  for (const auto& s : h)
    if (!std::isfinite(s.d_loss) || !std::isfinite(s.g_adv) || !std::isfinite(s.g_content) ||
        !std::isfinite(s.g_perceptual) || !std::isfinite(s.total))
      return false;
  return true;
}

Outcome task_mechanics(const fs::path& work) {
  const auto tinyconv = metrics::make_extractor("tinyconv");
  bool ok = true;
  std::string detail;
  auto run = [&](const std::string& family, const std::string& task, int u, double lr = 1e-3) {
    auto cfg = desk_config(family, task, u, 64, 5, work / "tasks" / (family + "_" + task + std::to_string(u) + "_" + fmt("%g", lr)));
    cfg.optimizer.lr = lr;
    fs::remove_all(cfg.out_dir);
    const auto res = train::train(cfg);
    const auto gen = nn::load_checkpoint(res.final_checkpoint, cfg.generator);
    const auto row = harness::evaluate_generator(gen, cfg, family, *tinyconv, 8, false);
    const bool finite = history_finite(res.history) && std::isfinite(row.fid) && std::isfinite(row.ssim);
    return std::tuple{res.convergence, finite, row};
  };

  const auto [cc, cfin, crow] = run("disks", "color", 0);
  ok = ok && cfin;
  detail += "color u0 " + std::string(train::convergence_name(cc)) + " fid " + fmt("%.3f", crow.fid) + "; edges";
  for (int u = 0; u <= 4; ++u) {
    const auto [conv, fin, row] = run("disks", "edges", u);
    ok = ok && fin;
    if (u == 0) ok = ok && conv == train::Convergence::converged;
    detail += " u" + std::to_string(u) + "=" + train::convergence_name(conv);
  }

  std::string clutter;
  try {
    const auto [conv, fin, row] = run("clutter", "edges", 0);
    ok = ok && fin;
    clutter = std::string(train::convergence_name(conv)) + (fin ? ", finite" : ", NON-FINITE");
  } catch (const train::NumericalAbort& e) {
    clutter = std::string("numerical abort: ") + e.what();
  }
  detail += "; clutter edges u0 " + clutter;

  // An absurd learning rate must end in a verdict or an abort, never NaN output.
  std::string stressed;
  try {
    const auto [conv, fin, row] = run("clutter", "edges", 0, 1e4);
    ok = ok && fin;
    stressed = std::string(train::convergence_name(conv)) + (fin ? ", finite" : ", NON-FINITE");
  } catch (const train::NumericalAbort& e) {
    stressed = "numerical abort at step " + std::to_string(e.snapshot().value("step", -1));
  }
  detail += "; clutter at lr 1e4 " + stressed;
  return {ok, detail};
}

std::map<std::string, std::string> snapshot(const fs::path& dir) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(dir))
    if (e.is_regular_file()) {
      std::ifstream in(e.path(), std::ios::binary);
      std::stringstream ss;
      ss << in.rdbuf();
      out[fs::relative(e.path(), dir).string()] = ss.str();
    }
  return out;
}

Outcome determinism(const fs::path& work) {
  const fs::path dir = work / "determinism";
  auto cfg = desk_config("stripes", "sr", 2, 32, 2, dir / "run");
  std::vector<std::map<std::string, std::string>> runs;
  for (int rep = 0; rep < 2; ++rep) {
    fs::remove_all(dir);
    const auto res = train::train(cfg);
    harness::EvalOptions e;
    e.checkpoint = res.final_checkpoint.string();
    const fs::path cfg_path = dir / "config.json";
    std::ofstream(cfg_path) << cfg.to_json().dump(2);
    e.config = cfg_path;
    e.n = 8;
    e.out_csv = dir / "reports" / "eval.csv";
    harness::cmd_eval(e);
    harness::cmd_report(dir / "reports", std::nullopt);
    runs.push_back(snapshot(dir));
  }
  int ckpts = 0;
  for (const auto& [name, bytes] : runs[0])
    if (name.size() > 5 && name.substr(name.size() - 5) == ".ckpt") ++ckpts;
  const bool same = runs[0] == runs[1];
  return {same && ckpts == 2 && runs[0].count("reports/report.csv") == 1,
          std::to_string(runs[0].size()) + " files (" + std::to_string(ckpts) + " checkpoints) " +
              (same ? "byte-identical" : "DIFFER")};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"acceptance criteria"};
  std::string work = "acceptance_work";
  std::vector<int> only;
  app.add_option("--work", work, "scratch directory");
  app.add_option("--only", only, "run a subset of criteria");
  CLI11_PARSE(app, argc, argv);
  spdlog::set_level(spdlog::level::warn);
  const fs::path wd = fs::absolute(work);
  fs::create_directories(wd);

  auto want = [&](int id) { return only.empty() || std::find(only.begin(), only.end(), id) != only.end(); };
  int failed = 0;
  if (want(1)) failed += run_criterion(1, "gradient checks", gradients);
  if (want(2)) failed += run_criterion(2, "conv2d vs nested loops", conv_oracle);
  if (want(3)) failed += run_criterion(3, "FID analytic cases and matrix sqrt", fid_checks);
  if (want(4)) failed += run_criterion(4, "SSIM/PSNR properties", image_metrics);
  if (want(5)) failed += run_criterion(5, "content-only single-batch overfit", [&] { return overfit(wd); });
  if (want(6)) failed += run_criterion(6, "3x3 FID matrix diagonal", [&] { return matrix(wd); });
  if (want(7)) failed += run_criterion(7, "color and edges pipelines", [&] { return task_mechanics(wd); });
  if (want(8)) failed += run_criterion(8, "byte-identical reruns", [&] { return determinism(wd); });
  std::printf("%d criterion(s) failed\n", failed);
  return failed;
}
