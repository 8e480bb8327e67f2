// Acceptance checks. One PASS/FAIL line per criterion; exit status is the
// number of failures (capped at 1).
#include <spdlog/spdlog.h>

#include <CLI11.hpp>
#include <Eigen/Dense>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <numeric>
#include <sstream>

#include "bbdm/bridge.hpp"
#include "bbdm/checkpoint.hpp"
#include "bbdm/data_synth.hpp"
#include "bbdm/encoder.hpp"
#include "bbdm/metrics.hpp"
#include "bbdm/pipeline.hpp"
#include "bbdm/rdc.hpp"
#include "bbdm/schedule.hpp"
#include "bbdm/training.hpp"
#include "support.hpp"

using namespace bbdm;
namespace fs = std::filesystem;

namespace {

// Tolerances.
constexpr double kScheduleRel = 1e-12;
constexpr double kSigmas = 3.0;
constexpr double kMergeTol = 1e-5;
constexpr double kGradTol = 1e-3;
constexpr double kOverfitL1 = 0.02;
constexpr int kOverfitMaxSteps = 2000;
constexpr double kDehazeGainDb = 2.0;
constexpr double kSsimImprovedShare = 0.75;
constexpr double kStepsNoiseBandDb = 0.3;
constexpr double kMetricPsnrTol = 1e-9;
constexpr double kMetricSsimTol = 1e-6;
constexpr double kEnergyTol = 1e-9;

struct Outcome {
  bool pass = true;
  std::ostringstream detail;

  void require(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      detail << " [failed: " << what << "]";
    }
  }
};

bool rel_close(double a, double b, double rel) { return std::abs(a - b) <= rel * std::max(std::abs(b), 1e-300); }

std::vector<double> as_doubles(const Tensor& t) { return {t.values().begin(), t.values().end()}; }

// ---- 1
Outcome schedule_identities() {
  Outcome o;
  int checked = 0;
  for (int T : {2, 4, 50, 1000}) {
    for (double sc : {0.5, 1.0, 2.0, 4.0}) {
      const auto s = BridgeSchedule::build(T, sc);
      const std::string tag = "T=" + std::to_string(T) + " s=" + std::to_string(sc);
      o.require(s.m(0) == 0 && s.m(T) == 1 && s.delta(0) == 0 && s.delta(T) == 0, "pinning " + tag);
      double peak = 0;
      for (int t = 0; t <= T; ++t) {
        o.require(rel_close(s.delta(t), s.delta(T - t), kScheduleRel) || s.delta(t) == s.delta(T - t),
                  "symmetry " + tag);
        peak = std::max(peak, s.delta(t));
        ++checked;
      }
      o.require(rel_close(peak, sc / 2, kScheduleRel), "peak " + tag);
      for (int t = 1; t < T; ++t) {
        const double r = (1 - s.m(t)) / (1 - s.m(t - 1));
        o.require(rel_close(s.delta_cond(t) + r * r * s.delta(t - 1), s.delta(t), kScheduleRel),
                  "consistency " + tag);
      }
    }
  }
  const auto s = BridgeSchedule::build(4, 1.0);
  const double m[] = {0, 0.25, 0.5, 0.75, 1}, delta[] = {0, 0.375, 0.5, 0.375, 0};
  for (int t = 0; t <= 4; ++t) o.require(s.m(t) == m[t] && s.delta(t) == delta[t], "T=4 table");
  o.require(rel_close(s.delta_cond(2), 1.0 / 3, kScheduleRel) && rel_close(s.delta_cond(3), 0.25, kScheduleRel),
            "T=4 transition variances");
  o.detail << checked << " grid points, T=4 table exact";
  return o;
}

// ---- 2
Outcome chain_vs_marginal() {
  Outcome o;
  RngStream rng(2, stream_id("acceptance.chain"));
  const auto s = BridgeSchedule::build(4, 1.0);
  const Tensor zT({100000}, 1.0f);
  Tensor z({100000}, 0.0f);
  double worst = 0;
  for (int t = 1; t <= 4; ++t) {
    z = forward_transition(z, zT, t, s, rng);
    const auto mo = testing::moments(as_doubles(z));
    const double mean_target = (1 - s.m(t)) * 0 + s.m(t) * 1, var_target = s.delta(t);
    if (t == 4) {
      o.require(mo.var == 0 && mo.mean == 1, "endpoint pinned at t=T");
      continue;
    }
    const double zm = std::abs(mo.mean - mean_target) / mo.mean_se, zv = std::abs(mo.var - var_target) / mo.var_se;
    worst = std::max({worst, zm, zv});
    o.require(zm <= kSigmas && zv <= kSigmas, "t=" + std::to_string(t));
  }
  o.detail << "1e5 chains, worst deviation " << worst << " SE";
  return o;
}

// ---- 3
// Regress z_{t-1} on (z_t, z_T, z_0) over joint forward draws with random
// endpoints; the OLS fit is the conditional mean, the residual variance the
// conditional variance.
Outcome posterior_oracle() {
  Outcome o;
  RngStream rng(3, stream_id("acceptance.posterior"));
  const auto s = BridgeSchedule::build(4, 1.0);
  const std::int64_t n = 1000000;
  double worst = 0;
  for (int t = 2; t <= 3; ++t) {
    const Tensor z0 = gaussian<float>({n}, rng), zT = gaussian<float>({n}, rng);
    const Tensor prev = forward_marginal(z0, zT, t - 1, s, rng);
    const Tensor cur = forward_transition(prev, zT, t, s, rng);
    Eigen::Matrix3d xtx = Eigen::Matrix3d::Zero();
    Eigen::Vector3d xty = Eigen::Vector3d::Zero();
    for (std::int64_t i = 0; i < n; ++i) {
      const Eigen::Vector3d x(cur[i], zT[i], z0[i]);
      xtx += x * x.transpose();
      xty += x * double(prev[i]);
    }
    const Eigen::Vector3d beta = xtx.ldlt().solve(xty);
    double rss = 0;
    for (std::int64_t i = 0; i < n; ++i) {
      const double r = prev[i] - (beta[0] * cur[i] + beta[1] * zT[i] + beta[2] * z0[i]);
      rss += r * r;
    }
    const double var = rss / double(n - 3);
    const Eigen::Matrix3d cov = var * xtx.inverse();
    const auto k = s.posterior(t);
    const double want[] = {k.a, k.b, k.c};
    for (int j = 0; j < 3; ++j) {
      const double z = std::abs(beta[j] - want[j]) / std::sqrt(cov(j, j));
      worst = std::max(worst, z);
      o.require(z <= kSigmas, "coefficient " + std::to_string(j) + " at t=" + std::to_string(t));
    }
    // residuals are Gaussian, so var(s^2) = 2 sigma^4 / (n - 3)
    const double zv = std::abs(var - k.variance) / (k.variance * std::sqrt(2.0 / double(n - 3)));
    worst = std::max(worst, zv);
    o.require(zv <= kSigmas, "variance at t=" + std::to_string(t));
    o.detail << "t=" << t << " (a,b,c,var)=(" << beta[0] << "," << beta[1] << "," << beta[2] << "," << var << ") ";
  }
  o.detail << "worst " << worst << " SE";
  return o;
}

// ---- 4
class ChainOracle final : public EndpointPredictor {
 public:
  explicit ChainOracle(Tensor z0) : z0_(std::move(z0)) {}
  Tensor predict_z0(const Tensor&, const Tensor&, int) override { return z0_; }

 private:
  Tensor z0_;
};

Outcome time_reversal() {
  Outcome o;
  RngStream rng(4, stream_id("acceptance.reversal"));
  const std::int64_t n = 100000;
  // two-point start: -0.5 w.p. 0.3, 1.0 w.p. 0.7; endpoint fixed at 0.25
  Tensor z0({n});
  for (auto& v : z0.values()) v = rng.uniform() < 0.3 ? -0.5f : 1.0f;
  const double mu = 0.3 * -0.5 + 0.7 * 1.0, sigma2 = 0.3 * 0.25 + 0.7 * 1.0 - mu * mu;
  const double zT_value = 0.25;
  const Tensor zT({n}, static_cast<float>(zT_value));
  double worst = 0;
  for (auto [T, steps] : {std::pair{4, 4}, std::pair{50, 10}}) {
    const auto s = BridgeSchedule::build(T, 1.0);
    ChainOracle oracle(z0);
    const Tensor out = sample(oracle, zT, s, SamplerMode{SamplerVariant::kPosterior, steps}, rng,
                              [&](const DiffusedState& st) {
                                if (st.t == 0 || st.t == T) return;
                                const auto mo = testing::moments(as_doubles(st.z));
                                const double m = s.m(st.t);
                                const double em = (1 - m) * mu + m * zT_value;
                                const double ev = (1 - m) * (1 - m) * sigma2 + s.delta(st.t);
                                const double z =
                                    std::max(std::abs(mo.mean - em) / mo.mean_se, std::abs(mo.var - ev) / mo.var_se);
                                worst = std::max(worst, z);
                                o.require(z <= kSigmas, "intermediate t=" + std::to_string(st.t));
                              });
    const auto mo = testing::moments(as_doubles(out));
    const double z = std::max(std::abs(mo.mean - mu) / mo.mean_se, std::abs(mo.var - sigma2) / mo.var_se);
    worst = std::max(worst, z);
    o.require(z <= kSigmas, "z_0 population T=" + std::to_string(T));
    o.detail << "T=" << T << "/" << steps << " steps: z0 mean " << mo.mean << " var " << mo.var << "; ";
  }
  o.detail << "target mean " << mu << " var " << sigma2 << ", worst " << worst << " SE";
  return o;
}

// ---- 5
Outcome rdc_merge_equivalence() {
  Outcome o;
  RngStream rng(5, stream_id("acceptance.rdc"));
  double worst = 0;
  for (int b = 0; b < 100; ++b) {
    const auto block = make_rdc_block<float>(4, kAllDifferenceKinds, rng);
    const auto merged = rdc_merge(block);
    const auto w = Var::constant(merged.weight), bias = Var::constant(merged.bias);
    for (int k = 0; k < 100; ++k) {
      const auto x = Var::constant(gaussian<float>({1, 4, 8, 8}, rng));
      const Tensor a = rdc_branch_sum(x, block, RdcMode::kBranches).value();
      const Tensor c = conv2d(x, w, bias, 1).value();
      for (std::int64_t i = 0; i < a.numel(); ++i) worst = std::max(worst, std::abs(double(a[i]) - double(c[i])));
    }
  }
  o.require(worst < kMergeTol, "merge");
  int nonzero = 0;
  for (auto kind : {DifferenceKind::kCentral, DifferenceKind::kAngular, DifferenceKind::kHorizontal,
                    DifferenceKind::kVertical}) {
    for (int trial = 0; trial < 100; ++trial) {
      const auto w = Var::constant(gaussian<float>({3, 4, 3, 3}, rng));
      const auto x = Var::constant(Tensor({1, 4, 7, 7}, static_cast<float>(rng.uniform(-4, 4))));
      const Tensor out = difference_conv2d(x, w, Var(), kind, 0).value();
      for (auto v : out.values()) nonzero += v != 0.0f;
    }
  }
  o.require(nonzero == 0, "constant nulling");
  o.detail << "1e4 block/input pairs, max |branches - merged| " << worst << ", nonzero constant responses " << nonzero;
  return o;
}

// ---- 6
Outcome gradient_checks() {
  Outcome o;
  RngStream rng(6, stream_id("acceptance.grad"));
  double worst_op = 0;
  std::string worst_name;
  for (const auto& [name, err] : testing::op_gradcheck(rng, 20)) {
    if (err >= worst_op) {
      worst_op = err;
      worst_name = name;
    }
    o.require(err < kGradTol, name);
  }
  double worst_net = 0;
  for (bool dual : {false, true}) {
    ModelConfig cfg;
    cfg.base_channels = 8;
    cfg.norm_groups = 4;
    cfg.dual = dual;
    const BasicPredictorNet<double> net(cfg, 10, rng);
    for (int trial = 0; trial < 20; ++trial) {
      const double err = testing::network_gradcheck(net, trial % 2 ? RdcMode::kBranches : RdcMode::kMerged, rng);
      worst_net = std::max(worst_net, err);
      o.require(err < kGradTol, std::string(dual ? "dual" : "single") + " network");
    }
  }
  o.detail << "worst op " << worst_name << " " << worst_op << ", worst network " << worst_net << " (20 trials each)";
  return o;
}

// Mean stage-1 L1 over every t in 1..T (t_x = t_y = t), fixed noise.
double stage1_eval(const PredictorNet& net, const Tensor& x, const Tensor& y, const BridgeSchedule& s) {
  NoGradGuard guard;
  RngStream rng(0, stream_id("acceptance.overfit.eval"));
  double total = 0;
  for (int t = 1; t <= s.steps(); ++t) {
    const std::vector<int> ts(static_cast<std::size_t>(x.dim(0)), t);
    total += stage1_loss(net, x, y, ts, ts, s, rng).value().item();
  }
  return total / s.steps();
}

// ---- 7
Outcome stage1_overfit() {
  Outcome o;
  TrainConfig cfg;
  cfg.batch_size = 1;
  const PixelEncoder enc;
  CorpusParams p;
  p.n = 4;
  const Corpus corpus = generate_corpus(p, 7);
  const Tensor x = gather(enc.encode(corpus.clean), std::vector<std::int64_t>{0});
  const Tensor y = gather(enc.encode(corpus.hazy), std::vector<std::int64_t>{0});
  const auto s = BridgeSchedule::build(cfg.steps, cfg.scale);
  RngStream init(cfg.seed, stream_id("stage1.init")), noise(cfg.seed, stream_id("stage1.noise"));
  StageState state = make_stage1_state(cfg, init);
  double l1 = stage1_eval(*state.model, x, y, s);
  const double start = l1;
  int step = 0;
  while (step < kOverfitMaxSteps && l1 >= kOverfitL1) {
    for (int k = 0; k < 100; ++k, ++step) stage1_step(state, x, y, s, noise);
    l1 = stage1_eval(*state.model, x, y, s);
    spdlog::info("overfit step {} L1 {:.5f}", step, l1);
  }
  o.require(l1 < kOverfitL1, "L1 " + std::to_string(l1));
  const Tensor pseudo = make_pseudo_pair(x, *state.model);
  const double pseudo_l1 = l1_loss(Var::constant(pseudo), Var::constant(y)).value().item();
  o.detail << state.model->parameter_count() << " params, L1 " << start << " -> " << l1 << " after " << step
           << " steps; pseudo endpoint L1 vs true hazy " << pseudo_l1;
  return o;
}

// ---- 8
Outcome stage2_oracle() {
  Outcome o;
  TrainConfig cfg;
  cfg.batch_size = 4;
  cfg.lr = 1e-3;
  const PixelEncoder enc;
  CorpusParams p;
  p.n = 8;
  const Corpus corpus = generate_corpus(p, 8);
  const Tensor x = enc.encode(corpus.clean), y = enc.encode(corpus.hazy);
  const auto s = BridgeSchedule::build(cfg.steps, cfg.scale);
  RngStream i0(1, 1);
  const auto frozen = std::make_shared<const PredictorNet>(make_stage1_state(cfg, i0).model->clone());
  RngStream ia(2, 2), ib(2, 2);
  StageState oracle = make_stage2_state(cfg, frozen, ia);
  StageState supervised = make_stage2_state(cfg, nullptr, ib);
  RngStream batch_a(3, 3), batch_b(3, 3), noise_a(4, 4), noise_b(4, 4);
  const int iters = 40;
  int identical = 0;
  for (int k = 0; k < iters; ++k) {
    std::vector<std::int64_t> ia_idx(4), ib_idx(4);
    for (auto& i : ia_idx) i = batch_a.uniform_int(0, p.n - 1);
    for (auto& i : ib_idx) i = batch_b.uniform_int(0, p.n - 1);
    const Tensor ya = gather(y, ia_idx);
    const double la = stage2_step(oracle, gather(x, ia_idx), s, noise_a, [&](const Tensor&) { return ya; });
    const double lb = bridge_step(supervised, gather(x, ib_idx), gather(y, ib_idx), s, noise_b);
    identical += la == lb;
  }
  bool params_equal = true;
  for (std::size_t i = 0; i < oracle.model->named_parameters().size(); ++i)
    params_equal &= oracle.model->named_parameters()[i].var.value() == supervised.model->named_parameters()[i].var.value();
  o.require(identical == iters, "loss trace");
  o.require(params_equal, "final weights");
  o.detail << identical << "/" << iters << " losses bit-identical, final weights " << (params_equal ? "equal" : "differ");
  return o;
}

// ---- 9 to 11
struct ToyRun {
  std::unique_ptr<PredictorNet> net;
  BridgeSchedule schedule = BridgeSchedule::build(1, 1.0);
  double seconds = 0;
};

struct ToyData {
  Corpus corpus;
  Split split;
  Tensor test_clean, test_hazy;
  std::vector<std::string> ids;
};

ToyData toy_data() {
  ToyData d;
  CorpusParams p;  // 80 items: 32 paired, 32 unpaired, 16 held out
  d.corpus = generate_corpus(p, 9);
  RngStream rng(9, stream_id("acceptance.split"));
  d.split = make_split(p.n, 16, 0.5, rng);
  d.test_clean = gather(d.corpus.clean, d.split.test);
  d.test_hazy = gather(d.corpus.hazy, d.split.test);
  for (auto i : d.split.test) d.ids.push_back("item" + std::to_string(i));
  return d;
}

TrainConfig toy_config(double scale) {
  TrainConfig cfg;
  cfg.scale = scale;
  cfg.batch_size = 4;
  cfg.stage1_iters = 5000;
  cfg.stage2_iters = 5000;
  cfg.cache_pseudo_labels = true;
  cfg.log_every = 500;
  cfg.seed = 9;
  return cfg;
}

ToyRun train_toy(const ToyData& d, double scale, const fs::path& workdir, bool reuse) {
  const TrainConfig cfg = toy_config(scale);
  const PixelEncoder enc;
  ToyRun run;
  run.schedule = BridgeSchedule::build(cfg.steps, cfg.scale);
  const fs::path dir = workdir / ("s" + std::to_string(static_cast<int>(scale)));
  if (reuse && fs::exists(dir / "stage2" / "manifest.json")) {
    auto ck = load_checkpoint(dir / "stage2");
    require_compatible(ck.info, ck.net->config(), cfg.steps, 2);
    if (ck.info.scale == cfg.scale) {
      spdlog::warn("reusing {}", (dir / "stage2").string());
      run.net = std::move(ck.net);
      return run;
    }
  }
  fs::create_directories(dir);
  const auto t0 = std::chrono::steady_clock::now();
  LossLog log(dir / "loss.csv");
  RunHooks hooks;
  hooks.log = &log;
  hooks.dump_dir = dir / "nonfinite";
  const StageState s1 = train_stage1(cfg, enc.encode(gather(d.corpus.clean, d.split.paired)),
                                     enc.encode(gather(d.corpus.hazy, d.split.paired)), hooks);
  save_checkpoint(dir / "stage1", *s1.model, 1, cfg.scale);
  const auto frozen = std::make_shared<const PredictorNet>(s1.model->clone());
  StageState s2 = train_stage2(cfg, frozen, enc.encode(gather(d.corpus.clean, d.split.unpaired)), hooks);
  save_checkpoint(dir / "stage2", *s2.model, 2, cfg.scale);
  run.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  run.net = std::move(s2.model);
  return run;
}

MetricReport dehaze_report(const ToyRun& run, const ToyData& d, int steps) {
  RngStream rng(9, stream_id("acceptance.sample"));
  const Tensor out = dehaze(*run.net, d.test_hazy, run.schedule, SamplerMode{SamplerVariant::kPosterior, steps}, rng,
                            PixelEncoder());
  return evaluate_images(out, d.test_clean, d.ids);
}

struct E2E {
  fs::path workdir;
  bool reuse = false;
  std::optional<ToyData> data;
  std::optional<ToyRun> s1, s4;

  const ToyData& toy() {
    if (!data) data = toy_data();
    return *data;
  }
  const ToyRun& run(double scale) {
    auto& slot = scale == 1.0 ? s1 : s4;
    if (!slot) slot = train_toy(toy(), scale, workdir, reuse);
    return *slot;
  }
};

Outcome end_to_end(E2E& e2e) {
  Outcome o;
  const ToyData& d = e2e.toy();
  const MetricReport hazy = evaluate_images(d.test_hazy, d.test_clean, d.ids);
  const ToyRun& run = e2e.run(1.0);
  const MetricReport out = dehaze_report(run, d, 10);
  out.write_csv(e2e.workdir / "dehazed_metrics.csv");
  hazy.write_csv(e2e.workdir / "hazy_metrics.csv");
  int improved = 0;
  for (std::size_t i = 0; i < out.rows.size(); ++i) improved += out.rows[i].ssim > hazy.rows[i].ssim;
  const double gain = out.psnr_summary().mean - hazy.psnr_summary().mean;
  const double share = double(improved) / double(out.rows.size());
  o.require(gain >= kDehazeGainDb, "PSNR gain");
  o.require(share >= kSsimImprovedShare, "SSIM improved share");
  if (run.seconds > 0) o.require(run.seconds < 3600, "runtime");
  o.detail << "hazy PSNR " << hazy.psnr_summary().mean << " -> " << out.psnr_summary().mean << " dB (gain " << gain
           << "), SSIM " << hazy.ssim_summary().mean << " -> " << out.ssim_summary().mean << ", improved on "
           << improved << "/" << out.rows.size() << ", training " << run.seconds << " s";
  return o;
}

Outcome steps_ablation(E2E& e2e) {
  Outcome o;
  const ToyRun& run = e2e.run(1.0);
  std::vector<std::pair<int, double>> curve;
  for (int steps : {2, 5, 10, 50}) curve.emplace_back(steps, dehaze_report(run, e2e.toy(), steps).psnr_summary().mean);
  for (std::size_t i = 1; i < curve.size(); ++i)
    o.require(curve[i].second >= curve[i - 1].second - kStepsNoiseBandDb, std::to_string(curve[i].first) + " steps");
  o.require(curve.back().second > curve.front().second, "50 > 2 steps");
  for (auto [steps, p] : curve) o.detail << steps << ":" << p << " ";
  return o;
}

Outcome scale_ablation(E2E& e2e) {
  Outcome o;
  const double p1 = dehaze_report(e2e.run(1.0), e2e.toy(), 10).psnr_summary().mean;
  const double p4 = dehaze_report(e2e.run(4.0), e2e.toy(), 10).psnr_summary().mean;
  o.require(p1 >= p4, "s=1 >= s=4");
  o.detail << "PSNR s=1 " << p1 << ", s=4 " << p4;
  return o;
}

// ---- 12
Tensor pattern(int h, int w, bool second) {
  Tensor img({3, h, w});
  for (int ch = 0; ch < 3; ++ch)
    for (int r = 0; r < h; ++r)
      for (int c = 0; c < w; ++c)
        img[(ch * h + r) * w + c] = static_cast<float>(second ? 0.5 + 0.35 * std::cos(0.2 * r - 0.5 * c + 2 * ch)
                                                               : 0.5 + 0.4 * std::sin(0.3 * r + 0.7 * c + ch));
  return img;
}

double ed_brute(const Tensor64& x, const Tensor64& y) {
  const std::int64_t n = x.dim(0), m = y.dim(0), d = x.dim(1);
  auto dist = [&](const Tensor64& p, std::int64_t i, const Tensor64& q, std::int64_t j) {
    double s = 0;
    for (std::int64_t k = 0; k < d; ++k) s += (p[i * d + k] - q[j * d + k]) * (p[i * d + k] - q[j * d + k]);
    return std::sqrt(s);
  };
  long double cross = 0, xx = 0, yy = 0;
  for (std::int64_t i = 0; i < n; ++i)
    for (std::int64_t j = 0; j < m; ++j) cross += dist(x, i, y, j);
  for (std::int64_t i = 0; i < n; ++i)
    for (std::int64_t j = 0; j < n; ++j) xx += dist(x, i, x, j);
  for (std::int64_t i = 0; i < m; ++i)
    for (std::int64_t j = 0; j < m; ++j) yy += dist(y, i, y, j);
  return static_cast<double>(2 * cross / (n * m) - xx / (n * n) - yy / ((long double)m * m));
}

Outcome metric_oracles() {
  Outcome o;
  // frozen scikit-image 0.19 values (gaussian_weights, sigma 1.5, data_range 1, luma)
  const Tensor a = pattern(24, 20, false), b = pattern(24, 20, true);
  const double dp = std::abs(psnr(a, b) - 8.566235221517879), ds = std::abs(ssim(a, b) - 0.03615240206255514);
  o.require(dp < kMetricPsnrTol, "PSNR");
  o.require(ds < kMetricSsimTol, "SSIM");
  RngStream rng(12, stream_id("acceptance.energy"));
  double de = 0;
  for (int trial = 0; trial < 5; ++trial) {
    const Tensor64 x = gaussian<double>({200, 2}, rng), y = gaussian<double>({200, 2}, rng);
    de = std::max(de, std::abs(energy_distance(x, y) - ed_brute(x, y)));
  }
  o.require(de < kEnergyTol, "energy distance");
  o.detail << "|dPSNR| " << dp << " dB, |dSSIM| " << ds << ", |dED| " << de;
  return o;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"acceptance checks"};
  std::string only;
  E2E e2e;
  e2e.workdir = fs::temp_directory_path() / "bbdm_acceptance";
  app.add_option("--only", only, "comma-separated criterion numbers");
  app.add_option("--workdir", e2e.workdir, "artifacts of the end-to-end runs");
  app.add_flag("--reuse", e2e.reuse, "reuse trained end-to-end checkpoints found in --workdir");
  CLI11_PARSE(app, argc, argv);

  const char* level = std::getenv("BBDM_LOG_LEVEL");
  spdlog::set_level(level ? spdlog::level::from_str(level) : spdlog::level::warn);
  fs::create_directories(e2e.workdir);

  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria = {
      {"schedule identities", schedule_identities},
      {"chain vs marginal Monte Carlo", chain_vs_marginal},
      {"posterior oracle", posterior_oracle},
      {"time-reversal sampling", time_reversal},
      {"RDC merge equivalence", rdc_merge_equivalence},
      {"gradient checks", gradient_checks},
      {"stage-1 overfit", stage1_overfit},
      {"stage-2 oracle equivalence", stage2_oracle},
      {"end-to-end toy dehazing", [&] { return end_to_end(e2e); }},
      {"sampling-steps ablation", [&] { return steps_ablation(e2e); }},
      {"variance-factor ablation", [&] { return scale_ablation(e2e); }},
      {"metric oracles", metric_oracles},
  };
  std::vector<int> selected;
  if (only.empty()) {
    selected.resize(criteria.size());
    std::iota(selected.begin(), selected.end(), 1);
  } else {
    std::stringstream ss(only);
    for (std::string tok; std::getline(ss, tok, ',');) selected.push_back(std::stoi(tok));
  }
  int failures = 0;
  for (int n : selected) {
    if (n < 1 || n > static_cast<int>(criteria.size())) {
      std::printf("unknown criterion %d\n", n);
      return 2;
    }
    const auto& [name, run] = criteria[static_cast<std::size_t>(n - 1)];
    const auto t0 = std::chrono::steady_clock::now();
    Outcome outcome;
    try {
      outcome = run();
    } catch (const std::exception& e) {
      outcome.pass = false;
      outcome.detail << "exception: " << e.what();
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::printf("C%-2d %s  %s (%.1f s): %s\n", n, outcome.pass ? "PASS" : "FAIL", name, secs,
                outcome.detail.str().c_str());
    std::fflush(stdout);
    failures += !outcome.pass;
  }
  return failures ? 1 : 0;
}
