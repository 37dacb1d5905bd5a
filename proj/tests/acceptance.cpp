// Acceptance run: one PASS/FAIL line per criterion. Criteria to run can be
// given as arguments (e.g. `vidtwin_acceptance 1 4 5`); default is all.

#include <torch/torch.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <iostream>
#include <memory>
#include <numbers>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "vidtwin/analysis.hpp"
#include "vidtwin/autoencoder.hpp"
#include "vidtwin/diffusion.hpp"
#include "vidtwin/errors.hpp"
#include "vidtwin/latent_codec.hpp"
#include "vidtwin/training.hpp"

namespace fs = std::filesystem;
using namespace vidtwin;
using torch::indexing::Slice;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double a) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

double max_abs(const torch::Tensor& t) { return t.abs().max().item<double>(); }

// ---- shared desk training run (criteria 7, 8, 9) ------------------------------------

struct DeskRun {
  std::shared_ptr<LatentAutoencoder> model;
  std::vector<StepRecord> curve;
  double l1_before = 0.0, l1_after = 0.0;
  double seconds = 0.0;
};

constexpr uint64_t kDeskSeed = 0;

torch::Tensor desk_eval_batch(const std::vector<VideoClip>& pool) {
  std::vector<torch::Tensor> xs;
  for (size_t i = 0; i < 16; ++i) xs.push_back(pool[i].data());
  return torch::stack(xs);
}

std::vector<VideoClip> desk_pool(const RunConfig& cfg) {
  return synth_pool(cfg.seed * 100000, cfg.dataset_size, cfg.model.geometry, cfg.slow_speed, cfg.fast_speed);
}

std::vector<StepRecord> train_desk(const RunConfig& cfg, int64_t steps, std::shared_ptr<LatentAutoencoder>* out,
                                   double* l1_before, double* l1_after) {
  torch::manual_seed(cfg.seed);
  auto model = make_autoencoder(cfg.model);
  auto pool = desk_pool(cfg);
  auto eval_x = desk_eval_batch(pool);
  if (l1_before) *l1_before = eval_rec_l1(*model, eval_x);
  TrainConfig tc = cfg.train;
  tc.seed = cfg.seed;
  tc.steps = steps;
  Trainer trainer(model, tc);
  const auto t0 = std::chrono::steady_clock::now();
  auto curve = trainer.fit(pool, [&](const StepRecord& r) {
    if (r.step % 250 == 0) {
      const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      std::fprintf(stderr, "    step %4lld  rec %.4f  total %.4f  (%.0fs)\n", static_cast<long long>(r.step),
                   r.losses.rec, r.losses.total, s);
    }
    return true;
  });
  if (l1_after) *l1_after = eval_rec_l1(*model, eval_x);
  if (out) *out = model;
  return curve;
}

RunConfig desk_run_config() {
  RunConfig cfg;
  cfg.seed = kDeskSeed;
  return cfg;
}

DeskRun& desk_run() {
  static std::unique_ptr<DeskRun> run;
  if (!run) {
    run = std::make_unique<DeskRun>();
    const auto t0 = std::chrono::steady_clock::now();
    const auto cfg = desk_run_config();
    run->curve = train_desk(cfg, cfg.train.steps, &run->model, &run->l1_before, &run->l1_after);
    run->seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    run->model->eval();
    // Kept for inspection with the CLI.
    save_model(*run->model, cfg, "desk_model.ckpt");
  }
  return *run;
}

// ---- criteria -----------------------------------------------------------------------

Outcome c1_compression() {
  const auto t0 = std::chrono::steady_clock::now();
  const auto table = compression_table(desk_config());
  struct Target {
    const char* name;
    double expected;
  };
  const std::vector<Target> targets = {{"vidtwin 224x224x16", 0.20}, {"magvit-v2", 0.65}, {"ivideogpt", 1.5}, {"cmd", 6.9}};
  Outcome o{true, ""};
  for (const auto& t : targets) {
    for (const auto& e : table) {
      if (e.name != t.name) continue;
      const bool ok = std::abs(e.rate_pct - t.expected) <= 0.05 + 1e-12;
      o.pass = o.pass && ok;
      o.detail += std::string(e.name) + " " + fmt("%.4f%%", e.rate_pct) + (ok ? "" : " (off by " + fmt("%.4f", e.rate_pct - t.expected) + " pp)") + "; ";
    }
  }
  const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  o.pass = o.pass && s < 1.0;
  o.detail += fmt("%.3fs", s);
  return o;
}

Outcome c2_shapes() {
  const auto t0 = std::chrono::steady_clock::now();
  const auto cfg = paper_config();
  torch::manual_seed(0);
  auto model = std::dynamic_pointer_cast<VidTwinModel>(make_autoencoder(cfg));
  const double build_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  model->eval();
  torch::NoGradGuard ng;
  auto x = torch::rand({1, 3, 16, 224, 224}) * 2 - 1;
  auto z = model->encoder(x);
  auto posts = model->posteriors(x);
  auto x_hat = model->decode({posts[0].mu, posts[1].mu});
  auto dims = [](const torch::Tensor& t) { return t.sizes().vec(); };
  const bool ok = dims(z) == std::vector<int64_t>{1, 768, 16, 14, 14} &&
                  dims(posts[0].mu) == std::vector<int64_t>{1, 16, 4, 7, 7} &&
                  dims(posts[1].mu) == std::vector<int64_t>{1, 16, 8, 14} &&
                  dims(x_hat) == std::vector<int64_t>{1, 3, 16, 224, 224};
  const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  std::ostringstream d;
  d << "z " << z.sizes() << ", z_S " << posts[0].mu.sizes() << ", z_D " << posts[1].mu.sizes() << ", x_hat "
    << x_hat.sizes() << "; " << nn::parameter_count(*model) << " params, built in " << fmt("%.1fs", build_s)
    << ", total " << fmt("%.1fs", s);
  return {ok && s < 60.0, d.str()};
}

Outcome c3_causality() {
  torch::manual_seed(1);
  const auto cfg = desk_config();
  auto model = std::dynamic_pointer_cast<VidTwinModel>(make_autoencoder(cfg));
  model->eval();
  torch::NoGradGuard ng;
  auto x = torch::rand({1, 3, 8, 32, 32}) * 2 - 1;
  double prefix = 0.0;
  for (int64_t k = 1; k < 8; ++k) {
    auto y = x.clone();
    y.narrow(2, k, 8 - k).uniform_(-1, 1);
    auto a = model->encoder(x), b = model->encoder(y);
    prefix = std::max(prefix, max_abs(a.narrow(2, 0, k) - b.narrow(2, 0, k)));
  }
  auto z = torch::randn({1, 64, 8, 8, 8});
  auto base = model->structure->stage1(z);
  double off_target = 0.0;
  bool on_target_moves = true;
  for (int64_t i = 0; i < 8; ++i) {
    for (int64_t j = 0; j < 8; ++j) {
      auto zp = z.clone();
      zp.index({0, Slice(), Slice(), i, j}).add_(torch::randn({64, 8}));
      auto diff = (model->structure->stage1(zp) - base).abs().reshape({64, -1}).amax(1);
      const int64_t target = i * 8 + j;
      on_target_moves = on_target_moves && diff[target].item<double>() > 1e-6;
      diff[target] = 0.0;
      off_target = std::max(off_target, diff.max().item<double>());
    }
  }
  const bool ok = prefix <= 1e-5 && off_target <= 1e-6 && on_target_moves;
  return {ok, "encoder prefix diff " + fmt("%.2e", prefix) + ", Q-Former off-target " + fmt("%.2e", off_target)};
}

Outcome c4_invariants() {
  torch::manual_seed(2);
  const auto cfg = desk_config();
  auto model = std::dynamic_pointer_cast<VidTwinModel>(make_autoencoder(cfg));
  model->eval();
  torch::NoGradGuard ng;
  std::vector<std::string> failed;

  // avg / Rep
  auto zp = torch::randn({2, 8, 32, 4, 4});
  auto summary = average_summary(zp);
  if (max_abs(summary.narrow(3, 0, 4) - zp.mean(3)) > 1e-6 || max_abs(summary.narrow(3, 4, 4) - zp.mean(4)) > 1e-6) {
    failed.push_back("avg");
  }
  auto z_d = torch::randn({1, 8, 4, 8});
  auto [t_h, t_w] = model->dynamics->decode_parts(z_d);
  auto [u_dh, u_dw] = model->dynamics->decode(z_d);
  bool rep_ok = true;
  for (int64_t i = 0; i < u_dh.size(3); ++i) rep_ok = rep_ok && torch::equal(u_dh.select(3, i), t_h);
  for (int64_t j = 0; j < u_dw.size(4); ++j) rep_ok = rep_ok && torch::equal(u_dw.select(4, j), t_w);
  if (!rep_ok) failed.push_back("rep");

  // fusion commutativity
  auto a = torch::randn({1, 64, 8, 8, 8}), b = torch::randn({1, 64, 8, 8, 8}), c = torch::randn({1, 64, 8, 8, 8});
  if (max_abs(fuse(a, b, c) - fuse(c, a, b)) > 1e-6 || max_abs(fuse(a, b, c) - fuse(b, c, a)) > 1e-6) {
    failed.push_back("fuse");
  }

  // CFG identity and one-step DDIM recovery with an oracle predictor
  struct Oracle : X0Predictor {
    torch::Tensor target;
    torch::Tensor predict_x0(const torch::Tensor& y, const torch::Tensor&, const torch::Tensor& ids) override {
      return target.expand_as(y) + 0.1 * ids.to(torch::kFloat32).reshape({-1, 1, 1}) + 0.01 * y;
    }
  } oracle;
  oracle.target = torch::randn({1, 18, 32});
  auto y = torch::randn({2, 18, 32});
  auto t = torch::tensor({3, 500});
  auto ids = torch::tensor({1, 4});
  if (!torch::equal(cfg_predict(oracle, y, t, ids, 1.0), oracle.predict_x0(y, t, ids))) failed.push_back("cfg");
  struct Exact : X0Predictor {
    torch::Tensor target;
    torch::Tensor predict_x0(const torch::Tensor& y, const torch::Tensor&, const torch::Tensor&) override {
      return target.expand_as(y);
    }
  } exact;
  exact.target = torch::randn({1, 18, 32});
  auto sched = DiffusionSchedule::linear();
  auto rec = ddim_sample(exact, torch::tensor({0, 1}), 5.0, 1, sched, 0, 18, 32);
  if (!torch::equal(rec, exact.target.expand({2, 18, 32}))) failed.push_back("ddim");

  // codec round trip
  auto clip = synth_moving_shapes(3, 8, 32, 32, 0.5, 3.0);
  auto bundle = encode_clip(*model, clip);
  const auto path = fs::temp_directory_path() / "vidtwin_acceptance_c4.vtwn";
  write_bundle(bundle, path);
  auto back = read_bundle(path, fingerprint(cfg));
  if (!torch::equal(back.z_s, bundle.z_s) || !torch::equal(back.z_d, bundle.z_d) ||
      !torch::equal(decode_bundle(*model, back), reconstruct_clip(*model, clip))) {
    failed.push_back("codec");
  }
  fs::remove(path);

  std::string detail = "avg/Rep, fusion, CFG w=1, DDIM one-step, VTWN round trip";
  if (!failed.empty()) {
    detail += "; failed:";
    for (const auto& f : failed) detail += " " + f;
  }
  return {failed.empty(), detail};
}

// Scalar SSIM over 7x7 windows, population statistics.
double ssim_scalar(const torch::Tensor& a3, const torch::Tensor& b3) {
  const double c1 = 0.02 * 0.02, c2 = 0.06 * 0.06;
  auto a = a3.to(torch::kFloat64).contiguous(), b = b3.to(torch::kFloat64).contiguous();
  const double* pa = a.data_ptr<double>();
  const double* pb = b.data_ptr<double>();
  const int64_t N = a.size(0), H = a.size(1), W = a.size(2), k = 7;
  double total = 0.0;
  int64_t count = 0;
  for (int64_t n = 0; n < N; ++n) {
    for (int64_t i = 0; i + k <= H; ++i) {
      for (int64_t j = 0; j + k <= W; ++j) {
        double sa = 0, sb = 0, saa = 0, sbb = 0, sab = 0;
        for (int64_t u = 0; u < k; ++u) {
          for (int64_t v = 0; v < k; ++v) {
            const double x = pa[(n * H + i + u) * W + j + v], y = pb[(n * H + i + u) * W + j + v];
            sa += x, sb += y, saa += x * x, sbb += y * y, sab += x * y;
          }
        }
        const double m = k * k, ma = sa / m, mb = sb / m;
        const double va = saa / m - ma * ma, vb = sbb / m - mb * mb, cv = sab / m - ma * mb;
        total += ((2 * ma * mb + c1) * (2 * cv + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
        ++count;
      }
    }
  }
  return total / static_cast<double>(count);
}

Outcome c5_oracles() {
  std::ostringstream d;
  bool ok = true;

  // KL against a Monte-Carlo estimate of E_q[log q - log p]
  torch::manual_seed(3);
  const int64_t n = 1000000;
  auto mu = torch::tensor({0.7, -1.1, 0.0, 2.0}, torch::kFloat64);
  auto logvar = torch::tensor({-0.5, 0.4, -2.0, 0.0}, torch::kFloat64);
  const double kl = kl_loss(GaussianPosterior(mu, logvar)).item<double>();
  auto eps = torch::randn({n, 4}, torch::kFloat64);
  auto sigma = torch::exp(0.5 * logvar);
  auto z = mu + sigma * eps;
  const double mc = (-0.5 * eps.pow(2) - torch::log(sigma) + 0.5 * z.pow(2)).mean().item<double>();
  ok = ok && std::abs(kl - mc) <= 1e-2;
  d << "KL " << fmt("%.5f", kl) << " vs MC " << fmt("%.5f", mc);

  // PSNR / SSIM against scalar loops
  auto x = torch::rand({3, 4, 20, 18}) * 2 - 1;
  auto y = (0.8 * x + 0.2 * torch::randn_like(x)).clamp(-1, 1);
  auto xd = x.to(torch::kFloat64).contiguous(), yd = y.to(torch::kFloat64).contiguous();
  double se = 0.0;
  for (int64_t i = 0; i < xd.numel(); ++i) {
    const double diff = xd.data_ptr<double>()[i] - yd.data_ptr<double>()[i];
    se += diff * diff;
  }
  const double psnr_ref = 10.0 * std::log10(4.0 / (se / static_cast<double>(xd.numel())));
  const double psnr_err = std::abs(psnr(y, x) - psnr_ref);
  const double ssim_err = std::abs(ssim(y, x) - ssim_scalar(y.reshape({-1, 20, 18}), x.reshape({-1, 20, 18})));
  ok = ok && psnr_err <= 1e-6 && ssim_err <= 1e-6;
  d << "; PSNR err " << fmt("%.1e", psnr_err) << ", SSIM err " << fmt("%.1e", ssim_err);

  // forward diffusion moments
  auto sched = DiffusionSchedule::linear();
  double worst = 0.0;
  for (int64_t t : {50, 300, 700}) {
    auto y0 = torch::full({100000}, 0.8, torch::kFloat64);
    auto yt = forward_diffuse(y0, torch::tensor(t), torch::randn({100000}, torch::kFloat64), sched);
    const double m_ref = std::sqrt(sched.alpha_bars[t]) * 0.8, v_ref = 1.0 - sched.alpha_bars[t];
    worst = std::max({worst, std::abs(yt.mean().item<double>() - m_ref) / std::max(std::abs(m_ref), 1.0),
                      std::abs(yt.var().item<double>() - v_ref) / v_ref});
  }
  ok = ok && worst <= 0.01;
  d << "; diffusion moments worst rel err " << fmt("%.4f", worst);
  return {ok, d.str()};
}

Outcome c6_gradcheck() {
  const auto t0 = std::chrono::steady_clock::now();
  torch::manual_seed(4);
  const auto cfg = tiny_config();
  auto model = make_autoencoder(cfg);
  model->to(torch::kFloat64);
  PerceptualNet net(cfg.geometry.channels);
  net->to(torch::kFloat64);
  auto x = (torch::rand({2, 3, 4, 8, 8}, torch::kFloat64) * 2 - 1);
  std::vector<torch::Tensor> noise;
  {
    torch::NoGradGuard ng;
    for (const auto& p : model->posteriors(x)) noise.push_back(torch::randn(p.mu.sizes(), torch::kFloat64));
  }
  LossWeights w;
  w.lambda_kl = 1e-2;  // large enough that the KL path shows up in the gradient
  auto loss_fn = [&]() {
    auto terms = generator_terms(*model, x, [&](const std::vector<GaussianPosterior>&) { return noise; }, &net);
    return weighted_total(terms.rec, terms.perceptual, torch::Tensor(), terms.kl, w, 0);
  };

  auto params = model->parameters();
  for (auto& p : params) p.mutable_grad() = torch::Tensor();
  loss_fn().backward();

  int64_t total = 0;
  for (const auto& p : params) total += p.numel();
  auto gen = step_generator(4, 0, 0);
  auto picks = torch::randint(total, {50}, gen, torch::kLong);
  double worst = 0.0;
  const double h = 1e-6;
  torch::NoGradGuard ng;
  for (int64_t k = 0; k < 50; ++k) {
    int64_t flat = picks[k].item<int64_t>();
    size_t pi = 0;
    while (flat >= params[pi].numel()) flat -= params[pi++].numel();
    auto p = params[pi].view({-1});
    const double analytic = params[pi].grad().view({-1})[flat].item<double>();
    const double orig = p[flat].item<double>();
    p[flat] = orig + h;
    const double up = loss_fn().item<double>();
    p[flat] = orig - h;
    const double down = loss_fn().item<double>();
    p[flat] = orig;
    const double numeric = (up - down) / (2 * h);
    const double rel = std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), 1e-6});
    worst = std::max(worst, rel);
  }
  const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return {worst <= 1e-3 && s < 600.0,
          "50 of " + std::to_string(total) + " params, worst rel err " + fmt("%.2e", worst) + ", " + fmt("%.1fs", s)};
}

Outcome c7_training() {
  auto& run = desk_run();
  const double ratio = run.l1_after / run.l1_before;
  // Repeat the opening stretch under the same seed and compare losses bitwise.
  const int64_t prefix = 100;
  const auto again = train_desk(desk_run_config(), prefix, nullptr, nullptr, nullptr);
  bool same = static_cast<int64_t>(run.curve.size()) >= prefix;
  for (int64_t i = 0; same && i < prefix; ++i) {
    const auto& a = run.curve[static_cast<size_t>(i)].losses;
    const auto& b = again[static_cast<size_t>(i)].losses;
    same = a.rec == b.rec && a.kl == b.kl && a.perceptual == b.perceptual && a.total == b.total && a.gan_d == b.gan_d;
  }
  std::ostringstream d;
  d << run.curve.size() << " steps, eval L1 " << fmt("%.4f", run.l1_before) << " -> " << fmt("%.4f", run.l1_after) << " ("
    << fmt("%.1f%%", 100 * ratio) << " of step 0), repeat of first " << prefix << " steps "
    << (same ? "bit-identical" : "DIFFERS") << ", " << fmt("%.0fs", run.seconds);
  return {ratio <= 0.25 && same && run.seconds <= 1800.0, d.str()};
}

Outcome c8_decoupling() {
  auto& run = desk_run();
  auto& model = as_vidtwin(*run.model);
  const auto cfg = desk_run_config();
  int wins = 0;
  double peak_in = 0.0, peak_out = 0.0;
  auto peak_redness = [](const torch::Tensor& v) { return (v[0] - 0.5 * (v[1] + v[2])).max().item<double>(); };
  std::ostringstream d;
  for (int k = 0; k < 10; ++k) {
    SynthParams pa, pb;
    pa.seed = 700000 + 2 * k;
    pb.seed = 700000 + 2 * k + 1;
    pa.slow_speed = pb.slow_speed = cfg.slow_speed;
    pa.fast_speed = pb.fast_speed = cfg.fast_speed;
    auto a = synth_moving_shapes_tracked(pa), b = synth_moving_shapes_tracked(pb);
    auto out = cross_reenact(model, encode_clip(model, a.clip), encode_clip(model, b.clip));
    auto track = red_centroid_track(out.clamp(-1, 1), std::lround(std::numbers::pi * b.dot_radius * b.dot_radius));
    peak_in += peak_redness(b.clip.data()) / 10.0;
    peak_out += peak_redness(out) / 10.0;
    const double rb = track_correlation(track, b.dot_track), ra = track_correlation(track, a.dot_track);
    if (rb > ra) ++wins;
    d << (k ? " " : "") << fmt("%+.2f", rb) << "/" << fmt("%+.2f", ra);
  }
  return {wins >= 7, std::to_string(wins) + "/10 trials follow the dynamics donor (corr B/A: " + d.str() +
                         "); mean peak redness donor " + fmt("%.2f", peak_in) + ", output " + fmt("%.2f", peak_out)};
}

Outcome c9_diffusion() {
  const auto t0 = std::chrono::steady_clock::now();
  auto& run = desk_run();
  auto& model = as_vidtwin(*run.model);
  const auto cfg = desk_run_config();
  std::vector<LatentBundle> bundles;
  for (int64_t i = 0; i < 16; ++i) {
    bundles.push_back(encode_clip(model, synth_moving_shapes(800000 + static_cast<uint64_t>(i), 8, 32, 32,
                                                             cfg.slow_speed, cfg.fast_speed)));
  }
  auto stats = compute_norm_stats(bundles);
  auto layout = make_token_layout(cfg.model, cfg.patch, stats.id);
  std::vector<torch::Tensor> zs, zd;
  for (const auto& b : bundles) {
    zs.push_back(b.z_s);
    zd.push_back(b.z_d);
  }
  auto tokens = pack_latents(torch::stack(zs), torch::stack(zd), stats, layout).tokens;
  auto classes = torch::arange(16, torch::kLong) % cfg.dit.num_classes;

  torch::manual_seed(cfg.seed);
  auto dit = std::make_shared<DiT>(cfg.dit, layout);
  auto sched = DiffusionSchedule::linear(cfg.diffusion_T);
  DiffusionTrainConfig dc = cfg.diffusion;
  dc.seed = cfg.seed;
  DiffusionTrainer trainer(dit, sched, dc);
  const double initial = trainer.probe_loss(tokens, classes);
  double final_loss = initial;
  int64_t reached = -1;
  for (int64_t s = 1; s <= dc.steps; ++s) {
    trainer.step(tokens, classes);
    if (s % 250 == 0) {
      final_loss = trainer.probe_loss(tokens, classes);
      std::fprintf(stderr, "    dit step %5lld  probe %.4f (%.3f of initial)\n", static_cast<long long>(s), final_loss,
                   final_loss / initial);
      if (final_loss < 0.1 * initial && reached < 0) reached = s;
    }
  }

  dit->eval();
  auto samples = ddim_sample(*dit, torch::tensor({0, 5, -1}), cfg.guidance, cfg.ddim_steps, sched, 9,
                             layout.total_tokens(), layout.token_dim);
  auto [s_lat, d_lat] = unpack_tokens({samples, layout}, stats);
  bool decoded = true;
  for (int64_t i = 0; i < 3; ++i) {
    auto b = make_bundle(cfg.model, s_lat[i], d_lat[i], {3, 8, 32, 32});
    auto clip = decode_bundle(model, b);
    decoded = decoded && clip.sizes() == torch::IntArrayRef({3, 8, 32, 32}) && torch::isfinite(clip).all().item<bool>();
  }
  const int64_t paper_tokens = make_token_layout(paper_config(), 2, "").total_tokens();
  const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  std::ostringstream d;
  d << "probe loss " << fmt("%.4f", initial) << " -> " << fmt("%.4f", final_loss) << " ("
    << fmt("%.1f%%", 100 * final_loss / initial) << ")";
  if (reached > 0) d << ", below 10% by step " << reached;
  d << "; DDIM(" << cfg.ddim_steps << ") samples " << (decoded ? "decode" : "FAILED to decode") << "; paper layout "
    << paper_tokens << " tokens; " << fmt("%.0fs", s);
  return {final_loss < 0.1 * initial && decoded && paper_tokens == 184, d.str()};
}

Outcome c10_resource_ratio() {
  const auto paper = paper_config();
  const auto ours = vidtwin_layout(paper);
  const auto& g = paper.geometry;
  const auto baseline = uniform_layout("uniform", 5, (g.frames + 3) / 4, g.height / 8, g.width / 8);
  DiTConfig dit;  // 6 layers, 8 heads
  const auto r_ours = resource_report(ours, dit, 2);
  const auto r_base = resource_report(baseline, dit, 2);
  const double element_ratio = static_cast<double>(baseline.numel()) / static_cast<double>(ours.numel());
  const double token_ratio = static_cast<double>(r_base.token_count) / static_cast<double>(r_ours.token_count);
  const double flops_ratio = static_cast<double>(r_base.flops_per_forward) / static_cast<double>(r_ours.flops_per_forward);
  const double mem_ratio = static_cast<double>(r_base.est_train_mem_bytes) / static_cast<double>(r_ours.est_train_mem_bytes);
  std::ostringstream d;
  d << "latent elements baseline/ours " << baseline.numel() << "/" << ours.numel() << " = " << fmt("%.2f", element_ratio)
    << "; patch-2 tokens " << r_base.token_count << "/" << r_ours.token_count << " = " << fmt("%.2f", token_ratio)
    << "; flops " << fmt("%.2fx", flops_ratio) << ", memory " << fmt("%.2fx", mem_ratio);
  return {element_ratio >= 3.0, d.str()};
}

struct Criterion {
  int id;
  const char* name;
  bool soft;
  std::function<Outcome()> run;
};

}  // namespace

int main(int argc, char** argv) {
  torch::set_num_threads(1);
  const std::vector<Criterion> criteria = {
      {1, "compression-rate arithmetic", false, c1_compression},
      {2, "paper-config shape contracts", false, c2_shapes},
      {3, "causality and Q-Former locality", false, c3_causality},
      {4, "exact algebraic invariants", false, c4_invariants},
      {5, "closed-form oracles", false, c5_oracles},
      {6, "finite-difference gradient check", false, c6_gradcheck},
      {7, "desk-scale training", false, c7_training},
      {8, "decoupling diagnostic (soft)", true, c8_decoupling},
      {9, "diffusion toy", false, c9_diffusion},
      {10, "analytic resource ratio", false, c10_resource_ratio},
  };
  std::set<int> selected;
  for (int i = 1; i < argc; ++i) selected.insert(std::atoi(argv[i]));

  int hard_failures = 0;
  for (const auto& c : criteria) {
    if (!selected.empty() && !selected.count(c.id)) continue;
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const char* verdict = o.pass ? "PASS" : (c.soft ? "FAIL (soft)" : "FAIL");
    std::printf("[%s] %d. %s: %s\n", verdict, c.id, c.name, o.detail.c_str());
    std::fflush(stdout);
    if (!o.pass && !c.soft) ++hard_failures;
  }
  return hard_failures == 0 ? 0 : 1;
}
