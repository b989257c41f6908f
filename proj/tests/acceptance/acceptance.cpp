// One PASS/FAIL line per acceptance criterion; exit status is the number of failures.
#include <boost/math/special_functions/beta.hpp>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "cli.hpp"
#include "gradient_suite.hpp"
#include "loss_oracle.hpp"
#include "metric_oracles.hpp"
#include "slim/analysis.hpp"
#include "slim/metrics.hpp"
#include "slim/synth.hpp"
#include "slim/trainer.hpp"
#include "synth_pool.hpp"
#include "test_support.hpp"

namespace fs = std::filesystem;
using namespace slim;

namespace {

struct Outcome {
  bool ok = true;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof(buf), f, args...);
  return buf;
}

int failures = 0;

void criterion(int id, const std::string& name, double budget_s,
               const std::function<Outcome()>& body) {
  const auto t0 = std::chrono::steady_clock::now();
  Outcome o;
  try {
    o = body();
  } catch (const std::exception& e) {
    o = {false, std::string("exception: ") + e.what()};
  }
  const double secs =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  if (secs > budget_s) {
    o.ok = false;
    o.detail += fmt(" [over budget %.0f s]", budget_s);
  }
  failures += o.ok ? 0 : 1;
  std::printf("%s [%d] %s: %s (%.2f s)\n", o.ok ? "PASS" : "FAIL", id, name.c_str(),
              o.detail.c_str(), secs);
  std::fflush(stdout);
}

Outcome loss_oracle() {
  const auto b = support::two_by_two_example(loss::LossMode::literal);
  double worst = 0.0;
  std::mt19937_64 rng(7);
  std::uniform_int_distribution<std::size_t> dim(3, 6);
  std::uniform_real_distribution<double> lam(0.0, 1.0);
  for (int i = 0; i < 100; ++i) {
    ad::Graph g;
    const Shape shape{dim(rng), dim(rng) - 2, dim(rng)};
    const auto s = g.constant(support::random_tensor(shape, rng, 1.0));
    const auto l = g.constant(support::random_tensor(shape, rng, 1.0));
    const auto mode = i % 2 ? loss::LossMode::literal : loss::LossMode::gram_scaled;
    const auto r = loss::stage1_loss(s, l, lam(rng), mode).breakdown();
    worst = std::max(worst, std::abs(r.total - (r.cross + r.lambda * r.intra)));
  }
  const bool ok = std::abs(b.total - 2.014) <= 1e-9 && worst <= 1e-12;
  return {ok, fmt("total %.12f (expected 2.014), max |total - (cross + lambda*intra)| %.2e over "
                  "100 inputs",
                  b.total, worst)};
}

Outcome gradient_suite() {
  constexpr int kTrials = 20;
  struct Family {
    const char* name;
    std::function<support::GradientTrial(std::uint64_t)> trial;
  };
  const std::vector<Family> families{
      {"compression", support::compression_trial},
      {"asp", support::asp_trial},
      {"head", support::head_trial},
      {"loss-literal",
       [](std::uint64_t s) { return support::loss_trial(s, loss::LossMode::literal); }},
      {"loss-gram-scaled",
       [](std::uint64_t s) { return support::loss_trial(s, loss::LossMode::gram_scaled); }}};
  Outcome o;
  for (const auto& f : families) {
    int passed = 0;
    double worst = 0.0;
    for (int s = 0; s < kTrials; ++s) {
      const auto t = f.trial(static_cast<std::uint64_t>(s));
      passed += t.result.passed ? 1 : 0;
      worst = std::max(worst, t.result.max_rel_error);
    }
    o.ok = o.ok && passed == kTrials;
    o.detail += fmt("%s %d/%d (max rel %.1e) ", f.name, passed, kTrials, worst);
  }
  o.detail += "at rtol 1e-4";
  return o;
}

Outcome metric_oracles() {
  using namespace metrics;
  int eer_mismatch = 0;
  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 200; ++trial) {
    std::uniform_int_distribution<int> n(1, 40);
    std::normal_distribution<double> nd(0.0, 1.0);
    std::uniform_int_distribution<int> coarse(0, 6);
    const bool ties = trial % 3 == 0;
    std::vector<double> real(n(rng)), fake(n(rng));
    for (double& x : real) x = ties ? coarse(rng) : nd(rng) + 0.7;
    for (double& x : fake) x = ties ? coarse(rng) - 1 : nd(rng);
    const auto fast = eer(real, fake);
    const auto slow = support::brute_force_eer(real, fake);
    eer_mismatch += (fast.eer != slow.eer || fast.threshold != slow.threshold) ? 1 : 0;
  }

  const std::vector<double> x{1, 2, 3};
  const double pe = std::abs(pearson(x, std::vector<double>{1, 2, 4}) - 9.0 / std::sqrt(84.0));
  const double sp =
      std::abs(spearman(std::vector<double>{1, 2, 3, 4}, std::vector<double>{1, 3, 2, 4}) - 0.8);
  const auto w = welch_ttest(x, std::vector<double>{2, 4, 6});
  const double we = std::max({std::abs(w.t + 2.0 / std::sqrt(5.0 / 3.0)),
                              std::abs(w.df - 50.0 / 17.0), std::abs(w.p - 0.2208808404940958)});

  double st = 0.0;
  for (double df : {0.5, 1.0, 2.0, 2.94, 4.5, 7.5, 10.0, 30.0, 120.0, 1000.0}) {
    for (double t : {-8.0, -3.0, -1.2, -0.3, 0.0, 0.1, 0.5, 1.0, 1.5, 2.0, 4.0, 6.0, 20.0}) {
      const double tail = 0.5 * boost::math::ibeta(df / 2.0, 0.5, df / (df + t * t));
      st = std::max(st, std::abs(student_t_sf(t, df) - (t >= 0 ? tail : 1.0 - tail)));
    }
  }
  const bool ok = eer_mismatch == 0 && pe <= 1e-9 && sp <= 1e-9 && we <= 1e-9 && st <= 1e-8;
  return {ok, fmt("EER brute-force mismatches %d/200, |dPearson| %.1e, |dSpearman| %.1e, "
                  "|dWelch| %.1e, Student-t vs incomplete beta %.1e",
                  eer_mismatch, pe, sp, we, st)};
}

Outcome cca_hypothesis() {
  synth::SynthConfig c;
  c.mismatch = 1.0;
  const auto rep = analysis::cca_probe(support::probe_stream(c, 200, 200), 100,
                                       analysis::kDefaultCcaDims, analysis::kDefaultRidge, 0);
  const auto& real = rep.groups.at(0);
  const auto& fake = rep.groups.at(1);
  const double p = fake.welch_vs_real ? fake.welch_vs_real->p : 1.0;
  const bool ok = real.group == "real" && real.mean > fake.mean && p < 0.05;
  return {ok, fmt("F=%zu, fit on 100 real; held-out mean r real %.4f (n=%zu) vs fake %.4f "
                  "(n=%zu), Welch p %.2e",
                  c.features, real.mean, real.n, fake.mean, fake.n, p)};
}

// Shared synthetic law for the training criteria.
synth::SynthConfig desk_world(std::uint64_t seed, std::uint64_t stream, double artifact) {
  synth::SynthConfig c;
  c.features = 256;
  c.frames = 32;
  c.seed = seed;
  c.stream = stream;
  c.artifact_strength = artifact;
  return c;
}

constexpr std::size_t kFrames = 32;

train::TrainResult desk_stage1(std::uint64_t seed, double artifact) {
  const auto tr = support::pooled_stream(desk_world(seed, 1, artifact), 200, 0, kFrames);
  const auto va = support::pooled_stream(desk_world(seed, 4, artifact), 40, 0, kFrames);
  auto c = train::TrainConfig::defaults(model::Stage::stage1);
  c.target_frames = kFrames;
  c.model.bottleneck = 128;
  c.model.dependency_dim = 64;
  c.seed = seed;
  return train::train_stage1(tr, va, c);
}

Outcome mismatch_criterion() {
  synth::SynthConfig base;
  const auto s1 = desk_stage1(0, base.artifact_strength);
  const auto held = support::pooled_stream(desk_world(0, 2, base.artifact_strength), 200, 200,
                                           kFrames);
  const auto rep = analysis::mismatch_report(held, s1.checkpoint);
  const double p = rep.welch_p_greater.value_or(1.0);
  const bool ok = rep.fake.mean > rep.real.mean && p < 0.01;
  return {ok, fmt("stage 1 on 200 real (%zu epochs); mean cosine distance real %.4f vs fake "
                  "%.4f on 200+200 held out, one-sided Welch p %.2e",
                  s1.epochs_run, rep.real.mean, rep.fake.mean, p)};
}

Outcome end_to_end() {
  constexpr double kArtifact = 0.1;
  const std::vector<model::Variant> variants{model::Variant::full, model::Variant::dependency,
                                             model::Variant::subspace};
  std::vector<double> sums(variants.size(), 0.0);
  Outcome o;
  const std::vector<std::uint64_t> seeds{0, 1, 2};
  for (std::uint64_t seed : seeds) {
    const auto s1 = desk_stage1(seed, kArtifact);
    const auto tr = support::pooled_stream(desk_world(seed, 0, kArtifact), 300, 300, kFrames);
    const auto va = support::pooled_stream(desk_world(seed, 3, kArtifact), 150, 150, kFrames);
    const auto te = support::pooled_stream(desk_world(seed, 2, kArtifact), 200, 200, kFrames);
    o.detail += fmt("seed %llu:", static_cast<unsigned long long>(seed));
    for (std::size_t v = 0; v < variants.size(); ++v) {
      auto c = train::TrainConfig::defaults(model::Stage::stage2);
      c.target_frames = kFrames;
      c.model.projection_dim = 64;
      c.model.head_hidden = 64;
      c.model.variant = variants[v];
      c.lr_start = 1e-3;
      c.lr_end = 1e-4;
      c.epochs = 30;
      c.seed = seed;
      const auto s2 = train::train_stage2(tr, va, s1.checkpoint, c);
      const double e = train::evaluate(train::score_samples(te, s2.checkpoint)).eer;
      sums[v] += e;
      if (variants[v] == model::Variant::full && e > 0.10) o.ok = false;
      o.detail += fmt(" %s %.2f%%", model::to_string(variants[v]).c_str(), 100.0 * e);
    }
    o.detail += "; ";
  }
  const double n = static_cast<double>(seeds.size());
  const double full = sums[0] / n, dep = sums[1] / n, sub = sums[2] / n;
  if (full > std::min(dep, sub)) o.ok = false;
  o.detail += fmt("mean test EER full %.2f%% <= min(dependency %.2f%%, subspace %.2f%%) and "
                  "full <= 10%% per seed",
                  100.0 * full, 100.0 * dep, 100.0 * sub);
  return o;
}

Outcome determinism() {
  support::TempDir dir("slim-accept");
  support::write_text(dir / "s1.cfg",
                      "Target frames = 16\nBottleneck dim = 32\nCompression output dim = 16\n"
                      "Epochs = 4\n");
  support::write_text(dir / "s2.cfg",
                      "Target frames = 16\nProjection dim = 16\nClassifier hidden dim = 16\n"
                      "Epochs = 3\n");
  auto run = [](std::vector<std::string> args) {
    std::ostringstream out, err;
    if (cli::run(args, out, err) != cli::kExitOk)
      throw std::runtime_error(args.front() + " failed: " + err.str());
  };
  std::vector<std::string> artifacts[2];
  for (int rep = 0; rep < 2; ++rep) {
    const fs::path root = dir / ("run" + std::to_string(rep));
    const std::string r = root.string();
    for (const auto& [name, nr, nf, stream] :
         {std::tuple{"real", "60", "0", "1"}, std::tuple{"mixed", "50", "50", "0"}}) {
      run({"synth", "--n-real", nr, "--n-fake", nf, "--stream", stream, "--features", "64",
           "--frames", "16", "--out", r + "/" + name});
    }
    const std::string real = r + "/real/manifest.jsonl", mixed = r + "/mixed/manifest.jsonl";
    run({"train-stage1", "--manifest", real, "--config", (dir / "s1.cfg").string(), "--out",
         r + "/s1"});
    run({"train-stage2", "--manifest", mixed, "--stage1-ckpt", r + "/s1/stage1.slck", "--config",
         (dir / "s2.cfg").string(), "--out", r + "/s2"});
    run({"evaluate", "--manifest", mixed, "--ckpt", r + "/s2/stage2.slck", "--out", r + "/eval"});
    run({"analyze", "--mode", "cca", "--manifest", mixed, "--fit-n", "25", "--dims", "8", "--out",
         r + "/cca"});
    run({"analyze", "--mode", "mismatch", "--manifest", mixed, "--ckpt", r + "/s1/stage1.slck",
         "--out", r + "/mm"});
    for (const auto& e : fs::recursive_directory_iterator(root)) {
      const auto ext = e.path().extension();
      if (e.is_regular_file() && ext != ".jsonl" && ext != ".config")
        artifacts[rep].push_back(fs::relative(e.path(), root).string());
    }
    for (const char* f : {"/s1/stage1.log.jsonl", "/s2/stage2.log.jsonl", "/cca/cca_samples.jsonl",
                          "/mm/mismatch_samples.jsonl"})
      artifacts[rep].push_back(std::string(f).substr(1));
    std::sort(artifacts[rep].begin(), artifacts[rep].end());
  }
  if (artifacts[0] != artifacts[1]) return {false, "runs produced different file sets"};
  std::size_t differing = 0;
  std::string first;
  for (const auto& rel : artifacts[0]) {
    if (support::read_bytes(dir / "run0" / rel) != support::read_bytes(dir / "run1" / rel)) {
      if (differing++ == 0) first = rel;
    }
  }
  Outcome o{differing == 0, fmt("%zu files compared across two CLI runs (embeddings, "
                                "checkpoints, logs, reports), %zu differ",
                                artifacts[0].size(), differing)};
  if (differing) o.detail += ", first: " + first;
  return o;
}

}  // namespace

int main() {
  criterion(1, "loss oracle", 1.0, loss_oracle);
  criterion(2, "gradient suite", 120.0, gradient_suite);
  criterion(3, "metric oracles", 30.0, metric_oracles);
  criterion(4, "CCA hypothesis", 120.0, cca_hypothesis);
  criterion(5, "mismatch", 600.0, mismatch_criterion);
  criterion(6, "end-to-end", 1200.0, end_to_end);
  criterion(7, "determinism", 600.0, determinism);
  std::printf("%d of 7 criteria passed\n", 7 - failures);
  return failures;
}
