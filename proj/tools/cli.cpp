#include "cli.hpp"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <optional>
#include <ostream>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"
#include "slim/analysis.hpp"
#include "slim/config.hpp"
#include "slim/crc32.hpp"
#include "slim/error.hpp"
#include "slim/synth.hpp"
#include "slim/trainer.hpp"

namespace slim::cli {

namespace fs = std::filesystem;

namespace {

fs::path output_dir(const std::string& given, const std::string& command) {
  if (!given.empty()) return given;
  if (const char* root = std::getenv(kOutputRootEnv); root && *root) return fs::path(root) / command;
  return fs::path("slim-out") / command;
}

void ensure_dir(const fs::path& dir) {
  if (dir.empty()) return;
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
}

void write_text(const fs::path& path, const std::string& text) {
  ensure_dir(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << text;
  if (!out) throw IoError("write failure on " + path.string());
}

// CRC of a checkpoint's content, i.e. everything before its CRC trailer.
// (A CRC over the whole file always yields the CRC-32 residue constant.)
std::uint32_t checkpoint_crc(const fs::path& path) {
  const auto bytes = model::encode_checkpoint(model::load_checkpoint(path));
  return crc32(std::span<const std::uint8_t>(bytes).first(bytes.size() - 4));
}

std::string hex32(std::uint32_t v) {
  std::ostringstream os;
  os << std::hex << std::setw(8) << std::setfill('0') << v;
  return os.str();
}

store::Split parse_split_arg(const std::string& s) { return store::parse_split(s); }

std::vector<store::ManifestRecord> select_split(const std::vector<store::ManifestRecord>& all,
                                                const std::string& split) {
  if (split == "all") return all;
  return store::filter_split(all, parse_split_arg(split));
}

nlohmann::json summary_json(const metrics::ClassSummary& s) {
  return {{"n", s.n},     {"mean", s.mean},     {"std", s.std}, {"min", s.min},
          {"q25", s.q25}, {"median", s.median}, {"q75", s.q75}, {"max", s.max}};
}

// ---------------------------------------------------------------------------
// Options

struct SynthArgs {
  std::string config;
  std::vector<std::string> overrides;
  std::size_t n_real = 100;
  std::size_t n_fake = 100;
  std::optional<std::string> mismatch, seed, stream, features, frames, noise_std, artifact;
  std::string out;
};

struct TrainArgs {
  std::string manifest;
  std::string config;
  std::vector<std::string> overrides;
  std::optional<std::string> seed, epochs, variant;
  std::string stage1_ckpt;
  std::string ckpt_out;
  std::string out;
};

struct EvalArgs {
  std::string manifest;
  std::string ckpt;
  std::string variant;
  std::string split = "test";
  std::size_t target_frames = 0;
  std::string report_out;
  std::string scores_out;
  std::string out;
};

struct AnalyzeArgs {
  std::string mode;
  std::string manifest;
  std::string split = "all";
  std::string out;
  // cca
  std::size_t fit_n = 100;
  std::size_t dims = analysis::kDefaultCcaDims;
  double ridge = analysis::kDefaultRidge;
  std::uint64_t seed = 0;
  std::string correlation = "per-sample";
  // mismatch
  std::string ckpt;
  std::size_t bins = 20;
  std::size_t target_frames = 0;
  // layers
  std::string view_a = "style";
  std::string view_b = "linguistics";
  std::string pooling = "per-sample";
  std::size_t max_samples = 0;
};

std::vector<config::Entry> collect_entries(const std::string& file,
                                           const std::vector<std::string>& overrides) {
  std::vector<config::Entry> entries;
  if (!file.empty()) entries = config::read_entries(file);
  for (const auto& o : overrides) entries.push_back(config::parse_override(o));
  return entries;
}

// ---------------------------------------------------------------------------
// Commands

int cmd_synth(const SynthArgs& a, std::ostream& out) {
  auto entries = collect_entries(a.config, a.overrides);
  auto flag = [&entries](const char* key, const std::optional<std::string>& v) {
    if (v) entries.push_back({key, *v, 0});
  };
  flag("Mismatch", a.mismatch);
  flag("Seed", a.seed);
  flag("Stream", a.stream);
  flag("Features", a.features);
  flag("Frames", a.frames);
  flag("Noise std", a.noise_std);
  flag("Artifact strength", a.artifact);
  const auto cfg = config::synth_config(entries);
  const fs::path dir = output_dir(a.out, "synth");
  const auto manifest = synth::generate_dataset(cfg, a.n_real, a.n_fake, dir);
  write_text(dir / "synth.config", config::format(cfg));
  out << manifest.string() << '\n';
  return kExitOk;
}

train::TrainConfig train_config_for(model::Stage stage, const TrainArgs& a) {
  auto entries = collect_entries(a.config, a.overrides);
  if (a.seed) entries.push_back({"Seed", *a.seed, 0});
  if (a.epochs) entries.push_back({"Epochs", *a.epochs, 0});
  if (a.variant) entries.push_back({"Variant", *a.variant, 0});
  return config::train_config(stage, entries);
}

void write_training_outputs(const fs::path& dir, const std::string& stem,
                            const train::TrainConfig& cfg, const train::TrainResult& result,
                            const fs::path& ckpt_path, std::ostream& out) {
  model::save_checkpoint(result.checkpoint, ckpt_path);
  write_text(dir / (stem + ".config"), config::format(cfg));
  const nlohmann::json summary = {{"stage", static_cast<int>(cfg.stage)},
                                  {"best_epoch", result.best_epoch},
                                  {"epochs_run", result.epochs_run},
                                  {"early_stopped", result.early_stopped},
                                  {"checkpoint_crc32", hex32(checkpoint_crc(ckpt_path))}};
  write_text(dir / (stem + ".summary.json"), summary.dump(2) + "\n");
  out << "checkpoint " << ckpt_path.string() << " crc32 " << hex32(checkpoint_crc(ckpt_path))
      << " best_epoch " << result.best_epoch << " epochs_run " << result.epochs_run << '\n';
}

int cmd_train(model::Stage stage, const TrainArgs& a, std::ostream& out, std::ostream& err) {
  const auto cfg = train_config_for(stage, a);
  const std::string stem = stage == model::Stage::stage1 ? "stage1" : "stage2";
  const fs::path dir = output_dir(a.out, "train-" + stem);
  const fs::path ckpt_path = a.ckpt_out.empty() ? dir / (stem + ".slck") : fs::path(a.ckpt_out);
  ensure_dir(dir);
  ensure_dir(ckpt_path.parent_path());

  // The stage-1 checkpoint is loaded before the manifest so a missing
  // dependency fails fast.
  std::optional<model::ModelCheckpoint> stage1;
  if (stage == model::Stage::stage2) stage1 = model::load_checkpoint(a.stage1_ckpt);
  const auto manifest = store::load_manifest(a.manifest);

  std::ofstream log(dir / (stem + ".log.jsonl"), std::ios::binary);
  if (!log) throw IoError("cannot open training log in " + dir.string());
  const train::ProgressSink sink = [&log, &err](const train::EpochRecord& r) {
    const std::string line = train::to_json_line(r);
    log << line << '\n';
    err << line << '\n';
    if (r.clipped_steps > 0) {
      err << "note: gradient clipping triggered on " << r.clipped_steps << " step(s) in epoch "
          << r.epoch << '\n';
    }
  };
  const auto result = stage == model::Stage::stage1
                          ? train::train_stage1(manifest, cfg, sink)
                          : train::train_stage2(manifest, *stage1, cfg, sink);
  log.close();
  write_training_outputs(dir, stem, cfg, result, ckpt_path, out);
  return kExitOk;
}

int cmd_evaluate(const EvalArgs& a, std::ostream& out) {
  const auto ckpt = model::load_checkpoint(a.ckpt);
  if (ckpt.stage != model::Stage::stage2) {
    throw ConfigError("evaluate needs a stage-2 checkpoint (" + a.ckpt + " is stage 1)");
  }
  const auto mc = model::ModelConfig::read_from(ckpt.params);
  if (!a.variant.empty() && model::parse_variant(a.variant) != mc.variant) {
    throw ConfigError("checkpoint was trained as variant \"" + model::to_string(mc.variant) +
                      "\", not \"" + a.variant + "\"");
  }
  const std::size_t frames =
      a.target_frames > 0 ? a.target_frames : train::checkpoint_target_frames(ckpt, 50);
  const auto records = select_split(store::load_manifest(a.manifest), a.split);
  const auto samples = train::load_pooled(records, frames);
  const auto scored = train::score_samples(samples, ckpt);
  const auto report = train::evaluate(scored);

  const fs::path dir = output_dir(a.out, "evaluate");
  const fs::path report_path = a.report_out.empty() ? dir / "eval.report.json" : fs::path(a.report_out);
  fs::path scores_path = a.scores_out;
  if (scores_path.empty()) {
    scores_path = report_path;
    scores_path.replace_extension(".scores.txt");
  }
  const nlohmann::json j = {{"variant", model::to_string(mc.variant)},
                            {"split", a.split},
                            {"eer", report.eer},
                            {"eer_threshold", report.eer_threshold},
                            {"f1", report.f1},
                            {"f1_positive_class", "fake"},
                            {"decision_rule", "fake when logit > 0 (score < 0)"},
                            {"score_orientation", "higher = more real (score = -logit)"},
                            {"n_real", report.n_real},
                            {"n_fake", report.n_fake},
                            {"real_scores", summary_json(report.real_scores)},
                            {"fake_scores", summary_json(report.fake_scores)}};
  write_text(report_path, j.dump(2) + "\n");
  write_text(scores_path, train::score_file(scored));
  out << "variant " << model::to_string(mc.variant) << " eer " << report.eer << " f1 "
      << report.f1 << " n_real " << report.n_real << " n_fake " << report.n_fake << '\n';
  return kExitOk;
}

std::string cca_table(const analysis::CcaProbeReport& r) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(3);
  os << "# CCA probe: fit_n=" << r.fit_n << " dims=" << r.dims << " ridge=" << r.ridge
     << " correlation=" << analysis::to_string(r.correlation) << '\n';
  os << "class\tn\tmean\tstd\twelch_t\twelch_p\n";
  for (const auto& g : r.groups) {
    os << g.group << '\t' << g.n << '\t' << g.mean << '\t' << g.std;
    if (g.welch_vs_real) {
      os << '\t' << g.welch_vs_real->t << '\t' << std::scientific << g.welch_vs_real->p
         << std::fixed;
    } else {
      os << "\t-\t-";
    }
    os << '\n';
  }
  return os.str();
}

std::string mismatch_table(const analysis::MismatchReport& r) {
  std::ostringstream os;
  os << std::setprecision(6);
  os << "class\tn\tmin\tq25\tmedian\tq75\tmax\tmean\tstd\n";
  for (const auto& [name, s] : {std::pair{"real", r.real}, std::pair{"fake", r.fake}}) {
    os << name << '\t' << s.n << '\t' << s.min << '\t' << s.q25 << '\t' << s.median << '\t'
       << s.q75 << '\t' << s.max << '\t' << s.mean << '\t' << s.std << '\n';
  }
  if (r.welch) {
    os << "welch_t\t" << r.welch->t << "\nwelch_df\t" << r.welch->df << "\nwelch_p\t" << r.welch->p
       << "\nwelch_p_greater\t" << *r.welch_p_greater << '\n';
  }
  for (const auto& w : r.warnings) os << "# warning: " << w << '\n';
  return os.str();
}

int cmd_analyze(const AnalyzeArgs& a, std::ostream& out, std::ostream& err) {
  const fs::path dir = output_dir(a.out, "analyze");
  auto records = select_split(store::load_manifest(a.manifest), a.split);

  if (a.mode == "cca") {
    const auto samples = analysis::probe_samples(records);
    const auto report = analysis::cca_probe(samples, a.fit_n, a.dims, a.ridge, a.seed,
                                            analysis::parse_cca_correlation(a.correlation));
    write_text(dir / "cca_summary.json", analysis::summary_json(report));
    write_text(dir / "cca_samples.jsonl", analysis::samples_jsonl(report));
    const std::string table = cca_table(report);
    write_text(dir / "cca_table.txt", table);
    out << table;
    for (const auto& w : report.warnings) err << "warning: " << w << '\n';
    return kExitOk;
  }

  if (a.mode == "mismatch") {
    if (a.ckpt.empty()) throw ConfigError("--mode mismatch needs --ckpt");
    const auto ckpt = model::load_checkpoint(a.ckpt);
    const std::size_t frames =
        a.target_frames > 0 ? a.target_frames : train::checkpoint_target_frames(ckpt, 50);
    const auto samples = train::load_pooled(records, frames);
    const auto report = analysis::mismatch_report(samples, ckpt, a.bins);
    write_text(dir / "mismatch_summary.json", analysis::summary_json(report));
    write_text(dir / "mismatch_samples.jsonl", analysis::samples_jsonl(report));
    const std::string table = mismatch_table(report);
    write_text(dir / "mismatch_table.txt", table);
    out << table;
    for (const auto& w : report.warnings) err << "warning: " << w << '\n';
    return kExitOk;
  }

  if (a.mode == "layers") {
    const auto view_a = store::parse_subspace(a.view_a);
    const auto view_b = store::parse_subspace(a.view_b);
    if (a.max_samples > 0 && records.size() > a.max_samples) records.resize(a.max_samples);
    std::vector<Tensor> embs_a, embs_b;
    for (const auto& r : records) {
      auto path_of = [&r](store::Subspace s) {
        return s == store::Subspace::style ? r.style_path : r.linguistics_path;
      };
      embs_a.push_back(store::read_embedding(path_of(view_a)).to_tensor());
      embs_b.push_back(store::read_embedding(path_of(view_b)).to_tensor());
    }
    const auto pooling = analysis::parse_spearman_pooling(a.pooling);
    const Tensor m = analysis::layer_spearman_matrix(embs_a, embs_b, pooling);
    write_text(dir / "layers_matrix.txt", analysis::matrix_text(m));
    std::vector<std::vector<double>> rows;
    for (std::size_t i = 0; i < m.dim(0); ++i) {
      rows.emplace_back();
      for (std::size_t j = 0; j < m.dim(1); ++j) rows.back().push_back(m.at(i, j));
    }
    const nlohmann::json j = {{"analysis", "layers"},
                              {"view_a", a.view_a},
                              {"view_b", a.view_b},
                              {"pooling", analysis::to_string(pooling)},
                              {"n", records.size()},
                              {"shape", {m.dim(0), m.dim(1)}},
                              {"matrix", rows}};
    write_text(dir / "layers_summary.json", j.dump(2) + "\n");
    out << "layer matrix " << m.dim(0) << " x " << m.dim(1) << " -> "
        << (dir / "layers_matrix.txt").string() << '\n';
    return kExitOk;
  }
  throw ConfigError("unknown analysis mode \"" + a.mode + "\"");
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"SLIM audio-deepfake detection over style/linguistics subspace embeddings", "slim"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "slim 0.1.0");

  SynthArgs sa;
  auto* synth = app.add_subcommand("synth", "generate a synthetic embedding dataset");
  synth->add_option("--config", sa.config, "key/value config file")->check(CLI::ExistingFile);
  synth->add_option("--set", sa.overrides, "config override Key=value (repeatable)");
  synth->add_option("--n-real", sa.n_real, "number of real samples");
  synth->add_option("--n-fake", sa.n_fake, "number of fake samples");
  synth->add_option("--mismatch", sa.mismatch, "latent mismatch of fakes in [0, 1]");
  synth->add_option("--seed", sa.seed, "seed of the generative law");
  synth->add_option("--stream", sa.stream, "sample stream (disjoint sample families)");
  synth->add_option("--features", sa.features, "feature width F");
  synth->add_option("--frames", sa.frames, "frames T");
  synth->add_option("--noise-std", sa.noise_std, "per-frame noise std");
  synth->add_option("--artifact-strength", sa.artifact, "artifact bump on fakes");
  synth->add_option("--out", sa.out, "output directory");

  TrainArgs t1;
  auto* stage1 = app.add_subcommand("train-stage1", "self-contrastive training on real speech");
  stage1->add_option("--manifest", t1.manifest, "manifest (JSON lines)")->required();
  stage1->add_option("--config", t1.config, "key/value config file")->check(CLI::ExistingFile);
  stage1->add_option("--set", t1.overrides, "config override Key=value (repeatable)");
  stage1->add_option("--seed", t1.seed, "training seed");
  stage1->add_option("--epochs", t1.epochs, "epochs");
  stage1->add_option("--ckpt-out", t1.ckpt_out, "checkpoint path");
  stage1->add_option("--out", t1.out, "output directory for logs and reports");

  TrainArgs t2;
  auto* stage2 = app.add_subcommand("train-stage2", "supervised training of projectors and head");
  stage2->add_option("--manifest", t2.manifest, "manifest (JSON lines)")->required();
  stage2->add_option("--stage1-ckpt", t2.stage1_ckpt, "stage-1 checkpoint")->required();
  stage2->add_option("--config", t2.config, "key/value config file")->check(CLI::ExistingFile);
  stage2->add_option("--set", t2.overrides, "config override Key=value (repeatable)");
  stage2->add_option("--seed", t2.seed, "training seed");
  stage2->add_option("--epochs", t2.epochs, "epochs");
  stage2->add_option("--variant", t2.variant,
                     "full | dependency | subspace | style | linguistics");
  stage2->add_option("--ckpt-out", t2.ckpt_out, "checkpoint path");
  stage2->add_option("--out", t2.out, "output directory for logs and reports");

  EvalArgs ea;
  auto* evaluate = app.add_subcommand("evaluate", "score a split and report EER / F1");
  evaluate->add_option("--manifest", ea.manifest, "manifest (JSON lines)")->required();
  evaluate->add_option("--ckpt", ea.ckpt, "stage-2 checkpoint")->required();
  evaluate->add_option("--variant", ea.variant, "expected variant (must match the checkpoint)");
  evaluate->add_option("--split", ea.split, "train | valid | test | all");
  evaluate->add_option("--target-frames", ea.target_frames, "frames (default: from checkpoint)");
  evaluate->add_option("--report-out", ea.report_out, "report JSON path");
  evaluate->add_option("--scores-out", ea.scores_out, "score file path");
  evaluate->add_option("--out", ea.out, "output directory");

  AnalyzeArgs aa;
  auto* analyze = app.add_subcommand("analyze", "CCA probe, mismatch distribution, layer map");
  analyze->add_option("--mode", aa.mode, "cca | mismatch | layers")
      ->required()
      ->check(CLI::IsMember({"cca", "mismatch", "layers"}));
  analyze->add_option("--manifest", aa.manifest, "manifest (JSON lines)")->required();
  analyze->add_option("--split", aa.split, "train | valid | test | all");
  analyze->add_option("--out", aa.out, "output directory");
  analyze->add_option("--fit-n", aa.fit_n, "cca: real samples used to fit");
  analyze->add_option("--dims", aa.dims, "cca: canonical dimensions");
  analyze->add_option("--ridge", aa.ridge, "cca: relative ridge");
  analyze->add_option("--seed", aa.seed, "cca: seed of the fit-sample choice");
  analyze->add_option("--correlation", aa.correlation, "cca: per-sample | per-dimension");
  analyze->add_option("--ckpt", aa.ckpt, "mismatch: checkpoint with compression modules");
  analyze->add_option("--bins", aa.bins, "mismatch: histogram bins");
  analyze->add_option("--target-frames", aa.target_frames, "mismatch: frames");
  analyze->add_option("--view-a", aa.view_a, "layers: style | linguistics");
  analyze->add_option("--view-b", aa.view_b, "layers: style | linguistics");
  analyze->add_option("--pooling", aa.pooling, "layers: per-sample | concatenated");
  analyze->add_option("--max-samples", aa.max_samples, "layers: cap on samples (0 = all)");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (synth->parsed()) return cmd_synth(sa, out);
    if (stage1->parsed()) return cmd_train(model::Stage::stage1, t1, out, err);
    if (stage2->parsed()) return cmd_train(model::Stage::stage2, t2, out, err);
    if (evaluate->parsed()) return cmd_evaluate(ea, out);
    if (analyze->parsed()) return cmd_analyze(aa, out, err);
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const IoError& e) {
    err << "I/O error: " << e.what() << '\n';
    return kExitIo;
  } catch (const fs::filesystem_error& e) {
    err << "I/O error: " << e.what() << '\n';
    return kExitIo;
  } catch (const NumericalError& e) {
    err << "numerical error: " << e.what() << '\n';
    return kExitNumerical;
  } catch (const std::exception& e) {
    err << "internal error: " << e.what() << '\n';
    return kExitInternal;
  }
  return kExitUsage;
}

}  // namespace slim::cli
