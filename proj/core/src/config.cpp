#include "slim/config.hpp"

#include <algorithm>
#include <charconv>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "slim/error.hpp"

namespace slim::config {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
  return s;
}

std::string bad_value(const std::string& key, const std::string& value, const char* expected) {
  return "invalid value \"" + value + "\" for \"" + key + "\" (expected " + expected + ")";
}

double to_double(const std::string& key, const std::string& value) {
  const char* first = value.data();
  const char* last = first + value.size();
  double out = 0.0;
  const auto [ptr, ec] = std::from_chars(first, last, out);
  if (ec != std::errc() || ptr != last) throw ConfigError(bad_value(key, value, "a number"));
  return out;
}

std::uint64_t to_u64(const std::string& key, const std::string& value) {
  const char* first = value.data();
  const char* last = first + value.size();
  std::uint64_t out = 0;
  const auto [ptr, ec] = std::from_chars(first, last, out);
  if (ec != std::errc() || ptr != last) {
    throw ConfigError(bad_value(key, value, "a non-negative integer"));
  }
  return out;
}

std::size_t to_size(const std::string& key, const std::string& value) {
  return static_cast<std::size_t>(to_u64(key, value));
}

// Accepts an optional trailing unit, e.g. "3 epochs".
std::size_t to_epochs(const std::string& key, const std::string& value) {
  std::string v = value;
  for (const char* unit : {"epochs", "epoch"}) {
    const std::string u(unit);
    if (v.size() > u.size() && lower(v.substr(v.size() - u.size())) == u) {
      v = trim(v.substr(0, v.size() - u.size()));
      break;
    }
  }
  return to_size(key, v);
}

bool to_bool(const std::string& key, const std::string& value) {
  const std::string v = lower(value);
  if (v == "true" || v == "1" || v == "on" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "off" || v == "no") return false;
  throw ConfigError(bad_value(key, value, "true or false"));
}

std::string fmt(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

std::string fmt(std::uint64_t v) { return std::to_string(v); }
std::string fmt(bool v) { return v ? "true" : "false"; }

template <class Cfg>
struct Field {
  std::string key;
  std::function<void(Cfg&, const std::string&, const std::string&)> set;
  std::function<std::string(const Cfg&)> get;
};

using TrainField = Field<train::TrainConfig>;
using SynthField = Field<synth::SynthConfig>;

const std::vector<TrainField>& common_train_fields() {
  using C = train::TrainConfig;
  static const std::vector<TrainField> fields = {
      {"Batch size", [](C& c, auto& k, auto& v) { c.batch_size = to_size(k, v); },
       [](const C& c) { return fmt(std::uint64_t{c.batch_size}); }},
      {"Epochs", [](C& c, auto& k, auto& v) { c.epochs = to_size(k, v); },
       [](const C& c) { return fmt(std::uint64_t{c.epochs}); }},
      {"Starting LR", [](C& c, auto& k, auto& v) { c.lr_start = to_double(k, v); },
       [](const C& c) { return fmt(c.lr_start); }},
      {"End LR", [](C& c, auto& k, auto& v) { c.lr_end = to_double(k, v); },
       [](const C& c) { return fmt(c.lr_end); }},
      {"Early-stop patience", [](C& c, auto& k, auto& v) { c.patience = to_epochs(k, v); },
       [](const C& c) { return fmt(std::uint64_t{c.patience}) + " epochs"; }},
      {"Seed", [](C& c, auto& k, auto& v) { c.seed = to_u64(k, v); },
       [](const C& c) { return fmt(c.seed); }},
      {"Target frames", [](C& c, auto& k, auto& v) { c.target_frames = to_size(k, v); },
       [](const C& c) { return fmt(std::uint64_t{c.target_frames}); }},
      {"Accumulation steps", [](C& c, auto& k, auto& v) { c.accumulation_steps = to_size(k, v); },
       [](const C& c) { return fmt(std::uint64_t{c.accumulation_steps}); }},
      {"Gradient clip", [](C& c, auto& k, auto& v) { c.grad_clip = to_double(k, v); },
       [](const C& c) { return fmt(c.grad_clip); }},
      {"Weight decay", [](C& c, auto& k, auto& v) { c.weight_decay = to_double(k, v); },
       [](const C& c) { return fmt(c.weight_decay); }},
      {"Beta1", [](C& c, auto& k, auto& v) { c.beta1 = to_double(k, v); },
       [](const C& c) { return fmt(c.beta1); }},
      {"Beta2", [](C& c, auto& k, auto& v) { c.beta2 = to_double(k, v); },
       [](const C& c) { return fmt(c.beta2); }},
      {"Epsilon", [](C& c, auto& k, auto& v) { c.adam_eps = to_double(k, v); },
       [](const C& c) { return fmt(c.adam_eps); }},
      {"Activation",
       [](C& c, auto&, auto& v) { c.model.activation = model::parse_activation(v); },
       [](const C& c) { return model::to_string(c.model.activation); }},
  };
  return fields;
}

const std::vector<TrainField>& stage1_fields() {
  using C = train::TrainConfig;
  static const std::vector<TrainField> fields = {
      {"lambda", [](C& c, auto& k, auto& v) { c.lambda = to_double(k, v); },
       [](const C& c) { return fmt(c.lambda); }},
      {"Loss mode", [](C& c, auto&, auto& v) { c.loss_mode = loss::parse_loss_mode(v); },
       [](const C& c) { return loss::to_string(c.loss_mode); }},
      {"Bottleneck dim", [](C& c, auto& k, auto& v) { c.model.bottleneck = to_size(k, v); },
       [](const C& c) { return fmt(std::uint64_t{c.model.bottleneck}); }},
      {"BN dropout", [](C& c, auto& k, auto& v) { c.model.bottleneck_dropout = to_double(k, v); },
       [](const C& c) { return fmt(c.model.bottleneck_dropout); }},
      {"FC dropout", [](C& c, auto& k, auto& v) { c.model.projection_dropout = to_double(k, v); },
       [](const C& c) { return fmt(c.model.projection_dropout); }},
      {"Compression output dim",
       [](C& c, auto& k, auto& v) { c.model.dependency_dim = to_size(k, v); },
       [](const C& c) { return fmt(std::uint64_t{c.model.dependency_dim}); }},
  };
  return fields;
}

const std::vector<TrainField>& stage2_fields() {
  using C = train::TrainConfig;
  static const std::vector<TrainField> fields = {
      {"Variant", [](C& c, auto&, auto& v) { c.model.variant = model::parse_variant(v); },
       [](const C& c) { return model::to_string(c.model.variant); }},
      {"Projection dim", [](C& c, auto& k, auto& v) { c.model.projection_dim = to_size(k, v); },
       [](const C& c) { return fmt(std::uint64_t{c.model.projection_dim}); }},
      {"Classifier hidden dim", [](C& c, auto& k, auto& v) { c.model.head_hidden = to_size(k, v); },
       [](const C& c) { return fmt(std::uint64_t{c.model.head_hidden}); }},
      {"ASP dropout", [](C& c, auto& k, auto& v) { c.model.asp_dropout = to_double(k, v); },
       [](const C& c) { return fmt(c.model.asp_dropout); }},
      {"FC dropout", [](C& c, auto& k, auto& v) { c.model.head_dropout = to_double(k, v); },
       [](const C& c) { return fmt(c.model.head_dropout); }},
      {"Augment", [](C& c, auto& k, auto& v) { c.augment = to_bool(k, v); },
       [](const C& c) { return fmt(c.augment); }},
      {"Augment noise std", [](C& c, auto& k, auto& v) { c.augment_noise_std = to_double(k, v); },
       [](const C& c) { return fmt(c.augment_noise_std); }},
      {"Augment time mask", [](C& c, auto& k, auto& v) { c.augment_time_mask = to_double(k, v); },
       [](const C& c) { return fmt(c.augment_time_mask); }},
      {"Augment feature mask",
       [](C& c, auto& k, auto& v) { c.augment_feature_mask = to_double(k, v); },
       [](const C& c) { return fmt(c.augment_feature_mask); }},
  };
  return fields;
}

std::vector<const TrainField*> train_fields(model::Stage stage) {
  std::vector<const TrainField*> out;
  for (const auto& f : common_train_fields()) out.push_back(&f);
  for (const auto& f : stage == model::Stage::stage1 ? stage1_fields() : stage2_fields()) {
    out.push_back(&f);
  }
  return out;
}

const std::vector<SynthField>& synth_fields() {
  using C = synth::SynthConfig;
  static const std::vector<SynthField> fields = {
      {"Latent dim", [](C& c, auto& k, auto& v) { c.latent_dim = to_size(k, v); },
       [](const C& c) { return fmt(std::uint64_t{c.latent_dim}); }},
      {"Features", [](C& c, auto& k, auto& v) { c.features = to_size(k, v); },
       [](const C& c) { return fmt(std::uint64_t{c.features}); }},
      {"Frames", [](C& c, auto& k, auto& v) { c.frames = to_size(k, v); },
       [](const C& c) { return fmt(std::uint64_t{c.frames}); }},
      {"Style layers", [](C& c, auto& k, auto& v) { c.style_layers = to_size(k, v); },
       [](const C& c) { return fmt(std::uint64_t{c.style_layers}); }},
      {"Linguistic layers", [](C& c, auto& k, auto& v) { c.linguistics_layers = to_size(k, v); },
       [](const C& c) { return fmt(std::uint64_t{c.linguistics_layers}); }},
      {"Noise std", [](C& c, auto& k, auto& v) { c.noise_std = to_double(k, v); },
       [](const C& c) { return fmt(c.noise_std); }},
      {"Mismatch", [](C& c, auto& k, auto& v) { c.mismatch = to_double(k, v); },
       [](const C& c) { return fmt(c.mismatch); }},
      {"Artifact strength", [](C& c, auto& k, auto& v) { c.artifact_strength = to_double(k, v); },
       [](const C& c) { return fmt(c.artifact_strength); }},
      {"Seed", [](C& c, auto& k, auto& v) { c.seed = to_u64(k, v); },
       [](const C& c) { return fmt(c.seed); }},
      {"Stream", [](C& c, auto& k, auto& v) { c.stream = to_u64(k, v); },
       [](const C& c) { return fmt(c.stream); }},
      {"Dataset", [](C& c, auto&, auto& v) { c.dataset = v; },
       [](const C& c) { return c.dataset; }},
  };
  return fields;
}

std::string stage_name(model::Stage s) { return s == model::Stage::stage1 ? "stage 1" : "stage 2"; }

}  // namespace

std::vector<Entry> parse_entries(const std::string& text, const std::string& origin) {
  std::vector<Entry> out;
  std::istringstream in(text);
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ParseError(origin + ":" + std::to_string(n) + ": expected \"Key = value\"");
    }
    Entry e{trim(line.substr(0, eq)), trim(line.substr(eq + 1)), n};
    if (e.key.empty()) throw ParseError(origin + ":" + std::to_string(n) + ": empty key");
    out.push_back(std::move(e));
  }
  return out;
}

std::vector<Entry> read_entries(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config file " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_entries(ss.str(), path.string());
}

Entry parse_override(const std::string& text) {
  const auto eq = text.find('=');
  if (eq == std::string::npos) {
    throw ParseError("override \"" + text + "\" is not of the form key=value");
  }
  Entry e{trim(text.substr(0, eq)), trim(text.substr(eq + 1)), 0};
  if (e.key.empty()) throw ParseError("override \"" + text + "\" has an empty key");
  return e;
}

void apply(train::TrainConfig& cfg, const std::string& key, const std::string& value) {
  for (const TrainField* f : train_fields(cfg.stage)) {
    if (f->key == key) {
      f->set(cfg, key, value);
      return;
    }
  }
  throw ConfigError("unknown " + stage_name(cfg.stage) + " config key \"" + key + "\"");
}

void apply(synth::SynthConfig& cfg, const std::string& key, const std::string& value) {
  for (const auto& f : synth_fields()) {
    if (f.key == key) {
      f.set(cfg, key, value);
      return;
    }
  }
  throw ConfigError("unknown synth config key \"" + key + "\"");
}

namespace {

template <class Cfg>
void apply_all(Cfg& cfg, const std::vector<Entry>& entries) {
  for (const auto& e : entries) {
    try {
      apply(cfg, e.key, e.value);
    } catch (const ConfigError& err) {
      if (e.line == 0) throw;
      throw ConfigError("line " + std::to_string(e.line) + ": " + err.what());
    }
  }
}

}  // namespace

train::TrainConfig train_config(model::Stage stage, const std::vector<Entry>& entries) {
  auto cfg = train::TrainConfig::defaults(stage);
  apply_all(cfg, entries);
  cfg.validate();
  return cfg;
}

synth::SynthConfig synth_config(const std::vector<Entry>& entries) {
  synth::SynthConfig cfg;
  apply_all(cfg, entries);
  cfg.validate();
  return cfg;
}

std::string format(const train::TrainConfig& cfg) {
  std::ostringstream os;
  os << "# " << stage_name(cfg.stage) << " effective configuration\n";
  for (const TrainField* f : train_fields(cfg.stage)) os << f->key << " = " << f->get(cfg) << '\n';
  return os.str();
}

std::string format(const synth::SynthConfig& cfg) {
  std::ostringstream os;
  os << "# synth effective configuration\n";
  for (const auto& f : synth_fields()) os << f.key << " = " << f.get(cfg) << '\n';
  return os.str();
}

std::vector<std::string> train_keys(model::Stage stage) {
  std::vector<std::string> out;
  for (const TrainField* f : train_fields(stage)) out.push_back(f->key);
  return out;
}

std::vector<std::string> synth_keys() {
  std::vector<std::string> out;
  for (const auto& f : synth_fields()) out.push_back(f.key);
  return out;
}

}  // namespace slim::config
