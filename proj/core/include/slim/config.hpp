#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "slim/synth.hpp"
#include "slim/trainer.hpp"

namespace slim::config {

// Key/value text files, one "Key = value" per line; '#' starts a comment.
// Keys follow the hyperparameter table names verbatim where one exists
// ("Batch size", "Epochs", "Starting LR", "End LR", "Early-stop patience",
// "lambda", "BN dropout", "FC dropout", "Compression output dim", ...).
// Unknown keys and malformed values raise ConfigError naming the line.
struct Entry {
  std::string key;
  std::string value;
  std::size_t line = 0;
};

std::vector<Entry> parse_entries(const std::string& text, const std::string& origin = "<config>");
std::vector<Entry> read_entries(const std::filesystem::path& path);
// "key=value" overrides from the command line.
Entry parse_override(const std::string& text);

// Applies one setting; throws ConfigError for unknown keys or bad values.
void apply(train::TrainConfig& cfg, const std::string& key, const std::string& value);
void apply(synth::SynthConfig& cfg, const std::string& key, const std::string& value);

train::TrainConfig train_config(model::Stage stage, const std::vector<Entry>& entries);
synth::SynthConfig synth_config(const std::vector<Entry>& entries);

// Effective configuration in the same key/value format (round-trips).
std::string format(const train::TrainConfig& cfg);
std::string format(const synth::SynthConfig& cfg);

// Recognised keys, in output order.
std::vector<std::string> train_keys(model::Stage stage);
std::vector<std::string> synth_keys();

}  // namespace slim::config
