#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "slim/autodiff.hpp"
#include "slim/tensor.hpp"

namespace slim::model {

// Named tensors in insertion order. Names are unique.
class ParamTable {
 public:
  void set(const std::string& name, Tensor value);
  const Tensor& get(const std::string& name) const;
  bool contains(const std::string& name) const { return index_.count(name) != 0; }
  std::size_t size() const { return entries_.size(); }
  const std::vector<std::pair<std::string, Tensor>>& entries() const { return entries_; }
  std::vector<std::string> names_with_prefix(const std::string& prefix) const;

  friend bool operator==(const ParamTable& a, const ParamTable& b) {
    return a.entries_ == b.entries_;
  }

 private:
  std::vector<std::pair<std::string, Tensor>> entries_;
  std::unordered_map<std::string, std::size_t> index_;
};

// Exposes a ParamTable to one graph. Names accepted by `trainable` become
// graph parameters (gradients tracked); all others enter as constants.
class Bindings {
 public:
  using Predicate = std::function<bool(const std::string&)>;

  Bindings(ad::Graph& graph, const ParamTable& params, Predicate trainable);

  ad::Var operator()(const std::string& name) const;
  // Uses `v` for `name` instead of a fresh leaf (gradient checks bind their own
  // leaves). Must precede any lookup of that name.
  void bind(const std::string& name, ad::Var v);
  ad::Graph& graph() const { return graph_; }

  // Trainable variables created so far, in name order.
  std::vector<std::pair<std::string, ad::Var>> trainable_vars() const;

 private:
  ad::Graph& graph_;
  const ParamTable& params_;
  Predicate trainable_;
  mutable std::map<std::string, ad::Var> bound_;
};

enum class Stage : std::uint8_t { stage1 = 1, stage2 = 2 };

struct ModelCheckpoint {
  Stage stage = Stage::stage1;
  ParamTable params;
};

inline constexpr char kCheckpointMagic[4] = {'S', 'L', 'C', 'K'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

// SLCK layout: magic | u32 version | u8 stage | u32 entry count |
// entries (u32 name length, UTF-8 name, u32 rank, rank x u32 dims,
// float64 payload) | u32 CRC-32 of every preceding byte. Little-endian.
std::vector<std::uint8_t> encode_checkpoint(const ModelCheckpoint& ckpt);
ModelCheckpoint decode_checkpoint(const std::vector<std::uint8_t>& bytes,
                                  const std::string& origin = "<memory>");
void save_checkpoint(const ModelCheckpoint& ckpt, const std::filesystem::path& path);
ModelCheckpoint load_checkpoint(const std::filesystem::path& path);

// CRC-32 over the encoded parameters whose names start with `prefix`; used to
// prove that stage-2 training leaves stage-1 parameters untouched.
std::uint32_t fingerprint(const ParamTable& params, const std::string& prefix = "");

}  // namespace slim::model
