#include "slim/params.hpp"

#include <cstring>

#include "binary_io.hpp"
#include "slim/crc32.hpp"
#include "slim/error.hpp"

namespace slim::model {

void ParamTable::set(const std::string& name, Tensor value) {
  if (auto it = index_.find(name); it != index_.end()) {
    entries_[it->second].second = std::move(value);
    return;
  }
  index_.emplace(name, entries_.size());
  entries_.emplace_back(name, std::move(value));
}

const Tensor& ParamTable::get(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw ConfigError("missing parameter \"" + name + "\" in checkpoint");
  return entries_[it->second].second;
}

std::vector<std::string> ParamTable::names_with_prefix(const std::string& prefix) const {
  std::vector<std::string> out;
  for (const auto& [name, _] : entries_) {
    if (name.compare(0, prefix.size(), prefix) == 0) out.push_back(name);
  }
  return out;
}

Bindings::Bindings(ad::Graph& graph, const ParamTable& params, Predicate trainable)
    : graph_(graph), params_(params), trainable_(std::move(trainable)) {}

ad::Var Bindings::operator()(const std::string& name) const {
  if (auto it = bound_.find(name); it != bound_.end()) return it->second;
  const Tensor& value = params_.get(name);
  ad::Var v = (trainable_ && trainable_(name)) ? graph_.parameter(value) : graph_.constant(value);
  bound_.emplace(name, v);
  return v;
}

void Bindings::bind(const std::string& name, ad::Var v) {
  if (bound_.count(name) != 0) throw ValidationError("parameter " + name + " is already bound");
  if (v.value().shape() != params_.get(name).shape()) {
    throw DimensionError("binding for " + name + " has shape " + shape_str(v.value().shape()) +
                         ", expected " + shape_str(params_.get(name).shape()));
  }
  bound_.emplace(name, v);
}

std::vector<std::pair<std::string, ad::Var>> Bindings::trainable_vars() const {
  std::vector<std::pair<std::string, ad::Var>> out;
  for (const auto& [name, v] : bound_) {
    if (graph_.requires_grad(v)) out.emplace_back(name, v);
  }
  return out;
}

namespace {

void encode_entry(detail::ByteWriter& w, const std::string& name, const Tensor& t) {
  w.u32(static_cast<std::uint32_t>(name.size()));
  w.bytes(name.data(), name.size());
  w.u32(static_cast<std::uint32_t>(t.rank()));
  for (auto d : t.shape()) w.u32(static_cast<std::uint32_t>(d));
  for (double v : t.data()) w.f64(v);
}

}  // namespace

std::vector<std::uint8_t> encode_checkpoint(const ModelCheckpoint& ckpt) {
  detail::ByteWriter w;
  w.bytes(kCheckpointMagic, 4);
  w.u32(kCheckpointVersion);
  w.u8(static_cast<std::uint8_t>(ckpt.stage));
  w.u32(static_cast<std::uint32_t>(ckpt.params.size()));
  for (const auto& [name, t] : ckpt.params.entries()) encode_entry(w, name, t);
  const std::uint32_t crc = crc32(w.buffer());
  w.u32(crc);
  return std::move(w.buffer());
}

ModelCheckpoint decode_checkpoint(const std::vector<std::uint8_t>& bytes, const std::string& origin) {
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kCheckpointMagic, 4) != 0) {
    throw FormatError(origin + ": bad magic, not a SLCK checkpoint");
  }
  if (bytes.size() < 4 + 4 + 1 + 4 + 4) throw LengthError(origin + ": truncated checkpoint");
  const std::size_t body = bytes.size() - 4;
  std::uint32_t stored = 0;
  for (int i = 0; i < 4; ++i) stored |= static_cast<std::uint32_t>(bytes[body + i]) << (8 * i);
  const std::uint32_t actual = crc32(std::span<const std::uint8_t>(bytes).first(body));

  detail::ByteReader r(bytes, origin);
  r.str(4);
  const std::uint32_t version = r.u32();
  if (version != kCheckpointVersion) {
    throw FormatError(origin + ": unsupported checkpoint version " + std::to_string(version));
  }
  ModelCheckpoint ckpt;
  const std::uint8_t stage = r.u8();
  if (stage != 1 && stage != 2) {
    throw FormatError(origin + ": unknown stage tag " + std::to_string(stage));
  }
  ckpt.stage = static_cast<Stage>(stage);
  if (stored != actual) {
    throw CorruptionError(origin + ": checkpoint CRC mismatch (stored " + std::to_string(stored) +
                          ", computed " + std::to_string(actual) + ")");
  }
  const std::uint32_t count = r.u32();
  for (std::uint32_t e = 0; e < count; ++e) {
    const std::uint32_t len = r.u32();
    std::string name = r.str(len);
    const std::uint32_t rank = r.u32();
    Shape shape(rank);
    for (auto& d : shape) d = r.u32();
    std::vector<double> data(shape_numel(shape));
    r.need(8 * data.size());
    for (auto& v : data) v = r.f64();
    if (ckpt.params.contains(name)) {
      throw FormatError(origin + ": duplicate entry \"" + name + "\"");
    }
    ckpt.params.set(name, Tensor(std::move(shape), std::move(data)));
  }
  if (r.pos() != body) {
    throw LengthError(origin + ": " + std::to_string(body - r.pos()) +
                      " unexpected bytes after the last entry");
  }
  return ckpt;
}

void save_checkpoint(const ModelCheckpoint& ckpt, const std::filesystem::path& path) {
  detail::write_file_bytes(path, encode_checkpoint(ckpt));
}

ModelCheckpoint load_checkpoint(const std::filesystem::path& path) {
  return decode_checkpoint(detail::read_file_bytes(path), path.string());
}

std::uint32_t fingerprint(const ParamTable& params, const std::string& prefix) {
  detail::ByteWriter w;
  for (const auto& [name, t] : params.entries()) {
    if (name.compare(0, prefix.size(), prefix) == 0) encode_entry(w, name, t);
  }
  return crc32(w.buffer());
}

}  // namespace slim::model
