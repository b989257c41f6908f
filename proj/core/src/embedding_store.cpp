#include "slim/embedding_store.hpp"

#include <algorithm>
#include <cstring>
#include <fstream>
#include <random>
#include <set>
#include <sstream>

#include "binary_io.hpp"
#include "json.hpp"
#include "slim/crc32.hpp"
#include "slim/error.hpp"

namespace slim::store {

using nlohmann::json;

std::string to_string(Subspace s) { return s == Subspace::style ? "style" : "linguistics"; }
std::string to_string(Label l) { return l == Label::real ? "real" : "fake"; }
std::string to_string(Split s) {
  switch (s) {
    case Split::train: return "train";
    case Split::valid: return "valid";
    case Split::test: return "test";
  }
  return "?";
}

Label parse_label(const std::string& s) {
  if (s == "real") return Label::real;
  if (s == "fake") return Label::fake;
  throw ValidationError("unknown label \"" + s + "\" (expected real or fake)");
}

Subspace parse_subspace(const std::string& s) {
  if (s == "style") return Subspace::style;
  if (s == "linguistics") return Subspace::linguistics;
  throw ValidationError("unknown subspace \"" + s + "\" (expected style or linguistics)");
}

Split parse_split(const std::string& s) {
  if (s == "train") return Split::train;
  if (s == "valid") return Split::valid;
  if (s == "test") return Split::test;
  throw ValidationError("unknown split \"" + s + "\" (expected train, valid or test)");
}

// ---------------------------------------------------------------------------
// SLEM

void EmbeddingTensor::validate() const {
  if (layers < 1 || features < 1 || frames < 1) {
    throw DimensionError("embedding dimensions must be >= 1, got K=" + std::to_string(layers) +
                         " F=" + std::to_string(features) + " T=" + std::to_string(frames));
  }
  const std::size_t expect = std::size_t{layers} * features * frames;
  if (data.size() != expect) {
    throw DimensionError("embedding holds " + std::to_string(data.size()) + " values, K*F*T = " +
                         std::to_string(expect));
  }
}

Tensor EmbeddingTensor::to_tensor() const {
  validate();
  return Tensor({layers, features, frames}, std::vector<double>(data.begin(), data.end()));
}

std::vector<std::uint8_t> encode_embedding(const EmbeddingTensor& t) {
  t.validate();
  detail::ByteWriter w;
  w.bytes(kSlemMagic, 4);
  w.u32(kSlemVersion);
  w.u8(static_cast<std::uint8_t>(t.subspace));
  w.u32(t.layers);
  w.u32(t.features);
  w.u32(t.frames);
  const std::size_t payload_begin = w.size();
  for (float v : t.data) w.f32(v);
  auto& buf = w.buffer();
  const std::uint32_t crc = crc32(std::span<const std::uint8_t>(buf).subspan(payload_begin));
  w.u32(crc);
  return std::move(w.buffer());
}

EmbeddingTensor decode_embedding(const std::vector<std::uint8_t>& bytes, const std::string& origin) {
  detail::ByteReader r(bytes, origin);
  if (r.remaining() < 4 || std::memcmp(r.at(0), kSlemMagic, 4) != 0) {
    throw FormatError(origin + ": bad magic, not a SLEM file");
  }
  r.str(4);
  const std::uint32_t version = r.u32();
  if (version != kSlemVersion) {
    throw FormatError(origin + ": unsupported SLEM version " + std::to_string(version));
  }
  EmbeddingTensor t;
  const std::uint8_t code = r.u8();
  if (code > 1) throw FormatError(origin + ": unknown subspace code " + std::to_string(code));
  t.subspace = static_cast<Subspace>(code);
  t.layers = r.u32();
  t.features = r.u32();
  t.frames = r.u32();
  if (t.layers < 1 || t.features < 1 || t.frames < 1) {
    throw FormatError(origin + ": zero dimension in header");
  }
  const std::size_t count = std::size_t{t.layers} * t.features * t.frames;
  const std::size_t expect = kSlemHeaderBytes + 4 * count + 4;
  if (bytes.size() != expect) {
    throw LengthError(origin + ": expected " + std::to_string(expect) + " bytes for K=" +
                      std::to_string(t.layers) + " F=" + std::to_string(t.features) +
                      " T=" + std::to_string(t.frames) + ", found " +
                      std::to_string(bytes.size()));
  }
  const std::uint32_t actual =
      crc32(std::span<const std::uint8_t>(bytes).subspan(kSlemHeaderBytes, 4 * count));
  t.data.resize(count);
  for (auto& v : t.data) v = r.f32();
  const std::uint32_t stored = r.u32();
  if (stored != actual) {
    throw CorruptionError(origin + ": payload CRC mismatch (stored " + std::to_string(stored) +
                          ", computed " + std::to_string(actual) + ")");
  }
  return t;
}

void write_embedding(const EmbeddingTensor& t, const std::filesystem::path& path) {
  detail::write_file_bytes(path, encode_embedding(t));
}

EmbeddingTensor read_embedding(const std::filesystem::path& path) {
  return decode_embedding(detail::read_file_bytes(path), path.string());
}

// ---------------------------------------------------------------------------
// manifest

namespace {

std::string required_string(const json& obj, const char* key, std::size_t line) {
  auto it = obj.find(key);
  if (it == obj.end()) {
    throw ParseError("manifest line " + std::to_string(line) + ": missing field \"" + key + "\"");
  }
  if (!it->is_string()) {
    throw ParseError("manifest line " + std::to_string(line) + ": field \"" + key +
                     "\" must be a string");
  }
  return it->get<std::string>();
}

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
  std::filesystem::path path(p);
  if (path.is_absolute() || base.empty()) return path;
  return base / path;
}

std::string relative_to(const std::filesystem::path& p, const std::filesystem::path& base) {
  if (base.empty()) return p.generic_string();
  auto rel = p.lexically_relative(base);
  if (rel.empty() || *rel.begin() == "..") return p.generic_string();
  return rel.generic_string();
}

}  // namespace

std::vector<ManifestRecord> parse_manifest(const std::string& text,
                                           const std::filesystem::path& base_dir) {
  std::vector<ManifestRecord> records;
  std::set<std::string> seen;
  std::istringstream in(text);
  std::string raw;
  std::size_t line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    if (raw.find_first_not_of(" \t\r") == std::string::npos) continue;
    json obj;
    try {
      obj = json::parse(raw);
    } catch (const json::parse_error& e) {
      throw ParseError("manifest line " + std::to_string(line_no) + ": " + e.what());
    }
    if (!obj.is_object()) {
      throw ParseError("manifest line " + std::to_string(line_no) + ": expected a JSON object");
    }
    ManifestRecord rec;
    rec.id = required_string(obj, "id", line_no);
    if (rec.id.empty()) {
      throw ValidationError("manifest line " + std::to_string(line_no) + ": empty id");
    }
    try {
      rec.label = parse_label(required_string(obj, "label", line_no));
      rec.split = parse_split(required_string(obj, "split", line_no));
    } catch (const ValidationError& e) {
      throw ValidationError("manifest line " + std::to_string(line_no) + ": " + e.what());
    }
    rec.style_path = resolve(base_dir, required_string(obj, "style_path", line_no));
    rec.linguistics_path = resolve(base_dir, required_string(obj, "linguistics_path", line_no));
    rec.dataset = required_string(obj, "dataset", line_no);
    if (auto it = obj.find("attack_id"); it != obj.end() && !it->is_null()) {
      if (!it->is_string()) {
        throw ParseError("manifest line " + std::to_string(line_no) +
                         ": field \"attack_id\" must be a string or null");
      }
      rec.attack_id = it->get<std::string>();
    }
    if (!seen.insert(rec.id).second) {
      throw ValidationError("manifest line " + std::to_string(line_no) + ": duplicate id \"" +
                            rec.id + "\"");
    }
    records.push_back(std::move(rec));
  }
  return records;
}

std::vector<ManifestRecord> load_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open manifest " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_manifest(ss.str(), path.parent_path());
}

std::string manifest_line(const ManifestRecord& r, const std::filesystem::path& base_dir) {
  json obj;
  obj["id"] = r.id;
  obj["label"] = to_string(r.label);
  obj["split"] = to_string(r.split);
  obj["style_path"] = relative_to(r.style_path, base_dir);
  obj["linguistics_path"] = relative_to(r.linguistics_path, base_dir);
  obj["dataset"] = r.dataset;
  obj["attack_id"] = r.attack_id ? json(*r.attack_id) : json(nullptr);
  return obj.dump();
}

void write_manifest(const std::vector<ManifestRecord>& records, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open manifest " + path.string() + " for writing");
  for (const auto& r : records) out << manifest_line(r, path.parent_path()) << '\n';
  if (!out) throw IoError("write failure on " + path.string());
}

std::vector<ManifestRecord> filter_split(const std::vector<ManifestRecord>& records, Split split) {
  std::vector<ManifestRecord> out;
  std::copy_if(records.begin(), records.end(), std::back_inserter(out),
               [split](const ManifestRecord& r) { return r.split == split; });
  return out;
}

// ---------------------------------------------------------------------------
// alignment and batching

namespace {

Tensor crop_center(const Tensor& x, std::size_t frames) {
  const std::size_t layers = x.dim(0), feats = x.dim(1), src = x.dim(2);
  const std::size_t offset = (src - frames) / 2;
  Tensor out({layers, feats, frames});
  for (std::size_t k = 0; k < layers; ++k)
    for (std::size_t f = 0; f < feats; ++f)
      for (std::size_t t = 0; t < frames; ++t)
        out[(k * feats + f) * frames + t] = x[(k * feats + f) * src + offset + t];
  return out;
}

}  // namespace

Tensor fit_frames(const Tensor& x, std::size_t target) {
  if (x.rank() != 3) throw DimensionError("fit_frames expects [K, F, T], got " + shape_str(x.shape()));
  if (target < 1) throw ConfigError("target frame count must be >= 1");
  const std::size_t layers = x.dim(0), feats = x.dim(1), src = x.dim(2);
  if (src == target) return x;
  if (src > target) return crop_center(x, target);
  Tensor out({layers, feats, target});
  for (std::size_t k = 0; k < layers; ++k)
    for (std::size_t f = 0; f < feats; ++f)
      for (std::size_t t = 0; t < src; ++t)
        out[(k * feats + f) * target + t] = x[(k * feats + f) * src + t];
  return out;
}

AlignedPair align_pair(const EmbeddingTensor& style, const EmbeddingTensor& linguistics,
                       std::size_t target_frames) {
  const std::size_t common = std::min(style.frames, linguistics.frames);
  Tensor s = style.to_tensor();
  Tensor l = linguistics.to_tensor();
  if (s.dim(2) > common) s = crop_center(s, common);
  if (l.dim(2) > common) l = crop_center(l, common);
  return {fit_frames(s, target_frames), fit_frames(l, target_frames)};
}

std::vector<std::vector<std::size_t>> batch_plan(std::size_t n, std::size_t batch_size,
                                                 std::optional<std::uint64_t> shuffle_seed) {
  if (batch_size < 1) throw ConfigError("batch size must be >= 1");
  if (n == 0) throw ConfigError("cannot batch an empty record list");
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  if (shuffle_seed) {
    std::mt19937_64 rng(*shuffle_seed);
    for (std::size_t i = n - 1; i > 0; --i) {
      std::uniform_int_distribution<std::size_t> pick(0, i);
      std::swap(order[i], order[pick(rng)]);
    }
  }
  std::vector<std::vector<std::size_t>> plan;
  for (std::size_t start = 0; start < n; start += batch_size) {
    const std::size_t end = std::min(n, start + batch_size);
    plan.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(start),
                      order.begin() + static_cast<std::ptrdiff_t>(end));
  }
  return plan;
}

BatchStream::BatchStream(std::vector<ManifestRecord> records, std::size_t batch_size,
                         std::size_t target_frames, std::optional<std::uint64_t> shuffle_seed)
    : records_(std::move(records)), target_frames_(target_frames) {
  if (records_.empty()) throw ConfigError("cannot batch an empty record list");
  if (target_frames_ < 1) throw ConfigError("target frame count must be >= 1");
  plan_ = batch_plan(records_.size(), batch_size, shuffle_seed);
}

std::optional<Batch> BatchStream::next() {
  if (cursor_ >= plan_.size()) return std::nullopt;
  Batch batch;
  for (std::size_t idx : plan_[cursor_]) {
    const auto& rec = records_[idx];
    auto pair = align_pair(read_embedding(rec.style_path), read_embedding(rec.linguistics_path),
                           target_frames_);
    batch.style.push_back(std::move(pair.style));
    batch.linguistics.push_back(std::move(pair.linguistics));
    batch.labels.push_back(label_target(rec.label));
    batch.ids.push_back(rec.id);
  }
  ++cursor_;
  return batch;
}

BatchStream make_batches(std::vector<ManifestRecord> records, std::size_t batch_size,
                         std::size_t target_frames, std::optional<std::uint64_t> shuffle_seed) {
  return BatchStream(std::move(records), batch_size, target_frames, shuffle_seed);
}

}  // namespace slim::store
