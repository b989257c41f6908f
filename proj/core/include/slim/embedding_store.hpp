#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "slim/tensor.hpp"

namespace slim::store {

enum class Subspace : std::uint8_t { style = 0, linguistics = 1 };
enum class Label { real, fake };
enum class Split { train, valid, test };

std::string to_string(Subspace s);
std::string to_string(Label l);
std::string to_string(Split s);
Label parse_label(const std::string& s);
Split parse_split(const std::string& s);
Subspace parse_subspace(const std::string& s);

// Numeric training target: fake is the positive (detection) class.
inline double label_target(Label l) { return l == Label::fake ? 1.0 : 0.0; }

// K x F x T subspace representation (layers x features x time), stored as
// float32 in (layer, feature, time) order.
struct EmbeddingTensor {
  std::uint32_t layers = 0;
  std::uint32_t features = 0;
  std::uint32_t frames = 0;
  Subspace subspace = Subspace::style;
  std::vector<float> data;

  float at(std::size_t k, std::size_t f, std::size_t t) const {
    return data[(k * features + f) * frames + t];
  }
  float& at(std::size_t k, std::size_t f, std::size_t t) {
    return data[(k * features + f) * frames + t];
  }

  // Promotes to a double tensor of shape [K, F, T].
  Tensor to_tensor() const;
  void validate() const;
};

inline constexpr char kSlemMagic[4] = {'S', 'L', 'E', 'M'};
inline constexpr std::uint32_t kSlemVersion = 1;
// magic(4) | version u32 | subspace u8 | K u32 | F u32 | T u32
inline constexpr std::size_t kSlemHeaderBytes = 21;

// SLEM layout: header, K*F*T little-endian float32, then a u32 CRC-32 of the
// float payload bytes.
void write_embedding(const EmbeddingTensor& t, const std::filesystem::path& path);
EmbeddingTensor read_embedding(const std::filesystem::path& path);
std::vector<std::uint8_t> encode_embedding(const EmbeddingTensor& t);
EmbeddingTensor decode_embedding(const std::vector<std::uint8_t>& bytes,
                                 const std::string& origin = "<memory>");

struct ManifestRecord {
  std::string id;
  Label label = Label::real;
  Split split = Split::train;
  std::filesystem::path style_path;
  std::filesystem::path linguistics_path;
  std::string dataset;
  std::optional<std::string> attack_id;
};

// One JSON object per line. Relative paths are resolved against the
// manifest's directory. Blank lines are skipped.
std::vector<ManifestRecord> load_manifest(const std::filesystem::path& path);
std::vector<ManifestRecord> parse_manifest(const std::string& text,
                                           const std::filesystem::path& base_dir = {});
// Paths are written relative to the manifest's directory when they lie below it.
void write_manifest(const std::vector<ManifestRecord>& records, const std::filesystem::path& path);
std::string manifest_line(const ManifestRecord& record, const std::filesystem::path& base_dir = {});

std::vector<ManifestRecord> filter_split(const std::vector<ManifestRecord>& records, Split split);

// Aligns one sample's pair to a common length: both are first center-cropped
// to min(T_style, T_ling); the result is center-cropped to target_frames if
// longer or right-padded with zeros if shorter. Returns [K, F, target] tensors.
struct AlignedPair {
  Tensor style;
  Tensor linguistics;
};
AlignedPair align_pair(const EmbeddingTensor& style, const EmbeddingTensor& linguistics,
                       std::size_t target_frames);
// Crop/pad of a single [K, F, T] tensor along time.
Tensor fit_frames(const Tensor& x, std::size_t target_frames);

struct Batch {
  std::vector<Tensor> style;        // each [K_s, F, T]
  std::vector<Tensor> linguistics;  // each [K_l, F, T]
  std::vector<double> labels;       // 1 = fake
  std::vector<std::string> ids;

  std::size_t size() const { return ids.size(); }
};

// Index groups for one pass over n items. With a seed the order is a seeded
// permutation; without one the input order is kept. The final partial group is
// emitted.
std::vector<std::vector<std::size_t>> batch_plan(std::size_t n, std::size_t batch_size,
                                                 std::optional<std::uint64_t> shuffle_seed);

// Lazily loads and aligns the records of each batch in plan order.
class BatchStream {
 public:
  BatchStream(std::vector<ManifestRecord> records, std::size_t batch_size,
              std::size_t target_frames, std::optional<std::uint64_t> shuffle_seed);

  std::optional<Batch> next();
  std::size_t batch_count() const { return plan_.size(); }

 private:
  std::vector<ManifestRecord> records_;
  std::size_t target_frames_;
  std::vector<std::vector<std::size_t>> plan_;
  std::size_t cursor_ = 0;
};

BatchStream make_batches(std::vector<ManifestRecord> records, std::size_t batch_size,
                         std::size_t target_frames, std::optional<std::uint64_t> shuffle_seed);

}  // namespace slim::store
