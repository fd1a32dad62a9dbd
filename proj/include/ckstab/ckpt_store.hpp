#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ckstab/trajectory.hpp"

namespace ckstab::ckpt {

// File layout (all integers little-endian):
//   "CKPT" | u32 format version | u64 manifest length | manifest | blob
// The manifest is compact JSON with keys sorted:
//   {"blob_bytes", "checksum" (CRC-32 of blob), "initial", "run_id", "step",
//    "tensors": [{"dtype": "f32", "length", "name", "offset", "shape"}]}
// Tensors are stored sorted by name, contiguous, row-major f32.
inline constexpr char kMagic[4] = {'C', 'K', 'P', 'T'};
inline constexpr std::uint32_t kFormatVersion = 1;

struct TensorRecord {
  std::string name;
  std::vector<std::int64_t> shape;
  std::vector<float> data;

  std::size_t ElementCount() const;
  bool operator==(const TensorRecord&) const = default;
};

struct Checkpoint {
  std::string run_id;
  std::int64_t step = 0;
  bool initial = false;  // the step-0 checkpoint, excluded from analyses
  std::vector<TensorRecord> tensors;

  // Throws Error(kNameSetMismatch) when absent.
  const TensorRecord& Tensor(const std::string& name) const;
  bool operator==(const Checkpoint&) const = default;
};

struct TensorEntry {
  std::string name;
  std::vector<std::int64_t> shape;
  std::uint64_t offset = 0;
  std::uint64_t length = 0;
};

struct Manifest {
  std::string run_id;
  std::int64_t step = 0;
  bool initial = false;
  std::uint32_t checksum = 0;
  std::uint64_t blob_bytes = 0;
  std::vector<TensorEntry> tensors;  // sorted by name
  std::uint64_t header_bytes = 0;    // file offset of the blob
};

std::uint32_t Crc32(std::span<const unsigned char> bytes,
                    std::uint32_t running = 0);

// Serialized file bytes; identical checkpoints give identical bytes.
std::string Serialize(const Checkpoint& checkpoint);
Checkpoint Deserialize(std::string_view bytes);

void Save(const Checkpoint& checkpoint, const std::filesystem::path& path);
// Errors: kIoError, kVersionMismatch, kCorruptCheckpoint.
Checkpoint Load(const std::filesystem::path& path);
// Parses and validates the header without reading tensor data or checking
// the blob checksum.
Manifest ReadManifest(const std::filesystem::path& path);

// Mean of one element across checkpoints, accumulated in double over the
// values sorted ascending, so the result does not depend on input order.
float ElementMean(std::span<float> values);

// Streams tensors one at a time across all inputs (one tensor per input in
// memory at once) and writes the per-element mean. The output carries the
// run_id and step of the most recent input.
// Errors: kEmptyInput, kNameSetMismatch, kShapeMismatch, kIoError,
// kCorruptCheckpoint.
void AverageFiles(std::span<const std::filesystem::path> paths,
                  const std::filesystem::path& out_path);

// Directory of checkpoints named <id>.ckpt.
class Store {
 public:
  explicit Store(std::filesystem::path dir);

  const std::filesystem::path& dir() const { return dir_; }
  std::filesystem::path PathFor(const std::string& id) const;
  bool Contains(const std::string& id) const;
  void Put(const std::string& id, const Checkpoint& checkpoint) const;
  // Throws Error(kMissingCheckpointFiles) when the file does not exist.
  Checkpoint Get(const std::string& id) const;

  // Trajectory of every non-initial checkpoint in the directory, ordered
  // by step. Only checkpoints whose manifest run_id equals `run_id` are
  // included when it is given.
  Trajectory Scan(const std::optional<std::string>& run_id = std::nullopt) const;

 private:
  std::filesystem::path dir_;
};

}  // namespace ckstab::ckpt
