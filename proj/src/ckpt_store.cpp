#include "ckstab/ckpt_store.hpp"

#include <zlib.h>

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <map>
#include <set>

#include <json.hpp>

#include "ckstab/error.hpp"

namespace ckstab::ckpt {
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr std::size_t kPreambleBytes = 4 + 4 + 8;

void PutU32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

void PutU64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

std::uint64_t GetLe(const unsigned char* p, int bytes) {
  std::uint64_t v = 0;
  for (int i = bytes - 1; i >= 0; --i) v = (v << 8) | p[i];
  return v;
}

void AppendFloats(std::string& out, std::span<const float> values) {
  for (float f : values) PutU32(out, std::bit_cast<std::uint32_t>(f));
}

void ReadFloats(const unsigned char* p, std::size_t count, float* out) {
  for (std::size_t i = 0; i < count; ++i) {
    out[i] = std::bit_cast<float>(static_cast<std::uint32_t>(GetLe(p + 4 * i, 4)));
  }
}

[[noreturn]] void Corrupt(const std::string& what) {
  throw Error(ErrorCode::kCorruptCheckpoint, what);
}

std::uint64_t ShapeElements(const std::vector<std::int64_t>& shape) {
  std::uint64_t n = 1;
  for (auto d : shape) n *= static_cast<std::uint64_t>(d);
  return n;
}

// Parses the preamble and manifest from the first bytes of a file.
// `file_bytes` is the total file size.
Manifest ParseHeader(std::string_view head, std::uint64_t file_bytes) {
  if (head.size() < kPreambleBytes) Corrupt("file shorter than preamble");
  const auto* p = reinterpret_cast<const unsigned char*>(head.data());
  if (std::memcmp(p, kMagic, 4) != 0) Corrupt("bad magic");
  const auto version = static_cast<std::uint32_t>(GetLe(p + 4, 4));
  if (version != kFormatVersion) {
    throw Error(ErrorCode::kVersionMismatch,
                "format version " + std::to_string(version) + ", expected " +
                    std::to_string(kFormatVersion));
  }
  const std::uint64_t manifest_len = GetLe(p + 8, 8);
  if (manifest_len > file_bytes - kPreambleBytes ||
      manifest_len > head.size() - kPreambleBytes) {
    Corrupt("manifest length exceeds file size");
  }

  Manifest m;
  m.header_bytes = kPreambleBytes + manifest_len;
  try {
    const json j = json::parse(head.substr(kPreambleBytes, manifest_len));
    m.run_id = j.at("run_id").get<std::string>();
    m.step = j.at("step").get<std::int64_t>();
    m.initial = j.at("initial").get<bool>();
    m.checksum = j.at("checksum").get<std::uint32_t>();
    m.blob_bytes = j.at("blob_bytes").get<std::uint64_t>();
    for (const auto& t : j.at("tensors")) {
      if (t.at("dtype").get<std::string>() != "f32") Corrupt("unsupported dtype");
      m.tensors.push_back({t.at("name").get<std::string>(),
                           t.at("shape").get<std::vector<std::int64_t>>(),
                           t.at("offset").get<std::uint64_t>(),
                           t.at("length").get<std::uint64_t>()});
    }
  } catch (const json::exception& e) {
    Corrupt(std::string("bad manifest: ") + e.what());
  }

  if (file_bytes - m.header_bytes != m.blob_bytes) {
    Corrupt("blob is " + std::to_string(file_bytes - m.header_bytes) +
            " bytes, manifest says " + std::to_string(m.blob_bytes));
  }
  for (std::size_t i = 0; i < m.tensors.size(); ++i) {
    const TensorEntry& t = m.tensors[i];
    if (i > 0 && !(m.tensors[i - 1].name < t.name)) {
      Corrupt("tensor table not sorted by name");
    }
    for (auto d : t.shape) {
      if (d <= 0) Corrupt("non-positive dimension in '" + t.name + "'");
    }
    if (t.length != 4 * ShapeElements(t.shape)) {
      Corrupt("length of '" + t.name + "' does not match its shape");
    }
    if (t.offset > m.blob_bytes || t.length > m.blob_bytes - t.offset) {
      Corrupt("tensor '" + t.name + "' extends past the blob");
    }
  }
  // Non-overlap is checked in offset order.
  std::vector<const TensorEntry*> by_offset;
  for (const auto& t : m.tensors) by_offset.push_back(&t);
  std::sort(by_offset.begin(), by_offset.end(),
            [](const TensorEntry* a, const TensorEntry* b) { return a->offset < b->offset; });
  for (std::size_t i = 1; i < by_offset.size(); ++i) {
    if (by_offset[i]->offset < by_offset[i - 1]->offset + by_offset[i - 1]->length) {
      Corrupt("tensors '" + by_offset[i - 1]->name + "' and '" +
              by_offset[i]->name + "' overlap");
    }
  }
  return m;
}

std::string ReadFile(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIoError, "cannot open " + path.string());
  std::string bytes((std::istreambuf_iterator<char>(in)),
                    std::istreambuf_iterator<char>());
  if (in.bad()) throw Error(ErrorCode::kIoError, "read failed for " + path.string());
  return bytes;
}

// Sequential reader for one checkpoint during streaming averaging.
class TensorReader {
 public:
  explicit TensorReader(const fs::path& path) : path_(path), in_(path, std::ios::binary) {
    if (!in_) throw Error(ErrorCode::kIoError, "cannot open " + path.string());
    std::error_code ec;
    const auto size = fs::file_size(path, ec);
    if (ec) throw Error(ErrorCode::kIoError, "cannot stat " + path.string());
    std::string head(std::min<std::uintmax_t>(size, kPreambleBytes), '\0');
    in_.read(head.data(), static_cast<std::streamsize>(head.size()));
    if (head.size() == kPreambleBytes) {
      const auto manifest_len =
          GetLe(reinterpret_cast<const unsigned char*>(head.data()) + 8, 8);
      if (manifest_len <= size - kPreambleBytes) {
        head.resize(kPreambleBytes + manifest_len);
        in_.read(head.data() + kPreambleBytes,
                 static_cast<std::streamsize>(manifest_len));
      }
    }
    manifest_ = ParseHeader(head, size);
    VerifyChecksum();
  }

  const Manifest& manifest() const { return manifest_; }

  std::vector<float> Read(const TensorEntry& entry) {
    std::string buf(entry.length, '\0');
    in_.seekg(static_cast<std::streamoff>(manifest_.header_bytes + entry.offset));
    in_.read(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (!in_) throw Error(ErrorCode::kIoError, "short read in " + path_.string());
    std::vector<float> out(entry.length / 4);
    ReadFloats(reinterpret_cast<const unsigned char*>(buf.data()), out.size(), out.data());
    return out;
  }

 private:
  void VerifyChecksum() {
    in_.seekg(static_cast<std::streamoff>(manifest_.header_bytes));
    std::vector<char> chunk(1 << 16);
    std::uint32_t crc = 0;
    std::uint64_t left = manifest_.blob_bytes;
    while (left > 0) {
      const auto n = static_cast<std::size_t>(std::min<std::uint64_t>(left, chunk.size()));
      in_.read(chunk.data(), static_cast<std::streamsize>(n));
      if (!in_) throw Error(ErrorCode::kIoError, "short read in " + path_.string());
      crc = Crc32({reinterpret_cast<const unsigned char*>(chunk.data()), n}, crc);
      left -= n;
    }
    if (crc != manifest_.checksum) Corrupt("checksum mismatch in " + path_.string());
  }

  fs::path path_;
  std::ifstream in_;
  Manifest manifest_;
};

}  // namespace

std::size_t TensorRecord::ElementCount() const {
  return static_cast<std::size_t>(ShapeElements(shape));
}

const TensorRecord& Checkpoint::Tensor(const std::string& name) const {
  for (const auto& t : tensors) {
    if (t.name == name) return t;
  }
  throw Error(ErrorCode::kNameSetMismatch, "no tensor named '" + name + "'");
}

std::uint32_t Crc32(std::span<const unsigned char> bytes, std::uint32_t running) {
  uLong crc = running;
  std::size_t done = 0;
  while (done < bytes.size()) {
    const auto n = static_cast<uInt>(std::min<std::size_t>(bytes.size() - done, 1u << 30));
    crc = ::crc32(crc, bytes.data() + done, n);
    done += n;
  }
  return static_cast<std::uint32_t>(crc);
}

std::string Serialize(const Checkpoint& checkpoint) {
  std::vector<const TensorRecord*> sorted;
  for (const auto& t : checkpoint.tensors) {
    for (auto d : t.shape) {
      if (d <= 0) {
        throw Error(ErrorCode::kShapeMismatch,
                    "non-positive dimension in '" + t.name + "'");
      }
    }
    if (t.data.size() != t.ElementCount()) {
      throw Error(ErrorCode::kShapeMismatch,
                  "tensor '" + t.name + "' data does not match its shape");
    }
    sorted.push_back(&t);
  }
  std::sort(sorted.begin(), sorted.end(),
            [](const TensorRecord* a, const TensorRecord* b) { return a->name < b->name; });
  for (std::size_t i = 1; i < sorted.size(); ++i) {
    if (sorted[i]->name == sorted[i - 1]->name) {
      throw Error(ErrorCode::kNameSetMismatch,
                  "duplicate tensor name '" + sorted[i]->name + "'");
    }
  }

  std::string blob;
  json tensors = json::array();
  for (const TensorRecord* t : sorted) {
    const std::uint64_t offset = blob.size();
    AppendFloats(blob, t->data);
    tensors.push_back({{"name", t->name},
                       {"shape", t->shape},
                       {"dtype", "f32"},
                       {"offset", offset},
                       {"length", blob.size() - offset}});
  }
  json manifest = {
      {"run_id", checkpoint.run_id},
      {"step", checkpoint.step},
      {"initial", checkpoint.initial},
      {"blob_bytes", blob.size()},
      {"checksum", Crc32({reinterpret_cast<const unsigned char*>(blob.data()), blob.size()})},
      {"tensors", std::move(tensors)},
  };
  const std::string text = manifest.dump();

  std::string out(kMagic, 4);
  PutU32(out, kFormatVersion);
  PutU64(out, text.size());
  out += text;
  out += blob;
  return out;
}

Checkpoint Deserialize(std::string_view bytes) {
  const Manifest m = ParseHeader(bytes, bytes.size());
  const auto* blob = reinterpret_cast<const unsigned char*>(bytes.data()) + m.header_bytes;
  if (Crc32({blob, m.blob_bytes}) != m.checksum) Corrupt("checksum mismatch");
  Checkpoint c{m.run_id, m.step, m.initial, {}};
  for (const auto& e : m.tensors) {
    TensorRecord t{e.name, e.shape, std::vector<float>(e.length / 4)};
    ReadFloats(blob + e.offset, t.data.size(), t.data.data());
    c.tensors.push_back(std::move(t));
  }
  return c;
}

void Save(const Checkpoint& checkpoint, const fs::path& path) {
  const std::string bytes = Serialize(checkpoint);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::kIoError, "cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(ErrorCode::kIoError, "write failed for " + path.string());
}

Checkpoint Load(const fs::path& path) { return Deserialize(ReadFile(path)); }

Manifest ReadManifest(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIoError, "cannot open " + path.string());
  std::error_code ec;
  const auto size = fs::file_size(path, ec);
  if (ec) throw Error(ErrorCode::kIoError, "cannot stat " + path.string());
  std::string head(std::min<std::uintmax_t>(size, kPreambleBytes), '\0');
  in.read(head.data(), static_cast<std::streamsize>(head.size()));
  if (head.size() == kPreambleBytes) {
    const auto len = GetLe(reinterpret_cast<const unsigned char*>(head.data()) + 8, 8);
    if (len <= size - kPreambleBytes) {
      head.resize(kPreambleBytes + len);
      in.read(head.data() + kPreambleBytes, static_cast<std::streamsize>(len));
    }
  }
  return ParseHeader(head, size);
}

float ElementMean(std::span<float> values) {
  std::sort(values.begin(), values.end());
  double sum = 0.0;
  for (float v : values) sum += static_cast<double>(v);
  return static_cast<float>(sum / static_cast<double>(values.size()));
}

void AverageFiles(std::span<const fs::path> paths, const fs::path& out_path) {
  if (paths.empty()) throw Error(ErrorCode::kEmptyInput, "no checkpoints to average");
  std::vector<TensorReader> readers;
  readers.reserve(paths.size());
  for (const auto& p : paths) readers.emplace_back(p);

  const Manifest& first = readers.front().manifest();
  const Manifest* latest = &first;
  for (const auto& r : readers) {
    const Manifest& m = r.manifest();
    if (m.tensors.size() != first.tensors.size()) {
      throw Error(ErrorCode::kNameSetMismatch, "tensor count differs between inputs");
    }
    for (std::size_t i = 0; i < m.tensors.size(); ++i) {
      if (m.tensors[i].name != first.tensors[i].name) {
        throw Error(ErrorCode::kNameSetMismatch,
                    "tensor '" + m.tensors[i].name + "' not present in every input");
      }
      if (m.tensors[i].shape != first.tensors[i].shape) {
        throw Error(ErrorCode::kShapeMismatch,
                    "tensor '" + m.tensors[i].name + "' has differing shapes");
      }
    }
    if (m.step > latest->step) latest = &m;
  }

  Checkpoint out{latest->run_id, latest->step, false, {}};
  std::vector<float> column(readers.size());
  for (std::size_t t = 0; t < first.tensors.size(); ++t) {
    std::vector<std::vector<float>> inputs;
    inputs.reserve(readers.size());
    for (auto& r : readers) inputs.push_back(r.Read(r.manifest().tensors[t]));
    TensorRecord avg{first.tensors[t].name, first.tensors[t].shape,
                     std::vector<float>(inputs.front().size())};
    for (std::size_t j = 0; j < avg.data.size(); ++j) {
      for (std::size_t k = 0; k < inputs.size(); ++k) column[k] = inputs[k][j];
      avg.data[j] = ElementMean(column);
    }
    out.tensors.push_back(std::move(avg));
  }
  Save(out, out_path);
}

// ---------------------------------------------------------------------------

Store::Store(fs::path dir) : dir_(std::move(dir)) {
  std::error_code ec;
  fs::create_directories(dir_, ec);
  if (ec) throw Error(ErrorCode::kIoError, "cannot create " + dir_.string());
}

fs::path Store::PathFor(const std::string& id) const { return dir_ / (id + ".ckpt"); }

bool Store::Contains(const std::string& id) const { return fs::exists(PathFor(id)); }

void Store::Put(const std::string& id, const Checkpoint& checkpoint) const {
  Save(checkpoint, PathFor(id));
}

Checkpoint Store::Get(const std::string& id) const {
  const fs::path p = PathFor(id);
  if (!fs::exists(p)) {
    throw Error(ErrorCode::kMissingCheckpointFiles, "missing checkpoint " + p.string());
  }
  return Load(p);
}

Trajectory Store::Scan(const std::optional<std::string>& run_id) const {
  std::map<std::int64_t, CheckpointRef> by_step;
  std::set<std::string> seen_runs;
  std::error_code ec;
  for (const auto& entry : fs::directory_iterator(dir_, ec)) {
    if (!entry.is_regular_file() || entry.path().extension() != ".ckpt") continue;
    const Manifest m = ReadManifest(entry.path());
    if (m.initial || m.step == 0) continue;
    if (run_id && m.run_id != *run_id) continue;
    seen_runs.insert(m.run_id);
    const std::string id = entry.path().stem().string();
    auto [it, inserted] = by_step.emplace(m.step, CheckpointRef{m.step, id});
    if (!inserted) {
      throw Error(ErrorCode::kDuplicateOutcome,
                  "two checkpoints for step " + std::to_string(m.step) + ": " +
                      it->second.id + ", " + id);
    }
  }
  if (ec) throw Error(ErrorCode::kIoError, "cannot list " + dir_.string());
  if (by_step.empty()) {
    throw Error(ErrorCode::kMissingCheckpointFiles, "no checkpoints in " + dir_.string());
  }
  if (seen_runs.size() > 1) {
    throw Error(ErrorCode::kMixedRuns, "checkpoints from several runs in " + dir_.string());
  }
  std::vector<CheckpointRef> refs;
  for (auto& [_, ref] : by_step) refs.push_back(std::move(ref));
  return Trajectory(*seen_runs.begin(), std::move(refs));
}

}  // namespace ckstab::ckpt
