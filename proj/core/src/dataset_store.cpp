#include "ptd/dataset_store.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <set>
#include <unordered_set>

#include <nlohmann/json.hpp>
#include <zlib.h>

#include "ptd/image.hpp"
#include "ptd/manifest.hpp"

namespace ptd {

namespace {

constexpr std::array<std::pair<FeatureKind, std::string_view>, 5> kKindNames = {{
    {FeatureKind::ClipImage, "clip_image"},
    {FeatureKind::ClipText, "clip_text"},
    {FeatureKind::InceptionPool, "inception_pool"},
    {FeatureKind::InceptionLogits, "inception_logits"},
    {FeatureKind::ClassifierProbs, "classifier_probs"},
}};

bool valid_kind_code(std::uint32_t code) {
  for (const auto& [k, _] : kKindNames) {
    if (static_cast<std::uint32_t>(k) == code) return true;
  }
  return false;
}

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}
void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}
std::uint32_t get_u32(const std::uint8_t* p) {
  std::uint32_t v = 0;
  for (int i = 3; i >= 0; --i) v = (v << 8) | p[i];
  return v;
}
std::uint64_t get_u64(const std::uint8_t* p) {
  std::uint64_t v = 0;
  for (int i = 7; i >= 0; --i) v = (v << 8) | p[i];
  return v;
}

std::uint32_t header_crc(const std::uint8_t* header) {
  return static_cast<std::uint32_t>(crc32(0L, header, 28));
}

}  // namespace

std::string_view feature_kind_name(FeatureKind kind) {
  for (const auto& [k, name] : kKindNames) {
    if (k == kind) return name;
  }
  return "?";
}

FeatureKind parse_feature_kind(std::string_view name) {
  for (const auto& [k, n] : kKindNames) {
    if (n == name) return k;
  }
  throw ArgumentError("unknown feature kind '" + std::string(name) + "'");
}

bool keyed_by_prompt(FeatureKind kind) { return kind == FeatureKind::ClipText; }

std::string_view store_error_name(StoreErrorCode code) {
  switch (code) {
    case StoreErrorCode::Io: return "io error";
    case StoreErrorCode::BadMagic: return "bad magic";
    case StoreErrorCode::UnsupportedVersion: return "unsupported version";
    case StoreErrorCode::UnknownKind: return "unknown kind";
    case StoreErrorCode::HeaderChecksum: return "header checksum mismatch";
    case StoreErrorCode::Truncated: return "truncated";
    case StoreErrorCode::TrailingBytes: return "trailing bytes";
    case StoreErrorCode::NonFinite: return "non-finite value";
    case StoreErrorCode::RaggedRows: return "ragged rows";
    case StoreErrorCode::DuplicateId: return "duplicate id";
    case StoreErrorCode::IndexMismatch: return "index mismatch";
  }
  return "?";
}

FeatureMatrix::FeatureMatrix(FeatureKind kind, std::size_t dim) : kind_(kind), dim_(dim) {}

FeatureMatrix::FeatureMatrix(FeatureKind kind, std::size_t dim, std::vector<std::uint64_t> ids,
                             std::vector<float> values)
    : kind_(kind), dim_(dim), ids_(std::move(ids)), values_(std::move(values)) {
  if (values_.size() != ids_.size() * dim_) {
    throw StoreError(StoreErrorCode::RaggedRows, "payload holds " + std::to_string(values_.size()) +
                                                     " values, expected " + std::to_string(ids_.size() * dim_));
  }
  index_.reserve(ids_.size());
  for (std::size_t r = 0; r < ids_.size(); ++r) {
    if (!index_.emplace(ids_[r], r).second) {
      throw StoreError(StoreErrorCode::DuplicateId, "id " + std::to_string(ids_[r]) + " appears twice");
    }
  }
}

std::size_t FeatureMatrix::row_of(std::uint64_t id) const {
  auto it = index_.find(id);
  if (it == index_.end()) {
    throw LookupError("no " + std::string(feature_kind_name(kind_)) + " row for id " + std::to_string(id));
  }
  return it->second;
}

void FeatureMatrix::append(std::uint64_t id, std::span<const float> values) {
  if (values.size() != dim_) {
    throw StoreError(StoreErrorCode::RaggedRows, "row for id " + std::to_string(id) + " has " +
                                                     std::to_string(values.size()) + " values, expected " +
                                                     std::to_string(dim_));
  }
  if (!index_.emplace(id, ids_.size()).second) {
    throw StoreError(StoreErrorCode::DuplicateId, "id " + std::to_string(id) + " appears twice");
  }
  ids_.push_back(id);
  values_.insert(values_.end(), values.begin(), values.end());
}

std::filesystem::path index_path_for(const std::filesystem::path& feature_file) {
  auto p = feature_file;
  p.replace_extension(".index.jsonl");
  return p;
}

std::vector<std::uint8_t> encode_features(const FeatureMatrix& m) {
  std::vector<std::uint8_t> out;
  out.reserve(kFeatureHeaderSize + m.values().size() * 4);
  out.insert(out.end(), {'P', 'T', 'D', 'F'});
  put_u32(out, kFeatureFormatVersion);
  put_u32(out, static_cast<std::uint32_t>(m.kind()));
  put_u64(out, m.rows());
  put_u64(out, m.dim());
  put_u32(out, header_crc(out.data()));
  for (float v : m.values()) put_u32(out, std::bit_cast<std::uint32_t>(v));
  return out;
}

FeatureMatrix decode_features(std::span<const std::uint8_t> bytes, std::vector<std::uint64_t> ids) {
  if (bytes.size() < 4 || std::memcmp(bytes.data(), "PTDF", 4) != 0) {
    throw StoreError(StoreErrorCode::BadMagic, "file does not start with PTDF");
  }
  if (bytes.size() < kFeatureHeaderSize) {
    throw StoreError(StoreErrorCode::Truncated, "header is " + std::to_string(bytes.size()) + " bytes");
  }
  const std::uint8_t* h = bytes.data();
  if (get_u32(h + 28) != header_crc(h)) {
    throw StoreError(StoreErrorCode::HeaderChecksum, "header fields do not match their checksum");
  }
  const std::uint32_t version = get_u32(h + 4);
  if (version != kFeatureFormatVersion) {
    throw StoreError(StoreErrorCode::UnsupportedVersion, "version " + std::to_string(version));
  }
  const std::uint32_t kind = get_u32(h + 8);
  if (!valid_kind_code(kind)) throw StoreError(StoreErrorCode::UnknownKind, "kind code " + std::to_string(kind));
  const std::uint64_t n_rows = get_u64(h + 12);
  const std::uint64_t dim = get_u64(h + 20);
  const std::uint64_t payload = bytes.size() - kFeatureHeaderSize;
  if (dim != 0 && n_rows > payload / 4 / dim) {  // also rules out n_rows * dim overflow
    throw StoreError(StoreErrorCode::Truncated, "header claims " + std::to_string(n_rows) + " rows");
  }
  const std::uint64_t expected = n_rows * dim * 4;
  if (payload < expected) {
    throw StoreError(StoreErrorCode::Truncated,
                     "payload is " + std::to_string(payload) + " bytes, expected " + std::to_string(expected));
  }
  if (payload > expected) {
    throw StoreError(StoreErrorCode::TrailingBytes, std::to_string(payload - expected) + " extra bytes");
  }
  if (ids.size() != n_rows) {
    throw StoreError(StoreErrorCode::IndexMismatch,
                     "index has " + std::to_string(ids.size()) + " ids for " + std::to_string(n_rows) + " rows");
  }
  std::vector<float> values(n_rows * dim);
  const std::uint8_t* p = h + kFeatureHeaderSize;
  for (std::size_t i = 0; i < values.size(); ++i, p += 4) {
    values[i] = std::bit_cast<float>(get_u32(p));
    if (!std::isfinite(values[i])) {
      throw StoreError(StoreErrorCode::NonFinite,
                       "row " + std::to_string(i / dim) + " column " + std::to_string(i % dim));
    }
  }
  return FeatureMatrix(static_cast<FeatureKind>(kind), dim, std::move(ids), std::move(values));
}

void write_features(const std::filesystem::path& file, const FeatureMatrix& m) {
  for (float v : m.values()) {
    if (!std::isfinite(v)) throw StoreError(StoreErrorCode::NonFinite, "refusing to write " + file.string());
  }
  write_file(file, encode_features(m));
  std::ofstream idx(index_path_for(file), std::ios::binary | std::ios::trunc);
  if (!idx) throw StoreError(StoreErrorCode::Io, "cannot write " + index_path_for(file).string());
  for (std::size_t r = 0; r < m.rows(); ++r) {
    idx << nlohmann::json{{"id", m.ids()[r]}, {"row", r}}.dump() << '\n';
  }
  if (!idx) throw StoreError(StoreErrorCode::Io, "short write to " + index_path_for(file).string());
}

void write_features(const std::filesystem::path& file, FeatureKind kind, std::span<const std::vector<float>> rows,
                    std::span<const std::uint64_t> ids) {
  if (rows.size() != ids.size()) {
    throw StoreError(StoreErrorCode::IndexMismatch,
                     std::to_string(rows.size()) + " rows but " + std::to_string(ids.size()) + " ids");
  }
  const std::size_t dim = rows.empty() ? 0 : rows.front().size();
  FeatureMatrix m(kind, dim);
  for (std::size_t r = 0; r < rows.size(); ++r) m.append(ids[r], rows[r]);
  write_features(file, m);
}

FeatureMatrix load_features(const std::filesystem::path& file) {
  std::vector<std::uint8_t> bytes;
  try {
    bytes = read_file(file);
  } catch (const IoError& e) {
    throw StoreError(StoreErrorCode::Io, e.what());
  }
  std::vector<std::uint64_t> ids;
  const auto idx_path = index_path_for(file);
  std::ifstream idx(idx_path);
  if (!idx) throw StoreError(StoreErrorCode::Io, "missing index " + idx_path.string());
  std::string line;
  while (std::getline(idx, line)) {
    if (line.empty()) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      const auto row = j.at("row").get<std::size_t>();
      if (row != ids.size()) {
        throw StoreError(StoreErrorCode::IndexMismatch, "index rows must be listed in order; got row " +
                                                            std::to_string(row) + " at line " +
                                                            std::to_string(ids.size() + 1));
      }
      ids.push_back(j.at("id").get<std::uint64_t>());
    } catch (const nlohmann::json::exception& e) {
      throw StoreError(StoreErrorCode::IndexMismatch, idx_path.string() + ": " + e.what());
    }
  }
  try {
    return decode_features(bytes, std::move(ids));
  } catch (const StoreError& e) {
    throw StoreError(e.code(), file.string() + ": " + e.detail());
  }
}

VerifyReport verify_dataset(const std::filesystem::path& root) {
  VerifyReport report;
  const DatasetLayout layout{root};
  auto problem = [&](std::string msg) { report.problems.push_back(std::move(msg)); };

  std::vector<ImageRecord> manifest;
  try {
    manifest = read_manifest(layout.manifest());
  } catch (const Error& e) {
    problem(e.what());
    return report;
  }
  report.images_checked = manifest.size();

  std::unordered_set<ImageId> image_ids;
  std::set<PromptId> prompt_ids;
  std::set<std::tuple<PromptId, Seed, int>> provenance;
  for (const auto& r : manifest) {
    if (!image_ids.insert(r.image_id).second) problem("duplicate image_id " + std::to_string(r.image_id));
    if (!provenance.emplace(r.prompt_id, r.seed, r.attempt).second) {
      problem("duplicate (prompt_id, seed, attempt) for image " + std::to_string(r.image_id));
    }
    prompt_ids.insert(r.prompt_id);
    if (r.flagged) {
      if (r.file_path) problem("flagged image " + std::to_string(r.image_id) + " carries a file_path");
      continue;
    }
    if (!r.file_path) {
      problem("image " + std::to_string(r.image_id) + " has no file_path");
    } else if (!std::filesystem::exists(root / *r.file_path)) {
      problem("image " + std::to_string(r.image_id) + " file missing: " + *r.file_path);
    }
  }

  std::set<PromptId> known_prompts = prompt_ids;
  if (std::filesystem::exists(layout.incomplete())) {
    try {
      for (const auto& p : read_incomplete(layout.incomplete())) known_prompts.insert(p.prompt_id);
    } catch (const Error& e) {
      problem(e.what());
    }
  }
  if (std::filesystem::exists(layout.ledger())) {
    try {
      for (const auto& e : read_ledger(layout.ledger())) {
        if (!known_prompts.contains(e.prompt_id)) {
          problem("flag ledger references unknown prompt_id " + std::to_string(e.prompt_id));
        }
      }
    } catch (const Error& e) {
      problem(e.what());
    }
  }

  const auto features_dir = layout.features_dir();
  if (std::filesystem::is_directory(features_dir)) {
    std::vector<std::filesystem::path> files;
    for (const auto& entry : std::filesystem::directory_iterator(features_dir)) {
      if (entry.path().extension() == ".ptdf") files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end());
    for (const auto& file : files) {
      ++report.feature_files_checked;
      FeatureMatrix m;
      try {
        m = load_features(file);
      } catch (const Error& e) {
        problem(e.what());
        continue;
      }
      const std::string name = file.filename().string();
      std::unordered_set<std::uint64_t> expected;
      if (keyed_by_prompt(m.kind())) {
        expected.insert(prompt_ids.begin(), prompt_ids.end());
      } else {
        for (const auto& r : manifest) {
          if (!r.flagged) expected.insert(r.image_id);
        }
      }
      for (std::uint64_t id : m.ids()) {
        if (!expected.contains(id)) problem(name + ": orphan id " + std::to_string(id));
      }
      std::vector<std::uint64_t> missing;
      for (std::uint64_t id : expected) {
        if (!m.contains(id)) missing.push_back(id);
      }
      std::sort(missing.begin(), missing.end());
      for (std::uint64_t id : missing) problem(name + ": no row for id " + std::to_string(id));
    }
  }
  return report;
}

}  // namespace ptd
