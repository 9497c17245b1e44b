#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "ptd/errors.hpp"

namespace ptd {

/// Which model output a feature file holds. Values are the on-disk kind codes.
enum class FeatureKind : std::uint32_t {
  ClipImage = 1,
  ClipText = 2,
  InceptionPool = 3,
  InceptionLogits = 4,
  ClassifierProbs = 5,
};

std::string_view feature_kind_name(FeatureKind kind);
FeatureKind parse_feature_kind(std::string_view name);
/// ClipText rows are keyed by prompt id, every other kind by image id.
bool keyed_by_prompt(FeatureKind kind);

/// N x D float32 matrix plus the id of each row.
class FeatureMatrix {
 public:
  FeatureMatrix() = default;
  FeatureMatrix(FeatureKind kind, std::size_t dim);
  /// Throws StoreError when `values` is not ids.size() * dim long or ids repeat.
  FeatureMatrix(FeatureKind kind, std::size_t dim, std::vector<std::uint64_t> ids, std::vector<float> values);

  FeatureKind kind() const noexcept { return kind_; }
  std::size_t rows() const noexcept { return ids_.size(); }
  std::size_t dim() const noexcept { return dim_; }
  const std::vector<float>& values() const noexcept { return values_; }
  const std::vector<std::uint64_t>& ids() const noexcept { return ids_; }

  std::span<const float> row(std::size_t r) const { return {values_.data() + r * dim_, dim_}; }
  bool contains(std::uint64_t id) const { return index_.contains(id); }
  std::size_t row_of(std::uint64_t id) const;  // LookupError when absent
  std::span<const float> row_for(std::uint64_t id) const { return row(row_of(id)); }

  void append(std::uint64_t id, std::span<const float> values);

  friend bool operator==(const FeatureMatrix& a, const FeatureMatrix& b) {
    return a.kind_ == b.kind_ && a.dim_ == b.dim_ && a.ids_ == b.ids_ && a.values_ == b.values_;
  }

 private:
  FeatureKind kind_ = FeatureKind::ClipImage;
  std::size_t dim_ = 0;
  std::vector<std::uint64_t> ids_;
  std::vector<float> values_;
  std::unordered_map<std::uint64_t, std::size_t> index_;
};

/// Failure categories for feature files; each maps to a distinct loader check.
enum class StoreErrorCode {
  Io,
  BadMagic,
  UnsupportedVersion,
  UnknownKind,
  HeaderChecksum,
  Truncated,
  TrailingBytes,
  NonFinite,
  RaggedRows,
  DuplicateId,
  IndexMismatch,
};

std::string_view store_error_name(StoreErrorCode code);

class StoreError : public Error {
 public:
  StoreError(StoreErrorCode code, const std::string& detail)
      : Error(std::string(store_error_name(code)) + ": " + detail), code_(code), detail_(detail) {}
  StoreErrorCode code() const noexcept { return code_; }
  const std::string& detail() const noexcept { return detail_; }

 private:
  StoreErrorCode code_;
  std::string detail_;
};

/// PTDF layout, all integers little-endian:
///   0  char[4]  "PTDF"
///   4  u32      format version (1)
///   8  u32      kind code
///   12 u64      n_rows
///   20 u64      dim
///   28 u32      CRC-32 of bytes 0..27
///   32 f32[n_rows * dim] row-major payload
inline constexpr std::uint32_t kFeatureFormatVersion = 1;
inline constexpr std::size_t kFeatureHeaderSize = 32;

/// Companion index path: `x.ptdf` -> `x.index.jsonl`.
std::filesystem::path index_path_for(const std::filesystem::path& feature_file);

std::vector<std::uint8_t> encode_features(const FeatureMatrix& m);
FeatureMatrix decode_features(std::span<const std::uint8_t> bytes, std::vector<std::uint64_t> ids);

/// Row-of-vectors entry point; rejects ragged rows and duplicate ids.
void write_features(const std::filesystem::path& file, FeatureKind kind, std::span<const std::vector<float>> rows,
                    std::span<const std::uint64_t> ids);
void write_features(const std::filesystem::path& file, const FeatureMatrix& m);
FeatureMatrix load_features(const std::filesystem::path& file);

/// Result of a dataset consistency pass; ok() is false on any problem.
struct VerifyReport {
  std::vector<std::string> problems;
  std::size_t images_checked = 0;
  std::size_t feature_files_checked = 0;
  bool ok() const noexcept { return problems.empty(); }
};

/// Checks manifest ids, image files, the flag ledger and every feature file
/// under `root/features` against each other.
VerifyReport verify_dataset(const std::filesystem::path& root);

}  // namespace ptd
