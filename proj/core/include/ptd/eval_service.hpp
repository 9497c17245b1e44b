#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ptd/generation.hpp"
#include "ptd/manifest.hpp"
#include "ptd/metrics.hpp"
#include "ptd/ratings.hpp"

namespace ptd {

struct EvalSession {
  std::string session_id;
  std::string participant;  // opaque label, no PII
  std::vector<ImageId> image_ids;
  std::size_t cursor = 0;

  friend bool operator==(const EvalSession&, const EvalSession&) = default;
};

/// Draws n_participants disjoint samples of images_per unflagged images from
/// the pool (taken in ascending image id, so manifest order does not
/// matter), each shuffled independently. Same seed, same sessions.
/// Throws ArgumentError naming the required size when the pool is too small.
std::vector<EvalSession> create_sessions(std::span<const ImageRecord> pool, std::size_t n_participants,
                                         std::size_t images_per, std::uint64_t seed);

void write_sessions(const std::filesystem::path& path, std::span<const EvalSession> sessions);
std::vector<EvalSession> read_sessions(const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Stage aggregation

/// Cumulative buckets: all rated images, then survivors of freq, of
/// freq and patchvar, of all three stages.
enum class Bucket { None, Freq, PatchVar, Clip };
inline constexpr Bucket kBuckets[] = {Bucket::None, Bucket::Freq, Bucket::PatchVar, Bucket::Clip};
std::string_view bucket_name(Bucket b);  // "None", "+Freq", "+PatchVar", "+CLIP"

struct BucketMeans {
  Bucket bucket = Bucket::None;
  std::size_t n = 0;
  std::optional<double> quality;             // empty bucket -> nullopt
  std::optional<double> representativeness;
};

struct StageTable {
  std::vector<BucketMeans> rows;  // in kBuckets order
};

/// (after - before) / before.
double relative_delta(double before, double after);

/// `ratings` should already be resolved (one per session and image).
/// Throws ArgumentError when a rated image is not in the manifest or has no
/// survival flags.
StageTable aggregate_by_stage(std::span<const RatingRecord> ratings, std::span<const ImageRecord> manifest);

/// Text table with per-row deltas against the previous bucket and the
/// overall None -> +CLIP change, e.g. "quality +3.4%".
std::string format_stage_table(const StageTable& table);
std::string stage_table_json(const StageTable& table);

/// Percentage with one decimal and explicit sign: 0.0336 -> "+3.4%".
std::string format_percent(double fraction);

// ---------------------------------------------------------------------------
// Service

struct EvalOptions {
  /// Show raters the full prompt text, or only the texture class.
  bool full_prompt_descriptor = true;
  Clock clock = utc_now;
};

struct Progress {
  std::size_t position = 0;  // 1-based index of the current image; total + 1 when done
  std::size_t total = 0;
};

struct NextImage {
  bool complete = false;
  ImageId image_id = 0;
  std::string image_url;
  std::string descriptor;
  Progress progress;
};

struct RatingAck {
  bool replaced = false;
  Progress progress;
};

/// Session state plus the append-only rating log. Writes go through one
/// mutex; readers take a snapshot of the resolved ratings. A restarted
/// service rebuilds everything from the sessions file and the log.
class EvalService {
 public:
  /// Loads `sessions_file` and replays `rating_log` when they exist.
  EvalService(std::vector<ImageRecord> manifest, std::filesystem::path sessions_file,
              std::filesystem::path rating_log, EvalOptions options = {});

  /// Replaces all sessions and persists them. Refused once ratings exist.
  std::vector<EvalSession> create(std::size_t n_participants, std::size_t images_per, std::uint64_t seed);

  std::vector<EvalSession> sessions() const;
  NextImage next(const std::string& session_id) const;
  /// Throws LookupError for an unknown session, AuthorizationError for an
  /// image outside it and ValidationError for scores outside 1..5.
  RatingAck submit(const std::string& session_id, ImageId image_id, int quality, int representativeness,
                   std::optional<std::string> comment = std::nullopt);

  std::vector<RatingRecord> resolved_ratings() const;
  std::size_t log_size() const;
  StageTable stage_report() const;
  /// Curve over rated images that carry a clip score.
  Curve curve(std::span<const double> quantiles) const;

 private:
  struct Snapshot {
    std::map<std::string, EvalSession> sessions;
    std::vector<RatingRecord> log;
  };

  std::shared_ptr<const Snapshot> snapshot() const;
  static Progress progress_of(const EvalSession& s, std::span<const RatingRecord> resolved);

  std::vector<ImageRecord> manifest_;
  std::map<ImageId, std::size_t> by_id_;
  std::filesystem::path sessions_file_;
  std::filesystem::path rating_log_;
  EvalOptions options_;

  std::mutex write_mutex_;
  mutable std::mutex snapshot_mutex_;
  std::shared_ptr<const Snapshot> state_;
};

}  // namespace ptd
