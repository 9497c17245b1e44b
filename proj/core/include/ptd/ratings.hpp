#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "ptd/manifest.hpp"

namespace ptd {

/// One human judgment of one image; both scores are on a 1..5 scale.
struct RatingRecord {
  std::string session_id;
  ImageId image_id = 0;
  int quality = 0;
  int representativeness = 0;
  std::optional<std::string> comment;
  std::string timestamp;

  friend bool operator==(const RatingRecord&, const RatingRecord&) = default;
};

std::string to_json_line(const RatingRecord& r);
RatingRecord parse_rating(std::string_view line);

/// Raw log lines in append order, resubmissions included.
std::vector<RatingRecord> read_rating_log(const std::filesystem::path& path);

/// Latest record per (session, image), in order of first submission.
std::vector<RatingRecord> resolve_ratings(std::span<const RatingRecord> log);

}  // namespace ptd
