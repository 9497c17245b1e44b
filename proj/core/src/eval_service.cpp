#include "ptd/eval_service.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <set>
#include <sstream>
#include <unordered_set>

#include <nlohmann/json.hpp>

#include "ptd/errors.hpp"

namespace ptd {

using nlohmann::json;

// ---------------------------------------------------------------------------
// Rating log

std::string to_json_line(const RatingRecord& r) {
  json j = {{"session_id", r.session_id},
            {"image_id", r.image_id},
            {"quality", r.quality},
            {"representativeness", r.representativeness}};
  j["comment"] = r.comment ? json(*r.comment) : json(nullptr);
  j["timestamp"] = r.timestamp;
  return j.dump();
}

RatingRecord parse_rating(std::string_view line) {
  json j;
  try {
    j = json::parse(line);
  } catch (const json::exception& e) {
    throw IoError(std::string("malformed rating line: ") + e.what());
  }
  RatingRecord r;
  try {
    r.session_id = j.at("session_id").get<std::string>();
    r.image_id = j.at("image_id").get<ImageId>();
    r.quality = j.at("quality").get<int>();
    r.representativeness = j.at("representativeness").get<int>();
    if (j.contains("comment") && !j["comment"].is_null()) r.comment = j["comment"].get<std::string>();
    r.timestamp = j.value("timestamp", std::string{});
  } catch (const json::exception& e) {
    throw IoError(std::string("malformed rating record: ") + e.what());
  }
  if (r.quality < 1 || r.quality > 5 || r.representativeness < 1 || r.representativeness > 5) {
    throw IoError("rating log holds a score outside 1..5 for image " + std::to_string(r.image_id));
  }
  return r;
}

std::vector<RatingRecord> read_rating_log(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<RatingRecord> out;
  std::size_t lineno = 0;
  for (std::string line; std::getline(in, line);) {
    ++lineno;
    if (line.empty()) continue;
    try {
      out.push_back(parse_rating(line));
    } catch (const IoError& e) {
      throw IoError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

std::vector<RatingRecord> resolve_ratings(std::span<const RatingRecord> log) {
  std::map<std::pair<std::string, ImageId>, std::size_t> slot;
  std::vector<RatingRecord> out;
  for (const auto& r : log) {
    auto [it, inserted] = slot.try_emplace({r.session_id, r.image_id}, out.size());
    if (inserted) {
      out.push_back(r);
    } else {
      out[it->second] = r;
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Sessions

namespace {

// Unbiased draw in [0, n). std::uniform_int_distribution is not specified
// bit-for-bit, so sessions would differ between standard libraries.
std::uint64_t bounded(std::mt19937_64& rng, std::uint64_t n) {
  const std::uint64_t threshold = (0 - n) % n;
  for (;;) {
    const std::uint64_t x = rng();
    if (x >= threshold) return x % n;
  }
}

template <typename T>
void shuffle(std::vector<T>& v, std::mt19937_64& rng) {
  for (std::size_t i = v.size(); i > 1; --i) {
    std::swap(v[i - 1], v[bounded(rng, i)]);
  }
}

}  // namespace

std::vector<EvalSession> create_sessions(std::span<const ImageRecord> pool, std::size_t n_participants,
                                         std::size_t images_per, std::uint64_t seed) {
  std::vector<ImageId> ids;
  for (const auto& r : pool) {
    if (!r.flagged) ids.push_back(r.image_id);
  }
  std::sort(ids.begin(), ids.end());
  ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
  const std::size_t need = n_participants * images_per;
  if (ids.size() < need) {
    throw ArgumentError("pool has " + std::to_string(ids.size()) + " images; " + std::to_string(n_participants) +
                        " sessions of " + std::to_string(images_per) + " need " + std::to_string(need));
  }
  std::mt19937_64 rng(seed);
  shuffle(ids, rng);
  std::vector<EvalSession> sessions;
  for (std::size_t p = 0; p < n_participants; ++p) {
    EvalSession s;
    char label[32];
    std::snprintf(label, sizeof label, "s%02zu", p + 1);
    s.session_id = label;
    s.participant = "P" + std::to_string(p + 1);
    s.image_ids.assign(ids.begin() + static_cast<std::ptrdiff_t>(p * images_per),
                       ids.begin() + static_cast<std::ptrdiff_t>((p + 1) * images_per));
    std::mt19937_64 order(seed ^ (0x9e3779b97f4a7c15ULL * (p + 1)));
    shuffle(s.image_ids, order);
    sessions.push_back(std::move(s));
  }
  return sessions;
}

void write_sessions(const std::filesystem::path& path, std::span<const EvalSession> sessions) {
  json arr = json::array();
  for (const auto& s : sessions) {
    arr.push_back({{"session_id", s.session_id}, {"participant", s.participant}, {"image_ids", s.image_ids}});
  }
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << arr.dump(2) << '\n';
}

std::vector<EvalSession> read_sessions(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<EvalSession> out;
  try {
    const json arr = json::parse(in);
    for (const auto& j : arr) {
      EvalSession s;
      s.session_id = j.at("session_id").get<std::string>();
      s.participant = j.at("participant").get<std::string>();
      s.image_ids = j.at("image_ids").get<std::vector<ImageId>>();
      out.push_back(std::move(s));
    }
  } catch (const json::exception& e) {
    throw IoError("malformed sessions file " + path.string() + ": " + e.what());
  }
  return out;
}

// ---------------------------------------------------------------------------
// Aggregation

std::string_view bucket_name(Bucket b) {
  switch (b) {
    case Bucket::None:
      return "None";
    case Bucket::Freq:
      return "+Freq";
    case Bucket::PatchVar:
      return "+PatchVar";
    case Bucket::Clip:
      return "+CLIP";
  }
  return "?";
}

double relative_delta(double before, double after) { return (after - before) / before; }

std::string format_percent(double fraction) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%+.1f%%", fraction * 100.0);
  return buf;
}

namespace {

bool in_bucket(const ImageRecord& r, Bucket b) {
  switch (b) {
    case Bucket::None:
      return true;
    case Bucket::Freq:
      return r.survived_through(Stage::Freq);
    case Bucket::PatchVar:
      return r.survived_through(Stage::PatchVar);
    case Bucket::Clip:
      return r.survived_through(Stage::Clip);
  }
  return false;
}

}  // namespace

StageTable aggregate_by_stage(std::span<const RatingRecord> ratings, std::span<const ImageRecord> manifest) {
  std::unordered_map<ImageId, const ImageRecord*> by_id;
  for (const auto& r : manifest) by_id.emplace(r.image_id, &r);

  StageTable table;
  for (Bucket b : kBuckets) {
    double q = 0.0, rep = 0.0;
    std::size_t n = 0;
    for (const auto& rating : ratings) {
      auto it = by_id.find(rating.image_id);
      if (it == by_id.end()) {
        throw ArgumentError("rated image " + std::to_string(rating.image_id) + " is not in the manifest");
      }
      if (!it->second->flagged && !it->second->survives.freq) {
        throw ArgumentError("rated image " + std::to_string(rating.image_id) + " has no survival flags");
      }
      if (!in_bucket(*it->second, b)) continue;
      q += rating.quality;
      rep += rating.representativeness;
      ++n;
    }
    BucketMeans row{b, n, std::nullopt, std::nullopt};
    if (n > 0) {
      row.quality = q / static_cast<double>(n);
      row.representativeness = rep / static_cast<double>(n);
    }
    table.rows.push_back(row);
  }
  return table;
}

std::string format_stage_table(const StageTable& table) {
  std::ostringstream out;
  char line[160];
  std::snprintf(line, sizeof line, "%-10s %6s %9s %9s %9s %9s\n", "stage", "n", "quality", "d_qual", "repr",
                "d_repr");
  out << line;
  const BucketMeans* prev = nullptr;
  for (const auto& row : table.rows) {
    std::string q = "empty", r = "empty", dq = "", dr = "";
    if (row.quality) {
      char b[32];
      std::snprintf(b, sizeof b, "%.4f", *row.quality);
      q = b;
      std::snprintf(b, sizeof b, "%.4f", *row.representativeness);
      r = b;
      if (prev && prev->quality) {
        dq = format_percent(relative_delta(*prev->quality, *row.quality));
        dr = format_percent(relative_delta(*prev->representativeness, *row.representativeness));
      }
    }
    std::snprintf(line, sizeof line, "%-10s %6zu %9s %9s %9s %9s\n", std::string(bucket_name(row.bucket)).c_str(),
                  row.n, q.c_str(), dq.c_str(), r.c_str(), dr.c_str());
    out << line;
    prev = &row;
  }
  if (!table.rows.empty() && table.rows.front().quality && table.rows.back().quality) {
    const auto& a = table.rows.front();
    const auto& b = table.rows.back();
    out << "overall " << bucket_name(a.bucket) << " -> " << bucket_name(b.bucket) << ": quality "
        << format_percent(relative_delta(*a.quality, *b.quality)) << ", representativeness "
        << format_percent(relative_delta(*a.representativeness, *b.representativeness)) << '\n';
  }
  return out.str();
}

std::string stage_table_json(const StageTable& table) {
  json rows = json::array();
  const BucketMeans* prev = nullptr;
  for (const auto& row : table.rows) {
    json j = {{"stage", bucket_name(row.bucket)}, {"n", row.n}};
    j["quality"] = row.quality ? json(*row.quality) : json(nullptr);
    j["representativeness"] = row.representativeness ? json(*row.representativeness) : json(nullptr);
    j["empty"] = row.n == 0;
    if (prev && prev->quality && row.quality) {
      j["delta_quality"] = relative_delta(*prev->quality, *row.quality);
      j["delta_representativeness"] = relative_delta(*prev->representativeness, *row.representativeness);
    }
    rows.push_back(std::move(j));
    prev = &row;
  }
  json out = {{"stages", rows}};
  if (!table.rows.empty() && table.rows.front().quality && table.rows.back().quality) {
    const auto& a = table.rows.front();
    const auto& b = table.rows.back();
    out["overall"] = {{"quality", relative_delta(*a.quality, *b.quality)},
                      {"representativeness", relative_delta(*a.representativeness, *b.representativeness)}};
  }
  return out.dump();
}

// ---------------------------------------------------------------------------
// Service

EvalService::EvalService(std::vector<ImageRecord> manifest, std::filesystem::path sessions_file,
                         std::filesystem::path rating_log, EvalOptions options)
    : manifest_(std::move(manifest)),
      sessions_file_(std::move(sessions_file)),
      rating_log_(std::move(rating_log)),
      options_(std::move(options)) {
  for (std::size_t i = 0; i < manifest_.size(); ++i) by_id_.emplace(manifest_[i].image_id, i);
  auto state = std::make_shared<Snapshot>();
  if (!sessions_file_.empty() && std::filesystem::exists(sessions_file_)) {
    for (auto& s : read_sessions(sessions_file_)) {
      for (ImageId id : s.image_ids) {
        if (!by_id_.contains(id)) {
          throw ArgumentError("session " + s.session_id + " references unknown image " + std::to_string(id));
        }
      }
      state->sessions.emplace(s.session_id, std::move(s));
    }
  }
  if (std::filesystem::exists(rating_log_)) state->log = read_rating_log(rating_log_);
  for (auto& [id, s] : state->sessions) s.cursor = progress_of(s, state->log).position - 1;
  state_ = std::move(state);
}

std::shared_ptr<const EvalService::Snapshot> EvalService::snapshot() const {
  std::lock_guard lock(snapshot_mutex_);
  return state_;
}

Progress EvalService::progress_of(const EvalSession& s, std::span<const RatingRecord> log) {
  std::unordered_set<ImageId> rated;
  for (const auto& r : log) {
    if (r.session_id == s.session_id) rated.insert(r.image_id);
  }
  std::size_t i = 0;
  while (i < s.image_ids.size() && rated.contains(s.image_ids[i])) ++i;
  return {i + 1, s.image_ids.size()};
}

std::vector<EvalSession> EvalService::create(std::size_t n_participants, std::size_t images_per,
                                             std::uint64_t seed) {
  std::lock_guard write(write_mutex_);
  auto current = snapshot();
  if (!current->log.empty()) throw ArgumentError("ratings already recorded; refusing to reassign sessions");
  auto sessions = create_sessions(manifest_, n_participants, images_per, seed);
  if (!sessions_file_.empty()) write_sessions(sessions_file_, sessions);
  auto next = std::make_shared<Snapshot>();
  for (const auto& s : sessions) next->sessions.emplace(s.session_id, s);
  std::lock_guard lock(snapshot_mutex_);
  state_ = std::move(next);
  return sessions;
}

std::vector<EvalSession> EvalService::sessions() const {
  std::vector<EvalSession> out;
  for (const auto& [_, s] : snapshot()->sessions) out.push_back(s);
  return out;
}

NextImage EvalService::next(const std::string& session_id) const {
  const auto state = snapshot();
  auto it = state->sessions.find(session_id);
  if (it == state->sessions.end()) throw LookupError("unknown session '" + session_id + "'");
  const EvalSession& s = it->second;
  NextImage out;
  out.progress = {s.cursor + 1, s.image_ids.size()};
  if (s.cursor >= s.image_ids.size()) {
    out.complete = true;
    return out;
  }
  out.image_id = s.image_ids[s.cursor];
  const ImageRecord& rec = manifest_[by_id_.at(out.image_id)];
  out.image_url = rec.file_path ? "/images/" + *rec.file_path : std::string{};
  out.descriptor = options_.full_prompt_descriptor && !rec.prompt_text.empty() ? rec.prompt_text : rec.texture_class;
  return out;
}

RatingAck EvalService::submit(const std::string& session_id, ImageId image_id, int quality, int representativeness,
                              std::optional<std::string> comment) {
  std::lock_guard write(write_mutex_);
  const auto current = snapshot();
  auto it = current->sessions.find(session_id);
  if (it == current->sessions.end()) throw LookupError("unknown session '" + session_id + "'");
  const auto& ids = it->second.image_ids;
  if (std::find(ids.begin(), ids.end(), image_id) == ids.end()) {
    throw AuthorizationError("image " + std::to_string(image_id) + " is not assigned to session " + session_id);
  }
  if (quality < 1 || quality > 5) throw ValidationError("quality must be 1..5, got " + std::to_string(quality));
  if (representativeness < 1 || representativeness > 5) {
    throw ValidationError("representativeness must be 1..5, got " + std::to_string(representativeness));
  }

  RatingRecord rec{session_id, image_id, quality, representativeness, std::move(comment),
                   options_.clock ? options_.clock() : std::string{}};
  {
    if (rating_log_.has_parent_path()) std::filesystem::create_directories(rating_log_.parent_path());
    std::ofstream out(rating_log_, std::ios::binary | std::ios::app);
    out << to_json_line(rec) << '\n';
    out.flush();
    if (!out) throw IoError("cannot append to " + rating_log_.string());
  }

  RatingAck ack;
  for (const auto& r : current->log) {
    if (r.session_id == session_id && r.image_id == image_id) ack.replaced = true;
  }
  auto next = std::make_shared<Snapshot>(*current);
  next->log.push_back(std::move(rec));
  EvalSession& s = next->sessions.at(session_id);
  ack.progress = progress_of(s, next->log);
  s.cursor = ack.progress.position - 1;
  std::lock_guard lock(snapshot_mutex_);
  state_ = std::move(next);
  return ack;
}

std::vector<RatingRecord> EvalService::resolved_ratings() const { return resolve_ratings(snapshot()->log); }

std::size_t EvalService::log_size() const { return snapshot()->log.size(); }

StageTable EvalService::stage_report() const { return aggregate_by_stage(resolved_ratings(), manifest_); }

Curve EvalService::curve(std::span<const double> quantiles) const {
  std::unordered_map<ImageId, double> clip;
  for (const auto& r : manifest_) {
    if (r.stage_scores.clip) clip.emplace(r.image_id, *r.stage_scores.clip);
  }
  std::vector<RatingRecord> scored;
  for (auto& r : resolved_ratings()) {
    if (clip.contains(r.image_id)) scored.push_back(std::move(r));
  }
  return human_vs_clip_curve(scored, clip, quantiles);
}

}  // namespace ptd
