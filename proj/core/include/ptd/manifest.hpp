#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "ptd/prompt_grammar.hpp"

namespace ptd {

using ImageId = std::uint64_t;
using Seed = std::uint64_t;

/// The three refinement filters, in the order they are applied.
enum class Stage : std::uint8_t { Freq, PatchVar, Clip };

inline constexpr std::array<Stage, 3> kStages = {Stage::Freq, Stage::PatchVar, Stage::Clip};

std::string_view stage_name(Stage stage);   // "freq", "patchvar", "clip"
std::string_view score_key(Stage stage);    // "f_c", "patch_var", "clip"
Stage parse_stage(std::string_view name);

struct StageScores {
  std::optional<double> f_c;
  std::optional<double> patch_var;
  std::optional<double> clip;

  std::optional<double>& operator[](Stage s);
  const std::optional<double>& operator[](Stage s) const;
  friend bool operator==(const StageScores&, const StageScores&) = default;
};

struct Survival {
  std::optional<bool> freq;
  std::optional<bool> patchvar;
  std::optional<bool> clip;

  std::optional<bool>& operator[](Stage s);
  const std::optional<bool>& operator[](Stage s) const;
  friend bool operator==(const Survival&, const Survival&) = default;
};

struct Exclusion {
  Stage stage = Stage::Freq;
  std::string reason;
  friend bool operator==(const Exclusion&, const Exclusion&) = default;
};

/// One generated image and everything the pipeline learns about it.
struct ImageRecord {
  ImageId image_id = 0;
  PromptId prompt_id = 0;
  std::string texture_class;
  std::string prompt_text;
  Seed seed = 0;
  int attempt = 1;
  bool flagged = false;
  std::optional<std::string> file_path;  // relative to the dataset root
  int width = 0;
  int height = 0;
  bool prompt_complete = true;
  StageScores stage_scores;
  Survival survives;
  std::optional<Exclusion> excluded;

  /// True when the record passed every stage up to and including `stage`.
  bool survived_through(Stage stage) const;
  /// True when the record is still a candidate going into `stage`.
  bool live_before(Stage stage) const;

  friend bool operator==(const ImageRecord&, const ImageRecord&) = default;
};

/// One flagged generation attempt; pixels live only in the quarantine directory.
struct FlagLedgerEntry {
  PromptId prompt_id = 0;
  Seed seed = 0;
  int attempt = 1;
  std::string timestamp;
  std::string quarantine_path;
  friend bool operator==(const FlagLedgerEntry&, const FlagLedgerEntry&) = default;
};

/// A prompt that could not reach its kept-image quota within max_attempts.
struct IncompletePrompt {
  PromptId prompt_id = 0;
  int kept = 0;
  int needed = 0;
  int attempts = 0;
  friend bool operator==(const IncompletePrompt&, const IncompletePrompt&) = default;
};

std::string to_json_line(const ImageRecord& r);
std::string to_json_line(const FlagLedgerEntry& e);
std::string to_json_line(const IncompletePrompt& p);
std::string to_json_line(const PromptRecord& p);

ImageRecord parse_image_record(std::string_view line);
FlagLedgerEntry parse_ledger_entry(std::string_view line);
IncompletePrompt parse_incomplete(std::string_view line);
PromptRecord parse_prompt_record(std::string_view line);

std::vector<ImageRecord> read_manifest(const std::filesystem::path& path);
std::vector<FlagLedgerEntry> read_ledger(const std::filesystem::path& path);
std::vector<IncompletePrompt> read_incomplete(const std::filesystem::path& path);
std::vector<PromptRecord> read_prompts(const std::filesystem::path& path);

/// Writers emit one JSON object per line, LF terminated, truncating the file.
void write_manifest(const std::filesystem::path& path, std::span<const ImageRecord> records);
void write_ledger(const std::filesystem::path& path, std::span<const FlagLedgerEntry> entries);
void write_incomplete(const std::filesystem::path& path, std::span<const IncompletePrompt> prompts);
void write_prompts(const std::filesystem::path& path, std::span<const PromptRecord> prompts);

/// Canonical file names inside a dataset root.
struct DatasetLayout {
  std::filesystem::path root;

  std::filesystem::path manifest() const { return root / "manifest.jsonl"; }
  std::filesystem::path ledger() const { return root / "flag_ledger.jsonl"; }
  std::filesystem::path incomplete() const { return root / "incomplete.jsonl"; }
  std::filesystem::path prompts() const { return root / "prompts.jsonl"; }
  std::filesystem::path features_dir() const { return root / "features"; }
  std::filesystem::path quarantine_dir() const { return root / "quarantine"; }
};

}  // namespace ptd
