#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ptd/manifest.hpp"
#include "ptd/prompt_grammar.hpp"

namespace ptd {

struct GenerateRequest {
  std::string prompt_text;
  std::vector<Seed> seeds;
  int width = 512;
  int height = 512;
};

/// Backends must return the real pixels even for flagged outputs.
struct GeneratedImage {
  Seed seed = 0;
  std::vector<std::uint8_t> png;
  bool nsfw_flagged = false;
};

/// Text-to-image service. Implementations must be safe to call from
/// several threads at once.
class GeneratorBackend {
 public:
  virtual ~GeneratorBackend() = default;
  /// One result per requested seed, in any order. Throws TransportError
  /// when the service stays unreachable.
  virtual std::vector<GeneratedImage> generate(const GenerateRequest& request) = 0;
};

/// Seeds are prompt_id * kSeedStride + n for the n-th attempt (n >= 1)
/// made on that prompt, so reruns reproduce every image.
inline constexpr Seed kSeedStride = 1'000'003;

inline Seed schedule_seed(PromptId prompt, std::uint64_t attempt_counter) {
  return prompt * kSeedStride + attempt_counter;
}

/// Returns a UTC ISO-8601 timestamp for ledger entries.
using Clock = std::function<std::string()>;
std::string utc_now();

struct GenerationOptions {
  int n_keep = 5;
  int max_attempts = 25;  // per kept image
  int width = 512;
  int height = 512;
  unsigned workers = 1;
  /// Dataset root; when empty nothing is written to disk.
  std::filesystem::path out_dir;
  Clock clock = utc_now;
};

struct PromptOutcome {
  std::vector<ImageRecord> images;
  std::vector<FlagLedgerEntry> flags;
  std::optional<IncompletePrompt> incomplete;
  int attempts = 0;
};

/// Generates until n_keep unflagged images exist or some slot uses up
/// max_attempts. Flagged pixels go to quarantine/, kept ones to
/// <texture_class>/<image_id>.png. Image ids are prompt_id * n_keep + slot.
PromptOutcome generate_for_prompt(const PromptRecord& prompt, GeneratorBackend& backend,
                                  const GenerationOptions& options);

struct GenerationRun {
  std::vector<ImageRecord> manifest;
  std::vector<FlagLedgerEntry> ledger;
  std::vector<IncompletePrompt> incomplete;
  std::size_t total_attempts = 0;
};

/// Prompt-parallel driver. Output order follows `prompts`, independent of
/// the worker count.
GenerationRun run_generation(std::span<const PromptRecord> prompts, GeneratorBackend& backend,
                             const GenerationOptions& options);

/// Writes manifest.jsonl, flag_ledger.jsonl and incomplete.jsonl under the root.
void write_generation_outputs(const DatasetLayout& layout, const GenerationRun& run);

/// Reads width and height from a PNG IHDR chunk without decoding pixels.
std::pair<int, int> png_dimensions(std::span<const std::uint8_t> png);

// ---------------------------------------------------------------------------
// Flag analytics

struct WordFlagStats {
  std::string category;
  std::string word;
  std::size_t attempts = 0;
  std::size_t flagged_attempts = 0;
  std::size_t prompts = 0;
  std::size_t flagged_prompts = 0;
  double image_flag_ratio = 0.0;
  double prompt_flag_ratio = 0.0;
};

struct FlagReport {
  std::vector<WordFlagStats> words;  // descending prompt_flag_ratio
  std::size_t total_attempts = 0;
  std::size_t total_flags = 0;
  double overall_image_flag_ratio = 0.0;
};

/// Per descriptor word (empty slots skipped): share of attempts flagged and
/// share of prompts with at least one flag. A prompt's attempts are its kept
/// images plus its ledger entries.
FlagReport flag_rates_by_word(std::span<const ImageRecord> manifest, std::span<const FlagLedgerEntry> ledger,
                              std::span<const PromptRecord> prompts,
                              std::span<const IncompletePrompt> incomplete = {});

}  // namespace ptd
