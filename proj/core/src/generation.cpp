#include "ptd/generation.hpp"

#include <algorithm>
#include <chrono>
#include <cstring>
#include <ctime>
#include <map>
#include <set>
#include <unordered_map>

#include "ptd/errors.hpp"
#include "ptd/image.hpp"
#include "ptd/parallel.hpp"

namespace ptd {

std::string utc_now() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  const auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(now.time_since_epoch()).count() % 1000;
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%S", &tm);
  char out[40];
  std::snprintf(out, sizeof out, "%s.%03dZ", buf, static_cast<int>(ms));
  return out;
}

std::pair<int, int> png_dimensions(std::span<const std::uint8_t> png) {
  static constexpr std::uint8_t kSignature[8] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};
  if (png.size() < 24 || std::memcmp(png.data(), kSignature, 8) != 0 || std::memcmp(png.data() + 12, "IHDR", 4) != 0) {
    throw IoError("backend returned bytes that are not a PNG");
  }
  auto be32 = [&](std::size_t off) {
    return static_cast<int>((std::uint32_t{png[off]} << 24) | (std::uint32_t{png[off + 1]} << 16) |
                            (std::uint32_t{png[off + 2]} << 8) | std::uint32_t{png[off + 3]});
  };
  return {be32(16), be32(20)};
}

PromptOutcome generate_for_prompt(const PromptRecord& prompt, GeneratorBackend& backend,
                                  const GenerationOptions& options) {
  if (options.n_keep < 1) throw ArgumentError("n_keep must be at least 1");
  if (options.max_attempts < 1) throw ArgumentError("max_attempts must be at least 1");
  if (static_cast<std::uint64_t>(options.n_keep) * static_cast<std::uint64_t>(options.max_attempts) >= kSeedStride) {
    throw ArgumentError("n_keep * max_attempts exceeds the per-prompt seed range");
  }

  PromptOutcome outcome;
  const auto n_keep = static_cast<std::size_t>(options.n_keep);
  std::vector<int> attempts(n_keep, 0);
  std::vector<std::optional<ImageRecord>> kept(n_keep);
  std::vector<std::size_t> pending(n_keep);
  for (std::size_t s = 0; s < n_keep; ++s) pending[s] = s;
  std::vector<std::size_t> exhausted;
  std::uint64_t counter = 0;

  while (!pending.empty()) {
    GenerateRequest request{prompt.text, {}, options.width, options.height};
    std::vector<std::pair<std::size_t, Seed>> round;
    for (std::size_t slot : pending) {
      const Seed seed = schedule_seed(prompt.prompt_id, ++counter);
      ++attempts[slot];
      round.emplace_back(slot, seed);
      request.seeds.push_back(seed);
    }
    outcome.attempts += static_cast<int>(round.size());

    std::vector<GeneratedImage> results = backend.generate(request);
    std::unordered_map<Seed, GeneratedImage*> by_seed;
    for (auto& r : results) by_seed.emplace(r.seed, &r);
    if (results.size() != round.size() || by_seed.size() != round.size()) {
      throw TransportError("backend returned " + std::to_string(results.size()) + " results for " +
                           std::to_string(round.size()) + " seeds");
    }

    std::vector<std::size_t> retry;
    for (const auto& [slot, seed] : round) {
      auto it = by_seed.find(seed);
      if (it == by_seed.end()) throw TransportError("backend omitted seed " + std::to_string(seed));
      GeneratedImage& img = *it->second;
      if (img.nsfw_flagged) {
        FlagLedgerEntry entry;
        entry.prompt_id = prompt.prompt_id;
        entry.seed = seed;
        entry.attempt = attempts[slot];
        entry.timestamp = options.clock ? options.clock() : std::string{};
        entry.quarantine_path =
            "quarantine/" + std::to_string(prompt.prompt_id) + "_" + std::to_string(seed) + ".png";
        if (!options.out_dir.empty()) write_file(options.out_dir / entry.quarantine_path, img.png);
        outcome.flags.push_back(std::move(entry));
        if (attempts[slot] >= options.max_attempts) {
          exhausted.push_back(slot);
        } else {
          retry.push_back(slot);
        }
        continue;
      }
      const auto [w, h] = png_dimensions(img.png);
      ImageRecord rec;
      rec.image_id = prompt.prompt_id * n_keep + slot;
      rec.prompt_id = prompt.prompt_id;
      rec.texture_class = prompt.texture_class;
      rec.prompt_text = prompt.text;
      rec.seed = seed;
      rec.attempt = attempts[slot];
      rec.width = w;
      rec.height = h;
      rec.file_path = prompt.texture_class + "/" + std::to_string(rec.image_id) + ".png";
      if (!options.out_dir.empty()) write_file(options.out_dir / *rec.file_path, img.png);
      kept[slot] = std::move(rec);
    }
    pending = std::move(retry);
  }

  const bool complete = exhausted.empty();
  for (auto& k : kept) {
    if (!k) continue;
    k->prompt_complete = complete;
    outcome.images.push_back(std::move(*k));
  }
  if (!complete) {
    outcome.incomplete = IncompletePrompt{prompt.prompt_id, static_cast<int>(outcome.images.size()),
                                          options.n_keep, outcome.attempts};
  }
  return outcome;
}

GenerationRun run_generation(std::span<const PromptRecord> prompts, GeneratorBackend& backend,
                             const GenerationOptions& options) {
  std::vector<PromptOutcome> outcomes(prompts.size());
  parallel_for(prompts.size(), options.workers,
               [&](std::size_t i) { outcomes[i] = generate_for_prompt(prompts[i], backend, options); });
  GenerationRun run;
  for (auto& o : outcomes) {
    run.total_attempts += static_cast<std::size_t>(o.attempts);
    std::move(o.images.begin(), o.images.end(), std::back_inserter(run.manifest));
    std::move(o.flags.begin(), o.flags.end(), std::back_inserter(run.ledger));
    if (o.incomplete) run.incomplete.push_back(*o.incomplete);
  }
  return run;
}

void write_generation_outputs(const DatasetLayout& layout, const GenerationRun& run) {
  write_manifest(layout.manifest(), run.manifest);
  write_ledger(layout.ledger(), run.ledger);
  write_incomplete(layout.incomplete(), run.incomplete);
}

FlagReport flag_rates_by_word(std::span<const ImageRecord> manifest, std::span<const FlagLedgerEntry> ledger,
                              std::span<const PromptRecord> prompts, std::span<const IncompletePrompt> incomplete) {
  FlagReport report;
  std::map<PromptId, std::pair<std::size_t, std::size_t>> per_prompt;  // attempts, flags
  for (const auto& r : manifest) {
    if (!r.flagged) ++per_prompt[r.prompt_id].first;
  }
  for (const auto& p : incomplete) per_prompt.try_emplace(p.prompt_id, 0, 0);
  for (const auto& e : ledger) {
    auto it = per_prompt.find(e.prompt_id);
    if (it == per_prompt.end()) {
      throw ArgumentError("flag ledger references prompt_id " + std::to_string(e.prompt_id) +
                          " that is not in the manifest");
    }
    ++it->second.first;
    ++it->second.second;
  }
  if (per_prompt.empty()) return report;

  std::unordered_map<PromptId, const PromptRecord*> by_id;
  for (const auto& p : prompts) by_id.emplace(p.prompt_id, &p);

  std::map<std::pair<Slot, std::string>, WordFlagStats> stats;
  for (const auto& [pid, counts] : per_prompt) {
    auto it = by_id.find(pid);
    if (it == by_id.end()) throw LookupError("no prompt record for prompt_id " + std::to_string(pid));
    const auto [attempts, flags] = counts;
    report.total_attempts += attempts;
    report.total_flags += flags;
    for (Slot slot : kAllSlots) {
      const std::string& word = it->second->word(slot);
      if (word.empty()) continue;
      auto& s = stats[{slot, word}];
      s.category = std::string(slot == Slot::Texture ? "texture" : slot_name(slot));
      s.word = word;
      s.attempts += attempts;
      s.flagged_attempts += flags;
      s.prompts += 1;
      s.flagged_prompts += flags > 0 ? 1 : 0;
    }
  }
  for (auto& [_, s] : stats) {
    s.image_flag_ratio = s.attempts ? static_cast<double>(s.flagged_attempts) / static_cast<double>(s.attempts) : 0.0;
    s.prompt_flag_ratio = s.prompts ? static_cast<double>(s.flagged_prompts) / static_cast<double>(s.prompts) : 0.0;
    report.words.push_back(std::move(s));
  }
  std::stable_sort(report.words.begin(), report.words.end(), [](const WordFlagStats& a, const WordFlagStats& b) {
    if (a.prompt_flag_ratio != b.prompt_flag_ratio) return a.prompt_flag_ratio > b.prompt_flag_ratio;
    if (a.image_flag_ratio != b.image_flag_ratio) return a.image_flag_ratio > b.image_flag_ratio;
    return a.word < b.word;
  });
  report.overall_image_flag_ratio =
      report.total_attempts ? static_cast<double>(report.total_flags) / static_cast<double>(report.total_attempts)
                            : 0.0;
  return report;
}

}  // namespace ptd
