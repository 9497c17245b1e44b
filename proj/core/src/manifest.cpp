#include "ptd/manifest.hpp"

#include <fstream>

#include <nlohmann/json.hpp>

#include "ptd/errors.hpp"

namespace ptd {

using nlohmann::json;

std::string_view stage_name(Stage stage) {
  switch (stage) {
    case Stage::Freq: return "freq";
    case Stage::PatchVar: return "patchvar";
    case Stage::Clip: return "clip";
  }
  return "?";
}

std::string_view score_key(Stage stage) {
  switch (stage) {
    case Stage::Freq: return "f_c";
    case Stage::PatchVar: return "patch_var";
    case Stage::Clip: return "clip";
  }
  return "?";
}

Stage parse_stage(std::string_view name) {
  for (Stage s : kStages) {
    if (stage_name(s) == name) return s;
  }
  throw ArgumentError("unknown refinement stage '" + std::string(name) + "'");
}

std::optional<double>& StageScores::operator[](Stage s) {
  return s == Stage::Freq ? f_c : s == Stage::PatchVar ? patch_var : clip;
}
const std::optional<double>& StageScores::operator[](Stage s) const {
  return s == Stage::Freq ? f_c : s == Stage::PatchVar ? patch_var : clip;
}
std::optional<bool>& Survival::operator[](Stage s) {
  return s == Stage::Freq ? freq : s == Stage::PatchVar ? patchvar : clip;
}
const std::optional<bool>& Survival::operator[](Stage s) const {
  return s == Stage::Freq ? freq : s == Stage::PatchVar ? patchvar : clip;
}

bool ImageRecord::survived_through(Stage stage) const {
  if (flagged) return false;
  for (Stage s : kStages) {
    if (survives[s] != true) return false;
    if (s == stage) break;
  }
  return true;
}

bool ImageRecord::live_before(Stage stage) const {
  if (flagged) return false;
  for (Stage s : kStages) {
    if (s == stage) return true;
    if (survives[s] != true) return false;
  }
  return true;
}

namespace {

json parse_line(std::string_view line, const char* what) {
  try {
    return json::parse(line);
  } catch (const json::exception& e) {
    throw IoError(std::string("malformed ") + what + " line: " + e.what());
  }
}

template <typename Fn>
auto guarded(const char* what, Fn&& fn) {
  try {
    return fn();
  } catch (const json::exception& e) {
    throw IoError(std::string("malformed ") + what + " record: " + e.what());
  }
}

template <typename T, typename Parse>
std::vector<T> read_lines(const std::filesystem::path& path, Parse parse) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<T> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      out.push_back(parse(line));
    } catch (const IoError& e) {
      throw IoError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

template <typename T>
void write_lines(const std::filesystem::path& path, std::span<const T> items) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  for (const auto& item : items) out << to_json_line(item) << '\n';
  if (!out) throw IoError("short write to " + path.string());
}

}  // namespace

std::string to_json_line(const ImageRecord& r) {
  json j;
  j["image_id"] = r.image_id;
  j["prompt_id"] = r.prompt_id;
  j["texture_class"] = r.texture_class;
  j["prompt_text"] = r.prompt_text;
  j["seed"] = r.seed;
  j["attempt"] = r.attempt;
  j["flagged"] = r.flagged;
  j["file_path"] = r.file_path ? json(*r.file_path) : json(nullptr);
  j["width"] = r.width;
  j["height"] = r.height;
  j["prompt_complete"] = r.prompt_complete;
  json scores = json::object();
  json survives = json::object();
  for (Stage s : kStages) {
    if (r.stage_scores[s]) scores[std::string(score_key(s))] = *r.stage_scores[s];
    if (r.survives[s]) survives[std::string(stage_name(s))] = *r.survives[s];
  }
  j["stage_scores"] = scores;
  j["survives"] = survives;
  if (r.excluded) {
    j["excluded"] = {{"stage", stage_name(r.excluded->stage)}, {"reason", r.excluded->reason}};
  }
  return j.dump();
}

ImageRecord parse_image_record(std::string_view line) {
  const json j = parse_line(line, "manifest");
  return guarded("manifest", [&] {
    ImageRecord r;
    r.image_id = j.at("image_id").get<ImageId>();
    r.prompt_id = j.at("prompt_id").get<PromptId>();
    r.texture_class = j.at("texture_class").get<std::string>();
    r.prompt_text = j.value("prompt_text", std::string{});
    r.seed = j.at("seed").get<Seed>();
    r.attempt = j.at("attempt").get<int>();
    r.flagged = j.at("flagged").get<bool>();
    if (j.contains("file_path") && !j["file_path"].is_null()) r.file_path = j["file_path"].get<std::string>();
    r.width = j.value("width", 0);
    r.height = j.value("height", 0);
    r.prompt_complete = j.value("prompt_complete", true);
    if (j.contains("stage_scores")) {
      const auto& sc = j["stage_scores"];
      for (Stage s : kStages) {
        const std::string key(score_key(s));
        if (sc.contains(key)) r.stage_scores[s] = sc[key].get<double>();
      }
    }
    if (j.contains("survives")) {
      const auto& sv = j["survives"];
      for (Stage s : kStages) {
        const std::string key(stage_name(s));
        if (sv.contains(key)) r.survives[s] = sv[key].get<bool>();
      }
    }
    if (j.contains("excluded")) {
      r.excluded = Exclusion{parse_stage(j["excluded"].at("stage").get<std::string>()),
                             j["excluded"].at("reason").get<std::string>()};
    }
    if (r.attempt < 1) throw IoError("attempt must be >= 1");
    return r;
  });
}

std::string to_json_line(const FlagLedgerEntry& e) {
  json j;
  j["prompt_id"] = e.prompt_id;
  j["seed"] = e.seed;
  j["attempt"] = e.attempt;
  j["timestamp"] = e.timestamp;
  j["quarantine_path"] = e.quarantine_path;
  return j.dump();
}

FlagLedgerEntry parse_ledger_entry(std::string_view line) {
  const json j = parse_line(line, "ledger");
  return guarded("ledger", [&] {
    return FlagLedgerEntry{j.at("prompt_id").get<PromptId>(), j.at("seed").get<Seed>(), j.at("attempt").get<int>(),
                           j.value("timestamp", std::string{}), j.value("quarantine_path", std::string{})};
  });
}

std::string to_json_line(const IncompletePrompt& p) {
  json j;
  j["prompt_id"] = p.prompt_id;
  j["kept"] = p.kept;
  j["needed"] = p.needed;
  j["attempts"] = p.attempts;
  return j.dump();
}

IncompletePrompt parse_incomplete(std::string_view line) {
  const json j = parse_line(line, "incomplete");
  return guarded("incomplete", [&] {
    return IncompletePrompt{j.at("prompt_id").get<PromptId>(), j.at("kept").get<int>(), j.at("needed").get<int>(),
                            j.at("attempts").get<int>()};
  });
}

std::string to_json_line(const PromptRecord& p) {
  json j;
  j["prompt_id"] = p.prompt_id;
  j["slots"] = {{"artistic", p.artistic},
                {"spatial", p.spatial},
                {"enhancer", p.enhancer},
                {"color", p.color},
                {"texture", p.texture_class}};
  j["template_id"] = p.template_id;
  j["text"] = p.text;
  return j.dump();
}

PromptRecord parse_prompt_record(std::string_view line) {
  const json j = parse_line(line, "prompt");
  return guarded("prompt", [&] {
    PromptRecord p;
    p.prompt_id = j.at("prompt_id").get<PromptId>();
    const auto& s = j.at("slots");
    p.artistic = s.at("artistic").get<std::string>();
    p.spatial = s.at("spatial").get<std::string>();
    p.enhancer = s.at("enhancer").get<std::string>();
    p.color = s.at("color").get<std::string>();
    p.texture_class = s.at("texture").get<std::string>();
    p.template_id = j.at("template_id").get<std::size_t>();
    p.text = j.at("text").get<std::string>();
    return p;
  });
}

std::vector<ImageRecord> read_manifest(const std::filesystem::path& path) {
  return read_lines<ImageRecord>(path, parse_image_record);
}
std::vector<FlagLedgerEntry> read_ledger(const std::filesystem::path& path) {
  return read_lines<FlagLedgerEntry>(path, parse_ledger_entry);
}
std::vector<IncompletePrompt> read_incomplete(const std::filesystem::path& path) {
  return read_lines<IncompletePrompt>(path, parse_incomplete);
}
std::vector<PromptRecord> read_prompts(const std::filesystem::path& path) {
  return read_lines<PromptRecord>(path, parse_prompt_record);
}

void write_manifest(const std::filesystem::path& path, std::span<const ImageRecord> records) {
  write_lines(path, records);
}
void write_ledger(const std::filesystem::path& path, std::span<const FlagLedgerEntry> entries) {
  write_lines(path, entries);
}
void write_incomplete(const std::filesystem::path& path, std::span<const IncompletePrompt> prompts) {
  write_lines(path, prompts);
}
void write_prompts(const std::filesystem::path& path, std::span<const PromptRecord> prompts) {
  write_lines(path, prompts);
}

}  // namespace ptd
