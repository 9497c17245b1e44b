#include "ptd/prompt_grammar.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <map>
#include <sstream>
#include <unordered_set>

#include <nlohmann/json.hpp>

#include "ptd/errors.hpp"

namespace ptd {

std::string_view slot_name(Slot slot) {
  switch (slot) {
    case Slot::Artistic: return "artistic";
    case Slot::Spatial: return "spatial";
    case Slot::Enhancer: return "enhancer";
    case Slot::Color: return "color";
    case Slot::Texture: return "textures";
  }
  return "?";
}

DescriptorTable DescriptorTable::defaults() {
  DescriptorTable t;
  t.textures = {"banded",     "blotchy",     "braided",     "bubbly",     "bumpy",        "checkered",
                "cobwebbed",  "cracked",     "crosshatched", "crystalline", "dotted",      "fibrous",
                "flecked",    "freckled",    "frilly",      "gauzy",      "grid",         "grooved",
                "honeycombed", "interlaced", "knitted",     "lacelike",   "lined",        "marbled",
                "matted",     "meshed",      "paisley",     "perforated", "pitted",       "pleated",
                "polka-dotted", "porous",    "potholed",    "scaly",      "smeared",      "spiraled",
                "sprinkled",  "stained",     "stratified",  "striped",    "studded",      "swirly",
                "veined",     "waffled",     "woven",       "wrinkled",   "zigzagged",    "flaky",
                "chapped",    "hairy",       "leathery",    "feathered",  "spiky",        "fluffy",
                "ribbed",     "wavy"};
  t.artistic = {"", "impressionist", "photorealistic", "minimal"};
  t.spatial = {"", "randomized", "symmetrical"};
  t.enhancer = {"", "gradient", "vivid", "muted", "iridescent", "neon", "faded", "watercolor", "earthy"};
  t.color = {"", "red", "green", "blue", "yellow", "black-and-white", "pastel", "neutral"};
  t.templates = {std::string(kDefaultTemplate)};
  return t;
}

const std::vector<std::string>& DescriptorTable::words(Slot slot) const {
  switch (slot) {
    case Slot::Artistic: return artistic;
    case Slot::Spatial: return spatial;
    case Slot::Enhancer: return enhancer;
    case Slot::Color: return color;
    case Slot::Texture: return textures;
  }
  return textures;
}

namespace {

void validate_list(std::string_view category, const std::vector<std::string>& list, bool allow_empty) {
  if (list.empty()) {
    throw ConfigError("descriptor category '" + std::string(category) + "' is empty");
  }
  std::unordered_set<std::string> seen;
  for (const auto& w : list) {
    if (w.empty() && !allow_empty) {
      throw ConfigError("descriptor category '" + std::string(category) + "' may not contain an empty entry");
    }
    const bool padded = !w.empty() && (std::isspace(static_cast<unsigned char>(w.front())) ||
                                       std::isspace(static_cast<unsigned char>(w.back())));
    if (padded || w.find("  ") != std::string::npos || w.find_first_of("\t\r\n{}") != std::string::npos) {
      throw ConfigError("descriptor category '" + std::string(category) + "' word '" + w +
                        "' has stray whitespace or braces");
    }
    if (!seen.insert(w).second) {
      throw ConfigError("descriptor category '" + std::string(category) + "' has duplicate entry '" + w + "'");
    }
  }
}

constexpr std::array<std::pair<std::string_view, Slot>, 5> kPlaceholders = {{
    {"{artistic}", Slot::Artistic},
    {"{spatial}", Slot::Spatial},
    {"{enhancer}", Slot::Enhancer},
    {"{color}", Slot::Color},
    {"{texture}", Slot::Texture},
}};

}  // namespace

void DescriptorTable::validate() const {
  validate_list("textures", textures, false);
  validate_list("artistic", artistic, true);
  validate_list("spatial", spatial, true);
  validate_list("enhancer", enhancer, true);
  validate_list("color", color, true);
  if (templates.empty()) throw ConfigError("descriptor category 'templates' is empty");
  std::unordered_set<std::string> seen;
  for (const auto& t : templates) {
    if (t.find("{texture}") == std::string::npos) {
      throw ConfigError("template '" + t + "' has no {texture} placeholder");
    }
    // Reject unknown placeholders.
    for (std::size_t pos = t.find('{'); pos != std::string::npos; pos = t.find('{', pos + 1)) {
      const bool known = std::any_of(kPlaceholders.begin(), kPlaceholders.end(),
                                     [&](const auto& p) { return t.compare(pos, p.first.size(), p.first) == 0; });
      if (!known) throw ConfigError("template '" + t + "' has an unknown placeholder");
    }
    if (!seen.insert(t).second) throw ConfigError("descriptor category 'templates' has duplicate entry '" + t + "'");
  }
}

DescriptorTable load_descriptor_table(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open descriptor table " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("descriptor table " + path.string() + ": " + e.what());
  }
  auto list = [&](const char* key, bool required) {
    std::vector<std::string> out;
    if (!j.contains(key)) {
      if (required) throw ConfigError(std::string("descriptor category '") + key + "' is missing");
      return out;
    }
    for (const auto& w : j.at(key)) {
      if (w.is_null()) {
        out.emplace_back();
      } else if (w.is_string()) {
        out.push_back(w.get<std::string>());
      } else {
        throw ConfigError(std::string("descriptor category '") + key + "' must list strings");
      }
    }
    return out;
  };
  DescriptorTable t;
  t.textures = list("textures", true);
  t.artistic = list("artistic", true);
  t.spatial = list("spatial", true);
  t.enhancer = list("enhancer", true);
  t.color = list("color", true);
  t.templates = list("templates", false);
  if (t.templates.empty()) t.templates = {std::string(kDefaultTemplate)};
  t.validate();
  return t;
}

const std::string& DescriptorTuple::word(Slot slot) const {
  switch (slot) {
    case Slot::Artistic: return artistic;
    case Slot::Spatial: return spatial;
    case Slot::Enhancer: return enhancer;
    case Slot::Color: return color;
    case Slot::Texture: return texture;
  }
  return texture;
}

DescriptorTuple PromptRecord::tuple() const {
  return DescriptorTuple{texture_class, artistic, spatial, enhancer, color, template_id};
}

const std::string& PromptRecord::word(Slot slot) const {
  switch (slot) {
    case Slot::Artistic: return artistic;
    case Slot::Spatial: return spatial;
    case Slot::Enhancer: return enhancer;
    case Slot::Color: return color;
    case Slot::Texture: return texture_class;
  }
  return texture_class;
}

std::string render_prompt(std::string_view templ, const DescriptorTuple& tuple) {
  std::string expanded;
  expanded.reserve(templ.size() + 64);
  std::size_t i = 0;
  while (i < templ.size()) {
    bool substituted = false;
    if (templ[i] == '{') {
      for (const auto& [name, slot] : kPlaceholders) {
        if (templ.substr(i, name.size()) == name) {
          expanded += tuple.word(slot);
          i += name.size();
          substituted = true;
          break;
        }
      }
    }
    if (!substituted) expanded += templ[i++];
  }
  std::istringstream words(expanded);
  std::string out;
  for (std::string w; words >> w;) {
    if (!out.empty()) out += ' ';
    out += w;
  }
  return out;
}

PromptGrammar::PromptGrammar(DescriptorTable table) : table_(std::move(table)) {
  table_.validate();
  size_ = table_.templates.size();
  for (Slot s : kAllSlots) {
    const auto& words = table_.words(s);
    size_ *= words.size();
    auto& idx = index_[static_cast<std::size_t>(s)];
    for (std::size_t i = 0; i < words.size(); ++i) idx.emplace(words[i], i);
  }
}

std::size_t PromptGrammar::index_of(Slot slot, const std::string& word) const {
  const auto& idx = index_[static_cast<std::size_t>(slot)];
  auto it = idx.find(word);
  if (it == idx.end()) {
    throw LookupError("unknown word '" + word + "' in category '" + std::string(slot_name(slot)) + "'");
  }
  return it->second;
}

// Digit order, most significant first: texture, artistic, spatial, enhancer, color, template.
PromptId PromptGrammar::rank_of(const DescriptorTuple& tuple) const {
  if (tuple.template_id >= table_.templates.size()) {
    throw LookupError("unknown template id " + std::to_string(tuple.template_id));
  }
  PromptId rank = index_of(Slot::Texture, tuple.texture);
  rank = rank * table_.artistic.size() + index_of(Slot::Artistic, tuple.artistic);
  rank = rank * table_.spatial.size() + index_of(Slot::Spatial, tuple.spatial);
  rank = rank * table_.enhancer.size() + index_of(Slot::Enhancer, tuple.enhancer);
  rank = rank * table_.color.size() + index_of(Slot::Color, tuple.color);
  rank = rank * table_.templates.size() + tuple.template_id;
  return rank;
}

PromptRecord PromptGrammar::at(PromptId id) const {
  if (id >= size_) throw LookupError("prompt id " + std::to_string(id) + " out of range");
  PromptRecord r;
  r.prompt_id = id;
  PromptId rest = id;
  auto digit = [&rest](std::size_t radix) {
    const std::size_t d = rest % radix;
    rest /= radix;
    return d;
  };
  r.template_id = digit(table_.templates.size());
  r.color = table_.color[digit(table_.color.size())];
  r.enhancer = table_.enhancer[digit(table_.enhancer.size())];
  r.spatial = table_.spatial[digit(table_.spatial.size())];
  r.artistic = table_.artistic[digit(table_.artistic.size())];
  r.texture_class = table_.textures[digit(table_.textures.size())];
  r.text = render_prompt(table_.templates[r.template_id], r.tuple());
  return r;
}

std::vector<PromptRecord> PromptGrammar::enumerate() const {
  std::vector<PromptRecord> out;
  out.reserve(size_);
  for (PromptId id = 0; id < size_; ++id) out.push_back(at(id));
  return out;
}

std::vector<DuplicateText> find_duplicate_texts(std::span<const PromptRecord> prompts) {
  std::map<std::string, std::vector<PromptId>> by_text;
  for (const auto& p : prompts) by_text[p.text].push_back(p.prompt_id);
  std::vector<DuplicateText> out;
  for (auto& [text, ids] : by_text) {
    if (ids.size() > 1) out.push_back({text, std::move(ids)});
  }
  return out;
}

}  // namespace ptd
