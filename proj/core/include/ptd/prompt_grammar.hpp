#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace ptd {

using PromptId = std::uint64_t;

/// Descriptor slots in the order they appear in a rendered prompt.
enum class Slot : std::uint8_t { Artistic, Spatial, Enhancer, Color, Texture };

inline constexpr std::array<Slot, 5> kAllSlots = {Slot::Artistic, Slot::Spatial, Slot::Enhancer,
                                                  Slot::Color, Slot::Texture};

std::string_view slot_name(Slot slot);

/// Word lists for each descriptor category plus the render templates.
///
/// Templates use `{artistic}`, `{spatial}`, `{enhancer}`, `{color}` and
/// `{texture}` placeholders. Empty words are allowed in every category
/// except textures.
struct DescriptorTable {
  std::vector<std::string> textures;
  std::vector<std::string> artistic;
  std::vector<std::string> spatial;
  std::vector<std::string> enhancer;
  std::vector<std::string> color;
  std::vector<std::string> templates;

  /// The 56 texture classes and four modifier categories used for the
  /// released dataset, with the single default template.
  static DescriptorTable defaults();

  const std::vector<std::string>& words(Slot slot) const;

  /// Throws ConfigError naming the first offending category.
  void validate() const;

  friend bool operator==(const DescriptorTable&, const DescriptorTable&) = default;
};

inline constexpr std::string_view kDefaultTemplate = "{artistic} {spatial} {enhancer} {color} {texture} texture";

/// Reads a table from a JSON config file (see README for the schema).
DescriptorTable load_descriptor_table(const std::filesystem::path& path);

struct DescriptorTuple {
  std::string texture;
  std::string artistic;
  std::string spatial;
  std::string enhancer;
  std::string color;
  std::size_t template_id = 0;

  const std::string& word(Slot slot) const;
  friend bool operator==(const DescriptorTuple&, const DescriptorTuple&) = default;
};

struct PromptRecord {
  PromptId prompt_id = 0;
  std::string texture_class;
  std::string artistic;
  std::string spatial;
  std::string enhancer;
  std::string color;
  std::size_t template_id = 0;
  std::string text;

  DescriptorTuple tuple() const;
  const std::string& word(Slot slot) const;
  friend bool operator==(const PromptRecord&, const PromptRecord&) = default;
};

/// Substitutes the tuple into a template and collapses runs of whitespace
/// so that empty slots leave no trace.
std::string render_prompt(std::string_view templ, const DescriptorTuple& tuple);

/// Mixed-radix view over the cartesian product of a validated table.
///
/// Prompt ids are the lexicographic rank of
/// (texture, artistic, spatial, enhancer, color, template), where each
/// component is ordered by its position in the table's list.
class PromptGrammar {
 public:
  explicit PromptGrammar(DescriptorTable table);

  const DescriptorTable& table() const noexcept { return table_; }
  std::uint64_t size() const noexcept { return size_; }

  PromptRecord at(PromptId id) const;
  PromptId rank_of(const DescriptorTuple& tuple) const;
  std::vector<PromptRecord> enumerate() const;

 private:
  std::size_t index_of(Slot slot, const std::string& word) const;

  DescriptorTable table_;
  std::uint64_t size_ = 0;
  std::array<std::unordered_map<std::string, std::size_t>, 5> index_;
};

inline std::vector<PromptRecord> enumerate_prompts(const DescriptorTable& table) {
  return PromptGrammar(table).enumerate();
}

/// Prompts whose rendered text collides with another prompt's text.
struct DuplicateText {
  std::string text;
  std::vector<PromptId> prompt_ids;
};

std::vector<DuplicateText> find_duplicate_texts(std::span<const PromptRecord> prompts);

}  // namespace ptd
