#include <gtest/gtest.h>

#include <fstream>
#include <set>

#include "ptd/errors.hpp"
#include "ptd/prompt_grammar.hpp"
#include "scratch.hpp"

using namespace ptd;

namespace {

// Second template used only to exercise multi-template tables.
DescriptorTable two_template_table() {
  auto t = DescriptorTable::defaults();
  t.templates.push_back("a {texture} texture, {artistic} {spatial} {enhancer} {color}");
  return t;
}

}  // namespace

TEST(PromptGrammar, DefaultCategorySizes) {
  const auto t = DescriptorTable::defaults();
  EXPECT_EQ(t.textures.size(), 56u);
  EXPECT_EQ(t.artistic.size(), 4u);
  EXPECT_EQ(t.spatial.size(), 3u);
  EXPECT_EQ(t.enhancer.size(), 9u);
  EXPECT_EQ(t.color.size(), 8u);
  EXPECT_NO_THROW(t.validate());
}

TEST(PromptGrammar, ProductCounts) {
  EXPECT_EQ(PromptGrammar(DescriptorTable::defaults()).size(), 48384u);
  EXPECT_EQ(PromptGrammar(two_template_table()).size(), 96768u);
}

TEST(PromptGrammar, RenderCollapsesEmptySlots) {
  DescriptorTuple t{"woven", "", "", "", "blue", 0};
  EXPECT_EQ(render_prompt(kDefaultTemplate, t), "blue woven texture");
  DescriptorTuple full{"woven", "minimal", "symmetrical", "vivid", "red", 0};
  EXPECT_EQ(render_prompt(kDefaultTemplate, full), "minimal symmetrical vivid red woven texture");
}

TEST(PromptGrammar, FirstAndLastIds) {
  PromptGrammar g(DescriptorTable::defaults());
  const auto first = g.at(0);
  EXPECT_EQ(first.texture_class, "banded");
  EXPECT_EQ(first.text, "banded texture");
  const auto last = g.at(g.size() - 1);
  EXPECT_EQ(last.texture_class, "wavy");
  EXPECT_EQ(last.color, "neutral");
  EXPECT_EQ(last.enhancer, "earthy");
  EXPECT_THROW(g.at(g.size()), LookupError);
}

TEST(PromptGrammar, RankInvertsAtForEveryId) {
  PromptGrammar g(two_template_table());
  for (PromptId id = 0; id < g.size(); id += 7) {
    const auto r = g.at(id);
    ASSERT_EQ(g.rank_of(r.tuple()), id);
  }
}

TEST(PromptGrammar, EnumerateIsDenseAndUnique) {
  const auto prompts = enumerate_prompts(two_template_table());
  ASSERT_EQ(prompts.size(), 96768u);
  std::set<std::string> texts;
  for (std::size_t i = 0; i < prompts.size(); ++i) {
    ASSERT_EQ(prompts[i].prompt_id, i);
    texts.insert(prompts[i].text);
  }
  EXPECT_EQ(texts.size(), prompts.size());
  EXPECT_TRUE(find_duplicate_texts(prompts).empty());
}

TEST(PromptGrammar, TextureIsMostSignificantDigit) {
  PromptGrammar g(DescriptorTable::defaults());
  const std::uint64_t per_texture = 4 * 3 * 9 * 8;
  EXPECT_EQ(g.at(per_texture - 1).texture_class, "banded");
  EXPECT_EQ(g.at(per_texture).texture_class, "blotchy");
}

TEST(PromptGrammar, UnknownWordNamesCategory) {
  PromptGrammar g(DescriptorTable::defaults());
  DescriptorTuple t{"woven", "", "", "sparkly", "", 0};
  try {
    g.rank_of(t);
    FAIL() << "expected LookupError";
  } catch (const LookupError& e) {
    EXPECT_NE(std::string(e.what()).find("sparkly"), std::string::npos);
    EXPECT_NE(std::string(e.what()).find("enhancer"), std::string::npos);
  }
}

TEST(PromptGrammar, ValidationRejectsBadTables) {
  auto t = DescriptorTable::defaults();
  t.textures.push_back("");
  EXPECT_THROW(t.validate(), ConfigError);

  t = DescriptorTable::defaults();
  t.color.push_back("red");
  EXPECT_THROW(t.validate(), ConfigError);

  t = DescriptorTable::defaults();
  t.enhancer.push_back(" padded");
  EXPECT_THROW(t.validate(), ConfigError);

  t = DescriptorTable::defaults();
  t.templates = {"{artistic} pattern"};
  EXPECT_THROW(t.validate(), ConfigError);

  t = DescriptorTable::defaults();
  t.templates = {"{texture} {mood}"};
  EXPECT_THROW(t.validate(), ConfigError);

  t = DescriptorTable::defaults();
  t.textures.push_back("elephant skin");
  EXPECT_NO_THROW(t.validate());
}

TEST(PromptGrammar, DuplicateTextsDetected) {
  DescriptorTable t;
  t.textures = {"woven"};
  t.artistic = {"", "blue"};
  t.spatial = {""};
  t.enhancer = {""};
  t.color = {"", "blue"};
  t.templates = {"{artistic} {color} {texture}"};
  const auto prompts = enumerate_prompts(t);
  const auto dups = find_duplicate_texts(prompts);
  ASSERT_EQ(dups.size(), 1u);
  EXPECT_EQ(dups[0].text, "blue woven");
  EXPECT_EQ(dups[0].prompt_ids.size(), 2u);
}

TEST(PromptGrammar, LoadTableFromJson) {
  testing_support::ScratchDir dir;
  const auto path = dir / "table.json";
  std::ofstream(path) << R"({"textures":["woven","knitted"],"artistic":[null,"minimal"],"spatial":[""],)"
                         R"("enhancer":[""],"color":["","red"]})";
  const auto t = load_descriptor_table(path);
  EXPECT_EQ(t.artistic[0], "");
  EXPECT_EQ(t.templates.size(), 1u);
  EXPECT_EQ(PromptGrammar(t).size(), 8u);

  std::ofstream(dir / "bad.json") << R"({"textures":["woven"]})";
  EXPECT_THROW(load_descriptor_table(dir / "bad.json"), ConfigError);
}
