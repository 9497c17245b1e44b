#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <random>
#include <set>

#include "oracles.hpp"
#include "ptd/errors.hpp"
#include "ptd/refinement.hpp"

using namespace ptd;

namespace {

GrayImage random_image(int w, int h, unsigned seed) {
  std::mt19937 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 255.0);
  GrayImage img(w, h);
  for (double& v : img.pixels) v = u(rng);
  return img;
}

ImageRecord rec(ImageId id, const std::string& cls, double fc, double pv, double clip) {
  ImageRecord r;
  r.image_id = id;
  r.prompt_id = id;
  r.texture_class = cls;
  r.stage_scores.f_c = fc;
  r.stage_scores.patch_var = pv;
  r.stage_scores.clip = clip;
  return r;
}

// Independent cascade: per class, per stage, filter-sort-truncate.
std::set<ImageId> naive_cascade(const std::vector<ImageRecord>& records, double f) {
  std::map<std::string, std::vector<const ImageRecord*>> alive;
  for (const auto& r : records) alive[r.texture_class].push_back(&r);
  std::set<ImageId> out;
  for (auto& [_, members] : alive) {
    for (Stage s : kStages) {
      std::vector<const ImageRecord*> next(members);
      std::sort(next.begin(), next.end(), [s](auto* a, auto* b) {
        if (*a->stage_scores[s] != *b->stage_scores[s]) return *a->stage_scores[s] > *b->stage_scores[s];
        return a->image_id < b->image_id;
      });
      std::size_t keep = 0;
      while (static_cast<double>(keep) < f * static_cast<double>(next.size()) - 1e-9) ++keep;
      next.resize(keep);
      members = next;
    }
    for (auto* r : members) out.insert(r->image_id);
  }
  return out;
}

}  // namespace

TEST(PatchVariance, ConstantIsZero) { EXPECT_EQ(patch_variance(GrayImage(512, 512, 77.0)), 0.0); }

TEST(PatchVariance, AlternatingPatchesGiveTwoPointVariance) {
  GrayImage img(512, 512, 0.0);
  for (int y = 0; y < 512; ++y)
    for (int x = 0; x < 512; ++x) img(x, y) = ((x / 50 + y / 50) % 2 == 0) ? 255.0 : 0.0;
  EXPECT_EQ(patch_variance(img), 16256.25);
}

TEST(PatchVariance, MatchesDoubleLoopOracle) {
  for (unsigned seed = 0; seed < 5; ++seed) {
    const auto img = random_image(200 + static_cast<int>(seed) * 17, 230, seed);
    const double want = oracle::patch_variance(img, 50);
    EXPECT_NEAR(patch_variance(img), want, 1e-9 * std::max(1.0, want));
  }
}

TEST(PatchVariance, InvariantUnderPatchPermutation) {
  const auto img = random_image(200, 200, 11);
  GrayImage shuffled(200, 200);
  const int perm[16] = {5, 2, 15, 0, 9, 12, 1, 7, 3, 14, 11, 6, 8, 4, 13, 10};
  for (int p = 0; p < 16; ++p) {
    const int sx = (perm[p] % 4) * 50, sy = (perm[p] / 4) * 50;
    const int dx = (p % 4) * 50, dy = (p / 4) * 50;
    for (int y = 0; y < 50; ++y)
      for (int x = 0; x < 50; ++x) shuffled(dx + x, dy + y) = img(sx + x, sy + y);
  }
  EXPECT_NEAR(patch_variance(shuffled), patch_variance(img), 1e-9);
}

TEST(PatchVariance, TooSmallIsScoreError) { EXPECT_THROW(patch_variance(GrayImage(49, 100, 1.0)), ScoreError); }

TEST(ClipScore, Limits) {
  const std::vector<float> a = {0.6f, 0.8f}, b = {-0.8f, 0.6f}, c = {-0.6f, -0.8f};
  EXPECT_NEAR(clip_score(a, a), 100.0, 1e-9);
  EXPECT_NEAR(clip_score(a, b), 0.0, 1e-9);
  EXPECT_EQ(clip_score(a, c), 0.0);
  EXPECT_NEAR(clip_score(a, a, 2.5), 2.5, 1e-12);
  const std::vector<float> zero = {0.0f, 0.0f};
  EXPECT_THROW(clip_score(a, zero), ScoreError);
  EXPECT_THROW(clip_score(a, std::vector<float>{1.0f}), ScoreError);
}

TEST(KeepCount, CeilingRule) {
  EXPECT_EQ(keep_count(0.8, 10), 8u);
  EXPECT_EQ(keep_count(0.8, 7), 6u);
  EXPECT_EQ(keep_count(0.7, 10), 7u);
  EXPECT_EQ(keep_count(0.8, 64), 52u);
  EXPECT_EQ(keep_count(1.0, 5), 5u);
  EXPECT_EQ(keep_count(0.8, 0), 0u);
  EXPECT_THROW(keep_count(0.0, 5), ArgumentError);
  EXPECT_THROW(keep_count(1.5, 5), ArgumentError);
  for (std::size_t n = 1; n < 2000; ++n) {
    for (double f : {0.1, 0.2, 0.25, 0.5, 0.8, 0.9}) {
      const std::size_t k = keep_count(f, n);
      ASSERT_GE(static_cast<double>(k) + 1e-9, f * static_cast<double>(n));
      ASSERT_LT(static_cast<double>(k) - 1.0, f * static_cast<double>(n));
    }
  }
}

TEST(QuantileCut, TiesKeepLowestIds) {
  std::vector<ImageRecord> rs;
  for (ImageId i = 0; i < 10; ++i) rs.push_back(rec(9 - i, "a", 4.0, 0, 0));
  const auto report = quantile_cut(rs, Stage::Freq, 0.8);
  EXPECT_EQ(report.classes.at("a").kept, 8u);
  for (const auto& r : rs) EXPECT_EQ(*r.survives.freq, r.image_id < 8);
}

TEST(QuantileCut, ClassesAreIndependentAndMissingScoresExcluded) {
  std::vector<ImageRecord> rs;
  for (ImageId i = 0; i < 7; ++i) rs.push_back(rec(i, "a", static_cast<double>(i), 0, 0));
  for (ImageId i = 7; i < 17; ++i) rs.push_back(rec(i, "b", 100.0 - static_cast<double>(i), 0, 0));
  rs.push_back(rec(17, "b", 0, 0, 0));
  rs.back().stage_scores.f_c.reset();
  const auto report = quantile_cut(rs, Stage::Freq, 0.8);
  EXPECT_EQ(report.classes.at("a").input, 7u);
  EXPECT_EQ(report.classes.at("a").kept, 6u);
  EXPECT_EQ(*report.classes.at("a").threshold, 1.0);
  EXPECT_EQ(report.classes.at("b").input, 11u);
  EXPECT_EQ(report.classes.at("b").excluded, 1u);
  EXPECT_EQ(report.classes.at("b").kept, 8u);
  EXPECT_FALSE(*rs.back().survives.freq);
  EXPECT_FALSE(*rs[0].survives.freq);
}

TEST(QuantileCut, EmptyClassWarns) {
  std::vector<ImageRecord> rs = {rec(0, "a", 1, 0, 0)};
  rs[0].excluded = Exclusion{Stage::Freq, "unreadable"};
  const auto report = quantile_cut(rs, Stage::Freq, 0.8);
  EXPECT_EQ(report.warnings.size(), 1u);
  EXPECT_EQ(report.classes.at("a").kept, 0u);
}

TEST(RefineAll, HandComputedToyCascade) {
  std::vector<ImageRecord> rs;
  for (ImageId id = 0; id < 20; ++id) {
    rs.push_back(rec(id, "toy", 19.0 - static_cast<double>(id), static_cast<double>((id * 7) % 16), 5.0));
  }
  const auto reports = refine_all(rs, {});
  EXPECT_EQ(reports[0].classes.at("toy").kept, 16u);
  EXPECT_EQ(reports[1].classes.at("toy").kept, 13u);
  EXPECT_EQ(reports[2].classes.at("toy").kept, 11u);
  std::set<ImageId> got;
  for (const auto& r : rs) {
    if (r.survived_through(Stage::Clip)) got.insert(r.image_id);
  }
  EXPECT_EQ(got, (std::set<ImageId>{1, 2, 3, 4, 5, 6, 8, 9, 10, 11, 12}));
}

TEST(RefineAll, ThousandPerClassArithmetic) {
  std::vector<ImageRecord> rs;
  std::mt19937 rng(5);
  std::uniform_real_distribution<double> u;
  for (int c = 0; c < 3; ++c) {
    for (int i = 0; i < 1000; ++i) {
      rs.push_back(rec(static_cast<ImageId>(c * 1000 + i), "c" + std::to_string(c), u(rng), u(rng), u(rng)));
    }
  }
  const auto reports = refine_all(rs, {});
  for (const auto& [_, cut] : reports[0].classes) EXPECT_EQ(cut.kept, 800u);
  for (const auto& [_, cut] : reports[1].classes) EXPECT_EQ(cut.kept, 640u);
  for (const auto& [_, cut] : reports[2].classes) EXPECT_EQ(cut.kept, 512u);
  EXPECT_NEAR(reports[2].retention() * reports[1].retention() * reports[0].retention(), 0.512, 1e-12);
}

TEST(RefineAll, MatchesNaiveCascadeAndIsMonotone) {
  std::mt19937 rng(99);
  std::uniform_int_distribution<int> small(0, 5);  // many ties
  std::vector<ImageRecord> rs;
  for (ImageId id = 0; id < 500; ++id) {
    rs.push_back(rec(id, "c" + std::to_string(id % 7), small(rng), small(rng), small(rng)));
  }
  std::shuffle(rs.begin(), rs.end(), rng);
  const auto want = naive_cascade(rs, 0.8);
  refine_all(rs, {});
  std::set<ImageId> got;
  for (const auto& r : rs) {
    if (r.survived_through(Stage::Clip)) got.insert(r.image_id);
    if (r.survives.clip.value_or(false)) EXPECT_TRUE(r.survives.patchvar.value_or(false));
    if (r.survives.patchvar.value_or(false)) EXPECT_TRUE(r.survives.freq.value_or(false));
  }
  EXPECT_EQ(got, want);
}

TEST(RefineAll, RerunIsIdempotent) {
  std::vector<ImageRecord> rs;
  for (ImageId id = 0; id < 30; ++id) rs.push_back(rec(id, "a", id % 5, id % 3, id % 7));
  refine_all(rs, {});
  const auto first = rs;
  refine_all(rs, {});
  EXPECT_EQ(rs, first);
}

TEST(BalanceClasses, TruncatesToSmallestClass) {
  std::vector<ImageRecord> rs;
  for (ImageId id = 0; id < 10; ++id) rs.push_back(rec(id, "a", 1, 1, static_cast<double>(id)));
  for (ImageId id = 10; id < 14; ++id) rs.push_back(rec(id, "b", 1, 1, 1));
  for (auto& r : rs) r.survives = {true, true, true};
  EXPECT_EQ(balance_classes(rs), 4u);
  std::set<ImageId> kept;
  for (const auto& r : rs) {
    if (r.survived_through(Stage::Clip)) kept.insert(r.image_id);
  }
  EXPECT_EQ(kept, (std::set<ImageId>{6, 7, 8, 9, 10, 11, 12, 13}));
}

TEST(ScoreImages, ParallelMatchesSerialAndRecordsExclusions) {
  std::vector<ImageRecord> rs;
  for (ImageId id = 0; id < 24; ++id) {
    ImageRecord r;
    r.image_id = id;
    r.texture_class = "a";
    rs.push_back(r);
  }
  auto loader = [](const ImageRecord& r) -> GrayImage {
    if (r.image_id == 3) throw IoError("unreadable");
    if (r.image_id == 4) return GrayImage(64, 64, 0.0);
    if (r.image_id == 5) return GrayImage(40, 40, 9.0);
    return random_image(100, 100, static_cast<unsigned>(r.image_id));
  };
  auto serial = rs, par = rs;
  score_images(serial, loader, {50, 100.0, 1});
  score_images(par, loader, {50, 100.0, 4});
  EXPECT_EQ(serial, par);
  EXPECT_EQ(serial[3].excluded->stage, Stage::Freq);
  EXPECT_EQ(serial[4].excluded->stage, Stage::Freq);
  EXPECT_EQ(serial[5].excluded->stage, Stage::PatchVar);
  EXPECT_TRUE(serial[5].stage_scores.f_c.has_value());
  EXPECT_TRUE(serial[6].stage_scores.patch_var.has_value());
}

TEST(ScoreClip, UsesImageAndPromptRows) {
  std::vector<ImageRecord> rs(2);
  rs[0].image_id = 10;
  rs[0].prompt_id = 1;
  rs[1].image_id = 11;
  rs[1].prompt_id = 2;
  FeatureMatrix img(FeatureKind::ClipImage, 2, {10, 11}, {1, 0, 0, 1});
  FeatureMatrix txt(FeatureKind::ClipText, 2, {1}, {1, 0});
  score_clip(rs, img, txt);
  EXPECT_NEAR(*rs[0].stage_scores.clip, 100.0, 1e-9);
  EXPECT_FALSE(rs[1].stage_scores.clip.has_value());
  EXPECT_EQ(rs[1].excluded->stage, Stage::Clip);
}
