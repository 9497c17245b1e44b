#pragma once

#include <cstddef>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ptd/dataset_store.hpp"
#include "ptd/image.hpp"
#include "ptd/manifest.hpp"

namespace ptd {

inline constexpr int kDefaultPatchSize = 50;
inline constexpr double kDefaultClipScale = 100.0;

/// Population variance of the mean intensities of the full, non-overlapping
/// patch_size x patch_size tiles. Partial edge tiles are ignored.
double patch_variance(const GrayImage& image, int patch_size = kDefaultPatchSize);

/// scale * max(cos(image, text), 0). Throws ScoreError on a zero vector or
/// mismatched dimensions.
double clip_score(std::span<const float> image_embedding, std::span<const float> text_embedding,
                  double scale = kDefaultClipScale);

/// ceil(keep_fraction * n), with products within 1e-9 of an integer taken
/// as that integer so 0.7 * 10 keeps 7 rather than 8.
std::size_t keep_count(double keep_fraction, std::size_t n);

struct ClassCut {
  std::size_t input = 0;     // live records entering the stage
  std::size_t excluded = 0;  // live records without a usable score
  std::size_t kept = 0;
  std::optional<double> threshold;  // lowest kept score
};

struct StageReport {
  Stage stage = Stage::Freq;
  double keep_fraction = 1.0;
  std::map<std::string, ClassCut> classes;
  std::vector<std::string> warnings;

  std::size_t total_input() const;
  std::size_t total_kept() const;
  double retention() const;  // kept / input over all classes
};

/// Per texture class: sorts the live records descending by the stage score,
/// ties by ascending image id, and keeps the first keep_count(fraction, n).
/// Records entering the stage without a score, or with an exclusion, are
/// marked non-surviving and not counted in n.
StageReport quantile_cut(std::span<ImageRecord> records, Stage stage, double keep_fraction);

struct KeepFractions {
  double freq = 0.8;
  double patchvar = 0.8;
  double clip = 0.8;
  double operator[](Stage s) const { return s == Stage::Freq ? freq : s == Stage::PatchVar ? patchvar : clip; }
};

/// Runs freq -> patchvar -> clip over the unflagged records. Scores must
/// already be attached (see score_images / score_clip).
std::vector<StageReport> refine_all(std::span<ImageRecord> records, const KeepFractions& fractions = {});

/// Optional post-step: truncate every class to the smallest surviving class,
/// dropping the lowest clip scores first. Returns the per-class size used.
std::size_t balance_classes(std::span<ImageRecord> records);

/// Produces the grayscale pixels of one record; throws IoError on failure.
using ImageLoader = std::function<GrayImage(const ImageRecord&)>;

/// Loader that reads `root / file_path` as PNG and converts to luma.
ImageLoader png_loader(std::filesystem::path root);

struct ScoringOptions {
  int patch_size = kDefaultPatchSize;
  double clip_scale = kDefaultClipScale;
  unsigned workers = 1;
};

/// Fills f_c and patch_var for every unflagged record. A record whose score
/// cannot be computed gets an exclusion for that stage instead.
void score_images(std::span<ImageRecord> records, const ImageLoader& load, const ScoringOptions& options = {});

/// Fills the clip score from image embeddings (by image id) and prompt text
/// embeddings (by prompt id).
void score_clip(std::span<ImageRecord> records, const FeatureMatrix& clip_image, const FeatureMatrix& clip_text,
                double scale = kDefaultClipScale);

/// Clears survival flags so a cascade can be rerun. Scoring exclusions stay.
void reset_survival(std::span<ImageRecord> records);

std::string format_stage_report(const StageReport& report);
std::string stage_report_json(const StageReport& report);

}  // namespace ptd
