#include "ptd/refinement.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <sstream>

#include <nlohmann/json.hpp>

#include "ptd/errors.hpp"
#include "ptd/parallel.hpp"
#include "ptd/spectrum.hpp"

namespace ptd {

double patch_variance(const GrayImage& image, int patch_size) {
  if (patch_size < 1) throw ArgumentError("patch size must be positive");
  const int cols = image.width / patch_size;
  const int rows = image.height / patch_size;
  if (cols < 1 || rows < 1) {
    throw ScoreError("image " + std::to_string(image.width) + "x" + std::to_string(image.height) +
                     " is smaller than one " + std::to_string(patch_size) + "px patch");
  }
  std::vector<double> means;
  means.reserve(static_cast<std::size_t>(rows) * cols);
  const double area = static_cast<double>(patch_size) * patch_size;
  for (int py = 0; py < rows; ++py) {
    for (int px = 0; px < cols; ++px) {
      double sum = 0.0;
      for (int y = py * patch_size; y < (py + 1) * patch_size; ++y) {
        for (int x = px * patch_size; x < (px + 1) * patch_size; ++x) sum += image(x, y);
      }
      means.push_back(sum / area);
    }
  }
  double mean = 0.0;
  for (double m : means) mean += m;
  mean /= static_cast<double>(means.size());
  double ss = 0.0;
  for (double m : means) ss += (m - mean) * (m - mean);
  return ss / static_cast<double>(means.size());
}

double clip_score(std::span<const float> image_embedding, std::span<const float> text_embedding, double scale) {
  if (image_embedding.size() != text_embedding.size()) {
    throw ScoreError("embedding dimensions differ: " + std::to_string(image_embedding.size()) + " vs " +
                     std::to_string(text_embedding.size()));
  }
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < image_embedding.size(); ++i) {
    const double a = image_embedding[i];
    const double b = text_embedding[i];
    dot += a * b;
    na += a * a;
    nb += b * b;
  }
  if (na == 0.0 || nb == 0.0) throw ScoreError("zero embedding vector");
  const double cosine = dot / (std::sqrt(na) * std::sqrt(nb));
  return scale * std::max(cosine, 0.0);
}

std::size_t keep_count(double keep_fraction, std::size_t n) {
  if (!(keep_fraction > 0.0 && keep_fraction <= 1.0)) {
    throw ArgumentError("keep fraction must lie in (0, 1]");
  }
  const double exact = keep_fraction * static_cast<double>(n);
  const double nearest = std::round(exact);
  if (std::abs(exact - nearest) <= 1e-9 * std::max(1.0, exact)) return static_cast<std::size_t>(nearest);
  return static_cast<std::size_t>(std::ceil(exact));
}

std::size_t StageReport::total_input() const {
  std::size_t n = 0;
  for (const auto& [_, c] : classes) n += c.input;
  return n;
}

std::size_t StageReport::total_kept() const {
  std::size_t n = 0;
  for (const auto& [_, c] : classes) n += c.kept;
  return n;
}

double StageReport::retention() const {
  const auto in = total_input();
  return in == 0 ? 0.0 : static_cast<double>(total_kept()) / static_cast<double>(in);
}

StageReport quantile_cut(std::span<ImageRecord> records, Stage stage, double keep_fraction) {
  keep_count(keep_fraction, 0);  // validates the fraction
  StageReport report;
  report.stage = stage;
  report.keep_fraction = keep_fraction;

  std::map<std::string, std::vector<ImageRecord*>> live;
  for (auto& r : records) {
    if (r.flagged) continue;
    auto& bucket = live[r.texture_class];
    if (!r.live_before(stage)) continue;
    auto& cut = report.classes[r.texture_class];
    ++cut.input;
    const auto& score = r.stage_scores[stage];
    const bool excluded_here = r.excluded && r.excluded->stage == stage;
    if (excluded_here || !score || !std::isfinite(*score)) {
      ++cut.excluded;
      r.survives[stage] = false;
      continue;
    }
    bucket.push_back(&r);
  }

  for (auto& [cls, members] : live) {
    auto& cut = report.classes[cls];
    if (members.empty()) {
      report.warnings.push_back("class '" + cls + "' has no live records at stage " + std::string(stage_name(stage)));
      continue;
    }
    std::sort(members.begin(), members.end(), [stage](const ImageRecord* a, const ImageRecord* b) {
      const double sa = *a->stage_scores[stage];
      const double sb = *b->stage_scores[stage];
      if (sa != sb) return sa > sb;
      return a->image_id < b->image_id;
    });
    const std::size_t keep = keep_count(keep_fraction, members.size());
    for (std::size_t i = 0; i < members.size(); ++i) members[i]->survives[stage] = i < keep;
    cut.kept = keep;
    if (keep > 0) cut.threshold = *members[keep - 1]->stage_scores[stage];
  }
  return report;
}

void reset_survival(std::span<ImageRecord> records) {
  for (auto& r : records) r.survives = {};
}

std::vector<StageReport> refine_all(std::span<ImageRecord> records, const KeepFractions& fractions) {
  reset_survival(records);
  std::vector<StageReport> reports;
  for (Stage s : kStages) reports.push_back(quantile_cut(records, s, fractions[s]));
  return reports;
}

std::size_t balance_classes(std::span<ImageRecord> records) {
  std::map<std::string, std::vector<ImageRecord*>> survivors;
  for (auto& r : records) {
    if (r.survived_through(Stage::Clip)) survivors[r.texture_class].push_back(&r);
  }
  if (survivors.empty()) return 0;
  std::size_t target = std::numeric_limits<std::size_t>::max();
  for (const auto& [_, v] : survivors) target = std::min(target, v.size());
  for (auto& [_, members] : survivors) {
    std::sort(members.begin(), members.end(), [](const ImageRecord* a, const ImageRecord* b) {
      const double sa = a->stage_scores.clip.value_or(0.0);
      const double sb = b->stage_scores.clip.value_or(0.0);
      if (sa != sb) return sa > sb;
      return a->image_id < b->image_id;
    });
    for (std::size_t i = target; i < members.size(); ++i) members[i]->survives.clip = false;
  }
  return target;
}

ImageLoader png_loader(std::filesystem::path root) {
  return [root = std::move(root)](const ImageRecord& r) {
    if (!r.file_path) throw IoError("image " + std::to_string(r.image_id) + " has no file_path");
    return to_gray(read_png(root / *r.file_path));
  };
}

void score_images(std::span<ImageRecord> records, const ImageLoader& load, const ScoringOptions& options) {
  parallel_for(records.size(), options.workers, [&](std::size_t i) {
    ImageRecord& r = records[i];
    if (r.flagged) return;
    r.stage_scores.f_c.reset();
    r.stage_scores.patch_var.reset();
    if (r.excluded && r.excluded->stage != Stage::Clip) r.excluded.reset();
    GrayImage image;
    try {
      image = load(r);
    } catch (const IoError& e) {
      r.excluded = Exclusion{Stage::Freq, e.what()};
      return;
    }
    try {
      r.stage_scores.f_c = frequency_cutoff(radial_power_spectrum(image));
    } catch (const Error& e) {
      r.excluded = Exclusion{Stage::Freq, e.what()};
      return;
    }
    try {
      r.stage_scores.patch_var = patch_variance(image, options.patch_size);
    } catch (const Error& e) {
      r.excluded = Exclusion{Stage::PatchVar, e.what()};
    }
  });
}

void score_clip(std::span<ImageRecord> records, const FeatureMatrix& clip_image, const FeatureMatrix& clip_text,
                double scale) {
  for (auto& r : records) {
    if (r.flagged) continue;
    r.stage_scores.clip.reset();
    if (r.excluded && r.excluded->stage == Stage::Clip) r.excluded.reset();
    if (r.excluded) continue;
    try {
      r.stage_scores.clip = clip_score(clip_image.row_for(r.image_id), clip_text.row_for(r.prompt_id), scale);
    } catch (const Error& e) {
      r.excluded = Exclusion{Stage::Clip, e.what()};
    }
  }
}

std::string format_stage_report(const StageReport& report) {
  std::ostringstream out;
  out << "stage " << stage_name(report.stage) << " (keep " << report.keep_fraction << ")\n";
  out << std::left << std::setw(20) << "class" << std::right << std::setw(8) << "input" << std::setw(10)
      << "excluded" << std::setw(8) << "kept" << std::setw(14) << "threshold" << '\n';
  for (const auto& [cls, c] : report.classes) {
    out << std::left << std::setw(20) << cls << std::right << std::setw(8) << c.input << std::setw(10) << c.excluded
        << std::setw(8) << c.kept << std::setw(14);
    if (c.threshold) {
      out << std::setprecision(6) << *c.threshold;
    } else {
      out << "-";
    }
    out << '\n';
  }
  out << "retention " << std::fixed << std::setprecision(4) << report.retention() << " (" << report.total_kept()
      << "/" << report.total_input() << ")\n";
  for (const auto& w : report.warnings) out << "warning: " << w << '\n';
  return out.str();
}

std::string stage_report_json(const StageReport& report) {
  nlohmann::json j;
  j["stage"] = stage_name(report.stage);
  j["keep_fraction"] = report.keep_fraction;
  j["retention"] = report.retention();
  j["input"] = report.total_input();
  j["kept"] = report.total_kept();
  nlohmann::json classes = nlohmann::json::object();
  for (const auto& [cls, c] : report.classes) {
    classes[cls] = {{"input", c.input},
                    {"excluded", c.excluded},
                    {"kept", c.kept},
                    {"threshold", c.threshold ? nlohmann::json(*c.threshold) : nlohmann::json(nullptr)}};
  }
  j["classes"] = classes;
  j["warnings"] = report.warnings;
  return j.dump();
}

}  // namespace ptd
