#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include <Eigen/Dense>

#include "ptd/dataset_store.hpp"
#include "ptd/image.hpp"
#include "ptd/manifest.hpp"
#include "ptd/prompt_grammar.hpp"
#include "ptd/ratings.hpp"
#include "ptd/spectrum.hpp"

namespace ptd {

// ---------------------------------------------------------------------------
// Inception Score
// ---------------------------------------------------------------------------

struct ISResult {
  std::vector<double> split_scores;
  double mean = 0.0;
  double stddev = 0.0;  // population standard deviation over splits
  int n_splits = 0;
};

/// Numerically stable row softmax of an N x C logit matrix.
Eigen::MatrixXd softmax_rows(const FeatureMatrix& logits);

/// exp(mean KL(p(y|x) || p(y))) per contiguous split; split i covers rows
/// [i*N/S, (i+1)*N/S).
ISResult inception_score(const FeatureMatrix& logits, int n_splits = 10);
ISResult inception_score_from_probs(const Eigen::MatrixXd& probs, int n_splits = 10);

// ---------------------------------------------------------------------------
// Frechet distance
// ---------------------------------------------------------------------------

struct FeatureStats {
  Eigen::VectorXd mean;
  Eigen::MatrixXd cov;
  std::size_t count = 0;
};

/// Mean and unbiased (N - 1) covariance. Rows are folded with a fixed
/// pairwise tree so the result does not depend on thread scheduling.
FeatureStats feature_stats(const FeatureMatrix& features);
FeatureStats feature_stats(const Eigen::MatrixXd& rows);

inline constexpr double kEigenTolerance = 1e-8;

/// |mu_a - mu_b|^2 + Tr(S_a + S_b - 2 (S_a S_b)^{1/2}).
/// Throws ArgumentError on dimension mismatch and NumericalError when a
/// covariance (or the product) has an eigenvalue below
/// -tolerance * largest eigenvalue.
double fid(const FeatureStats& a, const FeatureStats& b, double tolerance = kEigenTolerance);

// ---------------------------------------------------------------------------
// Mean power spectrum
// ---------------------------------------------------------------------------

inline constexpr int kSpectrumSide = 224;

struct MeanSpectrum {
  GrayImage log_map;     // mean of log(1 + power), zero frequency at the center
  PowerSpectrum radial;  // mean of the raw radial profiles
  std::size_t images = 0;
};

/// Streams images into a dataset-mean spectrum. With a resize side every
/// image is resampled bilinearly to side x side first; without one, every
/// image must share the first image's size (ArgumentError otherwise).
class SpectrumAccumulator {
 public:
  explicit SpectrumAccumulator(std::optional<int> resize_side = kSpectrumSide);

  void add(const GrayImage& image);
  MeanSpectrum result() const;  // ArgumentError when empty
  std::size_t count() const noexcept { return count_; }

 private:
  std::optional<int> resize_side_;
  int width_ = 0;
  int height_ = 0;
  std::vector<double> log_sum_;
  std::vector<double> radial_sum_;
  std::size_t count_ = 0;
};

MeanSpectrum mean_power_spectrum(std::span<const GrayImage> images, std::optional<int> resize_side = kSpectrumSide);

/// L2 distance between the two radial profiles after scaling each to unit sum.
double spectral_distance(const PowerSpectrum& a, const PowerSpectrum& b);

/// Linear rescale of a log map to [0, 255] for display.
GrayImage spectrum_display(const GrayImage& log_map);

// ---------------------------------------------------------------------------
// CLIP statistics by descriptor pair
// ---------------------------------------------------------------------------

struct PairStat {
  std::string family;  // e.g. "texture/color"
  std::string first;   // slot label, "∅(color enhancer)" for an empty slot
  std::string second;
  std::size_t n = 0;
  double mean = 0.0;
  double median = 0.0;

  std::string label() const { return first + " " + second; }
};

/// Display label of one slot's word; empty words become "∅(<category>)".
std::string slot_label(Slot slot, const std::string& word);

/// Aggregates clip scores over every unordered pair of prompt slots
/// (texture first, then artistic, spatial, enhancer, color). Result is
/// sorted by descending mean, ties by family then label. Every record
/// must carry a clip score and a prompt in `prompts`.
std::vector<PairStat> clip_stats_by_pair(std::span<const ImageRecord> records, std::span<const PromptRecord> prompts);

// ---------------------------------------------------------------------------
// Human representativeness vs CLIP quantile
// ---------------------------------------------------------------------------

struct CurvePoint {
  double q = 0.0;
  double threshold = 0.0;  // the q-quantile of rated images' clip scores
  std::size_t n = 0;
  double mean_representativeness = 0.0;
};

struct Curve {
  std::vector<CurvePoint> points;
  std::vector<double> empty_quantiles;  // grid entries whose bucket was empty
};

/// For each q: mean representativeness over ratings whose image clip score
/// is at or below the lower q-quantile (the ceil(q*n)-th smallest score).
Curve human_vs_clip_curve(std::span<const RatingRecord> ratings, const std::unordered_map<ImageId, double>& clip,
                          std::span<const double> quantiles);

}  // namespace ptd
