#include "ptd/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <tuple>

#include <Eigen/Eigenvalues>

#include "ptd/errors.hpp"

namespace ptd {

// ---------------------------------------------------------------------------
// Inception Score

Eigen::MatrixXd softmax_rows(const FeatureMatrix& logits) {
  const auto n = static_cast<Eigen::Index>(logits.rows());
  const auto c = static_cast<Eigen::Index>(logits.dim());
  Eigen::MatrixXd probs(n, c);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto row = logits.row(static_cast<std::size_t>(i));
    double max_logit = -std::numeric_limits<double>::infinity();
    for (float v : row) {
      if (!std::isfinite(v)) throw ArgumentError("non-finite logit in row " + std::to_string(i));
      max_logit = std::max(max_logit, static_cast<double>(v));
    }
    double z = 0.0;
    for (Eigen::Index j = 0; j < c; ++j) {
      probs(i, j) = std::exp(static_cast<double>(row[static_cast<std::size_t>(j)]) - max_logit);
      z += probs(i, j);
    }
    probs.row(i) /= z;
  }
  return probs;
}

ISResult inception_score_from_probs(const Eigen::MatrixXd& probs, int n_splits) {
  const auto n = probs.rows();
  if (n_splits < 1) throw ArgumentError("inception score needs at least one split");
  if (n < n_splits) {
    throw ArgumentError("inception score: " + std::to_string(n) + " rows cannot fill " + std::to_string(n_splits) +
                        " splits");
  }
  if (probs.cols() < 1) throw ArgumentError("inception score: logits have no classes");
  ISResult result;
  result.n_splits = n_splits;
  for (int s = 0; s < n_splits; ++s) {
    const Eigen::Index begin = s * n / n_splits;
    const Eigen::Index end = (s + 1) * n / n_splits;
    const auto part = probs.middleRows(begin, end - begin);
    const Eigen::RowVectorXd marginal = part.colwise().mean();
    double kl_sum = 0.0;
    for (Eigen::Index i = 0; i < part.rows(); ++i) {
      double kl = 0.0;
      for (Eigen::Index j = 0; j < part.cols(); ++j) {
        const double p = part(i, j);
        if (p > 0.0) kl += p * (std::log(p) - std::log(marginal(j)));
      }
      kl_sum += kl;
    }
    result.split_scores.push_back(std::exp(kl_sum / static_cast<double>(part.rows())));
  }
  const double k = static_cast<double>(n_splits);
  result.mean = std::accumulate(result.split_scores.begin(), result.split_scores.end(), 0.0) / k;
  double var = 0.0;
  for (double v : result.split_scores) var += (v - result.mean) * (v - result.mean);
  result.stddev = std::sqrt(var / k);
  return result;
}

ISResult inception_score(const FeatureMatrix& logits, int n_splits) {
  return inception_score_from_probs(softmax_rows(logits), n_splits);
}

// ---------------------------------------------------------------------------
// Frechet distance

namespace {

struct Moments {
  double n = 0.0;
  Eigen::VectorXd mean;
  Eigen::MatrixXd m2;  // sum of outer products of deviations
};

constexpr Eigen::Index kLeafRows = 32;

Moments leaf_moments(const Eigen::MatrixXd& rows, Eigen::Index begin, Eigen::Index end) {
  Moments m;
  m.n = static_cast<double>(end - begin);
  const auto block = rows.middleRows(begin, end - begin);
  m.mean = block.colwise().mean().transpose();
  const Eigen::MatrixXd centered = block.rowwise() - m.mean.transpose();
  m.m2 = centered.transpose() * centered;
  return m;
}

Moments combine(const Moments& a, const Moments& b) {
  Moments m;
  m.n = a.n + b.n;
  const Eigen::VectorXd delta = b.mean - a.mean;
  m.mean = a.mean + delta * (b.n / m.n);
  m.m2 = a.m2 + b.m2 + (delta * delta.transpose()) * (a.n * b.n / m.n);
  return m;
}

Moments tree_moments(const Eigen::MatrixXd& rows, Eigen::Index begin, Eigen::Index end) {
  if (end - begin <= kLeafRows) return leaf_moments(rows, begin, end);
  const Eigen::Index mid = begin + (end - begin) / 2;
  return combine(tree_moments(rows, begin, mid), tree_moments(rows, mid, end));
}

Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> checked_eigen(const Eigen::MatrixXd& m, double tolerance,
                                                             const std::string& what) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(m);
  if (solver.info() != Eigen::Success) throw NumericalError(what + ": eigendecomposition failed", 0.0);
  const auto& ev = solver.eigenvalues();
  if (ev.size() == 0) return solver;
  const double largest = ev.cwiseAbs().maxCoeff();
  const double smallest = ev.minCoeff();
  if (smallest < -tolerance * largest) {
    throw NumericalError(what + " is not positive semidefinite: eigenvalue " + std::to_string(smallest), smallest);
  }
  return solver;
}

}  // namespace

FeatureStats feature_stats(const Eigen::MatrixXd& rows) {
  if (rows.rows() < 2) throw ArgumentError("feature statistics need at least two rows");
  const Moments m = tree_moments(rows, 0, rows.rows());
  FeatureStats stats;
  stats.mean = m.mean;
  stats.cov = m.m2 / (m.n - 1.0);
  stats.cov = 0.5 * (stats.cov + stats.cov.transpose());
  stats.count = static_cast<std::size_t>(rows.rows());
  return stats;
}

FeatureStats feature_stats(const FeatureMatrix& features) {
  Eigen::MatrixXd rows(static_cast<Eigen::Index>(features.rows()), static_cast<Eigen::Index>(features.dim()));
  for (std::size_t r = 0; r < features.rows(); ++r) {
    const auto row = features.row(r);
    for (std::size_t c = 0; c < features.dim(); ++c) {
      rows(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = row[c];
    }
  }
  return feature_stats(rows);
}

double fid(const FeatureStats& a, const FeatureStats& b, double tolerance) {
  const auto d = a.mean.size();
  if (b.mean.size() != d || a.cov.rows() != d || a.cov.cols() != d || b.cov.rows() != d || b.cov.cols() != d) {
    throw ArgumentError("fid: feature dimensions differ");
  }
  const auto eig_a = checked_eigen(0.5 * (a.cov + a.cov.transpose()), tolerance, "covariance A");
  checked_eigen(0.5 * (b.cov + b.cov.transpose()), tolerance, "covariance B");

  // Tr((S_a S_b)^{1/2}) = Tr((S_a^{1/2} S_b S_a^{1/2})^{1/2}); the latter is symmetric PSD.
  const Eigen::VectorXd sqrt_ev = eig_a.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  const Eigen::MatrixXd sqrt_a = eig_a.eigenvectors() * sqrt_ev.asDiagonal() * eig_a.eigenvectors().transpose();
  Eigen::MatrixXd inner = sqrt_a * b.cov * sqrt_a;
  inner = 0.5 * (inner + inner.transpose());
  const auto eig_inner = checked_eigen(inner, tolerance, "covariance product");
  // Eigenvalues under the rank floor are rounding noise; their square roots
  // would otherwise add up to a visible bias when dim >> rows.
  const Eigen::VectorXd inner_ev = eig_inner.eigenvalues();
  const double floor = static_cast<double>(d) * std::numeric_limits<double>::epsilon() *
                       (inner_ev.size() ? inner_ev.cwiseAbs().maxCoeff() : 0.0);
  const double trace_sqrt = (inner_ev.array() > floor).select(inner_ev.array().sqrt(), 0.0).sum();

  return (a.mean - b.mean).squaredNorm() + a.cov.trace() + b.cov.trace() - 2.0 * trace_sqrt;
}

// ---------------------------------------------------------------------------
// Mean power spectrum

SpectrumAccumulator::SpectrumAccumulator(std::optional<int> resize_side) : resize_side_(resize_side) {
  if (resize_side_ && *resize_side_ < 2) throw ArgumentError("spectrum resize side must be at least 2");
}

void SpectrumAccumulator::add(const GrayImage& image) {
  const GrayImage sized = resize_side_ ? resize_bilinear(image, *resize_side_, *resize_side_) : image;
  if (count_ == 0) {
    width_ = sized.width;
    height_ = sized.height;
    log_sum_.assign(sized.pixels.size(), 0.0);
  } else if (sized.width != width_ || sized.height != height_) {
    throw ArgumentError("mixed image sizes (" + std::to_string(sized.width) + "x" + std::to_string(sized.height) +
                        " vs " + std::to_string(width_) + "x" + std::to_string(height_) +
                        ") without resizing enabled");
  }
  const GrayImage power = centered_power_spectrum(sized);
  for (std::size_t i = 0; i < power.pixels.size(); ++i) log_sum_[i] += std::log1p(power.pixels[i]);
  const PowerSpectrum radial = radial_profile(power);
  if (radial_sum_.empty()) radial_sum_.assign(radial.bins.size(), 0.0);
  for (std::size_t k = 0; k < radial.bins.size(); ++k) radial_sum_[k] += radial.bins[k];
  ++count_;
}

MeanSpectrum SpectrumAccumulator::result() const {
  if (count_ == 0) throw ArgumentError("mean power spectrum needs at least one image");
  const double n = static_cast<double>(count_);
  MeanSpectrum out;
  out.images = count_;
  out.log_map = GrayImage(width_, height_);
  for (std::size_t i = 0; i < log_sum_.size(); ++i) out.log_map.pixels[i] = log_sum_[i] / n;
  out.radial.bins.resize(radial_sum_.size());
  for (std::size_t k = 0; k < radial_sum_.size(); ++k) out.radial.bins[k] = radial_sum_[k] / n;
  return out;
}

MeanSpectrum mean_power_spectrum(std::span<const GrayImage> images, std::optional<int> resize_side) {
  SpectrumAccumulator acc(resize_side);
  for (const auto& img : images) acc.add(img);
  return acc.result();
}

double spectral_distance(const PowerSpectrum& a, const PowerSpectrum& b) {
  if (a.bins.size() != b.bins.size()) throw ArgumentError("radial profiles have different lengths");
  const double ta = a.total();
  const double tb = b.total();
  if (!(ta > 0.0) || !(tb > 0.0)) throw ArgumentError("radial profile carries no energy");
  double ss = 0.0;
  for (std::size_t k = 0; k < a.bins.size(); ++k) {
    const double diff = a.bins[k] / ta - b.bins[k] / tb;
    ss += diff * diff;
  }
  return std::sqrt(ss);
}

GrayImage spectrum_display(const GrayImage& log_map) {
  GrayImage out(log_map.width, log_map.height);
  if (log_map.pixels.empty()) return out;
  const auto [lo, hi] = std::minmax_element(log_map.pixels.begin(), log_map.pixels.end());
  const double range = *hi - *lo;
  for (std::size_t i = 0; i < out.pixels.size(); ++i) {
    out.pixels[i] = range > 0.0 ? 255.0 * (log_map.pixels[i] - *lo) / range : 0.0;
  }
  return out;
}

// ---------------------------------------------------------------------------
// CLIP statistics by descriptor pair

std::string slot_label(Slot slot, const std::string& word) {
  if (!word.empty()) return word;
  switch (slot) {
    case Slot::Artistic: return "∅(artistic)";
    case Slot::Spatial: return "∅(spatial)";
    case Slot::Enhancer: return "∅(color enhancer)";
    case Slot::Color: return "∅(color)";
    case Slot::Texture: return "∅(texture)";
  }
  return "∅";
}

namespace {

std::string_view family_slot_name(Slot s) { return s == Slot::Texture ? "texture" : slot_name(s); }

constexpr std::array<Slot, 5> kPairOrder = {Slot::Texture, Slot::Artistic, Slot::Spatial, Slot::Enhancer,
                                            Slot::Color};

}  // namespace

std::vector<PairStat> clip_stats_by_pair(std::span<const ImageRecord> records,
                                         std::span<const PromptRecord> prompts) {
  std::unordered_map<PromptId, const PromptRecord*> by_id;
  for (const auto& p : prompts) by_id.emplace(p.prompt_id, &p);

  using Key = std::tuple<std::size_t, std::size_t, std::string, std::string>;
  std::map<Key, std::vector<double>> groups;
  for (const auto& r : records) {
    if (!r.stage_scores.clip) {
      throw ArgumentError("image " + std::to_string(r.image_id) + " has no clip score");
    }
    auto it = by_id.find(r.prompt_id);
    if (it == by_id.end()) throw LookupError("no prompt record for prompt_id " + std::to_string(r.prompt_id));
    const PromptRecord& p = *it->second;
    for (std::size_t i = 0; i < kPairOrder.size(); ++i) {
      for (std::size_t j = i + 1; j < kPairOrder.size(); ++j) {
        const Slot si = kPairOrder[i];
        const Slot sj = kPairOrder[j];
        groups[{i, j, slot_label(si, p.word(si)), slot_label(sj, p.word(sj))}].push_back(*r.stage_scores.clip);
      }
    }
  }

  std::vector<PairStat> out;
  out.reserve(groups.size());
  for (auto& [key, scores] : groups) {
    const auto& [i, j, first, second] = key;
    PairStat s;
    s.family = std::string(family_slot_name(kPairOrder[i])) + "/" + std::string(family_slot_name(kPairOrder[j]));
    s.first = first;
    s.second = second;
    s.n = scores.size();
    s.mean = std::accumulate(scores.begin(), scores.end(), 0.0) / static_cast<double>(s.n);
    std::sort(scores.begin(), scores.end());
    const std::size_t mid = s.n / 2;
    s.median = s.n % 2 == 1 ? scores[mid] : 0.5 * (scores[mid - 1] + scores[mid]);
    out.push_back(std::move(s));
  }
  std::stable_sort(out.begin(), out.end(), [](const PairStat& a, const PairStat& b) {
    if (a.mean != b.mean) return a.mean > b.mean;
    if (a.family != b.family) return a.family < b.family;
    return a.label() < b.label();
  });
  return out;
}

// ---------------------------------------------------------------------------
// Human representativeness vs CLIP quantile

Curve human_vs_clip_curve(std::span<const RatingRecord> ratings, const std::unordered_map<ImageId, double>& clip,
                          std::span<const double> quantiles) {
  Curve curve;
  if (ratings.empty()) return curve;

  std::map<ImageId, double> rated;
  for (const auto& r : ratings) {
    auto it = clip.find(r.image_id);
    if (it == clip.end()) throw ArgumentError("rated image " + std::to_string(r.image_id) + " has no clip score");
    rated.emplace(r.image_id, it->second);
  }
  std::vector<double> sorted;
  sorted.reserve(rated.size());
  for (const auto& [_, s] : rated) sorted.push_back(s);
  std::sort(sorted.begin(), sorted.end());

  for (double q : quantiles) {
    if (!(q >= 0.0 && q <= 1.0)) throw ArgumentError("quantile outside [0, 1]");
    const double exact = q * static_cast<double>(sorted.size());
    const double nearest = std::round(exact);
    const auto rank = static_cast<std::size_t>(
        std::abs(exact - nearest) <= 1e-9 * std::max(1.0, exact) ? nearest : std::ceil(exact));
    if (rank == 0) {
      curve.empty_quantiles.push_back(q);
      continue;
    }
    CurvePoint point;
    point.q = q;
    point.threshold = sorted[rank - 1];
    double sum = 0.0;
    for (const auto& r : ratings) {
      if (clip.at(r.image_id) <= point.threshold) {
        sum += r.representativeness;
        ++point.n;
      }
    }
    point.mean_representativeness = sum / static_cast<double>(point.n);
    curve.points.push_back(point);
  }
  return curve;
}

}  // namespace ptd
