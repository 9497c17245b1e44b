#include "ptd/spectrum.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <memory>
#include <mutex>
#include <numeric>

#include <fftw3.h>

#include "ptd/errors.hpp"

namespace ptd {

namespace {

struct FftwFree {
  void operator()(void* p) const { fftw_free(p); }
};
template <typename T>
using FftwBuffer = std::unique_ptr<T[], FftwFree>;

// Planning is not thread-safe in FFTW; execution with the new-array API is.
class PlanCache {
 public:
  fftw_plan get(int height, int width) {
    std::lock_guard lock(mutex_);
    auto it = plans_.find({height, width});
    if (it != plans_.end()) return it->second;
    FftwBuffer<double> in(fftw_alloc_real(static_cast<std::size_t>(height) * width));
    FftwBuffer<fftw_complex> out(fftw_alloc_complex(static_cast<std::size_t>(height) * (width / 2 + 1)));
    fftw_plan plan = fftw_plan_dft_r2c_2d(height, width, in.get(), out.get(), FFTW_ESTIMATE);
    if (plan == nullptr) throw ArgumentError("fftw could not plan a transform of this size");
    plans_.emplace(std::make_pair(height, width), plan);
    return plan;
  }

  ~PlanCache() {
    for (auto& [_, plan] : plans_) fftw_destroy_plan(plan);
  }

 private:
  std::mutex mutex_;
  std::map<std::pair<int, int>, fftw_plan> plans_;
};

PlanCache& plan_cache() {
  static PlanCache cache;
  return cache;
}

}  // namespace

double PowerSpectrum::total() const { return std::accumulate(bins.begin(), bins.end(), 0.0); }

int radial_bin(int fx, int fy) {
  return static_cast<int>(std::lround(std::sqrt(static_cast<double>(fx) * fx + static_cast<double>(fy) * fy)));
}

GrayImage centered_power_spectrum(const GrayImage& image) {
  const int h = image.height;
  const int w = image.width;
  if (h < 2 || w < 2) throw ArgumentError("power spectrum needs an image of at least 2x2 pixels");
  const int half_w = w / 2 + 1;
  FftwBuffer<double> in(fftw_alloc_real(static_cast<std::size_t>(h) * w));
  FftwBuffer<fftw_complex> out(fftw_alloc_complex(static_cast<std::size_t>(h) * half_w));
  std::copy(image.pixels.begin(), image.pixels.end(), in.get());
  fftw_execute_dft_r2c(plan_cache().get(h, w), in.get(), out.get());

  GrayImage power(w, h);
  for (int u = 0; u < h; ++u) {
    for (int v = 0; v < w; ++v) {
      // Columns past the half spectrum are the conjugates of (-u, -v).
      const bool direct = v < half_w;
      const int su = direct ? u : (h - u) % h;
      const int sv = direct ? v : w - v;
      const fftw_complex& c = out[static_cast<std::size_t>(su) * half_w + sv];
      const double p = c[0] * c[0] + c[1] * c[1];
      const int x = signed_frequency(v, w) + w / 2;
      const int y = signed_frequency(u, h) + h / 2;
      power(x, y) = p;
    }
  }
  return power;
}

PowerSpectrum radial_profile(const GrayImage& centered_power) {
  const int h = centered_power.height;
  const int w = centered_power.width;
  const int k_max = std::min(h, w) / 2;
  PowerSpectrum spectrum;
  spectrum.bins.assign(static_cast<std::size_t>(k_max) + 1, 0.0);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const int k = radial_bin(x - w / 2, y - h / 2);
      if (k <= k_max) spectrum.bins[static_cast<std::size_t>(k)] += centered_power(x, y);
    }
  }
  return spectrum;
}

PowerSpectrum radial_power_spectrum(const GrayImage& image) {
  return radial_profile(centered_power_spectrum(image));
}

PowerSpectrum radial_power_spectrum(const RgbImage& image) { return radial_power_spectrum(to_gray(image)); }

int frequency_cutoff(const PowerSpectrum& spectrum) {
  const double total = spectrum.total();
  if (!(total > 0.0) || !std::isfinite(total)) {
    throw ScoreError("spectrum has no energy; frequency cutoff undefined");
  }
  // Energies that split exactly in half in exact arithmetic land a few ulps either
  // side after the FFT; treat those as reaching the midpoint.
  const double half = 0.5 * total * (1.0 - kCutoffSlack);
  double cumulative = 0.0;
  for (std::size_t k = 0; k < spectrum.bins.size(); ++k) {
    cumulative += spectrum.bins[k];
    if (cumulative >= half) return static_cast<int>(k);
  }
  return spectrum.k_max();
}

}  // namespace ptd
