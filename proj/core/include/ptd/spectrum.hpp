#pragma once

#include <cstddef>
#include <vector>

#include "ptd/image.hpp"

namespace ptd {

/// Radially binned spectral energy P(k), k = 0..k_max.
struct PowerSpectrum {
  std::vector<double> bins;

  int k_max() const noexcept { return static_cast<int>(bins.size()) - 1; }
  double total() const;
};

/// Squared DFT magnitudes, shifted so zero frequency sits at (W/2, H/2).
/// Element (x, y) holds the power at frequency (x - W/2, y - H/2).
GrayImage centered_power_spectrum(const GrayImage& image);

/// Centered signed frequency of DFT index `i` for a transform of length `n`.
inline int signed_frequency(int i, int n) { return i <= (n - 1) / 2 ? i : i - n; }

/// Ring index of a frequency pair: its distance from DC rounded to the nearest integer.
int radial_bin(int fx, int fy);

/// Bins a centered power map by integer-rounded radius. Components whose
/// ring lies beyond k_max = floor(min(H, W) / 2) are discarded.
PowerSpectrum radial_profile(const GrayImage& centered_power);

/// Requires H, W >= 2. Works on the luma image.
PowerSpectrum radial_power_spectrum(const GrayImage& image);
PowerSpectrum radial_power_spectrum(const RgbImage& image);

inline constexpr double kCutoffSlack = 1e-10;

/// Smallest c with P(0) + ... + P(c) >= half the total energy, the half
/// relaxed by kCutoffSlack (relative) to absorb rounding.
/// Throws ScoreError when the spectrum carries no energy.
int frequency_cutoff(const PowerSpectrum& spectrum);

}  // namespace ptd
