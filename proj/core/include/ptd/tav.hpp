#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "ptd/dataset_store.hpp"
#include "ptd/manifest.hpp"

namespace ptd {

/// Texture-object association values: row t is the mean classifier
/// probability vector over the images of texture class t.
struct AssociationTable {
  std::vector<std::string> textures;  // sorted
  std::vector<std::string> objects;   // one label per probability column
  std::vector<std::vector<double>> values;
  std::vector<std::size_t> image_counts;
  std::vector<std::string> warnings;

  double at(std::size_t texture, std::size_t object) const { return values[texture][object]; }
};

/// Reads one label per line. Blank lines are skipped.
std::vector<std::string> load_labels(const std::filesystem::path& path);

/// Averages the probability rows of the unflagged records per texture
/// class. `classes`, when non-empty, names texture classes that must appear;
/// any with no images yields a warning instead of a row.
/// Throws ArgumentError if a row leaves the simplex (entries outside [0,1]
/// or a sum off by more than 1e-5) or the label count differs from the dim.
AssociationTable compute_tav(std::span<const ImageRecord> records, const FeatureMatrix& probs,
                             std::vector<std::string> object_labels, std::span<const std::string> classes = {});

struct Association {
  std::string object;
  double value = 0.0;
};

/// Per texture row, the k largest values; ties go to the alphabetically first label.
std::vector<std::vector<Association>> top_k_associations(const AssociationTable& table, std::size_t k = 3);

}  // namespace ptd
