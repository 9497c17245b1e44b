#include "ptd/tav.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>

#include "ptd/errors.hpp"

namespace ptd {

std::vector<std::string> load_labels(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open label file " + path.string());
  std::vector<std::string> labels;
  for (std::string line; std::getline(in, line);) {
    while (!line.empty() && (line.back() == '\r' || line.back() == ' ')) line.pop_back();
    if (!line.empty()) labels.push_back(line);
  }
  return labels;
}

AssociationTable compute_tav(std::span<const ImageRecord> records, const FeatureMatrix& probs,
                             std::vector<std::string> object_labels, std::span<const std::string> classes) {
  if (object_labels.size() != probs.dim()) {
    throw ArgumentError(std::to_string(object_labels.size()) + " object labels for " + std::to_string(probs.dim()) +
                        " probability columns");
  }
  std::map<std::string, std::pair<std::vector<double>, std::size_t>> sums;
  for (const auto& c : classes) sums.try_emplace(c, std::vector<double>(probs.dim(), 0.0), 0);
  for (const auto& r : records) {
    if (r.flagged) continue;
    const auto row = probs.row_for(r.image_id);
    double total = 0.0;
    for (float p : row) {
      if (!(p >= 0.0f && p <= 1.0f)) {
        throw ArgumentError("probability row for image " + std::to_string(r.image_id) + " leaves [0, 1]");
      }
      total += p;
    }
    if (std::abs(total - 1.0) > 1e-5) {
      throw ArgumentError("probability row for image " + std::to_string(r.image_id) + " sums to " +
                          std::to_string(total));
    }
    auto& [sum, count] = sums.try_emplace(r.texture_class, std::vector<double>(probs.dim(), 0.0), 0).first->second;
    for (std::size_t j = 0; j < row.size(); ++j) sum[j] += row[j];
    ++count;
  }

  AssociationTable table;
  table.objects = std::move(object_labels);
  for (auto& [cls, entry] : sums) {
    auto& [sum, count] = entry;
    if (count == 0) {
      table.warnings.push_back("texture class '" + cls + "' has no images; row omitted");
      continue;
    }
    for (double& v : sum) v /= static_cast<double>(count);
    table.textures.push_back(cls);
    table.values.push_back(std::move(sum));
    table.image_counts.push_back(count);
  }
  return table;
}

std::vector<std::vector<Association>> top_k_associations(const AssociationTable& table, std::size_t k) {
  if (k > table.objects.size()) {
    throw ArgumentError("k = " + std::to_string(k) + " exceeds " + std::to_string(table.objects.size()) +
                        " object classes");
  }
  std::vector<std::vector<Association>> out;
  out.reserve(table.values.size());
  std::vector<std::size_t> order(table.objects.size());
  for (const auto& row : table.values) {
    for (std::size_t j = 0; j < order.size(); ++j) order[j] = j;
    std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k), order.end(),
                      [&](std::size_t a, std::size_t b) {
                        if (row[a] != row[b]) return row[a] > row[b];
                        return table.objects[a] < table.objects[b];
                      });
    std::vector<Association> top;
    for (std::size_t i = 0; i < k; ++i) top.push_back({table.objects[order[i]], row[order[i]]});
    out.push_back(std::move(top));
  }
  return out;
}

}  // namespace ptd
