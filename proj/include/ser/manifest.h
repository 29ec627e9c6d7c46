#pragma once

#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

namespace ser {

enum class Split { kTrain, kVal, kTest, kUnassigned };

std::string to_string(Split s);
Split split_from_string(const std::string& s);

// Ordered emotion names; a label's class index is its position.
class LabelSet {
 public:
  LabelSet() = default;
  explicit LabelSet(std::vector<std::string> names);

  // Sorted unique labels.
  static LabelSet from_labels(const std::vector<std::string>& labels);

  int index_of(const std::string& name) const;  // throws DataError if absent
  bool contains(const std::string& name) const;
  const std::vector<std::string>& names() const { return names_; }
  int size() const { return static_cast<int>(names_.size()); }

  friend bool operator==(const LabelSet&, const LabelSet&) = default;

 private:
  std::vector<std::string> names_;
};

struct Augmentation {
  double object_distance = 0.0;  // u, units of F
  double magnification = 0.0;    // M
  friend bool operator==(const Augmentation&, const Augmentation&) = default;
};

struct ManifestEntry {
  std::string item_id;
  std::string parent_id;
  std::string path;
  std::string label;
  Split split = Split::kUnassigned;
  std::optional<Augmentation> augmentation;

  friend bool operator==(const ManifestEntry&, const ManifestEntry&) = default;
};

struct Manifest {
  LabelSet labels;
  std::vector<ManifestEntry> entries;

  // Rebuilds `labels` from the entries and checks item_id uniqueness.
  void normalize();
  std::vector<const ManifestEntry*> in_split(Split s) const;
};

nlohmann::json to_json(const ManifestEntry& e);
ManifestEntry entry_from_json(const nlohmann::json& j);

void write_manifest(const std::string& path, const Manifest& m);
Manifest read_manifest(const std::string& path);

// Structural check of one JSONL row against the manifest schema. Returns an
// empty string when valid, else the first violation.
std::string validate_manifest_row(const nlohmann::json& j);

}  // namespace ser
