#include "ser/manifest.h"

#include <algorithm>
#include <fstream>
#include <set>

#include "ser/error.h"

namespace ser {

std::string to_string(Split s) {
  switch (s) {
    case Split::kTrain: return "train";
    case Split::kVal: return "val";
    case Split::kTest: return "test";
    case Split::kUnassigned: return "unassigned";
  }
  return "?";
}

Split split_from_string(const std::string& s) {
  if (s == "train") return Split::kTrain;
  if (s == "val") return Split::kVal;
  if (s == "test") return Split::kTest;
  if (s == "unassigned") return Split::kUnassigned;
  throw DataError("unknown split '" + s + "'");
}

LabelSet::LabelSet(std::vector<std::string> names) : names_(std::move(names)) {
  if (names_.empty()) throw DataError("label set is empty");
  std::set<std::string> seen;
  for (const auto& n : names_)
    if (!seen.insert(n).second) throw DataError("duplicate label '" + n + "'");
}

LabelSet LabelSet::from_labels(const std::vector<std::string>& labels) {
  std::set<std::string> unique(labels.begin(), labels.end());
  return LabelSet(std::vector<std::string>(unique.begin(), unique.end()));
}

int LabelSet::index_of(const std::string& name) const {
  auto it = std::find(names_.begin(), names_.end(), name);
  if (it == names_.end()) throw DataError("unknown label '" + name + "'");
  return static_cast<int>(it - names_.begin());
}

bool LabelSet::contains(const std::string& name) const {
  return std::find(names_.begin(), names_.end(), name) != names_.end();
}

void Manifest::normalize() {
  std::set<std::string> ids;
  std::vector<std::string> labels_seen;
  for (const auto& e : entries) {
    if (!ids.insert(e.item_id).second)
      throw DataError("duplicate item_id '" + e.item_id + "'");
    labels_seen.push_back(e.label);
  }
  if (entries.empty()) throw DataError("empty corpus");
  labels = LabelSet::from_labels(labels_seen);
}

std::vector<const ManifestEntry*> Manifest::in_split(Split s) const {
  std::vector<const ManifestEntry*> out;
  for (const auto& e : entries)
    if (e.split == s) out.push_back(&e);
  return out;
}

nlohmann::json to_json(const ManifestEntry& e) {
  nlohmann::json j{{"item_id", e.item_id},
                   {"parent_id", e.parent_id},
                   {"path", e.path},
                   {"label", e.label},
                   {"split", to_string(e.split)}};
  if (e.augmentation)
    j["augmentation"] = {{"u", e.augmentation->object_distance},
                         {"M", e.augmentation->magnification}};
  else
    j["augmentation"] = nullptr;
  return j;
}

std::string validate_manifest_row(const nlohmann::json& j) {
  if (!j.is_object()) return "row is not an object";
  static const std::set<std::string> allowed{"item_id", "parent_id", "path",
                                             "label", "split", "augmentation"};
  for (const auto& [key, _] : j.items())
    if (!allowed.count(key)) return "unexpected field '" + key + "'";
  for (const char* key : {"item_id", "parent_id", "path", "label", "split"}) {
    if (!j.contains(key)) return std::string("missing field '") + key + "'";
    if (!j[key].is_string()) return std::string("field '") + key + "' is not a string";
  }
  if (j["item_id"].get<std::string>().empty()) return "empty item_id";
  if (j["label"].get<std::string>().empty()) return "empty label";
  static const std::set<std::string> splits{"train", "val", "test", "unassigned"};
  if (!splits.count(j["split"].get<std::string>())) return "bad split value";
  if (j.contains("augmentation") && !j["augmentation"].is_null()) {
    const auto& a = j["augmentation"];
    if (!a.is_object() || !a.contains("u") || !a.contains("M") ||
        !a["u"].is_number() || !a["M"].is_number() || a.size() != 2)
      return "augmentation must be {u: number, M: number}";
    if (!(a["M"].get<double>() > 0.0)) return "augmentation M must be > 0";
  }
  return {};
}

ManifestEntry entry_from_json(const nlohmann::json& j) {
  if (const std::string err = validate_manifest_row(j); !err.empty())
    throw DataError("bad manifest row: " + err);
  ManifestEntry e;
  e.item_id = j["item_id"].get<std::string>();
  e.parent_id = j["parent_id"].get<std::string>();
  e.path = j["path"].get<std::string>();
  e.label = j["label"].get<std::string>();
  e.split = split_from_string(j["split"].get<std::string>());
  if (j.contains("augmentation") && !j["augmentation"].is_null())
    e.augmentation = Augmentation{j["augmentation"]["u"].get<double>(),
                                  j["augmentation"]["M"].get<double>()};
  return e;
}

void write_manifest(const std::string& path, const Manifest& m) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write manifest " + path);
  for (const auto& e : m.entries) out << to_json(e).dump() << '\n';
  if (!out) throw DataError("short write to manifest " + path);
}

Manifest read_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open manifest " + path);
  Manifest m;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      m.entries.push_back(entry_from_json(nlohmann::json::parse(line)));
    } catch (const nlohmann::json::exception& e) {
      throw DataError(path + ":" + std::to_string(line_no) + ": " + e.what());
    } catch (const Error& e) {
      throw DataError(path + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  m.normalize();
  return m;
}

}  // namespace ser
