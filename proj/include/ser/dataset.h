#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <regex>
#include <string>
#include <vector>

#include "ser/dsp.h"
#include "ser/lens.h"
#include "ser/manifest.h"

namespace ser {

struct LabelRule {
  std::regex pattern;  // matched against the file name (regex_search)
  std::string label;
};

// Rules mapping `<label>_...` file names onto `label`.
std::vector<LabelRule> prefix_rules(const std::vector<std::string>& labels);

struct BuildResult {
  Manifest manifest;
  std::vector<std::string> skipped;  // files matching no rule
};

// Catalogs every .wav below dir. item_id is the file stem.
BuildResult build_manifest(const std::string& dir,
                           const std::vector<LabelRule>& rules);

enum class SplitMode { kRandomItem, kGroupedByParent };

std::string to_string(SplitMode m);
SplitMode split_mode_from_string(const std::string& s);

struct SplitSpec {
  double train = 0.70;
  double val = 0.15;
  double test = 0.15;
  SplitMode mode = SplitMode::kGroupedByParent;
  bool stratify = true;
  std::uint64_t seed = 0;

  void validate() const;
};

// Deterministic in (entry set, spec); entry order in the input is irrelevant.
// The result is sorted by item_id. Throws UsageError when entries already
// carry a split and `resplit` is false.
Manifest assign_splits(const Manifest& manifest, const SplitSpec& spec,
                       bool resplit = false);

// Number of parents whose items occupy more than one split.
int count_straddling_parents(const Manifest& manifest);

// label -> {train, val, test, unassigned} counts.
std::map<std::string, std::array<int, 4>> split_counts(const Manifest& m);
void write_split_summary(const std::string& path, const Manifest& m);

struct ExpandOptions {
  StftConfig stft;
  LensConfig lens;
  double db_floor = kDefaultDbFloor;
};

struct ExpandResult {
  Manifest manifest;
  std::vector<std::string> failures;  // "<item_id>: <reason>"
};

// Runs the lens augmentation on every original entry and writes
// `<parent_id>_aug<k>.png` plus `augment_meta.jsonl` into out_dir. Children
// inherit the parent's split. Aborts with DataError when more than 10% of the
// originals fail.
ExpandResult expand_with_augmented(const Manifest& manifest,
                                   const ExpandOptions& opt,
                                   const std::string& out_dir);

// Renders one spectrogram PNG plus a JSON sidecar per entry.
void write_spectrograms(const Manifest& manifest, const StftConfig& cfg,
                        double db_floor, const std::string& out_dir);

}  // namespace ser
