#include "ser/dataset.h"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <random>
#include <set>

#include "ser/audio_io.h"
#include "ser/error.h"

namespace fs = std::filesystem;

namespace ser {

std::vector<LabelRule> prefix_rules(const std::vector<std::string>& labels) {
  std::vector<LabelRule> rules;
  for (const auto& l : labels) rules.push_back({std::regex("^" + l + "_"), l});
  return rules;
}

BuildResult build_manifest(const std::string& dir,
                           const std::vector<LabelRule>& rules) {
  std::error_code ec;
  if (!fs::is_directory(dir, ec)) throw DataError("not a directory: " + dir);
  std::vector<fs::path> files;
  for (const auto& de : fs::recursive_directory_iterator(dir)) {
    if (!de.is_regular_file()) continue;
    std::string ext = de.path().extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), ::tolower);
    if (ext == ".wav") files.push_back(de.path());
  }
  std::sort(files.begin(), files.end());

  BuildResult r;
  std::set<std::string> ids;
  for (const auto& p : files) {
    const std::string name = p.filename().string();
    const LabelRule* match = nullptr;
    for (const auto& rule : rules)
      if (std::regex_search(name, rule.pattern)) {
        match = &rule;
        break;
      }
    if (!match) {
      r.skipped.push_back(p.string());
      continue;
    }
    const std::string id = p.stem().string();
    if (!ids.insert(id).second)
      throw DataError("duplicate item_id '" + id + "' (" + p.string() + ")");
    r.manifest.entries.push_back(
        {id, id, p.string(), match->label, Split::kUnassigned, std::nullopt});
  }
  if (r.manifest.entries.empty()) throw DataError("empty corpus: " + dir);
  r.manifest.normalize();
  return r;
}

std::string to_string(SplitMode m) {
  return m == SplitMode::kRandomItem ? "random_item" : "grouped_by_parent";
}

SplitMode split_mode_from_string(const std::string& s) {
  if (s == "random_item" || s == "random-item") return SplitMode::kRandomItem;
  if (s == "grouped_by_parent" || s == "grouped") return SplitMode::kGroupedByParent;
  throw UsageError("unknown split mode '" + s + "'");
}

void SplitSpec::validate() const {
  for (double f : {train, val, test})
    if (!(f > 0.0 && f < 1.0)) throw UsageError("split fractions must be in (0, 1)");
  if (std::abs(train + val + test - 1.0) > 1e-9)
    throw UsageError("split fractions must sum to 1");
}

namespace {

struct Unit {
  std::vector<size_t> members;  // indices into the sorted entries
};

// True when each row can take row_need more units and each column col_need
// more, at most one unit per open cell (bipartite max-flow).
bool completable(const std::vector<int>& row_need, const std::array<int, 3>& col_need,
                 const std::vector<std::array<int, 3>>& open) {
  const size_t n = row_need.size();
  int want = 0;
  for (int r : row_need) want += r;
  int col_total = 0;
  for (int c : col_need) {
    if (c < 0) return false;
    col_total += c;
  }
  if (want != col_total) return false;
  std::vector<std::array<int, 3>> used(n, {0, 0, 0});
  std::array<int, 3> col_left = col_need;
  std::vector<int> row_left = row_need;
  // Augmenting paths alternate row -> column (unused open cell) and
  // column -> row (used cell).
  auto augment = [&](size_t start) {
    std::vector<int> row_from(n, -2), col_from(3, -1);
    std::vector<size_t> queue{start};
    row_from[start] = -1;
    for (size_t qi = 0; qi < queue.size(); ++qi) {
      const size_t r = queue[qi];
      for (int k = 0; k < 3; ++k) {
        if (!open[r][k] || used[r][k] || col_from[k] != -1) continue;
        col_from[k] = static_cast<int>(r);
        if (col_left[k] > 0) {
          --col_left[k];
          for (int kk = k;;) {
            const size_t rr = static_cast<size_t>(col_from[kk]);
            used[rr][kk] = 1;
            if (row_from[rr] == -1) break;
            const int prev_k = row_from[rr];
            used[rr][prev_k] = 0;
            kk = prev_k;
          }
          return true;
        }
        for (size_t r2 = 0; r2 < n; ++r2)
          if (used[r2][k] && row_from[r2] == -2) {
            row_from[r2] = k;
            queue.push_back(r2);
          }
      }
    }
    return false;
  };
  for (size_t r = 0; r < n; ++r)
    for (; row_left[r] > 0; --row_left[r])
      if (!augment(r)) return false;
  return true;
}

// Integer allocation of each stratum across the three splits: the column
// totals are the largest-remainder rounding of N * fraction, and every cell
// is within one unit of its proportional share.
std::vector<std::array<int, 3>> allocate(const std::vector<int>& sizes,
                                         const std::array<double, 3>& frac) {
  const int total = std::accumulate(sizes.begin(), sizes.end(), 0);
  std::array<int, 3> target{};
  {
    std::array<double, 3> q{};
    int assigned = 0;
    for (int k = 0; k < 3; ++k) {
      q[k] = total * frac[k];
      target[k] = static_cast<int>(std::floor(q[k]));
      assigned += target[k];
    }
    std::array<int, 3> order{0, 1, 2};
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
      return q[a] - std::floor(q[a]) > q[b] - std::floor(q[b]);
    });
    for (int i = 0; assigned < total; ++i, ++assigned) ++target[order[i % 3]];
  }

  const size_t n = sizes.size();
  std::vector<std::array<int, 3>> a(n);
  std::vector<std::array<double, 3>> remainder(n);
  std::vector<int> row_need(n);
  std::array<int, 3> col_need = target;
  for (size_t s = 0; s < n; ++s) {
    row_need[s] = sizes[s];
    for (int k = 0; k < 3; ++k) {
      const double q = sizes[s] * frac[k];
      a[s][k] = static_cast<int>(std::floor(q));
      remainder[s][k] = q - a[s][k];
      row_need[s] -= a[s][k];
      col_need[k] -= a[s][k];
    }
  }
  struct Cell {
    size_t s;
    int k;
    double rem;
  };
  std::vector<Cell> cells;
  for (size_t s = 0; s < n; ++s)
    for (int k = 0; k < 3; ++k) cells.push_back({s, k, remainder[s][k]});
  std::stable_sort(cells.begin(), cells.end(),
                   [](const Cell& x, const Cell& y) { return x.rem > y.rem; });
  // Largest remainders first, keeping a cell only when the still-undecided
  // cells can complete every row and column.
  std::vector<std::array<int, 3>> open(n, {1, 1, 1});
  for (const Cell& c : cells) {
    open[c.s][c.k] = 0;
    if (row_need[c.s] == 0 || col_need[c.k] <= 0) continue;
    --row_need[c.s];
    --col_need[c.k];
    if (completable(row_need, col_need, open)) {
      ++a[c.s][c.k];
    } else {
      ++row_need[c.s];
      ++col_need[c.k];
    }
  }
  // Pathological leftovers: keep row sums exact.
  for (size_t s = 0; s < n; ++s)
    for (; row_need[s] > 0; --row_need[s]) ++a[s][0];
  return a;
}

}  // namespace

Manifest assign_splits(const Manifest& manifest, const SplitSpec& spec,
                       bool resplit) {
  spec.validate();
  if (!resplit)
    for (const auto& e : manifest.entries)
      if (e.split != Split::kUnassigned)
        throw UsageError("manifest already has split assignments; re-split "
                         "must be requested explicitly");

  Manifest out = manifest;
  std::sort(out.entries.begin(), out.entries.end(),
            [](const ManifestEntry& a, const ManifestEntry& b) {
              return a.item_id < b.item_id;
            });
  out.normalize();

  // Units are items or parents; std::map keeps parents in id order.
  std::vector<Unit> units;
  std::vector<std::string> unit_label;
  if (spec.mode == SplitMode::kRandomItem) {
    for (size_t i = 0; i < out.entries.size(); ++i) {
      units.push_back({{i}});
      unit_label.push_back(out.entries[i].label);
    }
  } else {
    std::map<std::string, size_t> by_parent;
    for (size_t i = 0; i < out.entries.size(); ++i) {
      const auto& e = out.entries[i];
      auto [it, inserted] = by_parent.emplace(e.parent_id, units.size());
      if (inserted) {
        units.push_back({});
        unit_label.push_back(e.label);
      } else if (unit_label[it->second] != e.label) {
        throw DataError("parent '" + e.parent_id + "' has children with "
                        "different labels");
      }
      units[it->second].members.push_back(i);
    }
  }

  std::vector<std::vector<size_t>> strata;
  std::vector<std::string> stratum_name;
  if (spec.stratify) {
    for (const auto& label : out.labels.names()) {
      strata.emplace_back();
      stratum_name.push_back(label);
      for (size_t u = 0; u < units.size(); ++u)
        if (unit_label[u] == label) strata.back().push_back(u);
      if (strata.back().size() < 3)
        throw DataError("label too small: '" + label + "' has " +
                        std::to_string(strata.back().size()) +
                        " units, need at least 3 for train/val/test");
    }
  } else {
    strata.emplace_back(units.size());
    std::iota(strata.back().begin(), strata.back().end(), size_t{0});
    stratum_name.push_back("all");
  }

  std::vector<int> sizes;
  for (const auto& s : strata) sizes.push_back(static_cast<int>(s.size()));
  const auto alloc = allocate(sizes, {spec.train, spec.val, spec.test});

  std::mt19937_64 rng(spec.seed);
  for (size_t s = 0; s < strata.size(); ++s) {
    std::shuffle(strata[s].begin(), strata[s].end(), rng);
    size_t pos = 0;
    for (int k = 0; k < 3; ++k) {
      const Split split = k == 0 ? Split::kTrain : k == 1 ? Split::kVal : Split::kTest;
      for (int c = 0; c < alloc[s][k]; ++c, ++pos)
        for (size_t member : units[strata[s][pos]].members)
          out.entries[member].split = split;
    }
  }
  return out;
}

int count_straddling_parents(const Manifest& manifest) {
  std::map<std::string, std::set<Split>> splits;
  for (const auto& e : manifest.entries) splits[e.parent_id].insert(e.split);
  int n = 0;
  for (const auto& [_, s] : splits) n += s.size() > 1;
  return n;
}

std::map<std::string, std::array<int, 4>> split_counts(const Manifest& m) {
  std::map<std::string, std::array<int, 4>> counts;
  for (const auto& label : m.labels.names()) counts[label] = {0, 0, 0, 0};
  for (const auto& e : m.entries) ++counts[e.label][static_cast<int>(e.split)];
  return counts;
}

void write_split_summary(const std::string& path, const Manifest& m) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path);
  out << "label,train,val,test,unassigned\n";
  for (const auto& [label, c] : split_counts(m))
    out << label << ',' << c[0] << ',' << c[1] << ',' << c[2] << ',' << c[3]
        << '\n';
}

ExpandResult expand_with_augmented(const Manifest& manifest,
                                   const ExpandOptions& opt,
                                   const std::string& out_dir) {
  opt.stft.validate();
  opt.lens.validate();
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) throw DataError("cannot create " + out_dir + ": " + ec.message());

  std::vector<const ManifestEntry*> originals;
  for (const auto& e : manifest.entries)
    if (!e.augmentation && e.parent_id == e.item_id) originals.push_back(&e);
  if (originals.empty()) throw DataError("empty corpus: no original entries");

  const std::string cfg_hash = lens_config_hash(opt.lens);
  std::vector<std::vector<ManifestEntry>> children(originals.size());
  std::vector<std::vector<std::string>> meta(originals.size());
  std::vector<std::string> failure(originals.size());

#pragma omp parallel for schedule(dynamic)
  for (size_t i = 0; i < originals.size(); ++i) {
    const ManifestEntry& parent = *originals[i];
    try {
      AudioClip clip = load_wav(parent.path);
      clip.source_id = parent.item_id;
      const GrayImage base = spectrogram_image(clip, opt.stft, opt.db_floor);
      for (auto& aug : augment_image(base, parent.item_id, opt.lens)) {
        const std::string id =
            parent.item_id + "_aug" + std::to_string(aug.augmentation_index);
        const std::string path = (fs::path(out_dir) / (id + ".png")).string();
        write_png(path, aug.image);
        children[i].push_back(
            {id, parent.item_id, path, parent.label, parent.split,
             Augmentation{aug.object_distance, aug.magnification}});
        meta[i].push_back(nlohmann::json{{"item_id", id},
                                         {"parent_id", parent.item_id},
                                         {"augmentation_index", aug.augmentation_index},
                                         {"u", aug.object_distance},
                                         {"M", aug.magnification},
                                         {"lens_cfg_hash", cfg_hash}}
                              .dump());
      }
    } catch (const Error& e) {
      failure[i] = parent.item_id + ": " + e.what();
      children[i].clear();
      meta[i].clear();
    }
  }

  ExpandResult r;
  for (const auto& f : failure)
    if (!f.empty()) r.failures.push_back(f);
  if (r.failures.size() * 10 > originals.size())
    throw DataError("augmentation aborted: " + std::to_string(r.failures.size()) +
                    " of " + std::to_string(originals.size()) +
                    " originals failed; first: " + r.failures.front());

  std::ofstream meta_out(fs::path(out_dir) / "augment_meta.jsonl");
  if (!meta_out) throw DataError("cannot write augment_meta.jsonl in " + out_dir);
  for (size_t i = 0; i < originals.size(); ++i) {
    for (auto& c : children[i]) r.manifest.entries.push_back(std::move(c));
    for (const auto& line : meta[i]) meta_out << line << '\n';
  }
  std::sort(r.manifest.entries.begin(), r.manifest.entries.end(),
            [](const ManifestEntry& a, const ManifestEntry& b) {
              return a.item_id < b.item_id;
            });
  r.manifest.normalize();
  return r;
}

void write_spectrograms(const Manifest& manifest, const StftConfig& cfg,
                        double db_floor, const std::string& out_dir) {
  cfg.validate();
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) throw DataError("cannot create " + out_dir + ": " + ec.message());
  std::vector<std::string> errors(manifest.entries.size());

#pragma omp parallel for schedule(dynamic)
  for (size_t i = 0; i < manifest.entries.size(); ++i) {
    const ManifestEntry& e = manifest.entries[i];
    try {
      AudioClip clip = load_wav(e.path);
      clip.source_id = e.item_id;
      const Spectrogram s = power_to_db(stft(clip, cfg), db_floor, cfg);
      const GrayImage img = render_image(s);
      const fs::path base = fs::path(out_dir) / e.item_id;
      write_png(base.string() + ".png", img);
      std::ofstream side(base.string() + ".json");
      side << nlohmann::json{{"source_id", e.item_id},
                             {"stft", to_json(cfg)},
                             {"db_floor", db_floor},
                             {"normalization", {{"min", s.min_value()},
                                                {"max", s.max_value()}}},
                             {"width", img.width},
                             {"height", img.height}}
                  .dump(2)
           << '\n';
    } catch (const Error& err) {
      errors[i] = err.what();
    }
  }
  for (const auto& e : errors)
    if (!e.empty()) throw DataError(e);
}

}  // namespace ser
