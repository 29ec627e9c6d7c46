#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <map>
#include <set>

#include "ser/audio_io.h"
#include "ser/dataset.h"
#include "ser/error.h"
#include "test_util.h"

namespace ser {
namespace {

Manifest flat_manifest(const std::map<std::string, int>& per_label) {
  Manifest m;
  for (const auto& [label, n] : per_label)
    for (int i = 0; i < n; ++i) {
      const std::string id = label + "_" + std::to_string(i);
      m.entries.push_back({id, id, id + ".wav", label, Split::kUnassigned, std::nullopt});
    }
  m.normalize();
  return m;
}

// `parents` utterances per label with `children` augmented items each.
Manifest augmented_manifest(const std::vector<std::string>& labels, int parents,
                            int children) {
  Manifest m;
  for (const auto& label : labels)
    for (int p = 0; p < parents; ++p) {
      const std::string parent = label + "_" + std::to_string(p);
      for (int k = 0; k < children; ++k) {
        const std::string id = parent + "_aug" + std::to_string(k);
        m.entries.push_back({id, parent, id + ".png", label, Split::kUnassigned,
                             Augmentation{2.0, 1.0}});
      }
    }
  m.normalize();
  return m;
}

int count(const Manifest& m, Split s) {
  return static_cast<int>(m.in_split(s).size());
}

TEST(SplitSpec, Validation) {
  SplitSpec s;
  EXPECT_NO_THROW(s.validate());
  s.train = 0.8;
  EXPECT_THROW(s.validate(), Error);
  s = {};
  s.test = 0.0;
  s.train = 0.85;
  EXPECT_THROW(s.validate(), Error);
  EXPECT_EQ(split_mode_from_string("random-item"), SplitMode::kRandomItem);
  EXPECT_EQ(split_mode_from_string("grouped"), SplitMode::kGroupedByParent);
  EXPECT_THROW(split_mode_from_string("kfold"), Error);
}

TEST(AssignSplits, HundredItemsSplitExactly) {
  const auto m = flat_manifest({{"a", 25}, {"b", 25}, {"c", 25}, {"d", 25}});
  for (bool stratify : {true, false}) {
    SplitSpec spec;
    spec.mode = SplitMode::kRandomItem;
    spec.stratify = stratify;
    const auto out = assign_splits(m, spec);
    EXPECT_EQ(count(out, Split::kTrain), 70);
    EXPECT_EQ(count(out, Split::kVal), 15);
    EXPECT_EQ(count(out, Split::kTest), 15);
    EXPECT_EQ(count(out, Split::kUnassigned), 0);
  }
}

TEST(AssignSplits, StratumCountsWithinOneOfProportional) {
  const std::map<std::string, int> sizes{{"a", 25}, {"b", 25}, {"c", 25}, {"d", 25},
                                         {"e", 7},  {"f", 13}, {"g", 101}};
  SplitSpec spec;
  spec.mode = SplitMode::kRandomItem;
  const auto counts = split_counts(assign_splits(flat_manifest(sizes), spec));
  const double frac[3] = {0.70, 0.15, 0.15};
  for (const auto& [label, c] : counts)
    for (int k = 0; k < 3; ++k)
      EXPECT_LE(std::abs(c[k] - sizes.at(label) * frac[k]), 1.0) << label << " " << k;
}

TEST(AssignSplits, AngerTestSupportMatchesFirstExperiment) {
  // Per-emotion original counts of the 8-class IEMOCAP corpus.
  const auto m = flat_manifest({{"anger", 1103},
                                {"happiness", 595},
                                {"sadness", 1084},
                                {"neutral", 1708},
                                {"frustration", 1849},
                                {"excitement", 1041},
                                {"surprise", 107},
                                {"fear", 40}});
  SplitSpec spec;
  spec.mode = SplitMode::kRandomItem;
  const auto counts = split_counts(assign_splits(m, spec));
  EXPECT_LE(std::abs(counts.at("anger")[2] - 166), 1);
  EXPECT_EQ(counts.at("anger")[0] + counts.at("anger")[1] + counts.at("anger")[2], 1103);
}

TEST(AssignSplits, DeterministicAndOrderIndependent) {
  auto m = augmented_manifest({"x", "y"}, 20, 3);
  SplitSpec spec;
  spec.mode = SplitMode::kRandomItem;
  spec.seed = 17;
  const auto a = assign_splits(m, spec);
  std::reverse(m.entries.begin(), m.entries.end());
  const auto b = assign_splits(m, spec);
  EXPECT_EQ(a.entries, b.entries);
  spec.seed = 18;
  EXPECT_NE(assign_splits(m, spec).entries, a.entries);
}

TEST(AssignSplits, GroupedKeepsSiblingsTogether) {
  const auto m = augmented_manifest({"a", "b", "c", "d"}, 25, 8);
  SplitSpec spec;
  spec.seed = 3;
  const auto out = assign_splits(m, spec);
  EXPECT_EQ(count_straddling_parents(out), 0);
  std::map<std::string, std::set<Split>> splits;
  for (const auto& e : out.entries) splits[e.parent_id].insert(e.split);
  for (const auto& [parent, s] : splits) EXPECT_EQ(s.size(), 1u) << parent;
  // 100 parents -> 70/15/15 parents -> 560/120/120 items
  EXPECT_EQ(count(out, Split::kTrain), 560);
  EXPECT_EQ(count(out, Split::kVal), 120);
  EXPECT_EQ(count(out, Split::kTest), 120);
}

TEST(AssignSplits, RandomItemLeaksSiblings) {
  const auto m = augmented_manifest({"a", "b", "c", "d"}, 25, 8);
  SplitSpec spec;
  spec.mode = SplitMode::kRandomItem;
  EXPECT_GE(count_straddling_parents(assign_splits(m, spec)), 1);
}

TEST(AssignSplits, LabelTooSmall) {
  const auto m = flat_manifest({{"a", 10}, {"b", 2}});
  SplitSpec spec;
  spec.mode = SplitMode::kRandomItem;
  try {
    assign_splits(m, spec);
    FAIL();
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("label too small"), std::string::npos);
  }
}

TEST(AssignSplits, ResplitMustBeExplicit) {
  const auto m = flat_manifest({{"a", 10}, {"b", 10}});
  SplitSpec spec;
  const auto once = assign_splits(m, spec);
  EXPECT_THROW(assign_splits(once, spec), Error);
  EXPECT_EQ(assign_splits(once, spec, /*resplit=*/true).entries, once.entries);
}

TEST(BuildManifest, CatalogsLabelsAndSkipsUnmatched) {
  testing::TempDir dir("catalog");
  SynthOptions opt;
  opt.utterances_per_class = 25;
  opt.duration_s = 0.05;
  synth_corpus(default_synth_specs(), opt, dir.str());
  std::filesystem::create_directories(dir.path() / "extra");
  AudioClip clip{std::vector<double>(100, 0.0), 16000, "x"};
  write_wav(dir.str("extra/unlabeled_000.wav"), clip);
  std::ofstream(dir.str("notes.txt")) << "ignored";

  const auto r = build_manifest(dir.str(), prefix_rules({"anger", "happiness", "neutral", "sadness"}));
  EXPECT_EQ(r.manifest.entries.size(), 100u);
  ASSERT_EQ(r.skipped.size(), 1u);
  EXPECT_NE(r.skipped[0].find("unlabeled_000.wav"), std::string::npos);
  EXPECT_EQ(r.manifest.labels.names(),
            (std::vector<std::string>{"anger", "happiness", "neutral", "sadness"}));
  for (const auto& [label, c] : split_counts(r.manifest)) EXPECT_EQ(c[3], 25) << label;
}

TEST(BuildManifest, DuplicateIdsAndEmptyCorpus) {
  testing::TempDir dir("dup");
  AudioClip clip{std::vector<double>(100, 0.0), 16000, "x"};
  std::filesystem::create_directories(dir.path() / "a");
  std::filesystem::create_directories(dir.path() / "b");
  write_wav(dir.str("a/anger_001.wav"), clip);
  write_wav(dir.str("b/anger_001.wav"), clip);
  EXPECT_THROW(build_manifest(dir.str(), prefix_rules({"anger"})), Error);
  try {
    build_manifest(dir.str(), prefix_rules({"sadness"}));
    FAIL();
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("empty corpus"), std::string::npos);
  }
}

TEST(Manifest, JsonlRoundTripAndValidation) {
  testing::TempDir dir("manifest");
  auto m = augmented_manifest({"a", "b"}, 2, 2);
  m.entries[0].split = Split::kTest;
  m.entries[1].augmentation.reset();
  write_manifest(dir.str("m.jsonl"), m);
  const auto back = read_manifest(dir.str("m.jsonl"));
  EXPECT_EQ(back.entries, m.entries);
  EXPECT_EQ(back.labels, m.labels);
  for (const auto& e : m.entries) EXPECT_EQ(validate_manifest_row(to_json(e)), "");
  auto bad = to_json(m.entries[0]);
  bad["split"] = "holdout";
  EXPECT_NE(validate_manifest_row(bad), "");
  bad = to_json(m.entries[0]);
  bad.erase("parent_id");
  EXPECT_NE(validate_manifest_row(bad), "");
  bad = to_json(m.entries[0]);
  bad["extra"] = 1;
  EXPECT_NE(validate_manifest_row(bad), "");
}

TEST(Manifest, DuplicateIdsRejected) {
  auto m = augmented_manifest({"a"}, 1, 2);
  m.entries[1].item_id = m.entries[0].item_id;
  EXPECT_THROW(m.normalize(), Error);
}

TEST(LabelSet, Invariants) {
  EXPECT_THROW(LabelSet(std::vector<std::string>{}), Error);
  EXPECT_THROW(LabelSet({"a", "b", "a"}), Error);
  const LabelSet s({"sad", "ang"});
  EXPECT_EQ(s.index_of("ang"), 1);
  EXPECT_THROW(s.index_of("fear"), Error);
  EXPECT_EQ(LabelSet::from_labels({"b", "a", "b"}).names(),
            (std::vector<std::string>{"a", "b"}));
}

class ExpandTest : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    dir_ = new testing::TempDir("expand");
    SynthOptions opt;
    opt.utterances_per_class = 3;
    opt.duration_s = 0.25;
    originals_ = new Manifest(synth_corpus(default_synth_specs(), opt, dir_->str("wav")));
  }
  static void TearDownTestSuite() {
    delete originals_;
    delete dir_;
  }
  static testing::TempDir* dir_;
  static Manifest* originals_;
};
testing::TempDir* ExpandTest::dir_ = nullptr;
Manifest* ExpandTest::originals_ = nullptr;

TEST_F(ExpandTest, EightChildrenPerOriginal) {
  const auto r = expand_with_augmented(*originals_, ExpandOptions{}, dir_->str("aug"));
  EXPECT_TRUE(r.failures.empty());
  ASSERT_EQ(r.manifest.entries.size(), originals_->entries.size() * 8);
  std::map<std::string, int> per_parent;
  for (const auto& e : r.manifest.entries) {
    ++per_parent[e.parent_id];
    ASSERT_TRUE(e.augmentation.has_value());
    EXPECT_NEAR(e.augmentation->magnification,
                1.0 / (e.augmentation->object_distance - 1.0), 1e-12);
    EXPECT_TRUE(std::filesystem::exists(e.path));
    EXPECT_EQ(e.label, e.parent_id.substr(0, e.parent_id.find('_')));
  }
  for (const auto& o : originals_->entries) EXPECT_EQ(per_parent[o.item_id], 8);
  EXPECT_TRUE(std::filesystem::exists(dir_->str("aug/augment_meta.jsonl")));
  const auto img = read_png(r.manifest.entries[0].path);
  EXPECT_EQ(img.width, 256);
  EXPECT_EQ(img.height, 256);
}

TEST_F(ExpandTest, RerunIsIdentical) {
  const auto a = expand_with_augmented(*originals_, ExpandOptions{}, dir_->str("a1"));
  const auto b = expand_with_augmented(*originals_, ExpandOptions{}, dir_->str("a2"));
  ASSERT_EQ(a.manifest.entries.size(), b.manifest.entries.size());
  for (size_t i = 0; i < a.manifest.entries.size(); ++i) {
    auto ea = a.manifest.entries[i], eb = b.manifest.entries[i];
    EXPECT_EQ(testing::read_bytes(ea.path), testing::read_bytes(eb.path));
    ea.path = eb.path = "";
    EXPECT_EQ(ea, eb);
  }
}

TEST_F(ExpandTest, ChildrenInheritParentSplit) {
  const auto split = assign_splits(*originals_, SplitSpec{});
  const auto r = expand_with_augmented(split, ExpandOptions{}, dir_->str("a3"));
  std::map<std::string, Split> parent_split;
  for (const auto& e : split.entries) parent_split[e.item_id] = e.split;
  for (const auto& e : r.manifest.entries) EXPECT_EQ(e.split, parent_split[e.parent_id]);
}

TEST_F(ExpandTest, FailuresAreRecordedThenAbort) {
  Manifest m = *originals_;
  m.entries[0].path = dir_->str("missing.wav");
  // 1 of 12 fails: recorded, not fatal
  const auto r = expand_with_augmented(m, ExpandOptions{}, dir_->str("a4"));
  ASSERT_EQ(r.failures.size(), 1u);
  EXPECT_EQ(r.manifest.entries.size(), 11u * 8);
  m.entries[1].path = dir_->str("missing2.wav");
  EXPECT_THROW(expand_with_augmented(m, ExpandOptions{}, dir_->str("a5")), Error);
}

TEST_F(ExpandTest, SpectrogramSidecars) {
  Manifest m = *originals_;
  m.entries.resize(2);
  write_spectrograms(m, StftConfig{}, -80.0, dir_->str("spec"));
  const auto img = read_png(dir_->str("spec/" + m.entries[0].item_id + ".png"));
  EXPECT_EQ(img.height, 257);
  EXPECT_EQ(img.width, frame_count(4000, StftConfig{}));
  std::ifstream side(dir_->str("spec/" + m.entries[0].item_id + ".json"));
  const auto j = nlohmann::json::parse(side);
  EXPECT_EQ(j["source_id"], m.entries[0].item_id);
  EXPECT_EQ(j["stft"]["nfft"], 512);
  EXPECT_LT(j["normalization"]["min"].get<double>(), j["normalization"]["max"].get<double>());
}

}  // namespace
}  // namespace ser
