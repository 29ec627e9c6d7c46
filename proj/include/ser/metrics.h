#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "ser/manifest.h"

namespace ser {

// Rows are true labels, columns predicted labels.
class ConfusionMatrix {
 public:
  ConfusionMatrix() = default;
  explicit ConfusionMatrix(LabelSet labels);
  ConfusionMatrix(LabelSet labels, std::vector<std::vector<std::int64_t>> counts);

  const LabelSet& labels() const { return labels_; }
  int size() const { return labels_.size(); }
  std::int64_t at(int truth, int predicted) const {
    return counts_[static_cast<size_t>(truth) * size() + predicted];
  }
  void add(int truth, int predicted, std::int64_t n = 1);

  std::int64_t total() const;
  std::int64_t trace() const;
  std::int64_t support(int truth) const;  // row sum

  std::vector<std::vector<std::int64_t>> rows() const;
  friend bool operator==(const ConfusionMatrix&, const ConfusionMatrix&) = default;

 private:
  LabelSet labels_;
  std::vector<std::int64_t> counts_;
};

// trace / total; throws DataError on an empty matrix.
double overall_accuracy(const ConfusionMatrix& cm);

// diag / row sum per class; nullopt for zero-support classes.
std::vector<std::optional<double>> per_class_accuracy(const ConfusionMatrix& cm);

// Elementwise sum; throws DataError when label sets differ.
ConfusionMatrix merge(const std::vector<ConfusionMatrix>& cms);

// CSV with a header row and a leading column of label names.
std::string to_csv(const ConfusionMatrix& cm);
ConfusionMatrix confusion_from_csv(const std::string& text);
ConfusionMatrix load_confusion_csv(const std::string& path);

// "41.54%"
std::string format_percent(double fraction);

// Fixed-width table with per-class and overall accuracy as percentages.
std::string summary_text(const ConfusionMatrix& cm);

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0.0;
  double val_accuracy = 0.0;
};

inline constexpr int kReportSchemaVersion = 1;

nlohmann::json report_json(const ConfusionMatrix& cm,
                           const std::vector<EpochRecord>& history);
// Empty string when the document matches the report schema.
std::string validate_report(const nlohmann::json& j);

std::string history_csv(const std::vector<EpochRecord>& history);
// Validation accuracy and training loss against epoch.
std::string training_curve_svg(const std::vector<EpochRecord>& history);

// Writes report.json, confusion.csv, summary.txt and, when history is
// non-empty, history.csv and training_curve.svg.
void write_report(const ConfusionMatrix& cm,
                  const std::vector<EpochRecord>& history,
                  const std::string& out_dir);

}  // namespace ser
