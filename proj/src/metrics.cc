#include "ser/metrics.h"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "ser/error.h"

namespace ser {

ConfusionMatrix::ConfusionMatrix(LabelSet labels)
    : labels_(std::move(labels)),
      counts_(static_cast<size_t>(labels_.size()) * labels_.size(), 0) {}

ConfusionMatrix::ConfusionMatrix(LabelSet labels,
                                 std::vector<std::vector<std::int64_t>> counts)
    : ConfusionMatrix(std::move(labels)) {
  if (counts.size() != static_cast<size_t>(size()))
    throw DataError("confusion matrix must be square with one row per label");
  for (int r = 0; r < size(); ++r) {
    if (counts[r].size() != static_cast<size_t>(size()))
      throw DataError("confusion matrix must be square with one row per label");
    for (int c = 0; c < size(); ++c) add(r, c, counts[r][c]);
  }
}

void ConfusionMatrix::add(int truth, int predicted, std::int64_t n) {
  if (truth < 0 || truth >= size() || predicted < 0 || predicted >= size())
    throw DataError("confusion matrix index out of range");
  if (n < 0) throw DataError("confusion counts must be non-negative");
  counts_[static_cast<size_t>(truth) * size() + predicted] += n;
}

std::int64_t ConfusionMatrix::total() const {
  std::int64_t t = 0;
  for (auto c : counts_) t += c;
  return t;
}

std::int64_t ConfusionMatrix::trace() const {
  std::int64_t t = 0;
  for (int i = 0; i < size(); ++i) t += at(i, i);
  return t;
}

std::int64_t ConfusionMatrix::support(int truth) const {
  std::int64_t t = 0;
  for (int c = 0; c < size(); ++c) t += at(truth, c);
  return t;
}

std::vector<std::vector<std::int64_t>> ConfusionMatrix::rows() const {
  std::vector<std::vector<std::int64_t>> r(size());
  for (int i = 0; i < size(); ++i)
    for (int c = 0; c < size(); ++c) r[i].push_back(at(i, c));
  return r;
}

double overall_accuracy(const ConfusionMatrix& cm) {
  const auto total = cm.total();
  if (total == 0) throw DataError("overall accuracy of an empty confusion matrix");
  return static_cast<double>(cm.trace()) / static_cast<double>(total);
}

std::vector<std::optional<double>> per_class_accuracy(const ConfusionMatrix& cm) {
  std::vector<std::optional<double>> acc;
  for (int i = 0; i < cm.size(); ++i) {
    const auto s = cm.support(i);
    if (s == 0)
      acc.push_back(std::nullopt);
    else
      acc.push_back(static_cast<double>(cm.at(i, i)) / static_cast<double>(s));
  }
  return acc;
}

ConfusionMatrix merge(const std::vector<ConfusionMatrix>& cms) {
  if (cms.empty()) throw DataError("merge of zero confusion matrices");
  ConfusionMatrix out(cms.front().labels());
  for (const auto& cm : cms) {
    if (!(cm.labels() == out.labels()))
      throw DataError("cannot merge confusion matrices with different labels");
    for (int r = 0; r < cm.size(); ++r)
      for (int c = 0; c < cm.size(); ++c) out.add(r, c, cm.at(r, c));
  }
  return out;
}

std::string to_csv(const ConfusionMatrix& cm) {
  std::ostringstream out;
  out << "true\\pred";
  for (const auto& n : cm.labels().names()) out << ',' << n;
  out << '\n';
  for (int r = 0; r < cm.size(); ++r) {
    out << cm.labels().names()[r];
    for (int c = 0; c < cm.size(); ++c) out << ',' << cm.at(r, c);
    out << '\n';
  }
  return out.str();
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) {
    cell.erase(0, cell.find_first_not_of(" \t\r"));
    cell.erase(cell.find_last_not_of(" \t\r") + 1);
    cells.push_back(cell);
  }
  return cells;
}

}  // namespace

ConfusionMatrix confusion_from_csv(const std::string& text) {
  std::stringstream in(text);
  std::string line;
  std::vector<std::vector<std::string>> rows;
  while (std::getline(in, line))
    if (line.find_first_not_of(" \t\r") != std::string::npos)
      rows.push_back(split_csv_line(line));
  if (rows.size() < 2) throw DataError("confusion CSV needs a header and rows");
  const std::vector<std::string> header(rows[0].begin() + 1, rows[0].end());
  LabelSet labels(header);
  if (rows.size() - 1 != header.size())
    throw DataError("confusion CSV must be square");
  std::vector<std::vector<std::int64_t>> counts;
  for (size_t r = 1; r < rows.size(); ++r) {
    if (rows[r].size() != header.size() + 1 || rows[r][0] != header[r - 1])
      throw DataError("confusion CSV row " + std::to_string(r) +
                      " does not match the header labels");
    counts.emplace_back();
    for (size_t c = 1; c < rows[r].size(); ++c) {
      try {
        counts.back().push_back(std::stoll(rows[r][c]));
      } catch (const std::exception&) {
        throw DataError("confusion CSV: bad count '" + rows[r][c] + "'");
      }
    }
  }
  return ConfusionMatrix(labels, counts);
}

ConfusionMatrix load_confusion_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return confusion_from_csv(ss.str());
}

std::string format_percent(double fraction) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f%%", fraction * 100.0);
  return buf;
}

std::string summary_text(const ConfusionMatrix& cm) {
  std::ostringstream out;
  const auto acc = per_class_accuracy(cm);
  size_t width = 7;
  for (const auto& n : cm.labels().names()) width = std::max(width, n.size());
  char buf[256];
  std::snprintf(buf, sizeof(buf), "%-*s %10s %10s\n", int(width), "emotion",
                "support", "accuracy");
  out << buf;
  for (int i = 0; i < cm.size(); ++i) {
    std::snprintf(buf, sizeof(buf), "%-*s %10lld %10s\n", int(width),
                  cm.labels().names()[i].c_str(),
                  static_cast<long long>(cm.support(i)),
                  acc[i] ? format_percent(*acc[i]).c_str() : "undefined");
    out << buf;
  }
  std::snprintf(buf, sizeof(buf), "%-*s %10lld %10s\n", int(width), "overall",
                static_cast<long long>(cm.total()),
                format_percent(overall_accuracy(cm)).c_str());
  out << buf;
  return out.str();
}

nlohmann::json report_json(const ConfusionMatrix& cm,
                           const std::vector<EpochRecord>& history) {
  nlohmann::json per_class = nlohmann::json::object();
  nlohmann::json support = nlohmann::json::object();
  const auto acc = per_class_accuracy(cm);
  for (int i = 0; i < cm.size(); ++i) {
    const auto& name = cm.labels().names()[i];
    per_class[name] = acc[i] ? nlohmann::json(*acc[i]) : nlohmann::json(nullptr);
    support[name] = cm.support(i);
  }
  nlohmann::json hist = nlohmann::json::array();
  for (const auto& h : history)
    hist.push_back({{"epoch", h.epoch},
                    {"train_loss", h.train_loss},
                    {"val_accuracy", h.val_accuracy}});
  return {{"schema_version", kReportSchemaVersion},
          {"labels", cm.labels().names()},
          {"confusion_matrix", cm.rows()},
          {"total", cm.total()},
          {"overall_accuracy", overall_accuracy(cm)},
          {"per_class_accuracy", per_class},
          {"support", support},
          {"history", hist}};
}

std::string validate_report(const nlohmann::json& j) {
  if (!j.is_object()) return "report is not an object";
  for (const char* key : {"schema_version", "labels", "confusion_matrix", "total",
                          "overall_accuracy", "per_class_accuracy", "support",
                          "history"})
    if (!j.contains(key)) return std::string("missing field '") + key + "'";
  if (j["schema_version"] != kReportSchemaVersion) return "unknown schema_version";
  if (!j["labels"].is_array() || j["labels"].empty()) return "labels must be a non-empty array";
  const size_t n = j["labels"].size();
  for (const auto& l : j["labels"])
    if (!l.is_string()) return "labels must be strings";
  const auto& m = j["confusion_matrix"];
  if (!m.is_array() || m.size() != n) return "confusion_matrix must have one row per label";
  std::int64_t total = 0, trace = 0;
  for (size_t r = 0; r < n; ++r) {
    if (!m[r].is_array() || m[r].size() != n) return "confusion_matrix must be square";
    for (size_t c = 0; c < n; ++c) {
      if (!m[r][c].is_number_integer() || m[r][c].get<std::int64_t>() < 0)
        return "confusion counts must be non-negative integers";
      total += m[r][c].get<std::int64_t>();
      if (r == c) trace += m[r][c].get<std::int64_t>();
    }
  }
  if (!j["total"].is_number_integer() || j["total"].get<std::int64_t>() != total)
    return "total does not match the matrix";
  if (!j["overall_accuracy"].is_number()) return "overall_accuracy must be a number";
  const double oa = j["overall_accuracy"].get<double>();
  if (!(oa >= 0.0 && oa <= 1.0)) return "overall_accuracy out of [0, 1]";
  if (total > 0 && std::abs(oa - double(trace) / double(total)) > 1e-12)
    return "overall_accuracy does not match the matrix";
  const auto& pc = j["per_class_accuracy"];
  if (!pc.is_object() || pc.size() != n) return "per_class_accuracy must have one entry per label";
  for (const auto& l : j["labels"]) {
    const auto name = l.get<std::string>();
    if (!pc.contains(name)) return "per_class_accuracy missing '" + name + "'";
    const auto& v = pc[name];
    if (!v.is_null() && !(v.is_number() && v.get<double>() >= 0.0 && v.get<double>() <= 1.0))
      return "per_class_accuracy values must be null or in [0, 1]";
    if (!j["support"].contains(name) || !j["support"][name].is_number_integer())
      return "support missing '" + name + "'";
  }
  if (!j["history"].is_array()) return "history must be an array";
  for (const auto& h : j["history"]) {
    if (!h.is_object() || !h.contains("epoch") || !h.contains("train_loss") ||
        !h.contains("val_accuracy"))
      return "history rows need epoch, train_loss, val_accuracy";
    if (!h["epoch"].is_number_integer() || !h["train_loss"].is_number() ||
        !h["val_accuracy"].is_number())
      return "history fields have the wrong type";
  }
  return {};
}

std::string history_csv(const std::vector<EpochRecord>& history) {
  std::ostringstream out;
  out << "epoch,train_loss,val_accuracy\n";
  char buf[128];
  for (const auto& h : history) {
    std::snprintf(buf, sizeof(buf), "%d,%.9g,%.9g\n", h.epoch, h.train_loss,
                  h.val_accuracy);
    out << buf;
  }
  return out.str();
}

std::string training_curve_svg(const std::vector<EpochRecord>& history) {
  const double w = 640, h = 400, left = 60, right = 20, top = 30, bottom = 50;
  const double pw = w - left - right, ph = h - top - bottom;
  int max_epoch = 1;
  double max_loss = 1e-12;
  for (const auto& r : history) {
    max_epoch = std::max(max_epoch, r.epoch);
    max_loss = std::max(max_loss, r.train_loss);
  }
  auto x = [&](int e) { return left + pw * e / max_epoch; };
  auto y = [&](double v) { return top + ph * (1.0 - v); };
  std::ostringstream out;
  char buf[256];
  std::snprintf(buf, sizeof(buf),
                "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"%g\" "
                "height=\"%g\" viewBox=\"0 0 %g %g\">\n",
                w, h, w, h);
  out << buf;
  out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  std::snprintf(buf, sizeof(buf),
                "<path d=\"M%g %g L%g %g L%g %g\" fill=\"none\" stroke=\"black\"/>\n",
                left, top, left, top + ph, left + pw, top + ph);
  out << buf;
  for (int t = 0; t <= 4; ++t) {
    const double v = t / 4.0;
    std::snprintf(buf, sizeof(buf),
                  "<text x=\"%g\" y=\"%g\" font-size=\"11\" "
                  "text-anchor=\"end\">%.0f%%</text>\n",
                  left - 6, y(v) + 4, v * 100);
    out << buf;
  }
  std::snprintf(buf, sizeof(buf),
                "<text x=\"%g\" y=\"%g\" font-size=\"12\" "
                "text-anchor=\"middle\">epoch (1..%d)</text>\n",
                left + pw / 2, h - 12, max_epoch);
  out << buf;
  auto polyline = [&](const char* color, auto value) {
    out << "<polyline fill=\"none\" stroke=\"" << color
        << "\" stroke-width=\"2\" points=\"";
    for (const auto& r : history) {
      std::snprintf(buf, sizeof(buf), "%.2f,%.2f ", x(r.epoch), y(value(r)));
      out << buf;
    }
    out << "\"/>\n";
  };
  polyline("#1f77b4", [](const EpochRecord& r) { return r.val_accuracy; });
  polyline("#d62728",
           [&](const EpochRecord& r) { return r.train_loss / max_loss; });
  std::snprintf(buf, sizeof(buf),
                "<text x=\"%g\" y=\"18\" font-size=\"12\" fill=\"#1f77b4\">"
                "validation accuracy</text>\n"
                "<text x=\"%g\" y=\"18\" font-size=\"12\" fill=\"#d62728\">"
                "train loss (max %.4g)</text>\n",
                left, left + 160, max_loss);
  out << buf << "</svg>\n";
  return out.str();
}

namespace {

void write_text(const std::filesystem::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  if (!out) throw DataError("cannot write " + p.string());
  out << text;
  if (!out) throw DataError("short write to " + p.string());
}

}  // namespace

void write_report(const ConfusionMatrix& cm,
                  const std::vector<EpochRecord>& history,
                  const std::string& out_dir) {
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw DataError("cannot create " + out_dir + ": " + ec.message());
  const std::filesystem::path dir(out_dir);
  write_text(dir / "report.json", report_json(cm, history).dump(2) + "\n");
  write_text(dir / "confusion.csv", to_csv(cm));
  write_text(dir / "summary.txt", summary_text(cm));
  if (!history.empty()) {
    write_text(dir / "history.csv", history_csv(history));
    write_text(dir / "training_curve.svg", training_curve_svg(history));
  }
}

}  // namespace ser
