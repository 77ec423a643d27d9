#include "tmnn/metrics.hpp"

#include <algorithm>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <stdexcept>

namespace tmnn {

namespace {

std::vector<std::size_t> order_by_score(std::span<const double> scores, bool descending) {
  std::vector<std::size_t> idx(scores.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    return descending ? scores[a] > scores[b] : scores[a] < scores[b];
  });
  return idx;
}

void check_lengths(std::span<const double> scores, std::span<const std::uint8_t> labels) {
  if (scores.size() != labels.size()) throw std::invalid_argument("scores and labels differ in length");
}

}  // namespace

std::optional<double> roc_auc(std::span<const double> scores, std::span<const std::uint8_t> labels) {
  check_lengths(scores, labels);
  const auto idx = order_by_score(scores, false);
  double rank_sum = 0.0;
  std::size_t n_pos = 0;
  std::size_t i = 0;
  while (i < idx.size()) {
    std::size_t j = i;
    while (j < idx.size() && scores[idx[j]] == scores[idx[i]]) ++j;
    // 1-based ranks i+1..j share their midrank.
    const double midrank = 0.5 * static_cast<double>(i + 1 + j);
    for (std::size_t k = i; k < j; ++k) {
      if (labels[idx[k]]) {
        rank_sum += midrank;
        ++n_pos;
      }
    }
    i = j;
  }
  const std::size_t n_neg = scores.size() - n_pos;
  if (n_pos == 0 || n_neg == 0) return std::nullopt;
  const double np = static_cast<double>(n_pos);
  const double u = rank_sum - np * (np + 1.0) / 2.0;
  return u / (np * static_cast<double>(n_neg));
}

std::optional<double> pr_auc(std::span<const double> scores, std::span<const std::uint8_t> labels) {
  check_lengths(scores, labels);
  const std::size_t n_pos = static_cast<std::size_t>(std::count_if(labels.begin(), labels.end(), [](auto l) { return l != 0; }));
  if (n_pos == 0) return std::nullopt;
  const auto idx = order_by_score(scores, true);
  double ap = 0.0;
  std::size_t tp = 0, seen = 0, i = 0;
  while (i < idx.size()) {
    std::size_t j = i, group_tp = 0;
    while (j < idx.size() && scores[idx[j]] == scores[idx[i]]) {
      if (labels[idx[j]]) ++group_tp;
      ++j;
    }
    tp += group_tp;
    seen = j;
    if (group_tp > 0) {
      const double precision = static_cast<double>(tp) / static_cast<double>(seen);
      ap += precision * static_cast<double>(group_tp) / static_cast<double>(n_pos);
    }
    i = j;
  }
  return ap;
}

double accuracy(std::span<const int> predicted, std::span<const int> truth) {
  if (predicted.size() != truth.size()) throw std::invalid_argument("accuracy inputs differ in length");
  if (predicted.empty()) throw std::invalid_argument("accuracy of an empty set");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < predicted.size(); ++i) hits += predicted[i] == truth[i] ? 1 : 0;
  return static_cast<double>(hits) / static_cast<double>(predicted.size());
}

EvalReport build_report(ReportKind kind, std::span<const std::string> tags, std::span<const double> scores,
                        std::span<const std::uint8_t> labels, std::size_t n_rows) {
  const std::size_t k = tags.size();
  if (scores.size() != n_rows * k || labels.size() != n_rows * k) {
    throw std::invalid_argument("score/label matrices do not match the tag count");
  }
  EvalReport report;
  report.kind = kind;
  std::vector<double> col_scores(n_rows);
  std::vector<std::uint8_t> col_labels(n_rows);
  double roc_total = 0.0, pr_total = 0.0;
  std::size_t counted = 0;
  for (std::size_t c = 0; c < k; ++c) {
    for (std::size_t r = 0; r < n_rows; ++r) {
      col_scores[r] = scores[r * k + c];
      col_labels[r] = labels[r * k + c];
    }
    TagMetrics m;
    m.tag = tags[c];
    m.positive_count = static_cast<std::size_t>(std::count_if(col_labels.begin(), col_labels.end(), [](auto l) { return l != 0; }));
    m.roc_auc = roc_auc(col_scores, col_labels);
    if (m.roc_auc) {
      m.pr_auc = pr_auc(col_scores, col_labels);
      roc_total += *m.roc_auc;
      pr_total += *m.pr_auc;
      ++counted;
    }
    report.per_tag.push_back(std::move(m));
  }
  if (counted > 0) {
    report.macro_roc_auc = roc_total / static_cast<double>(counted);
    report.macro_pr_auc = pr_total / static_cast<double>(counted);
  }
  if (kind == ReportKind::kKeyword && n_rows > 0) {
    std::vector<int> predicted(n_rows), truth(n_rows);
    for (std::size_t r = 0; r < n_rows; ++r) {
      const double* row = scores.data() + r * k;
      predicted[r] = static_cast<int>(std::max_element(row, row + k) - row);
      const std::uint8_t* lrow = labels.data() + r * k;
      truth[r] = static_cast<int>(std::max_element(lrow, lrow + k) - lrow);
    }
    report.accuracy = accuracy(predicted, truth);
  }
  return report;
}

nlohmann::json EvalReport::to_json() const {
  nlohmann::json j;
  if (kind == ReportKind::kKeyword) {
    j["task"] = "keyword";
    j["accuracy"] = accuracy.value_or(0.0);
    j["n_classes"] = per_tag.size();
    return j;
  }
  j["task"] = "tagging";
  j["macro_roc_auc"] = macro_roc_auc ? nlohmann::json(*macro_roc_auc) : nlohmann::json(nullptr);
  j["macro_pr_auc"] = macro_pr_auc ? nlohmann::json(*macro_pr_auc) : nlohmann::json(nullptr);
  auto& rows = j["per_tag"] = nlohmann::json::array();
  nlohmann::json excluded = nlohmann::json::array();
  for (const auto& m : per_tag) {
    rows.push_back({{"tag", m.tag},
                    {"roc_auc", m.roc_auc ? nlohmann::json(*m.roc_auc) : nlohmann::json(nullptr)},
                    {"pr_auc", m.pr_auc ? nlohmann::json(*m.pr_auc) : nlohmann::json(nullptr)},
                    {"positive_count", m.positive_count}});
    if (!m.roc_auc) excluded.push_back(m.tag);
  }
  j["excluded_tags"] = excluded;
  return j;
}

void EvalReport::write_json(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << to_json().dump(2) << '\n';
}

void EvalReport::write_per_tag_csv(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "tag,roc_auc,pr_auc,positive_count\n" << std::setprecision(10);
  for (const auto& m : per_tag) {
    out << m.tag << ',';
    if (m.roc_auc) out << *m.roc_auc;
    out << ',';
    if (m.pr_auc) out << *m.pr_auc;
    out << ',' << m.positive_count << '\n';
  }
}

}  // namespace tmnn
