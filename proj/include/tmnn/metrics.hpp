#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace tmnn {

/// P(score+ > score-) + 0.5 P(tie), from midranks. Empty when the labels
/// lack either a positive or a negative.
std::optional<double> roc_auc(std::span<const double> scores, std::span<const std::uint8_t> labels);

/// Average precision: sum over positives of precision at each recall step,
/// scanning scores in descending order with tied scores entering together.
/// Empty when there is no positive.
std::optional<double> pr_auc(std::span<const double> scores, std::span<const std::uint8_t> labels);

double accuracy(std::span<const int> predicted, std::span<const int> truth);

struct TagMetrics {
  std::string tag;
  std::optional<double> roc_auc;
  std::optional<double> pr_auc;
  std::size_t positive_count = 0;
};

enum class ReportKind { kTagging, kKeyword };

struct EvalReport {
  ReportKind kind = ReportKind::kTagging;
  std::vector<TagMetrics> per_tag;
  std::optional<double> macro_roc_auc;
  std::optional<double> macro_pr_auc;
  std::optional<double> accuracy;

  /// Keyword reports carry accuracy only; tagging reports carry AUCs.
  nlohmann::json to_json() const;
  void write_json(const std::filesystem::path& path) const;
  void write_per_tag_csv(const std::filesystem::path& path) const;
};

/// Builds per-tag and macro metrics from an [N x K] score matrix and the
/// matching binary label matrix (both row-major). Tags without both a
/// positive and a negative are excluded from the macro means. For keyword
/// reports the accuracy of the per-row argmax is filled in as well.
EvalReport build_report(ReportKind kind, std::span<const std::string> tags, std::span<const double> scores,
                        std::span<const std::uint8_t> labels, std::size_t n_rows);

}  // namespace tmnn
