#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace qpvs {

enum class SelectionRule { MedianProbability, BayesFdr };

std::string to_string(SelectionRule rule);

struct SelectionResult {
  std::vector<bool> selected;
  SelectionRule rule = SelectionRule::MedianProbability;
  double alpha = 0.0;
  double implicit_threshold = 0.5;
  std::vector<double> ppi_used;

  std::size_t size() const;
};

/// Median-probability model: ppi >= 0.5.
SelectionResult select_median(const std::vector<double>& ppi);

/// Largest k such that the mean of the top-k sorted ppi is >= 1 - alpha; the
/// k-th largest value becomes the threshold (ties at it are included).
SelectionResult select_bfdr(const std::vector<double>& ppi, double alpha);

SelectionResult select(const std::vector<double>& ppi, SelectionRule rule, double alpha);

std::vector<double> to_std(const Eigen::VectorXd& v);

struct SelectionMetrics {
  double fdr = 0.0;
  double power = 0.0;
  double f1 = 0.0;
  double mcc = 0.0;
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t tn = 0;
  std::size_t fn = 0;
};

/// Confusion counts over columns with scored_mask set. Degenerate conventions:
/// FDR = 0 with no selections, power = 1 with no true actives, F1 = 1 when
/// 2TP+FP+FN = 0, MCC = 0 when any denominator factor vanishes.
SelectionMetrics score_selection(const std::vector<bool>& selected, const std::vector<bool>& truth,
                                 const std::vector<bool>& scored_mask);

}  // namespace qpvs
