#include "qpvs/selection.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "qpvs/error.hpp"

namespace qpvs {

std::string to_string(SelectionRule rule) {
  return rule == SelectionRule::MedianProbability ? "median" : "bfdr";
}

std::size_t SelectionResult::size() const {
  return static_cast<std::size_t>(std::count(selected.begin(), selected.end(), true));
}

namespace {

SelectionResult threshold_at(const std::vector<double>& ppi, SelectionRule rule, double alpha, double threshold) {
  SelectionResult r;
  r.rule = rule;
  r.alpha = alpha;
  r.implicit_threshold = threshold;
  r.ppi_used = ppi;
  r.selected.resize(ppi.size());
  for (std::size_t j = 0; j < ppi.size(); ++j) r.selected[j] = ppi[j] >= threshold;
  return r;
}

}  // namespace

SelectionResult select_median(const std::vector<double>& ppi) {
  return threshold_at(ppi, SelectionRule::MedianProbability, 0.0, 0.5);
}

SelectionResult select_bfdr(const std::vector<double>& ppi, double alpha) {
  if (!(alpha > 0.0 && alpha < 1.0)) fail(ErrorCode::InvalidArgument, "BFDR alpha must lie in (0, 1)");
  std::vector<std::size_t> order(ppi.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return ppi[a] > ppi[b]; });

  // Prefix means of a descending sequence are non-increasing, so the largest
  // qualifying k is the last one before the first failure. Zero-probability
  // columns are never selected.
  std::size_t k = 0;
  double sum = 0.0;
  for (std::size_t i = 0; i < order.size(); ++i) {
    const double v = ppi[order[i]];
    if (!(v > 0.0)) break;
    sum += v;
    if (sum / static_cast<double>(i + 1) >= 1.0 - alpha)
      k = i + 1;
    else
      break;
  }
  const double threshold = k == 0 ? std::nextafter(1.0, 2.0) : ppi[order[k - 1]];
  return threshold_at(ppi, SelectionRule::BayesFdr, alpha, threshold);
}

SelectionResult select(const std::vector<double>& ppi, SelectionRule rule, double alpha) {
  return rule == SelectionRule::MedianProbability ? select_median(ppi) : select_bfdr(ppi, alpha);
}

std::vector<double> to_std(const Eigen::VectorXd& v) { return {v.data(), v.data() + v.size()}; }

SelectionMetrics score_selection(const std::vector<bool>& selected, const std::vector<bool>& truth,
                                 const std::vector<bool>& scored_mask) {
  if (selected.size() != truth.size() || selected.size() != scored_mask.size())
    fail(ErrorCode::LengthMismatch, "selected, truth and mask must have equal lengths");
  SelectionMetrics m;
  for (std::size_t j = 0; j < selected.size(); ++j) {
    if (!scored_mask[j]) continue;
    if (selected[j] && truth[j]) ++m.tp;
    else if (selected[j]) ++m.fp;
    else if (truth[j]) ++m.fn;
    else ++m.tn;
  }
  const auto tp = static_cast<double>(m.tp), fp = static_cast<double>(m.fp);
  const auto tn = static_cast<double>(m.tn), fn = static_cast<double>(m.fn);
  m.fdr = m.tp + m.fp == 0 ? 0.0 : fp / (tp + fp);
  m.power = m.tp + m.fn == 0 ? 1.0 : tp / (tp + fn);
  m.f1 = 2 * m.tp + m.fp + m.fn == 0 ? 1.0 : 2.0 * tp / (2.0 * tp + fp + fn);
  const double den = (tp + fp) * (tp + fn) * (tn + fp) * (tn + fn);
  m.mcc = den == 0.0 ? 0.0 : (tp * tn - fp * fn) / std::sqrt(den);
  return m;
}

}  // namespace qpvs
