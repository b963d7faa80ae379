#include "spseg/clustering.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace spseg {

Eigen::MatrixXd confusion_counts(const std::vector<int>& pred, const std::vector<int>& gt, int pred_classes,
                                 int classes) {
  if (pred.size() != gt.size()) throw std::invalid_argument("prediction and ground truth lengths differ");
  if (classes < 1 || pred_classes < 1) throw std::invalid_argument("class counts must be positive");
  Eigen::MatrixXd raw = Eigen::MatrixXd::Zero(pred_classes, classes);
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (gt[i] == kIgnoreLabel) continue;
    if (gt[i] < 0 || gt[i] >= classes) throw std::invalid_argument("ground-truth label out of range");
    if (pred[i] < 0 || pred[i] >= pred_classes) throw std::invalid_argument("predicted label out of range");
    raw(pred[i], gt[i]) += 1.0;
  }
  return raw;
}

namespace {

int prediction_width(const std::vector<int>& pred) {
  int n = 1;
  for (int p : pred) n = std::max(n, p + 1);
  return n;
}

// Matched confusion plus the ground-truth count per class (which includes
// points predicted into clusters left unmatched).
Metrics summarize(Metrics m, const Eigen::VectorXd& gt_counts) {
  const double total = gt_counts.sum();
  if (!(total > 0.0)) throw std::invalid_argument("no evaluated points (all ignored?)");
  const auto classes = static_cast<int>(gt_counts.size());
  m.evaluated = static_cast<std::int64_t>(total);
  m.oa = m.confusion.trace() / total;
  m.iou.assign(static_cast<std::size_t>(classes), std::numeric_limits<double>::quiet_NaN());
  double iou_sum = 0.0, acc_sum = 0.0;
  int present = 0;
  for (int c = 0; c < classes; ++c) {
    const double gt_count = gt_counts[c];
    if (gt_count <= 0.0) continue;
    const double tp = m.confusion(c, c);
    const double fp = m.confusion.row(c).sum() - tp;
    const double fn = gt_count - tp;
    m.iou[static_cast<std::size_t>(c)] = tp / (tp + fp + fn);
    iou_sum += m.iou[static_cast<std::size_t>(c)];
    acc_sum += tp / gt_count;
    ++present;
  }
  m.miou = iou_sum / present;
  m.macc = acc_sum / present;
  return m;
}

}  // namespace

Metrics evaluate(const std::vector<int>& pred, const std::vector<int>& gt, int classes) {
  return evaluate_confusion(confusion_counts(pred, gt, prediction_width(pred), classes), classes);
}

Metrics evaluate_confusion(const Eigen::MatrixXd& raw, int classes) {
  if (raw.cols() != classes) throw std::invalid_argument("confusion column count must equal the class count");
  if (!(raw.sum() > 0.0)) throw std::invalid_argument("no evaluated points (all ignored?)");

  const Eigen::Index n = std::max<Eigen::Index>(raw.rows(), classes);
  // Rows enter the matcher sorted by content, so tie-breaking among optimal
  // matchings does not depend on how the clusters happen to be numbered.
  std::vector<Eigen::Index> order(static_cast<std::size_t>(raw.rows()));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::stable_sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) {
    for (Eigen::Index c = 0; c < raw.cols(); ++c)
      if (raw(a, c) != raw(b, c)) return raw(a, c) > raw(b, c);
    return false;
  });
  Eigen::MatrixXd square = Eigen::MatrixXd::Zero(n, n);
  for (std::size_t k = 0; k < order.size(); ++k) square.row(static_cast<Eigen::Index>(k)).head(raw.cols()) = raw.row(order[k]);
  const auto sorted_perm = hungarian(square);
  std::vector<int> perm(static_cast<std::size_t>(raw.rows()));
  for (std::size_t k = 0; k < order.size(); ++k) perm[static_cast<std::size_t>(order[k])] = sorted_perm[k];

  Metrics m;
  m.matching.assign(static_cast<std::size_t>(raw.rows()), -1);
  m.confusion = Eigen::MatrixXd::Zero(classes, classes);
  for (Eigen::Index r = 0; r < raw.rows(); ++r) {
    const int c = perm[static_cast<std::size_t>(r)];
    if (c >= classes) continue;
    m.matching[static_cast<std::size_t>(r)] = c;
    m.confusion.row(c) += raw.row(r);
  }
  return summarize(std::move(m), raw.colwise().sum().transpose());
}

Metrics evaluate_dataset(const std::vector<std::vector<int>>& pred, const std::vector<std::vector<int>>& gt,
                         int classes) {
  if (pred.size() != gt.size()) throw std::invalid_argument("prediction and ground truth scene counts differ");
  int width = 1;
  for (const auto& p : pred) width = std::max(width, prediction_width(p));
  Eigen::MatrixXd raw = Eigen::MatrixXd::Zero(width, classes);
  for (std::size_t s = 0; s < pred.size(); ++s) raw += confusion_counts(pred[s], gt[s], width, classes);
  return evaluate_confusion(raw, classes);
}

Metrics evaluate_per_scene(const std::vector<std::vector<int>>& pred, const std::vector<std::vector<int>>& gt,
                           int classes) {
  if (pred.size() != gt.size()) throw std::invalid_argument("prediction and ground truth scene counts differ");
  Metrics total;
  total.confusion = Eigen::MatrixXd::Zero(classes, classes);
  Eigen::VectorXd gt_counts = Eigen::VectorXd::Zero(classes);
  for (std::size_t s = 0; s < pred.size(); ++s) {
    const Eigen::MatrixXd raw = confusion_counts(pred[s], gt[s], prediction_width(pred[s]), classes);
    if (!(raw.sum() > 0.0)) continue;
    total.confusion += evaluate_confusion(raw, classes).confusion;
    gt_counts += raw.colwise().sum().transpose();
  }
  return summarize(std::move(total), gt_counts);
}

std::string format_report(const Metrics& m) {
  std::string out;
  char buf[96];
  auto line = [&](const char* key, double v) {
    std::snprintf(buf, sizeof buf, "%s = %.6f\n", key, v);
    out += buf;
  };
  out += "evaluated = " + std::to_string(m.evaluated) + "\n";
  line("oa", m.oa);
  line("macc", m.macc);
  line("miou", m.miou);
  for (std::size_t c = 0; c < m.iou.size(); ++c) {
    const std::string key = "iou." + std::to_string(c);
    if (std::isnan(m.iou[c])) out += key + " = nan\n";
    else line(key.c_str(), m.iou[c]);
  }
  return out;
}

}  // namespace spseg
