// Evaluation metrics: ROC area, detection rate at a fixed false-positive
// rate, text distances, cosine similarity and Krippendorff's alpha.

#ifndef BMAGUARD_METRICS_HPP_
#define BMAGUARD_METRICS_HPP_

#include <Eigen/Core>

#include <cmath>
#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "bmaguard/error.hpp"

namespace bmaguard {

/// Label 1 is the malicious (positive) class.
struct ScoredLabels {
  std::vector<double> scores;
  std::vector<int> labels;
};

struct Confusion {
  std::size_t tp = 0, fp = 0, tn = 0, fn = 0;
};

struct MetricsReport {
  double auroc = 0;
  double dr_at_fp = 0;
  double fp_target = 0.01;
  /// Positive iff score > threshold; nullopt means every sample is positive.
  std::optional<double> threshold;
  Confusion confusion;
  std::size_t n_benign = 0;
  std::size_t n_bma = 0;
};

/// P(random positive scores above random negative); ties count one half.
double auroc(const ScoredLabels& data);

struct OperatingPoint {
  double detection_rate = 0;
  std::optional<double> threshold;
};

/// Highest TPR over thresholds drawn from the observed scores (plus -inf)
/// whose FPR does not exceed `fp_target`. A sample is flagged iff its score
/// is strictly greater than the threshold.
OperatingPoint operating_point(const ScoredLabels& data, double fp_target = 0.01);
inline double dr_at_fp(const ScoredLabels& data, double fp_target = 0.01) {
  return operating_point(data, fp_target).detection_rate;
}

MetricsReport evaluate(const ScoredLabels& data, double fp_target = 0.01);
nlohmann::json to_json(const MetricsReport& r);

/// Decodes UTF-8 into scalar values; malformed bytes become U+FFFD.
std::u32string utf8_decode(std::string_view s);

/// Edit distance over Unicode scalar values.
std::size_t levenshtein(std::string_view a, std::string_view b);

/// Token-level ROUGE-L F1 with lowercase whitespace tokens. Recall is
/// relative to `a`, precision to `b`.
double rouge_l_f1(std::string_view a, std::string_view b);

template <typename DerivedA, typename DerivedB>
typename DerivedA::Scalar cosine_similarity(const Eigen::MatrixBase<DerivedA>& u,
                                            const Eigen::MatrixBase<DerivedB>& v) {
  if (u.size() != v.size()) throw InvalidInput("cosine_similarity: dimension mismatch");
  const auto nu = u.norm(), nv = v.norm();
  if (nu == 0 || nv == 0) throw UndefinedMetric("cosine_similarity: zero vector");
  return u.dot(v) / (nu * nv);
}

/// items x annotators, nominal labels, nullopt for missing.
using LabelMatrix = std::vector<std::vector<std::optional<int>>>;

/// Nominal alpha from the coincidence matrix; items with fewer than two
/// labels are skipped.
double krippendorff_alpha(const LabelMatrix& m);

/// Linear-interpolated quantile (q in [0,1]) of unsorted samples.
double percentile(std::vector<double> samples, double q);

} // namespace bmaguard

#endif
