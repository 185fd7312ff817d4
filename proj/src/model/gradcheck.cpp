#include "bmaguard/model/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <optional>
#include <random>

#include "bmaguard/error.hpp"

namespace bmaguard {

namespace {

double rel_error(double a, double n, double floor) {
  return std::fabs(a - n) / std::max({std::fabs(a), std::fabs(n), floor});
}

// Eval-mode loss plus the on/off pattern of every ReLU.
struct Probe {
  double loss = 0;
  std::vector<bool> active;
};

Probe evaluate(const DualBranchClassifier<double>& model, std::span<const TrainSample> batch,
               std::span<const double> class_weights) {
  Probe p;
  Mat<double> logits(2, static_cast<Eigen::Index>(batch.size()));
  std::vector<int> labels;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    Tape<double> tape;
    logits.col(static_cast<Eigen::Index>(i)) =
        model.forward(to_visual_input<double>(*batch[i].image), batch[i].tokens, Mode::eval, nullptr, &tape);
    labels.push_back(batch[i].label);
    for (const auto& pre : tape.visual.pre)
      for (Eigen::Index k = 0; k < pre.size(); ++k) p.active.push_back(pre.data()[k] > 0);
    for (Eigen::Index k = 0; k < tape.head.hidden_pre.size(); ++k) p.active.push_back(tape.head.hidden_pre(k) > 0);
  }
  p.loss = compute_loss<double>(logits, labels, class_weights, nullptr);
  return p;
}

// Fourth-order central difference of `at(s)` around s = 0. Shrinks the step
// while any ReLU flips inside [-2h, 2h]; nullopt when it never settles.
template <typename F>
std::optional<double> derivative(F&& at, const std::vector<bool>& base, double h) {
  for (int attempt = 0; attempt < 4; ++attempt, h /= 10) {
    const Probe p2 = at(2 * h), p1 = at(h), m1 = at(-h), m2 = at(-2 * h);
    if (p2.active != base || m2.active != base || p1.active != base || m1.active != base) continue;
    return (8 * (p1.loss - m1.loss) - (p2.loss - m2.loss)) / (12 * h);
  }
  return std::nullopt;
}

} // namespace

GradCheckReport gradient_check(const DualBranchClassifier<double>& model, std::span<const TrainSample> batch,
                               std::span<const double> class_weights, const GradCheckOptions& options) {
  if (batch.empty()) throw InvalidInput("gradient_check: empty batch");
  std::vector<const TrainSample*> ptrs;
  for (const auto& s : batch) ptrs.push_back(&s);
  const std::span<const TrainSample* const> view(ptrs);

  ParamSet<double> grads = model.params().zeros_like();
  loss_and_gradient<double>(model, view, class_weights, Mode::eval, nullptr, &grads);

  DualBranchClassifier<double> probe = model;
  const std::vector<bool> base = evaluate(model, batch, class_weights).active;

  std::vector<std::size_t> tensors;
  for (std::size_t i = 0; i < model.params().size(); ++i) {
    const auto& name = model.params().name(i);
    const bool selected = options.prefixes.empty() ||
                          std::any_of(options.prefixes.begin(), options.prefixes.end(),
                                      [&](const std::string& p) { return name.rfind(p, 0) == 0; });
    if (selected && model.params()[i].size() > 0) tensors.push_back(i);
  }
  if (tensors.empty()) throw InvalidInput("gradient_check: no tensors selected");

  std::vector<int> present_tokens;
  for (const auto& s : batch)
    present_tokens.insert(present_tokens.end(), s.tokens.ids.begin(), s.tokens.ids.begin() + s.tokens.length());

  std::mt19937_64 rng(options.seed);
  GradCheckReport report;
  for (std::size_t k = 0; report.checked < options.samples && k < 4 * options.samples; ++k) {
    const std::size_t t = tensors[k % tensors.size()];
    auto& tensor = probe.params()[t];
    Eigen::Index row = std::uniform_int_distribution<Eigen::Index>(0, tensor.rows() - 1)(rng);
    const Eigen::Index col = std::uniform_int_distribution<Eigen::Index>(0, tensor.cols() - 1)(rng);
    if (t == model.layout().tok_emb)
      row = present_tokens[std::uniform_int_distribution<std::size_t>(0, present_tokens.size() - 1)(rng)];

    const double saved = tensor(row, col);
    const auto numeric = derivative(
        [&](double s) {
          tensor(row, col) = saved + s;
          Probe p = evaluate(probe, batch, class_weights);
          tensor(row, col) = saved;
          return p;
        },
        base, options.step);
    if (!numeric) {
      ++report.skipped;
      continue;
    }
    const double err = rel_error(grads[t](row, col), *numeric, options.floor);
    ++report.checked;
    if (err > report.max_rel_error) {
      report.max_rel_error = err;
      report.worst_parameter = model.params().name(t) + "(" + std::to_string(row) + "," + std::to_string(col) + ")";
    }
  }

  std::normal_distribution<double> gauss(0.0, 1.0);
  ParamSet<double> direction = model.params().zeros_like();
  double analytic = 0, norm = 0;
  for (std::size_t t : tensors) {
    auto& d = direction[t];
    for (Eigen::Index i = 0; i < d.size(); ++i) d.data()[i] = gauss(rng);
    norm += d.squaredNorm();
  }
  for (std::size_t t : tensors) {
    direction[t] /= std::sqrt(norm);
    analytic += grads[t].cwiseProduct(direction[t]).sum();
  }
  auto along = [&](double s) {
    for (std::size_t t : tensors) probe.params()[t] = model.params()[t] + s * direction[t];
    const double loss = evaluate(probe, batch, class_weights).loss;
    for (std::size_t t : tensors) probe.params()[t] = model.params()[t];
    return loss;
  };
  const double h = options.step;
  const double numeric = (8 * (along(h) - along(-h)) - (along(2 * h) - along(-2 * h))) / (12 * h);
  report.directional_rel_error = rel_error(analytic, numeric, options.floor);
  return report;
}

} // namespace bmaguard
