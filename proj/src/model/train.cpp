#include "bmaguard/model/train.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "bmaguard/error.hpp"

namespace bmaguard {

std::vector<double> class_weights_from_counts(std::size_t n_benign, std::size_t n_malicious) {
  if (n_benign == 0 || n_malicious == 0) throw InvalidInput("class weights need both classes present");
  const double n = static_cast<double>(n_benign + n_malicious);
  return {n / (2.0 * static_cast<double>(n_benign)), n / (2.0 * static_cast<double>(n_malicious))};
}

template <typename S>
double compute_loss(const Mat<S>& logits, std::span<const int> labels, std::span<const double> class_weights,
                    Mat<S>* dlogits) {
  const auto batch = logits.cols();
  if (batch == 0) throw InvalidInput("compute_loss: empty batch");
  if (logits.rows() != 2 || static_cast<std::size_t>(batch) != labels.size())
    throw InvalidInput("compute_loss: logits must be (2, batch) and match the labels");
  if (class_weights.size() != 2) throw InvalidInput("compute_loss: two class weights expected");
  if (dlogits) dlogits->resize(2, batch);

  double total = 0;
  for (Eigen::Index i = 0; i < batch; ++i) {
    const int y = labels[static_cast<std::size_t>(i)];
    if (y != 0 && y != 1) throw InvalidInput("compute_loss: labels must be 0 or 1");
    const double a = static_cast<double>(logits(0, i)), b = static_cast<double>(logits(1, i));
    const double mx = std::max(a, b);
    const double lse = mx + std::log(std::exp(a - mx) + std::exp(b - mx));
    const double w = class_weights[static_cast<std::size_t>(y)];
    total += w * (lse - (y ? b : a));
    if (dlogits) {
      const double p1 = std::exp(b - lse), p0 = std::exp(a - lse);
      (*dlogits)(0, i) = static_cast<S>(w * (p0 - (y == 0)) / static_cast<double>(batch));
      (*dlogits)(1, i) = static_cast<S>(w * (p1 - (y == 1)) / static_cast<double>(batch));
    }
  }
  return total / static_cast<double>(batch);
}

template <typename S>
double loss_and_gradient(const DualBranchClassifier<S>& model, std::span<const TrainSample* const> batch,
                         std::span<const double> class_weights, Mode mode, std::mt19937_64* rng, ParamSet<S>* grads) {
  if (batch.empty()) throw InvalidInput("empty batch");
  const auto n = static_cast<Eigen::Index>(batch.size());
  Mat<S> logits(2, n);
  std::vector<int> labels(batch.size());
  std::vector<Tape<S>> tapes(grads ? batch.size() : 0);
  for (Eigen::Index i = 0; i < n; ++i) {
    const TrainSample& s = *batch[static_cast<std::size_t>(i)];
    labels[static_cast<std::size_t>(i)] = s.label;
    logits.col(i) = model.forward(to_visual_input<S>(*s.image), s.tokens, mode, rng,
                                  grads ? &tapes[static_cast<std::size_t>(i)] : nullptr);
  }
  Mat<S> dlogits;
  const double loss = compute_loss<S>(logits, labels, class_weights, grads ? &dlogits : nullptr);
  if (grads)
    for (Eigen::Index i = 0; i < n; ++i)
      model.backward(tapes[static_cast<std::size_t>(i)], dlogits.col(i), grads);
  return loss;
}

template <typename S>
Optimizer<S>::Optimizer(const TrainConfig& config, const ParamSet<S>& like) : config_(config) {
  config_.validate();
  if (config_.optimizer == OptimizerKind::adamw) {
    m_ = like.zeros_like();
    v_ = like.zeros_like();
  }
}

template <typename S>
void Optimizer<S>::step(ParamSet<S>& params, const ParamSet<S>& grads) {
  const S lr = static_cast<S>(config_.learning_rate);
  const S wd = static_cast<S>(config_.weight_decay);
  if (config_.optimizer == OptimizerKind::sgd) {
    for (std::size_t i = 0; i < params.size(); ++i) params[i] -= lr * (grads[i] + wd * params[i]);
    return;
  }
  ++t_;
  const S b1 = static_cast<S>(config_.adam_beta1), b2 = static_cast<S>(config_.adam_beta2);
  const S eps = static_cast<S>(config_.adam_eps);
  const S c1 = S(1) - static_cast<S>(std::pow(config_.adam_beta1, static_cast<double>(t_)));
  const S c2 = S(1) - static_cast<S>(std::pow(config_.adam_beta2, static_cast<double>(t_)));
  for (std::size_t i = 0; i < params.size(); ++i) {
    m_[i] = b1 * m_[i] + (S(1) - b1) * grads[i];
    v_[i] = b2 * v_[i] + (S(1) - b2) * grads[i].cwiseProduct(grads[i]);
    params[i] -= lr * ((m_[i] / c1).array() / ((v_[i] / c2).array().sqrt() + eps)).matrix() + lr * wd * params[i];
  }
}

template <typename S>
double train_step(DualBranchClassifier<S>& model, std::span<const TrainSample* const> batch, const TrainConfig& config,
                  Optimizer<S>& optimizer, std::mt19937_64& rng) {
  ParamSet<S> grads = model.params().zeros_like();
  const double loss = loss_and_gradient<S>(model, batch, config.class_weights, Mode::train, &rng, &grads);
  if (!std::isfinite(loss)) throw TrainingDiverged("non-finite training loss");
  optimizer.step(model.params(), grads);
  return loss;
}

template <typename S>
EpochStats train_epoch(DualBranchClassifier<S>& model, std::span<const TrainSample> data, const TrainConfig& config,
                       Optimizer<S>& optimizer, std::mt19937_64& rng) {
  config.validate();
  if (data.empty()) throw InvalidInput("train_epoch: empty dataset");
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);

  EpochStats stats;
  double weighted = 0;
  const auto bs = static_cast<std::size_t>(config.batch_size);
  std::vector<const TrainSample*> batch;
  for (std::size_t start = 0; start < order.size(); start += bs) {
    batch.clear();
    for (std::size_t i = start; i < std::min(order.size(), start + bs); ++i) batch.push_back(&data[order[i]]);
    const double loss = train_step(model, std::span<const TrainSample* const>(batch), config, optimizer, rng);
    stats.batch_losses.push_back(loss);
    weighted += loss * static_cast<double>(batch.size());
  }
  stats.mean_loss = weighted / static_cast<double>(data.size());
  return stats;
}

template <typename S>
std::vector<double> predict_batch(const DualBranchClassifier<S>& model, std::span<const TrainSample> data) {
  std::vector<double> out;
  out.reserve(data.size());
  for (const auto& s : data) {
    const Vec<S> p = layers::softmax<S>(model.forward(to_visual_input<S>(*s.image), s.tokens, Mode::eval));
    out.push_back(static_cast<double>(p(1)));
  }
  return out;
}

template class Optimizer<float>;
template class Optimizer<double>;

#define BMAGUARD_INSTANTIATE(S)                                                                                       \
  template double compute_loss<S>(const Mat<S>&, std::span<const int>, std::span<const double>, Mat<S>*);             \
  template double loss_and_gradient<S>(const DualBranchClassifier<S>&, std::span<const TrainSample* const>,           \
                                       std::span<const double>, Mode, std::mt19937_64*, ParamSet<S>*);                \
  template double train_step<S>(DualBranchClassifier<S>&, std::span<const TrainSample* const>, const TrainConfig&,    \
                                Optimizer<S>&, std::mt19937_64&);                                                     \
  template EpochStats train_epoch<S>(DualBranchClassifier<S>&, std::span<const TrainSample>, const TrainConfig&,      \
                                     Optimizer<S>&, std::mt19937_64&);                                                \
  template std::vector<double> predict_batch<S>(const DualBranchClassifier<S>&, std::span<const TrainSample>);
BMAGUARD_INSTANTIATE(float)
BMAGUARD_INSTANTIATE(double)
#undef BMAGUARD_INSTANTIATE

} // namespace bmaguard
