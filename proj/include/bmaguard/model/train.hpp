// Class-weighted cross-entropy, optimizers and the epoch loop.

#ifndef BMAGUARD_MODEL_TRAIN_HPP_
#define BMAGUARD_MODEL_TRAIN_HPP_

#include <cstddef>
#include <memory>
#include <random>
#include <span>
#include <vector>

#include "bmaguard/model/classifier.hpp"
#include "bmaguard/model/config.hpp"

namespace bmaguard {

/// One training/evaluation unit. Label 1 is malicious.
struct TrainSample {
  std::shared_ptr<const PooledImage> image;
  TokenSequence tokens;
  int label = 0;
};

/// w_c = N / (2 * N_c).
std::vector<double> class_weights_from_counts(std::size_t n_benign, std::size_t n_malicious);

/// Mean over the batch of w_y * -log softmax(logits)_y. `logits` is
/// (2, batch). Writes d(loss)/d(logits) when `dlogits` is non-null.
template <typename S>
double compute_loss(const Mat<S>& logits, std::span<const int> labels, std::span<const double> class_weights,
                    Mat<S>* dlogits = nullptr);

/// Batch loss with gradients accumulated into `grads` (when non-null).
/// Dropout is active only in train mode.
template <typename S>
double loss_and_gradient(const DualBranchClassifier<S>& model, std::span<const TrainSample* const> batch,
                         std::span<const double> class_weights, Mode mode, std::mt19937_64* rng, ParamSet<S>* grads);

/// Plain SGD with decoupled weight decay (p -= lr * (g + wd * p)), or AdamW.
template <typename S>
class Optimizer {
public:
  Optimizer(const TrainConfig& config, const ParamSet<S>& like);
  void step(ParamSet<S>& params, const ParamSet<S>& grads);

private:
  TrainConfig config_;
  ParamSet<S> m_, v_;
  long t_ = 0;
};

struct EpochStats {
  double mean_loss = 0;
  std::vector<double> batch_losses;
};

/// One optimizer step on `batch`; returns the pre-update loss.
template <typename S>
double train_step(DualBranchClassifier<S>& model, std::span<const TrainSample* const> batch, const TrainConfig& config,
                  Optimizer<S>& optimizer, std::mt19937_64& rng);

/// Shuffles with `rng`, then steps through batches of config.batch_size
/// (the last may be short). Throws TrainingDiverged on a non-finite loss.
template <typename S>
EpochStats train_epoch(DualBranchClassifier<S>& model, std::span<const TrainSample> data, const TrainConfig& config,
                       Optimizer<S>& optimizer, std::mt19937_64& rng);

/// Eval-mode malicious-class probabilities.
template <typename S>
std::vector<double> predict_batch(const DualBranchClassifier<S>& model, std::span<const TrainSample> data);

extern template class Optimizer<float>;
extern template class Optimizer<double>;

} // namespace bmaguard

#endif
