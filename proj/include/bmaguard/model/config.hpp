// Model and training configuration.

#ifndef BMAGUARD_MODEL_CONFIG_HPP_
#define BMAGUARD_MODEL_CONFIG_HPP_

#include <cstdint>
#include <vector>

#include <json.hpp>

namespace bmaguard {

struct ModelConfig {
  int visual_dim = 576;
  int text_pooled_dim = 312;
  int text_proj_dim = 128;
  int fused_dim = 704;
  int head_hidden = 256;
  int classes = 2;
  double dropout_visual = 0.3;
  double dropout_text = 0.3;
  double dropout_fusion = 0.6;

  /// The visual branch box-pools the 960x540 input by this factor first.
  int visual_pool = 4;
  /// Output channels of the 3x3 stride-2 conv blocks.
  std::vector<int> conv_channels = {8, 16, 32, 64};

  int vocab_size = 0;
  int max_tokens = 512;
  int text_layers = 2;
  int text_heads = 4;
  int text_ffn = 624;

  /// Throws InvalidInput unless the fusion and head dimensions are coherent.
  void validate() const;

  /// Small conv/text stacks with the production interface dimensions.
  static ModelConfig toy(int vocab_size);
};

enum class OptimizerKind { sgd, adamw };

struct TrainConfig {
  double learning_rate = 2e-6;
  double weight_decay = 5e-4;
  int batch_size = 64;
  /// Indexed by class; use class_weights_from_counts.
  std::vector<double> class_weights = {1.0, 1.0};
  int epochs = 1;
  std::uint64_t seed = 0;
  OptimizerKind optimizer = OptimizerKind::sgd;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;

  void validate() const;
};

void to_json(nlohmann::json& j, const ModelConfig& c);
void from_json(const nlohmann::json& j, ModelConfig& c);

} // namespace bmaguard

#endif
