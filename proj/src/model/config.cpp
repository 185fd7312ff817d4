#include "bmaguard/model/config.hpp"

#include <string>

#include "bmaguard/error.hpp"

namespace bmaguard {

void ModelConfig::validate() const {
  if (fused_dim != visual_dim + text_proj_dim)
    throw InvalidInput("fused_dim " + std::to_string(fused_dim) + " != visual_dim + text_proj_dim");
  if (classes != 2) throw InvalidInput("only binary classification is supported");
  if (visual_pool < 1 || conv_channels.empty()) throw InvalidInput("invalid visual backbone shape");
  for (int c : conv_channels)
    if (c < 1) throw InvalidInput("conv channels must be positive");
  if (text_heads < 1 || text_pooled_dim % text_heads != 0)
    throw InvalidInput("text_pooled_dim must be divisible by text_heads");
  if (vocab_size < 3) throw InvalidInput("vocab_size must include the special tokens");
  if (max_tokens < 1 || text_layers < 0 || text_ffn < 1 || head_hidden < 1)
    throw InvalidInput("invalid text encoder shape");
  for (double p : {dropout_visual, dropout_text, dropout_fusion})
    if (!(p >= 0.0 && p < 1.0)) throw InvalidInput("dropout must lie in [0, 1)");
}

ModelConfig ModelConfig::toy(int vocab_size) {
  ModelConfig c;
  c.vocab_size = vocab_size;
  c.conv_channels = {3, 4};
  c.text_layers = 1;
  c.text_ffn = 16;
  c.max_tokens = 32;
  return c;
}

void TrainConfig::validate() const {
  if (!(learning_rate >= 0.0)) throw InvalidInput("learning_rate must be non-negative");
  if (!(weight_decay >= 0.0)) throw InvalidInput("weight_decay must be non-negative");
  if (batch_size < 1) throw InvalidInput("batch_size must be positive");
  if (class_weights.size() != 2) throw InvalidInput("class_weights must have two entries");
  for (double w : class_weights)
    if (!(w > 0.0)) throw InvalidInput("class weights must be positive");
}

void to_json(nlohmann::json& j, const ModelConfig& c) {
  j = {{"visual_dim", c.visual_dim},         {"text_pooled_dim", c.text_pooled_dim},
       {"text_proj_dim", c.text_proj_dim},   {"fused_dim", c.fused_dim},
       {"head_hidden", c.head_hidden},       {"classes", c.classes},
       {"dropout_visual", c.dropout_visual}, {"dropout_text", c.dropout_text},
       {"dropout_fusion", c.dropout_fusion}, {"visual_pool", c.visual_pool},
       {"conv_channels", c.conv_channels},   {"vocab_size", c.vocab_size},
       {"max_tokens", c.max_tokens},         {"text_layers", c.text_layers},
       {"text_heads", c.text_heads},         {"text_ffn", c.text_ffn}};
}

void from_json(const nlohmann::json& j, ModelConfig& c) {
  j.at("visual_dim").get_to(c.visual_dim);
  j.at("text_pooled_dim").get_to(c.text_pooled_dim);
  j.at("text_proj_dim").get_to(c.text_proj_dim);
  j.at("fused_dim").get_to(c.fused_dim);
  j.at("head_hidden").get_to(c.head_hidden);
  j.at("classes").get_to(c.classes);
  j.at("dropout_visual").get_to(c.dropout_visual);
  j.at("dropout_text").get_to(c.dropout_text);
  j.at("dropout_fusion").get_to(c.dropout_fusion);
  j.at("visual_pool").get_to(c.visual_pool);
  j.at("conv_channels").get_to(c.conv_channels);
  j.at("vocab_size").get_to(c.vocab_size);
  j.at("max_tokens").get_to(c.max_tokens);
  j.at("text_layers").get_to(c.text_layers);
  j.at("text_heads").get_to(c.text_heads);
  j.at("text_ffn").get_to(c.text_ffn);
}

} // namespace bmaguard
