// Dual-branch screenshot + text classifier.
//
// Visual branch: box-pool the 960x540 canvas, a stack of 3x3 stride-2 conv
// blocks with ReLU, global average pool, linear to 576, dropout.
// Text branch: token + position embeddings, post-LN self-attention encoder,
// tanh pooler on the CLS state (312), dropout, linear to 128.
// Head: concat (704), dropout, 256-unit ReLU layer, linear to 2 logits.

#ifndef BMAGUARD_MODEL_CLASSIFIER_HPP_
#define BMAGUARD_MODEL_CLASSIFIER_HPP_

#include <cstdint>
#include <random>
#include <vector>

#include "bmaguard/imaging.hpp"
#include "bmaguard/model/config.hpp"
#include "bmaguard/model/layers.hpp"
#include "bmaguard/model/params.hpp"
#include "bmaguard/model/vocab.hpp"

namespace bmaguard {

enum class Mode { eval, train };

/// Box-pooled canvas kept as integer sums so datasets stay compact.
/// Layout is interleaved RGB, row-major, like RgbImage.
struct PooledImage {
  int width = 0;
  int height = 0;
  int pool = 1;
  std::vector<std::uint16_t> sums;
};

PooledImage pool_image(const RgbImage& img, int pool);

/// (3, H*W) matrix of pooled means in [0,1].
template <typename S>
Mat<S> to_visual_input(const PooledImage& p);

/// (3, H*W) matrix of the full-resolution canvas in [0,1].
template <typename S>
Mat<S> image_tensor(const RgbImage& img);

/// Box-pools a (3, H*W) tensor by `pool`.
template <typename S>
Mat<S> pool_tensor(const Mat<S>& full, int width, int height, int pool);

/// Adjoint of pool_tensor.
template <typename S>
Mat<S> unpool_gradient(const Mat<S>& pooled_grad, int width, int height, int pool);

template <typename S>
struct VisualTape {
  std::vector<Mat<S>> cols;
  std::vector<Mat<S>> pre;
  Vec<S> gap;
  Vec<S> mask;
};

template <typename S>
struct EncoderTape {
  Mat<S> x, q, k, v, o, h1, f1, g;
  std::vector<Mat<S>> probs;
  layers::LayerNormCache<S> ln1, ln2;
};

template <typename S>
struct TextTape {
  std::vector<int> ids;
  layers::LayerNormCache<S> emb_ln;
  std::vector<EncoderTape<S>> enc;
  Mat<S> out;
  Vec<S> pooled;
  Vec<S> mask;
};

template <typename S>
struct HeadTape {
  Vec<S> fused;
  Vec<S> mask;
  Vec<S> hidden_pre;
  Vec<S> hidden;
};

template <typename S>
struct Tape {
  VisualTape<S> visual;
  TextTape<S> text;
  HeadTape<S> head;
  Vec<S> logits;
};

template <typename S>
class DualBranchClassifier {
public:
  struct ConvSlots {
    std::size_t w, b;
  };
  struct EncoderSlots {
    std::size_t wq, bq, wk, bk, wv, bv, wo, bo, ln1_g, ln1_b, w1, b1, w2, b2, ln2_g, ln2_b;
  };
  struct Layout {
    std::vector<ConvSlots> conv;
    std::size_t vis_w, vis_b;
    std::size_t tok_emb, pos_emb, emb_ln_g, emb_ln_b;
    std::vector<EncoderSlots> enc;
    std::size_t pool_w, pool_b, proj_w, proj_b;
    std::size_t head1_w, head1_b, head2_w, head2_b;
  };

  /// Randomly initialized (He for conv, Xavier for linear, N(0, 0.02) for
  /// embeddings, identity layer norms, zero biases).
  DualBranchClassifier(const ModelConfig& config, std::uint64_t seed);
  /// Adopts existing tensors; shapes must match the config.
  DualBranchClassifier(const ModelConfig& config, ParamSet<S> params);

  const ModelConfig& config() const noexcept { return config_; }
  const Layout& layout() const noexcept { return layout_; }
  ParamSet<S>& params() noexcept { return params_; }
  const ParamSet<S>& params() const noexcept { return params_; }

  int input_width() const noexcept { return kNormWidth / config_.visual_pool; }
  int input_height() const noexcept { return kNormHeight / config_.visual_pool; }

  /// `input` is (3, input_height*input_width). Returns the 576-d feature.
  Vec<S> visual_forward(const Mat<S>& input, Mode mode, std::mt19937_64* rng = nullptr,
                        VisualTape<S>* tape = nullptr) const;
  /// Returns the 128-d projected CLS embedding. Padding positions are never
  /// read.
  Vec<S> text_forward(const TokenSequence& tokens, Mode mode, std::mt19937_64* rng = nullptr,
                      TextTape<S>* tape = nullptr) const;
  /// Returns the two logits.
  Vec<S> fuse_and_classify(const Vec<S>& visual, const Vec<S>& text, Mode mode, std::mt19937_64* rng = nullptr,
                           HeadTape<S>* tape = nullptr) const;

  Vec<S> forward(const Mat<S>& input, const TokenSequence& tokens, Mode mode, std::mt19937_64* rng = nullptr,
                 Tape<S>* tape = nullptr) const;

  /// Back-propagates d(loss)/d(logits). Parameter gradients accumulate into
  /// `grads` when non-null; `dinput` receives d(loss)/d(input) when
  /// non-null. With `text_branch` false the text branch is treated as
  /// constant.
  void backward(const Tape<S>& tape, const Vec<S>& dlogits, ParamSet<S>* grads, Mat<S>* dinput = nullptr,
                bool text_branch = true) const;

private:
  void build_layout();
  void initialize(std::uint64_t seed);
  void visual_backward(const VisualTape<S>& tape, const Vec<S>& dfeature, ParamSet<S>* grads, Mat<S>* dinput) const;
  void text_backward(const TextTape<S>& tape, const Vec<S>& dembedding, ParamSet<S>& grads) const;

  ModelConfig config_;
  ParamSet<S> params_;
  Layout layout_{};
};

/// Malicious-class probability of one (image, text) pair in eval mode.
template <typename S>
double predict_probability(const DualBranchClassifier<S>& model, const Vocabulary& vocab, const NormalizedImage& img,
                           std::string_view text);

extern template class DualBranchClassifier<float>;
extern template class DualBranchClassifier<double>;

} // namespace bmaguard

#endif
