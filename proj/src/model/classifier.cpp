#include "bmaguard/model/classifier.hpp"

#include <cmath>
#include <string>

#include "bmaguard/error.hpp"

namespace bmaguard {

PooledImage pool_image(const RgbImage& img, int pool) {
  if (!img.valid()) throw InvalidInput("pool_image: invalid image");
  if (pool < 1 || img.width % pool != 0 || img.height % pool != 0)
    throw InvalidInput("pool_image: image dimensions must be divisible by the pool factor");
  PooledImage out;
  out.width = img.width / pool;
  out.height = img.height / pool;
  out.pool = pool;
  out.sums.assign(static_cast<std::size_t>(out.width) * static_cast<std::size_t>(out.height) * 3, 0);
  for (int y = 0; y < img.height; ++y) {
    const std::uint8_t* row = img.at(0, y);
    std::uint16_t* dst = out.sums.data() + static_cast<std::size_t>(y / pool) * static_cast<std::size_t>(out.width) * 3;
    for (int x = 0; x < img.width; ++x)
      for (int c = 0; c < 3; ++c) dst[(x / pool) * 3 + c] = static_cast<std::uint16_t>(dst[(x / pool) * 3 + c] + row[x * 3 + c]);
  }
  return out;
}

template <typename S>
Mat<S> to_visual_input(const PooledImage& p) {
  const S scale = S(1) / static_cast<S>(p.pool * p.pool * 255);
  Mat<S> out(3, static_cast<Eigen::Index>(p.width) * p.height);
  for (std::size_t i = 0; i < p.sums.size(); ++i) out.data()[i] = static_cast<S>(p.sums[i]) * scale;
  return out;
}

template <typename S>
Mat<S> image_tensor(const RgbImage& img) {
  if (!img.valid()) throw InvalidInput("image_tensor: invalid image");
  Mat<S> out(3, static_cast<Eigen::Index>(img.width) * img.height);
  for (std::size_t i = 0; i < img.pixels.size(); ++i) out.data()[i] = static_cast<S>(img.pixels[i]) / S(255);
  return out;
}

template <typename S>
Mat<S> pool_tensor(const Mat<S>& full, int width, int height, int pool) {
  if (full.cols() != static_cast<Eigen::Index>(width) * height || width % pool || height % pool)
    throw InvalidInput("pool_tensor: shape mismatch");
  const int pw = width / pool, ph = height / pool;
  Mat<S> out = Mat<S>::Zero(full.rows(), static_cast<Eigen::Index>(pw) * ph);
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x)
      out.col(static_cast<Eigen::Index>(y / pool) * pw + x / pool) += full.col(static_cast<Eigen::Index>(y) * width + x);
  return out / static_cast<S>(pool * pool);
}

template <typename S>
Mat<S> unpool_gradient(const Mat<S>& pooled_grad, int width, int height, int pool) {
  const int pw = width / pool;
  const S scale = S(1) / static_cast<S>(pool * pool);
  Mat<S> out(pooled_grad.rows(), static_cast<Eigen::Index>(width) * height);
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x)
      out.col(static_cast<Eigen::Index>(y) * width + x) =
          pooled_grad.col(static_cast<Eigen::Index>(y / pool) * pw + x / pool) * scale;
  return out;
}

template <typename S>
DualBranchClassifier<S>::DualBranchClassifier(const ModelConfig& config, std::uint64_t seed) : config_(config) {
  config_.validate();
  build_layout();
  initialize(seed);
}

template <typename S>
DualBranchClassifier<S>::DualBranchClassifier(const ModelConfig& config, ParamSet<S> params) : config_(config) {
  config_.validate();
  build_layout();
  if (params.size() != params_.size()) throw InvalidInput("parameter count does not match the model config");
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (params[i].rows() != params_[i].rows() || params[i].cols() != params_[i].cols())
      throw InvalidInput("parameter " + params_.name(i) + " has the wrong shape");
  }
  params_ = std::move(params);
}

template <typename S>
void DualBranchClassifier<S>::build_layout() {
  const auto& c = config_;
  int in = 3;
  for (std::size_t i = 0; i < c.conv_channels.size(); ++i) {
    const int out = c.conv_channels[i];
    const std::string p = "visual.conv" + std::to_string(i);
    layout_.conv.push_back({params_.add(p + ".weight", out, in * 9), params_.add(p + ".bias", out, 1)});
    in = out;
  }
  layout_.vis_w = params_.add("visual.proj.weight", c.visual_dim, in);
  layout_.vis_b = params_.add("visual.proj.bias", c.visual_dim, 1);

  const int d = c.text_pooled_dim;
  layout_.tok_emb = params_.add("text.token_embedding", c.vocab_size, d);
  layout_.pos_emb = params_.add("text.position_embedding", c.max_tokens, d);
  layout_.emb_ln_g = params_.add("text.embedding_norm.gamma", d, 1);
  layout_.emb_ln_b = params_.add("text.embedding_norm.beta", d, 1);
  for (int l = 0; l < c.text_layers; ++l) {
    const std::string p = "text.layer" + std::to_string(l);
    EncoderSlots e{};
    e.wq = params_.add(p + ".query.weight", d, d);
    e.bq = params_.add(p + ".query.bias", d, 1);
    e.wk = params_.add(p + ".key.weight", d, d);
    e.bk = params_.add(p + ".key.bias", d, 1);
    e.wv = params_.add(p + ".value.weight", d, d);
    e.bv = params_.add(p + ".value.bias", d, 1);
    e.wo = params_.add(p + ".attn_out.weight", d, d);
    e.bo = params_.add(p + ".attn_out.bias", d, 1);
    e.ln1_g = params_.add(p + ".attn_norm.gamma", d, 1);
    e.ln1_b = params_.add(p + ".attn_norm.beta", d, 1);
    e.w1 = params_.add(p + ".ffn_in.weight", c.text_ffn, d);
    e.b1 = params_.add(p + ".ffn_in.bias", c.text_ffn, 1);
    e.w2 = params_.add(p + ".ffn_out.weight", d, c.text_ffn);
    e.b2 = params_.add(p + ".ffn_out.bias", d, 1);
    e.ln2_g = params_.add(p + ".ffn_norm.gamma", d, 1);
    e.ln2_b = params_.add(p + ".ffn_norm.beta", d, 1);
    layout_.enc.push_back(e);
  }
  layout_.pool_w = params_.add("text.pooler.weight", d, d);
  layout_.pool_b = params_.add("text.pooler.bias", d, 1);
  layout_.proj_w = params_.add("text.proj.weight", c.text_proj_dim, d);
  layout_.proj_b = params_.add("text.proj.bias", c.text_proj_dim, 1);

  layout_.head1_w = params_.add("head.hidden.weight", c.head_hidden, c.fused_dim);
  layout_.head1_b = params_.add("head.hidden.bias", c.head_hidden, 1);
  layout_.head2_w = params_.add("head.logits.weight", c.classes, c.head_hidden);
  layout_.head2_b = params_.add("head.logits.bias", c.classes, 1);
}

template <typename S>
void DualBranchClassifier<S>::initialize(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  auto normal = [&](Mat<S>& m, double stddev) {
    std::normal_distribution<double> dist(0.0, stddev);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = static_cast<S>(dist(rng));
  };
  auto xavier = [&](Mat<S>& m) {
    const double limit = std::sqrt(6.0 / static_cast<double>(m.rows() + m.cols()));
    std::uniform_real_distribution<double> dist(-limit, limit);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = static_cast<S>(dist(rng));
  };
  for (const auto& cv : layout_.conv) normal(params_[cv.w], std::sqrt(2.0 / static_cast<double>(params_[cv.w].cols())));
  xavier(params_[layout_.vis_w]);
  normal(params_[layout_.tok_emb], 0.02);
  normal(params_[layout_.pos_emb], 0.02);
  params_[layout_.emb_ln_g].setOnes();
  for (const auto& e : layout_.enc) {
    for (std::size_t w : {e.wq, e.wk, e.wv, e.wo, e.w1, e.w2}) xavier(params_[w]);
    params_[e.ln1_g].setOnes();
    params_[e.ln2_g].setOnes();
  }
  xavier(params_[layout_.pool_w]);
  xavier(params_[layout_.proj_w]);
  normal(params_[layout_.head1_w], std::sqrt(2.0 / static_cast<double>(config_.fused_dim)));
  xavier(params_[layout_.head2_w]);
}

namespace {

std::mt19937_64& require_rng(Mode mode, std::mt19937_64* rng) {
  if (mode == Mode::train && !rng) throw InvalidInput("train mode needs a random generator");
  return *rng;
}

} // namespace

template <typename S>
Vec<S> DualBranchClassifier<S>::visual_forward(const Mat<S>& input, Mode mode, std::mt19937_64* rng,
                                               VisualTape<S>* tape) const {
  if (input.rows() != 3 || input.cols() != static_cast<Eigen::Index>(input_width()) * input_height())
    throw InvalidInput("visual_forward: expected a (3, " + std::to_string(input_width() * input_height()) + ") input");
  layers::ConvGeometry g{3, input_height(), input_width()};
  Mat<S> x = input;
  for (const auto& cv : layout_.conv) {
    Mat<S> cols = layers::im2col(x, g);
    Mat<S> pre = params_[cv.w] * cols;
    pre.colwise() += params_[cv.b].col(0);
    x = pre.cwiseMax(S(0));
    g = {static_cast<int>(params_[cv.w].rows()), g.out_height(), g.out_width()};
    if (tape) {
      tape->cols.push_back(std::move(cols));
      tape->pre.push_back(std::move(pre));
    }
  }
  Vec<S> gap = x.rowwise().mean();
  Vec<S> feature = params_[layout_.vis_w] * gap + params_[layout_.vis_b].col(0);
  Vec<S> mask;
  if (mode == Mode::train) {
    mask = layers::dropout_mask<S>(feature.size(), config_.dropout_visual, require_rng(mode, rng));
    feature = feature.cwiseProduct(mask);
  }
  if (tape) {
    tape->gap = std::move(gap);
    tape->mask = std::move(mask);
  }
  return feature;
}

template <typename S>
Vec<S> DualBranchClassifier<S>::text_forward(const TokenSequence& tokens, Mode mode, std::mt19937_64* rng,
                                             TextTape<S>* tape) const {
  const int n = tokens.length();
  if (n < 1 || n > config_.max_tokens) throw InvalidInput("text_forward: sequence length out of range");
  const int d = config_.text_pooled_dim;
  const int heads = config_.text_heads, dh = d / heads;
  const S scale = S(1) / std::sqrt(static_cast<S>(dh));

  Mat<S> x(d, n);
  for (int j = 0; j < n; ++j) {
    const int id = tokens.ids[static_cast<std::size_t>(j)];
    if (id < 0 || id >= config_.vocab_size) throw InvalidInput("text_forward: token id outside the vocabulary");
    x.col(j) = (params_[layout_.tok_emb].row(id) + params_[layout_.pos_emb].row(j)).transpose();
  }
  layers::LayerNormCache<S> emb_cache;
  x = layers::layer_norm(x, params_[layout_.emb_ln_g], params_[layout_.emb_ln_b], tape ? &emb_cache : nullptr);
  if (tape) {
    tape->ids.assign(tokens.ids.begin(), tokens.ids.begin() + n);
    tape->emb_ln = std::move(emb_cache);
  }

  for (const auto& e : layout_.enc) {
    EncoderTape<S> et;
    Mat<S> q = params_[e.wq] * x;
    q.colwise() += params_[e.bq].col(0);
    Mat<S> k = params_[e.wk] * x;
    k.colwise() += params_[e.bk].col(0);
    Mat<S> v = params_[e.wv] * x;
    v.colwise() += params_[e.bv].col(0);
    Mat<S> o(d, n);
    for (int h = 0; h < heads; ++h) {
      Mat<S> scores = q.middleRows(h * dh, dh).transpose() * k.middleRows(h * dh, dh) * scale;
      Mat<S> p = layers::softmax_rows(scores);
      o.middleRows(h * dh, dh) = v.middleRows(h * dh, dh) * p.transpose();
      if (tape) et.probs.push_back(std::move(p));
    }
    Mat<S> a = params_[e.wo] * o;
    a.colwise() += params_[e.bo].col(0);
    Mat<S> h1 = layers::layer_norm<S>(x + a, params_[e.ln1_g], params_[e.ln1_b], tape ? &et.ln1 : nullptr);
    Mat<S> f1 = params_[e.w1] * h1;
    f1.colwise() += params_[e.b1].col(0);
    Mat<S> g = f1.unaryExpr([](S z) { return layers::gelu(z); });
    Mat<S> f2 = params_[e.w2] * g;
    f2.colwise() += params_[e.b2].col(0);
    Mat<S> out = layers::layer_norm<S>(h1 + f2, params_[e.ln2_g], params_[e.ln2_b], tape ? &et.ln2 : nullptr);
    if (tape) {
      et.x = std::move(x);
      et.q = std::move(q);
      et.k = std::move(k);
      et.v = std::move(v);
      et.o = std::move(o);
      et.h1 = std::move(h1);
      et.f1 = std::move(f1);
      et.g = std::move(g);
      tape->enc.push_back(std::move(et));
    }
    x = std::move(out);
  }

  Vec<S> pooled = (params_[layout_.pool_w] * x.col(0) + params_[layout_.pool_b].col(0)).array().tanh().matrix();
  Vec<S> mask;
  Vec<S> dropped = pooled;
  if (mode == Mode::train) {
    mask = layers::dropout_mask<S>(pooled.size(), config_.dropout_text, require_rng(mode, rng));
    dropped = pooled.cwiseProduct(mask);
  }
  Vec<S> embedding = params_[layout_.proj_w] * dropped + params_[layout_.proj_b].col(0);
  if (tape) {
    tape->out = std::move(x);
    tape->pooled = std::move(pooled);
    tape->mask = std::move(mask);
  }
  return embedding;
}

template <typename S>
Vec<S> DualBranchClassifier<S>::fuse_and_classify(const Vec<S>& visual, const Vec<S>& text, Mode mode,
                                                  std::mt19937_64* rng, HeadTape<S>* tape) const {
  if (visual.size() != config_.visual_dim || text.size() != config_.text_proj_dim)
    throw InvalidInput("fuse_and_classify: branch dimensions do not match the config");
  Vec<S> fused(config_.fused_dim);
  fused << visual, text;
  Vec<S> mask;
  Vec<S> dropped = fused;
  if (mode == Mode::train) {
    mask = layers::dropout_mask<S>(fused.size(), config_.dropout_fusion, require_rng(mode, rng));
    dropped = fused.cwiseProduct(mask);
  }
  Vec<S> hidden_pre = params_[layout_.head1_w] * dropped + params_[layout_.head1_b].col(0);
  Vec<S> hidden = hidden_pre.cwiseMax(S(0));
  Vec<S> logits = params_[layout_.head2_w] * hidden + params_[layout_.head2_b].col(0);
  if (tape) {
    tape->fused = std::move(fused);
    tape->mask = std::move(mask);
    tape->hidden_pre = std::move(hidden_pre);
    tape->hidden = std::move(hidden);
  }
  return logits;
}

template <typename S>
Vec<S> DualBranchClassifier<S>::forward(const Mat<S>& input, const TokenSequence& tokens, Mode mode,
                                        std::mt19937_64* rng, Tape<S>* tape) const {
  const Vec<S> v = visual_forward(input, mode, rng, tape ? &tape->visual : nullptr);
  const Vec<S> t = text_forward(tokens, mode, rng, tape ? &tape->text : nullptr);
  Vec<S> logits = fuse_and_classify(v, t, mode, rng, tape ? &tape->head : nullptr);
  if (tape) tape->logits = logits;
  return logits;
}

template <typename S>
void DualBranchClassifier<S>::backward(const Tape<S>& tape, const Vec<S>& dlogits, ParamSet<S>* grads,
                                       Mat<S>* dinput, bool text_branch) const {
  const auto& h = tape.head;
  const Vec<S> dropped = h.mask.size() ? Vec<S>(h.fused.cwiseProduct(h.mask)) : h.fused;
  if (grads) {
    (*grads)[layout_.head2_w] += dlogits * h.hidden.transpose();
    (*grads)[layout_.head2_b].col(0) += dlogits;
  }
  Vec<S> dhidden = params_[layout_.head2_w].transpose() * dlogits;
  dhidden = (h.hidden_pre.array() > S(0)).select(dhidden, S(0));
  if (grads) {
    (*grads)[layout_.head1_w] += dhidden * dropped.transpose();
    (*grads)[layout_.head1_b].col(0) += dhidden;
  }
  Vec<S> dfused = params_[layout_.head1_w].transpose() * dhidden;
  if (h.mask.size()) dfused = dfused.cwiseProduct(h.mask);

  visual_backward(tape.visual, dfused.head(config_.visual_dim), grads, dinput);
  if (text_branch && grads) text_backward(tape.text, dfused.tail(config_.text_proj_dim), *grads);
}

template <typename S>
void DualBranchClassifier<S>::visual_backward(const VisualTape<S>& tape, const Vec<S>& dfeature, ParamSet<S>* grads,
                                              Mat<S>* dinput) const {
  const Vec<S> d = tape.mask.size() ? Vec<S>(dfeature.cwiseProduct(tape.mask)) : dfeature;
  if (grads) {
    (*grads)[layout_.vis_w] += d * tape.gap.transpose();
    (*grads)[layout_.vis_b].col(0) += d;
  }
  const Vec<S> dgap = params_[layout_.vis_w].transpose() * d;

  std::vector<layers::ConvGeometry> geo{{3, input_height(), input_width()}};
  for (const auto& cv : layout_.conv)
    geo.push_back({static_cast<int>(params_[cv.w].rows()), geo.back().out_height(), geo.back().out_width()});

  const Eigen::Index positions = tape.pre.back().cols();
  Mat<S> dact = dgap.replicate(1, positions) / static_cast<S>(positions);
  for (std::size_t i = layout_.conv.size(); i-- > 0;) {
    const auto& cv = layout_.conv[i];
    Mat<S> dpre = (tape.pre[i].array() > S(0)).select(dact, S(0));
    if (grads) {
      (*grads)[cv.w] += dpre * tape.cols[i].transpose();
      (*grads)[cv.b].col(0) += dpre.rowwise().sum();
    }
    if (i == 0 && !dinput) break;
    const Mat<S> dcols = params_[cv.w].transpose() * dpre;
    dact = layers::col2im(dcols, geo[i]);
  }
  if (dinput) *dinput = std::move(dact);
}

template <typename S>
void DualBranchClassifier<S>::text_backward(const TextTape<S>& tape, const Vec<S>& dembedding,
                                            ParamSet<S>& grads) const {
  const int d = config_.text_pooled_dim;
  const int heads = config_.text_heads, dh = d / heads;
  const S scale = S(1) / std::sqrt(static_cast<S>(dh));
  const auto n = static_cast<Eigen::Index>(tape.ids.size());

  const Vec<S> dropped = tape.mask.size() ? Vec<S>(tape.pooled.cwiseProduct(tape.mask)) : tape.pooled;
  grads[layout_.proj_w] += dembedding * dropped.transpose();
  grads[layout_.proj_b].col(0) += dembedding;
  Vec<S> dpooled = params_[layout_.proj_w].transpose() * dembedding;
  if (tape.mask.size()) dpooled = dpooled.cwiseProduct(tape.mask);
  const Vec<S> dz = dpooled.cwiseProduct((S(1) - tape.pooled.array().square()).matrix());
  grads[layout_.pool_w] += dz * tape.out.col(0).transpose();
  grads[layout_.pool_b].col(0) += dz;

  Mat<S> dx = Mat<S>::Zero(d, n);
  dx.col(0) = params_[layout_.pool_w].transpose() * dz;

  for (std::size_t l = layout_.enc.size(); l-- > 0;) {
    const auto& e = layout_.enc[l];
    const auto& et = tape.enc[l];
    const Mat<S> dsum2 =
        layers::layer_norm_backward(dx, params_[e.ln2_g], et.ln2, &grads[e.ln2_g], &grads[e.ln2_b]);
    grads[e.w2] += dsum2 * et.g.transpose();
    grads[e.b2].col(0) += dsum2.rowwise().sum();
    const Mat<S> dg = params_[e.w2].transpose() * dsum2;
    const Mat<S> df1 = dg.cwiseProduct(et.f1.unaryExpr([](S z) { return layers::gelu_grad(z); }));
    grads[e.w1] += df1 * et.h1.transpose();
    grads[e.b1].col(0) += df1.rowwise().sum();
    const Mat<S> dh1 = dsum2 + params_[e.w1].transpose() * df1;
    const Mat<S> dsum1 =
        layers::layer_norm_backward(dh1, params_[e.ln1_g], et.ln1, &grads[e.ln1_g], &grads[e.ln1_b]);

    grads[e.wo] += dsum1 * et.o.transpose();
    grads[e.bo].col(0) += dsum1.rowwise().sum();
    const Mat<S> dout = params_[e.wo].transpose() * dsum1;

    Mat<S> dq(d, n), dk(d, n), dv(d, n);
    for (int h = 0; h < heads; ++h) {
      const auto& p = et.probs[static_cast<std::size_t>(h)];
      const Mat<S> doh = dout.middleRows(h * dh, dh);
      dv.middleRows(h * dh, dh) = doh * p;
      const Mat<S> dp = doh.transpose() * et.v.middleRows(h * dh, dh);
      const Vec<S> rowdot = dp.cwiseProduct(p).rowwise().sum();
      const Mat<S> ds = (p.array() * (dp.colwise() - rowdot).array()).matrix() * scale;
      dq.middleRows(h * dh, dh) = et.k.middleRows(h * dh, dh) * ds.transpose();
      dk.middleRows(h * dh, dh) = et.q.middleRows(h * dh, dh) * ds;
    }
    grads[e.wq] += dq * et.x.transpose();
    grads[e.bq].col(0) += dq.rowwise().sum();
    grads[e.wk] += dk * et.x.transpose();
    grads[e.bk].col(0) += dk.rowwise().sum();
    grads[e.wv] += dv * et.x.transpose();
    grads[e.bv].col(0) += dv.rowwise().sum();
    dx = dsum1 + params_[e.wq].transpose() * dq + params_[e.wk].transpose() * dk + params_[e.wv].transpose() * dv;
  }

  const Mat<S> demb =
      layers::layer_norm_backward(dx, params_[layout_.emb_ln_g], tape.emb_ln, &grads[layout_.emb_ln_g],
                                  &grads[layout_.emb_ln_b]);
  for (Eigen::Index j = 0; j < n; ++j) {
    grads[layout_.tok_emb].row(tape.ids[static_cast<std::size_t>(j)]) += demb.col(j).transpose();
    grads[layout_.pos_emb].row(j) += demb.col(j).transpose();
  }
}

template <typename S>
double predict_probability(const DualBranchClassifier<S>& model, const Vocabulary& vocab, const NormalizedImage& img,
                           std::string_view text) {
  const auto tokens = tokenize(text, vocab, model.config().max_tokens);
  const Mat<S> input = to_visual_input<S>(pool_image(img.image, model.config().visual_pool));
  const Vec<S> probs = layers::softmax<S>(model.forward(input, tokens, Mode::eval));
  return static_cast<double>(probs(1));
}

template class DualBranchClassifier<float>;
template class DualBranchClassifier<double>;

#define BMAGUARD_INSTANTIATE(S)                                                                                       \
  template Mat<S> to_visual_input<S>(const PooledImage&);                                                             \
  template Mat<S> image_tensor<S>(const RgbImage&);                                                                   \
  template Mat<S> pool_tensor<S>(const Mat<S>&, int, int, int);                                                       \
  template Mat<S> unpool_gradient<S>(const Mat<S>&, int, int, int);                                                   \
  template double predict_probability<S>(const DualBranchClassifier<S>&, const Vocabulary&, const NormalizedImage&,   \
                                         std::string_view);
BMAGUARD_INSTANTIATE(float)
BMAGUARD_INSTANTIATE(double)
#undef BMAGUARD_INSTANTIATE

} // namespace bmaguard
