#include "memlab/model.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace memlab::model {

void ModelConfig::validate() const {
  if (vocab_size < tok::kNumSpecials) {
    throw std::invalid_argument("ModelConfig: vocab_size must cover the special tokens");
  }
  if (d_model < 1 || n_layers < 1 || n_heads < 1 || d_ff < 1 || max_seq_len < 2) {
    throw std::invalid_argument("ModelConfig: dimensions must be positive");
  }
  if (d_model % n_heads != 0) {
    throw std::invalid_argument("ModelConfig: d_model " + std::to_string(d_model) +
                                " not divisible by n_heads " + std::to_string(n_heads));
  }
  if (dropout < 0.0 || dropout >= 1.0) {
    throw std::invalid_argument("ModelConfig: dropout must lie in [0, 1)");
  }
}

long ModelConfig::param_count() const {
  const long d = d_model, ff = d_ff, v = vocab_size, ctx = max_seq_len, layers = n_layers;
  long per_layer = 4 * d * d + 2 * d * ff + ff + 9 * d;
  long total = v * d + ctx * d + layers * per_layer + 2 * d;
  if (!tie_embeddings) total += d * v;
  return total;
}

TransformerLM::TransformerLM(const ModelConfig& cfg) : cfg_(cfg) {
  cfg_.validate();
  build_layout();
}

TransformerLM::TransformerLM(const ModelConfig& cfg, RngState& rng) : TransformerLM(cfg) {
  constexpr double kInitStd = 0.02;
  for (Parameter& p : params_) {
    if (!p.decay) continue;  // biases and LN gains are handled below
    for (double& v : p.value.values()) v = kInitStd * rng.next_gaussian();
  }
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    params_[static_cast<std::size_t>(layers_[l].ln1_g)].value.fill(1.0);
    params_[static_cast<std::size_t>(layers_[l].ln2_g)].value.fill(1.0);
  }
  params_[static_cast<std::size_t>(lnf_g_)].value.fill(1.0);
}

void TransformerLM::build_layout() {
  const long d = cfg_.d_model, ff = cfg_.d_ff, v = cfg_.vocab_size, ctx = cfg_.max_seq_len;
  params_.clear();
  layers_.clear();
  auto add = [&](const std::string& name, std::vector<long> shape, bool decay) {
    params_.emplace_back(name, Tensor(std::move(shape)), decay);
    return static_cast<int>(params_.size() - 1);
  };
  tok_emb_ = add("tok_emb", {v, d}, true);
  pos_emb_ = add("pos_emb", {ctx, d}, true);
  for (int l = 0; l < cfg_.n_layers; ++l) {
    const std::string prefix = "layer" + std::to_string(l) + ".";
    LayerParams lp;
    lp.ln1_g = add(prefix + "ln1.gain", {d}, false);
    lp.ln1_b = add(prefix + "ln1.bias", {d}, false);
    lp.wq = add(prefix + "attn.wq", {d, d}, true);
    lp.bq = add(prefix + "attn.bq", {d}, false);
    lp.wk = add(prefix + "attn.wk", {d, d}, true);
    lp.bk = add(prefix + "attn.bk", {d}, false);
    lp.wv = add(prefix + "attn.wv", {d, d}, true);
    lp.bv = add(prefix + "attn.bv", {d}, false);
    lp.wo = add(prefix + "attn.wo", {d, d}, true);
    lp.bo = add(prefix + "attn.bo", {d}, false);
    lp.ln2_g = add(prefix + "ln2.gain", {d}, false);
    lp.ln2_b = add(prefix + "ln2.bias", {d}, false);
    lp.w1 = add(prefix + "mlp.w1", {d, ff}, true);
    lp.b1 = add(prefix + "mlp.b1", {ff}, false);
    lp.w2 = add(prefix + "mlp.w2", {ff, d}, true);
    lp.b2 = add(prefix + "mlp.b2", {d}, false);
    layers_.push_back(lp);
  }
  lnf_g_ = add("lnf.gain", {d}, false);
  lnf_b_ = add("lnf.bias", {d}, false);
  head_ = cfg_.tie_embeddings ? -1 : add("head", {d, v}, true);
}

long TransformerLM::parameter_count() const {
  long n = 0;
  for (const Parameter& p : params_) n += p.value.size();
  return n;
}

void TransformerLM::zero_grads() {
  for (Parameter& p : params_) p.zero_grad();
}

// ---- forward ----

namespace {

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b) {
  Tensor y = matmul(x, w);
  const long rows = y.dim(0), cols = y.dim(1);
  for (long i = 0; i < rows; ++i) {
    double* yi = y.row(i);
    for (long j = 0; j < cols; ++j) yi[j] += b.at(j);
  }
  return y;
}

Tensor dropout_mask(const std::vector<long>& shape, double p, RngState& rng) {
  Tensor mask{shape};
  const double keep_scale = 1.0 / (1.0 - p);
  for (double& v : mask.values()) v = rng.next_double() < p ? 0.0 : keep_scale;
  return mask;
}

void apply_mask(Tensor& x, const Tensor& mask) {
  double* xs = x.data();
  const double* ms = mask.data();
  for (long i = 0; i < x.size(); ++i) xs[i] *= ms[i];
}

}  // namespace

struct TransformerLM::Activations {
  struct LayerActs {
    Tensor x_in, a1, q, k, v, att, ctx, x_mid, a2, f1, f2;
    Tensor attn_mask, mlp_mask;  // dropout masks, empty when unused
  };
  Tensor x0;
  Tensor emb_mask;
  std::vector<LayerActs> layers;
  Tensor final_in;  // input to the final layer norm
  Tensor yln;
};

Tensor TransformerLM::forward_internal(std::span<const int> tokens, Activations* acts,
                                       RngState* dropout_rng) const {
  const long t = static_cast<long>(tokens.size());
  const long d = cfg_.d_model;
  const int heads = cfg_.n_heads;
  const long dh = d / heads;
  if (t < 1) throw std::invalid_argument("forward: empty token sequence");
  if (t > cfg_.max_seq_len) {
    throw std::invalid_argument("forward: sequence length " + std::to_string(t) +
                                " exceeds max_seq_len " + std::to_string(cfg_.max_seq_len));
  }
  const bool use_dropout = cfg_.dropout > 0.0 && dropout_rng != nullptr;

  const Tensor& emb = param(tok_emb_);
  const Tensor& pos = param(pos_emb_);
  Tensor x{{t, d}};
  for (long i = 0; i < t; ++i) {
    const int id = tokens[static_cast<std::size_t>(i)];
    if (id < 0 || id >= cfg_.vocab_size) {
      throw std::invalid_argument("forward: token id " + std::to_string(id) + " out of range");
    }
    const double* er = emb.row(id);
    const double* pr = pos.row(i);
    double* xr = x.row(i);
    for (long c = 0; c < d; ++c) xr[c] = er[c] + pr[c];
  }
  if (use_dropout) {
    Tensor mask = dropout_mask(x.shape(), cfg_.dropout, *dropout_rng);
    apply_mask(x, mask);
    if (acts) acts->emb_mask = std::move(mask);
  }
  if (acts) {
    acts->x0 = x;
    acts->layers.resize(static_cast<std::size_t>(cfg_.n_layers));
  }

  const double inv_sqrt_dh = 1.0 / std::sqrt(static_cast<double>(dh));
  for (int l = 0; l < cfg_.n_layers; ++l) {
    const LayerParams& lp = layers_[static_cast<std::size_t>(l)];
    Activations::LayerActs* la = acts ? &acts->layers[static_cast<std::size_t>(l)] : nullptr;
    if (la) la->x_in = x;

    Tensor a1 = layer_norm(x, param(lp.ln1_g), param(lp.ln1_b));
    Tensor q = linear(a1, param(lp.wq), param(lp.bq));
    Tensor k = linear(a1, param(lp.wk), param(lp.bk));
    Tensor v = linear(a1, param(lp.wv), param(lp.bv));

    // Causal attention: row i attends to positions 0..i only.
    Tensor att{{static_cast<long>(heads), t, t}};
    Tensor ctx{{t, d}};
    for (int h = 0; h < heads; ++h) {
      const long off = h * dh;
      for (long i = 0; i < t; ++i) {
        const double* qi = q.row(i) + off;
        double* arow = &att.at(h, i, 0);
        double mx = -1e300;
        for (long j = 0; j <= i; ++j) {
          const double* kj = k.row(j) + off;
          double s = 0.0;
          for (long c = 0; c < dh; ++c) s += qi[c] * kj[c];
          s *= inv_sqrt_dh;
          arow[j] = s;
          mx = std::max(mx, s);
        }
        double sum = 0.0;
        for (long j = 0; j <= i; ++j) {
          arow[j] = std::exp(arow[j] - mx);
          sum += arow[j];
        }
        for (long j = 0; j <= i; ++j) arow[j] /= sum;
        double* ci = ctx.row(i) + off;
        for (long j = 0; j <= i; ++j) {
          const double w = arow[j];
          const double* vj = v.row(j) + off;
          for (long c = 0; c < dh; ++c) ci[c] += w * vj[c];
        }
      }
    }

    Tensor attn_out = linear(ctx, param(lp.wo), param(lp.bo));
    if (use_dropout) {
      Tensor mask = dropout_mask(attn_out.shape(), cfg_.dropout, *dropout_rng);
      apply_mask(attn_out, mask);
      if (la) la->attn_mask = std::move(mask);
    }
    Tensor x_mid = x;
    add_inplace(x_mid, attn_out);

    Tensor a2 = layer_norm(x_mid, param(lp.ln2_g), param(lp.ln2_b));
    Tensor f1 = linear(a2, param(lp.w1), param(lp.b1));
    Tensor f2 = gelu(f1);
    Tensor mlp_out = linear(f2, param(lp.w2), param(lp.b2));
    if (use_dropout) {
      Tensor mask = dropout_mask(mlp_out.shape(), cfg_.dropout, *dropout_rng);
      apply_mask(mlp_out, mask);
      if (la) la->mlp_mask = std::move(mask);
    }
    Tensor x_out = x_mid;
    add_inplace(x_out, mlp_out);

    if (la) {
      la->a1 = std::move(a1);
      la->q = std::move(q);
      la->k = std::move(k);
      la->v = std::move(v);
      la->att = std::move(att);
      la->ctx = std::move(ctx);
      la->x_mid = std::move(x_mid);
      la->a2 = std::move(a2);
      la->f1 = std::move(f1);
      la->f2 = std::move(f2);
      x = std::move(x_out);
    } else {
      x = std::move(x_out);
    }
  }

  Tensor yln = layer_norm(x, param(lnf_g_), param(lnf_b_));
  const Tensor& head = head_ >= 0 ? param(head_) : param(tok_emb_);
  Tensor logits = head_ >= 0 ? matmul(yln, head) : matmul(yln, transpose(head));
  if (acts) {
    acts->final_in = std::move(x);
    acts->yln = std::move(yln);
  }
  return logits;
}

Tensor TransformerLM::forward(std::span<const int> tokens) const {
  return forward_internal(tokens, nullptr, nullptr);
}

// ---- backward ----

namespace {

/// dw += x^T dy ; db += column sums of dy ; returns dx = dy w^T.
Tensor linear_backward(const Tensor& x, const Tensor& w, const Tensor& dy, Tensor& dw_acc,
                       Tensor& db_acc) {
  add_inplace(dw_acc, matmul(transpose(x), dy));
  const long rows = dy.dim(0), cols = dy.dim(1);
  for (long i = 0; i < rows; ++i) {
    const double* gi = dy.row(i);
    for (long j = 0; j < cols; ++j) db_acc.at(j) += gi[j];
  }
  return matmul(dy, transpose(w));
}

}  // namespace

void TransformerLM::backward_internal(std::span<const int> tokens, const Activations& acts,
                                      const Tensor& dlogits_in, double scale) {
  const long t = static_cast<long>(tokens.size());
  const long d = cfg_.d_model;
  const int heads = cfg_.n_heads;
  const long dh = d / heads;
  const double inv_sqrt_dh = 1.0 / std::sqrt(static_cast<double>(dh));

  Tensor dlogits = dlogits_in;
  scale_inplace(dlogits, scale);

  // Output head (tied or separate). The head carries no bias.
  Tensor dyln;
  if (head_ >= 0) {
    add_inplace(grad(head_), matmul(transpose(acts.yln), dlogits));
    dyln = matmul(dlogits, transpose(param(head_)));
  } else {
    // logits = yln * emb^T : d_emb += dlogits^T * yln ; dyln = dlogits * emb.
    add_inplace(grad(tok_emb_), matmul(transpose(dlogits), acts.yln));
    dyln = matmul(dlogits, param(tok_emb_));
  }

  Tensor dx, dgamma, dbeta;
  layer_norm_backward(acts.final_in, param(lnf_g_), 1e-5, dyln, dx, dgamma, dbeta);
  add_inplace(grad(lnf_g_), dgamma);
  add_inplace(grad(lnf_b_), dbeta);

  for (int l = cfg_.n_layers - 1; l >= 0; --l) {
    const LayerParams& lp = layers_[static_cast<std::size_t>(l)];
    const Activations::LayerActs& la = acts.layers[static_cast<std::size_t>(l)];

    // x_out = x_mid + dropout(mlp_out)
    Tensor dmlp_out = dx;
    if (la.mlp_mask.size() > 0) apply_mask(dmlp_out, la.mlp_mask);
    Tensor df2 = linear_backward(la.f2, param(lp.w2), dmlp_out, grad(lp.w2), grad(lp.b2));
    Tensor df1 = gelu_backward(la.f1, df2);
    Tensor da2 = linear_backward(la.a2, param(lp.w1), df1, grad(lp.w1), grad(lp.b1));
    Tensor dx_mid, dg2, db2;
    layer_norm_backward(la.x_mid, param(lp.ln2_g), 1e-5, da2, dx_mid, dg2, db2);
    add_inplace(grad(lp.ln2_g), dg2);
    add_inplace(grad(lp.ln2_b), db2);
    add_inplace(dx_mid, dx);  // residual branch

    // x_mid = x_in + dropout(attn_out)
    Tensor dattn_out = dx_mid;
    if (la.attn_mask.size() > 0) apply_mask(dattn_out, la.attn_mask);
    Tensor dctx = linear_backward(la.ctx, param(lp.wo), dattn_out, grad(lp.wo), grad(lp.bo));

    Tensor dq{{t, d}}, dk{{t, d}}, dv{{t, d}};
    std::vector<double> ds_row(static_cast<std::size_t>(t));
    for (int h = 0; h < heads; ++h) {
      const long off = h * dh;
      for (long i = 0; i < t; ++i) {
        const double* arow = la.att.data() + (static_cast<long>(h) * t + i) * t;
        const double* dci = dctx.row(i) + off;
        // datt[j] = dctx_i . v_j ; then softmax backward over the prefix.
        double inner = 0.0;
        for (long j = 0; j <= i; ++j) {
          const double* vj = la.v.row(j) + off;
          double s = 0.0;
          for (long c = 0; c < dh; ++c) s += dci[c] * vj[c];
          ds_row[static_cast<std::size_t>(j)] = s;
          inner += s * arow[j];
        }
        for (long j = 0; j <= i; ++j) {
          const double da = arow[j] * (ds_row[static_cast<std::size_t>(j)] - inner);
          ds_row[static_cast<std::size_t>(j)] = da;
          // dv_j += att[i][j] * dctx_i
          double* dvj = dv.row(j) + off;
          const double w = arow[j];
          for (long c = 0; c < dh; ++c) dvj[c] += w * dci[c];
        }
        // dq_i += sum_j ds[j] * k_j * inv_sqrt ; dk_j += ds[j] * q_i * inv_sqrt
        double* dqi = dq.row(i) + off;
        const double* qi = la.q.row(i) + off;
        for (long j = 0; j <= i; ++j) {
          const double w = ds_row[static_cast<std::size_t>(j)] * inv_sqrt_dh;
          const double* kj = la.k.row(j) + off;
          double* dkj = dk.row(j) + off;
          for (long c = 0; c < dh; ++c) {
            dqi[c] += w * kj[c];
            dkj[c] += w * qi[c];
          }
        }
      }
    }

    Tensor da1 = linear_backward(la.a1, param(lp.wq), dq, grad(lp.wq), grad(lp.bq));
    add_inplace(da1, linear_backward(la.a1, param(lp.wk), dk, grad(lp.wk), grad(lp.bk)));
    add_inplace(da1, linear_backward(la.a1, param(lp.wv), dv, grad(lp.wv), grad(lp.bv)));

    Tensor dx_in, dg1, db1;
    layer_norm_backward(la.x_in, param(lp.ln1_g), 1e-5, da1, dx_in, dg1, db1);
    add_inplace(grad(lp.ln1_g), dg1);
    add_inplace(grad(lp.ln1_b), db1);
    add_inplace(dx_in, dx_mid);  // residual branch
    dx = std::move(dx_in);
  }

  if (acts.emb_mask.size() > 0) apply_mask(dx, acts.emb_mask);
  Tensor& demb = grad(tok_emb_);
  Tensor& dpos = grad(pos_emb_);
  for (long i = 0; i < t; ++i) {
    const double* gi = dx.row(i);
    double* er = demb.row(tokens[static_cast<std::size_t>(i)]);
    double* pr = dpos.row(i);
    for (long c = 0; c < d; ++c) {
      er[c] += gi[c];
      pr[c] += gi[c];
    }
  }
}

// ---- losses ----

TransformerLM::EncodedInstance TransformerLM::encode_instance(const prompts::Instance& inst,
                                                              const tok::Vocab& vocab) const {
  EncodedInstance enc;
  enc.ids.push_back(tok::kBosId);
  const std::vector<int> prompt_ids = vocab.encode(inst.prompt);
  enc.ids.insert(enc.ids.end(), prompt_ids.begin(), prompt_ids.end());
  const std::size_t prompt_len = prompt_ids.size();
  const std::vector<int> target_ids = vocab.encode(inst.target);
  enc.ids.insert(enc.ids.end(), target_ids.begin(), target_ids.end());
  enc.ids.push_back(tok::kEosId);

  const std::size_t n = enc.ids.size();
  if (static_cast<long>(n) > cfg_.max_seq_len) {
    throw std::invalid_argument("instance too long (" + std::to_string(n) + " > " +
                                std::to_string(cfg_.max_seq_len) + " tokens): " +
                                inst.meta.serialize());
  }
  enc.targets.assign(n, 0);
  enc.loss_mask.assign(n, 0);
  for (std::size_t i = 0; i + 1 < n; ++i) enc.targets[i] = enc.ids[i + 1];
  if (inst.mask == prompts::MaskPolicy::kFull) {
    for (std::size_t i = 0; i + 1 < n; ++i) enc.loss_mask[i] = 1;
  } else {
    if (target_ids.empty()) {
      throw std::invalid_argument("target-only mask with empty target: " + inst.meta.serialize());
    }
    // Positions predicting the target tokens and the closing EOS.
    for (std::size_t i = prompt_len; i <= prompt_len + target_ids.size(); ++i) {
      enc.loss_mask[i] = 1;
    }
  }
  return enc;
}

double TransformerLM::instance_loss_value(const prompts::Instance& inst,
                                          const tok::Vocab& vocab) const {
  const EncodedInstance enc = encode_instance(inst, vocab);
  const Tensor logits = forward_internal(enc.ids, nullptr, nullptr);
  return masked_cross_entropy(logits, enc.targets, enc.loss_mask);
}

double TransformerLM::instance_loss(const prompts::Instance& inst, const tok::Vocab& vocab,
                                    double grad_scale, RngState* dropout_rng) {
  const EncodedInstance enc = encode_instance(inst, vocab);
  Activations acts;
  const Tensor logits = forward_internal(enc.ids, &acts, dropout_rng);
  const double loss = masked_cross_entropy(logits, enc.targets, enc.loss_mask);
  const Tensor dlogits = masked_cross_entropy_backward(logits, enc.targets, enc.loss_mask);
  backward_internal(enc.ids, acts, dlogits, grad_scale);
  return loss;
}

// ---- generation ----

std::string TransformerLM::generate_greedy(const std::string& prompt, int max_new,
                                           const tok::Vocab& vocab) const {
  if (max_new < 1) throw std::invalid_argument("generate_greedy: max_new must be >= 1");
  const long d = cfg_.d_model;
  const int heads = cfg_.n_heads;
  const long dh = d / heads;
  const double inv_sqrt_dh = 1.0 / std::sqrt(static_cast<double>(dh));

  std::vector<int> ids;
  ids.push_back(tok::kBosId);
  for (int id : vocab.encode(prompt)) ids.push_back(id);
  if (static_cast<long>(ids.size()) >= cfg_.max_seq_len) {
    throw std::invalid_argument("generate_greedy: prompt fills the context window");
  }

  // Per-layer key/value cache; one row appended per processed token. Rows
  // are computed exactly as the batch forward computes them, so cached
  // generation is bit-identical to recomputation.
  std::vector<Tensor> k_cache, v_cache;
  for (int l = 0; l < cfg_.n_layers; ++l) {
    k_cache.emplace_back(std::vector<long>{cfg_.max_seq_len, d});
    v_cache.emplace_back(std::vector<long>{cfg_.max_seq_len, d});
  }

  const Tensor& emb = param(tok_emb_);
  const Tensor& pos = param(pos_emb_);
  const Tensor head_t = head_ >= 0 ? Tensor() : transpose(param(tok_emb_));

  std::vector<int> generated;
  int next_token = -1;
  for (long pos_i = 0; pos_i < cfg_.max_seq_len; ++pos_i) {
    if (pos_i >= static_cast<long>(ids.size())) break;  // unreachable safety
    const int token = ids[static_cast<std::size_t>(pos_i)];
    Tensor x{{1, d}};
    {
      const double* er = emb.row(token);
      const double* pr = pos.row(pos_i);
      double* xr = x.row(0);
      for (long c = 0; c < d; ++c) xr[c] = er[c] + pr[c];
    }
    for (int l = 0; l < cfg_.n_layers; ++l) {
      const LayerParams& lp = layers_[static_cast<std::size_t>(l)];
      Tensor a1 = layer_norm(x, param(lp.ln1_g), param(lp.ln1_b));
      Tensor q = linear(a1, param(lp.wq), param(lp.bq));
      Tensor krow = linear(a1, param(lp.wk), param(lp.bk));
      Tensor vrow = linear(a1, param(lp.wv), param(lp.bv));
      std::memcpy(k_cache[static_cast<std::size_t>(l)].row(pos_i), krow.row(0),
                  static_cast<std::size_t>(d) * sizeof(double));
      std::memcpy(v_cache[static_cast<std::size_t>(l)].row(pos_i), vrow.row(0),
                  static_cast<std::size_t>(d) * sizeof(double));
      Tensor ctx{{1, d}};
      std::vector<double> arow(static_cast<std::size_t>(pos_i) + 1);
      for (int h = 0; h < heads; ++h) {
        const long off = h * dh;
        const double* qi = q.row(0) + off;
        double mx = -1e300;
        for (long j = 0; j <= pos_i; ++j) {
          const double* kj = k_cache[static_cast<std::size_t>(l)].row(j) + off;
          double s = 0.0;
          for (long c = 0; c < dh; ++c) s += qi[c] * kj[c];
          s *= inv_sqrt_dh;
          arow[static_cast<std::size_t>(j)] = s;
          mx = std::max(mx, s);
        }
        double sum = 0.0;
        for (long j = 0; j <= pos_i; ++j) {
          double& a = arow[static_cast<std::size_t>(j)];
          a = std::exp(a - mx);
          sum += a;
        }
        double* ci = ctx.row(0) + off;
        for (long j = 0; j <= pos_i; ++j) {
          const double w = arow[static_cast<std::size_t>(j)] / sum;
          const double* vj = v_cache[static_cast<std::size_t>(l)].row(j) + off;
          for (long c = 0; c < dh; ++c) ci[c] += w * vj[c];
        }
      }
      Tensor attn_out = linear(ctx, param(lp.wo), param(lp.bo));
      add_inplace(x, attn_out);
      Tensor a2 = layer_norm(x, param(lp.ln2_g), param(lp.ln2_b));
      Tensor mlp_out = linear(gelu(linear(a2, param(lp.w1), param(lp.b1))), param(lp.w2),
                              param(lp.b2));
      add_inplace(x, mlp_out);
    }

    const bool at_last_known = pos_i + 1 == static_cast<long>(ids.size());
    if (!at_last_known) continue;  // still pre-filling the prompt

    Tensor yln = layer_norm(x, param(lnf_g_), param(lnf_b_));
    Tensor logits = head_ >= 0 ? matmul(yln, param(head_)) : matmul(yln, head_t);
    const double* row = logits.row(0);
    int best = 0;
    for (int j = 1; j < cfg_.vocab_size; ++j) {
      if (row[j] > row[best]) best = j;
    }
    next_token = best;
    if (next_token == tok::kEosId) break;
    generated.push_back(next_token);
    if (static_cast<int>(generated.size()) >= max_new) break;
    if (static_cast<long>(ids.size()) + 1 > cfg_.max_seq_len) break;  // context full
    ids.push_back(next_token);
  }
  return vocab.decode(generated);
}

// ---- checkpointing ----

namespace {

void put_u32(std::ostream& out, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                        static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

void put_u64(std::ostream& out, std::uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  out.write(reinterpret_cast<const char*>(b), 8);
}

void put_f64(std::ostream& out, double v) { put_u64(out, std::bit_cast<std::uint64_t>(v)); }

std::uint32_t get_u32(std::istream& in) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

std::uint64_t get_u64(std::istream& in) {
  unsigned char b[8];
  in.read(reinterpret_cast<char*>(b), 8);
  std::uint64_t v = 0;
  for (int i = 7; i >= 0; --i) v = (v << 8) | b[i];
  return v;
}

double get_f64(std::istream& in) { return std::bit_cast<double>(get_u64(in)); }

constexpr char kMagic[8] = {'M', 'E', 'M', 'L', 'M', 'C', 'K', '1'};
constexpr std::uint32_t kVersion = 1;

}  // namespace

void TransformerLM::save_checkpoint(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("save_checkpoint: cannot open " + path);
  out.write(kMagic, sizeof(kMagic));
  put_u32(out, kVersion);
  put_u32(out, static_cast<std::uint32_t>(cfg_.vocab_size));
  put_u32(out, static_cast<std::uint32_t>(cfg_.d_model));
  put_u32(out, static_cast<std::uint32_t>(cfg_.n_layers));
  put_u32(out, static_cast<std::uint32_t>(cfg_.n_heads));
  put_u32(out, static_cast<std::uint32_t>(cfg_.d_ff));
  put_u32(out, static_cast<std::uint32_t>(cfg_.max_seq_len));
  put_f64(out, cfg_.dropout);
  put_u32(out, cfg_.tie_embeddings ? 1 : 0);
  put_u32(out, static_cast<std::uint32_t>(params_.size()));
  for (const Parameter& p : params_) {
    put_u32(out, static_cast<std::uint32_t>(p.name.size()));
    out.write(p.name.data(), static_cast<std::streamsize>(p.name.size()));
    put_u32(out, static_cast<std::uint32_t>(p.value.rank()));
    for (long dimension : p.value.shape()) put_u64(out, static_cast<std::uint64_t>(dimension));
    for (double v : p.value.values()) put_f64(out, v);
  }
  if (!out) throw std::runtime_error("save_checkpoint: write failed for " + path);
}

TransformerLM TransformerLM::load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("load_checkpoint: cannot open " + path);
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw std::runtime_error("load_checkpoint: " + path + " is not a checkpoint file");
  }
  if (get_u32(in) != kVersion) throw std::runtime_error("load_checkpoint: unsupported version");
  ModelConfig cfg;
  cfg.vocab_size = static_cast<int>(get_u32(in));
  cfg.d_model = static_cast<int>(get_u32(in));
  cfg.n_layers = static_cast<int>(get_u32(in));
  cfg.n_heads = static_cast<int>(get_u32(in));
  cfg.d_ff = static_cast<int>(get_u32(in));
  cfg.max_seq_len = static_cast<int>(get_u32(in));
  cfg.dropout = get_f64(in);
  cfg.tie_embeddings = get_u32(in) != 0;
  TransformerLM model(cfg);
  const std::uint32_t count = get_u32(in);
  if (count != model.params_.size()) {
    throw std::runtime_error("load_checkpoint: parameter count mismatch");
  }
  for (Parameter& p : model.params_) {
    const std::uint32_t name_len = get_u32(in);
    std::string name(name_len, '\0');
    in.read(name.data(), name_len);
    if (name != p.name) {
      throw std::runtime_error("load_checkpoint: expected parameter " + p.name + ", found " +
                               name);
    }
    const std::uint32_t rank = get_u32(in);
    if (rank != static_cast<std::uint32_t>(p.value.rank())) {
      throw std::runtime_error("load_checkpoint: rank mismatch for " + name);
    }
    for (int a = 0; a < p.value.rank(); ++a) {
      if (get_u64(in) != static_cast<std::uint64_t>(p.value.dim(a))) {
        throw std::runtime_error("load_checkpoint: shape mismatch for " + name);
      }
    }
    for (double& v : p.value.values()) v = get_f64(in);
  }
  if (!in) throw std::runtime_error("load_checkpoint: truncated file " + path);
  return model;
}

}  // namespace memlab::model
