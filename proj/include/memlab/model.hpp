#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "memlab/prompts.hpp"
#include "memlab/rng.hpp"
#include "memlab/tensor.hpp"
#include "memlab/tokenizer.hpp"

namespace memlab::model {

struct ModelConfig {
  int vocab_size = 0;
  int d_model = 128;
  int n_layers = 4;
  int n_heads = 4;
  int d_ff = 512;
  int max_seq_len = 256;
  double dropout = 0.0;
  bool tie_embeddings = true;

  void validate() const;
  /// Closed-form trainable parameter count.
  long param_count() const;
};

/// Decoder-only pre-LN transformer language model over a closed vocabulary.
/// Forward/generation on a const model is thread-safe; gradient
/// accumulation and optimizer steps are single-writer.
class TransformerLM {
 public:
  TransformerLM(const ModelConfig& cfg, RngState& rng);

  const ModelConfig& config() const { return cfg_; }
  std::vector<Parameter>& parameters() { return params_; }
  const std::vector<Parameter>& parameters() const { return params_; }
  long parameter_count() const;
  void zero_grads();

  /// Logits [t x V]; position i depends only on tokens 0..i.
  Tensor forward(std::span<const int> tokens) const;

  /// Sequence = BOS + prompt [+ target] + EOS with next-token loss under the
  /// instance's mask policy. Returns the ids and the per-position loss mask.
  struct EncodedInstance {
    std::vector<int> ids;
    std::vector<int> targets;            // targets[i] = ids[i+1]
    std::vector<std::uint8_t> loss_mask;  // over predicting positions
  };
  EncodedInstance encode_instance(const prompts::Instance& inst, const tok::Vocab& vocab) const;

  /// Loss only (no gradients). Deterministic with dropout = 0.
  double instance_loss_value(const prompts::Instance& inst, const tok::Vocab& vocab) const;

  /// Forward + backward; gradients are scaled by grad_scale and accumulated
  /// into the parameters. dropout_rng is required only when dropout > 0.
  double instance_loss(const prompts::Instance& inst, const tok::Vocab& vocab, double grad_scale,
                       RngState* dropout_rng = nullptr);

  /// Greedy argmax continuation, stopping at EOS or max_new tokens. Returns
  /// the decoded continuation without the prompt.
  std::string generate_greedy(const std::string& prompt, int max_new,
                              const tok::Vocab& vocab) const;

  void save_checkpoint(const std::string& path) const;
  static TransformerLM load_checkpoint(const std::string& path);

 private:
  struct LayerParams {
    int ln1_g, ln1_b, wq, bq, wk, bk, wv, bv, wo, bo, ln2_g, ln2_b, w1, b1, w2, b2;
  };

  explicit TransformerLM(const ModelConfig& cfg);  // uninitialized layout
  void build_layout();
  const Tensor& param(int index) const { return params_[static_cast<std::size_t>(index)].value; }
  Tensor& grad(int index) { return params_[static_cast<std::size_t>(index)].grad; }

  struct Activations;
  Tensor forward_internal(std::span<const int> tokens, Activations* acts,
                          RngState* dropout_rng) const;
  void backward_internal(std::span<const int> tokens, const Activations& acts,
                         const Tensor& dlogits, double scale);

  ModelConfig cfg_;
  std::vector<Parameter> params_;
  std::vector<LayerParams> layers_;
  int tok_emb_ = 0, pos_emb_ = 0, lnf_g_ = 0, lnf_b_ = 0;
  int head_ = -1;  // -1 when tied to tok_emb_
};

}  // namespace memlab::model
