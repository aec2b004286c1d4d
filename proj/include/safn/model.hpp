#pragma once

#include "safn/dataset.hpp"
#include "safn/layers.hpp"
#include "safn/param_store.hpp"
#include "safn/preprocess.hpp"

#include <array>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace safn {

struct SafnConfig {
  int d_model = 64;
  int n_heads = 4;
  int n_layers = 2;
  double dropout = 0.3;
  int ffn_multiplier = 4;
  int head_hidden = 64;

  int ffn_width() const { return ffn_multiplier * d_model; }
  void validate() const;
};

/// Which modalities feed the network and how. Tokenized streams (MRI
/// cortical thickness, clinical) run through transformer encoders; the
/// low-dimensional streams use MLP encoders.
struct StreamSpec {
  Modality modality;
  int width = 0;
  bool tokenized = false;
};

struct ModelStructure {
  std::vector<StreamSpec> streams;  // canonical modality order
  bool cross_attention = true;      // requires both tokenized streams
  bool gates = true;

  static ModelStructure make(const std::array<int, kNumModalities>& widths,
                             const std::set<Modality>& active_modalities,
                             bool disable_cross_attention = false, bool disable_gates = false);

  int n_streams() const { return static_cast<int>(streams.size()); }
  int stream_index(Modality m) const;  // -1 when inactive
};

// ---- forward trace ----------------------------------------------------------

struct EncoderLayerCache {
  Mat q_input;   // queries-side input (residual base)
  AttentionCache attn;
  DropoutCache attn_dropout;
  LayerNormCache ln1;
  Mat normed1;
  Mat ffn_pre;
  DropoutCache ffn_dropout;
  Mat ffn_hidden;  // post-activation, post-dropout
  DropoutCache out_dropout;
  LayerNormCache ln2;
  Mat output;
};

struct TokenStreamTrace {
  Mat tokens;
  std::vector<EncoderLayerCache> enc_layers;
  Mat encoded;                              // E
  std::optional<EncoderLayerCache> cross;   // present when cross-attention runs
  Mat attended;                             // E~, equals E when cross is off
  PoolCache pool;
  Vec pooled;
};

struct MlpStreamTrace {
  Vec h_pre;
  Vec h_act;
  Vec pooled;
};

struct ForwardTrace {
  std::vector<Vec> inputs;  // per active stream
  std::vector<TokenStreamTrace> token_traces;
  std::vector<MlpStreamTrace> mlp_traces;
  Vec z_concat;   // Z, width n_streams * D
  Vec gate_pre;
  Vec gates;      // alpha; all ones when gating is disabled
  Vec fused;      // H
  LayerNormCache head_ln;
  Mat head_normed;   // 1 x width
  Mat head_pre;      // 1 x hidden
  DropoutCache head_dropout;
  Mat head_hidden;   // post-dropout
  double logit = 0.0;
  double prob = 0.0;
  bool train_mode = false;
};

/// Gradients of the scalar objective with respect to every input feature,
/// per active stream.
using InputGradients = std::vector<Vec>;

// ---- parameter id structs ---------------------------------------------------

struct LinearIds {
  int w = -1;
  int b = -1;
};

struct LayerNormIds {
  int gamma = -1;
  int beta = -1;
};

struct EncoderLayerIds {
  LinearIds q, k, v, out;
  LayerNormIds ln1;
  LinearIds ffn1, ffn2;
  LayerNormIds ln2;
};

struct TokenStreamIds {
  int tok_w = -1;
  int tok_b = -1;
  std::vector<EncoderLayerIds> layers;
  int pool_query = -1;
};

struct MlpStreamIds {
  LinearIds l1, l2;
};

// ---- model -------------------------------------------------------------------

class SafnModel {
 public:
  SafnModel(const SafnConfig& config, const ModelStructure& structure);

  const SafnConfig& config() const { return config_; }
  const ModelStructure& structure() const { return structure_; }
  const ParamLayout& layout() const { return layout_; }
  std::size_t param_count() const { return layout_.total(); }

  /// Closed-form parameter count; checked against the registered layout.
  static std::size_t param_count_formula(const SafnConfig& config,
                                         const ModelStructure& structure);

  ParamBuffer make_params(uint64_t init_seed) const;
  ParamBuffer make_zero_buffer() const;

  ForwardTrace forward(const ModalityBundle& bundle, const ParamBuffer& params, bool train_mode,
                       uint64_t dropout_seed) const;

  /// Same computation writing into an existing trace; reusing one trace
  /// across samples avoids reallocating the attention matrices.
  void forward_into(const ModalityBundle& bundle, const ParamBuffer& params, bool train_mode,
                    uint64_t dropout_seed, ForwardTrace& trace) const;

  /// Backpropagates d_logit (dL/ds) plus an optional direct gate gradient
  /// (dL/dalpha, the sparsity path). Accumulates into `grads`; when
  /// `input_grads` is non-null it receives dL/dx per active stream.
  void backward(const ForwardTrace& trace, const ParamBuffer& params, double d_logit,
                const Vec& d_gates_direct, ParamBuffer& grads,
                InputGradients* input_grads) const;

  // Individual stages, exposed for unit tests. `stream` indexes the
  // tokenized streams in order.
  Mat run_tokenize(int stream, VecRef x, const ParamBuffer& params) const;
  Mat run_encoder(int stream, MatRef tokens, const ParamBuffer& params, bool train_mode,
                  std::mt19937_64& rng, std::vector<EncoderLayerCache>& caches) const;
  Mat run_cross_block(int stream, MatRef queries, MatRef keyvals, const ParamBuffer& params,
                      bool train_mode, std::mt19937_64& rng, EncoderLayerCache& cache) const;
  Vec run_pool(int stream, MatRef seq, const ParamBuffer& params, PoolCache& cache) const;
  std::pair<Vec, Vec> run_gate_and_fuse(const Vec& z_concat, const ParamBuffer& params) const;

  const TokenStreamIds& token_ids(int stream) const { return token_ids_.at(stream); }
  const MlpStreamIds& mlp_ids(int stream) const { return mlp_ids_.at(stream); }
  const EncoderLayerIds& cross_ids(int stream) const { return cross_ids_.at(stream); }
  LinearIds gate_ids() const { return gate_; }
  const LayerNormIds& head_ln_ids() const { return head_ln_; }
  const LinearIds& head_l1_ids() const { return head_l1_; }
  const LinearIds& head_l2_ids() const { return head_l2_; }

  int fused_width() const { return structure_.n_streams() * config_.d_model; }
  int n_token_streams() const { return static_cast<int>(token_ids_.size()); }
  int n_mlp_streams() const { return static_cast<int>(mlp_ids_.size()); }

 private:
  SafnConfig config_;
  ModelStructure structure_;
  ParamLayout layout_;

  std::vector<int> token_stream_pos_;  // stream index within structure_.streams
  std::vector<int> mlp_stream_pos_;
  std::vector<TokenStreamIds> token_ids_;
  std::vector<MlpStreamIds> mlp_ids_;
  std::vector<EncoderLayerIds> cross_ids_;  // per tokenized stream (as queries)
  LinearIds gate_;
  LayerNormIds head_ln_;
  LinearIds head_l1_;
  LinearIds head_l2_;

  EncoderLayerIds register_encoder_layer(const std::string& prefix);

  Mat encoder_layer_forward(const EncoderLayerIds& ids, MatRef x_q, MatRef x_kv,
                            const ParamBuffer& params, bool train_mode, std::mt19937_64& rng,
                            EncoderLayerCache& cache) const;
  // Returns gradients w.r.t. the two inputs (query side, key/value side).
  void encoder_layer_backward(const EncoderLayerIds& ids, MatRef d_out, MatRef x_kv,
                              const ParamBuffer& params, const EncoderLayerCache& cache,
                              Eigen::Ref<Mat> d_x_q, Eigen::Ref<Mat> d_x_kv,
                              ParamBuffer& grads) const;
};

// ---- checkpoints ---------------------------------------------------------------

struct Checkpoint {
  SafnConfig config;
  ModelStructure structure;
  std::vector<double> params;  // flat-index order
  std::optional<std::string> preprocessor_json;
};

void save_checkpoint(const std::string& path, const Checkpoint& checkpoint);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace safn
