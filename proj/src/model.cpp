#include "safn/model.hpp"

#include <nlohmann/json.hpp>

#include <cmath>
#include <fstream>

namespace safn {

using nlohmann::json;

void SafnConfig::validate() const {
  if (d_model <= 0 || n_heads <= 0 || n_layers <= 0) {
    throw DataError("SafnConfig: d_model, n_heads, n_layers must be positive");
  }
  if (d_model % n_heads != 0) {
    throw DataError("SafnConfig: d_model must be divisible by n_heads");
  }
  if (dropout < 0.0 || dropout >= 1.0) throw DataError("SafnConfig: dropout outside [0,1)");
  if (ffn_multiplier <= 0 || head_hidden <= 0) {
    throw DataError("SafnConfig: ffn_multiplier and head_hidden must be positive");
  }
}

ModelStructure ModelStructure::make(const std::array<int, kNumModalities>& widths,
                                    const std::set<Modality>& active_modalities,
                                    bool disable_cross_attention, bool disable_gates) {
  if (active_modalities.empty()) throw DataError("ModelStructure: empty modality set");
  ModelStructure st;
  for (Modality m : all_modalities()) {
    if (!active_modalities.count(m)) continue;
    StreamSpec spec;
    spec.modality = m;
    spec.width = widths[static_cast<int>(m)];
    spec.tokenized = (m == Modality::MriCt || m == Modality::Clinical);
    if (spec.width <= 0) {
      throw DataError("ModelStructure: nonpositive width for " + modality_name(m));
    }
    st.streams.push_back(spec);
  }
  int tokenized = 0;
  for (const auto& s : st.streams) tokenized += s.tokenized ? 1 : 0;
  st.cross_attention = !disable_cross_attention && tokenized == 2;
  st.gates = !disable_gates;
  return st;
}

int ModelStructure::stream_index(Modality m) const {
  for (int i = 0; i < n_streams(); ++i) {
    if (streams[i].modality == m) return i;
  }
  return -1;
}

namespace {

Mat gelu_matrix(const Mat& x) {
  return x.unaryExpr([](double v) { return gelu(v); });
}

Mat gelu_derivative_matrix(const Mat& x) {
  return x.unaryExpr([](double v) { return gelu_derivative(v); });
}

}  // namespace

EncoderLayerIds SafnModel::register_encoder_layer(const std::string& prefix) {
  const int d = config_.d_model;
  const int ffn = config_.ffn_width();
  const double bd = 1.0 / std::sqrt(static_cast<double>(d));
  const double bf = 1.0 / std::sqrt(static_cast<double>(ffn));
  EncoderLayerIds ids;
  ids.q.w = layout_.add(prefix + ".q.w", d, d, InitKind::Uniform, bd);
  ids.q.b = layout_.add(prefix + ".q.b", d, 1, InitKind::Uniform, bd);
  ids.k.w = layout_.add(prefix + ".k.w", d, d, InitKind::Uniform, bd);
  ids.k.b = layout_.add(prefix + ".k.b", d, 1, InitKind::Uniform, bd);
  ids.v.w = layout_.add(prefix + ".v.w", d, d, InitKind::Uniform, bd);
  ids.v.b = layout_.add(prefix + ".v.b", d, 1, InitKind::Uniform, bd);
  ids.out.w = layout_.add(prefix + ".out.w", d, d, InitKind::Uniform, bd);
  ids.out.b = layout_.add(prefix + ".out.b", d, 1, InitKind::Uniform, bd);
  ids.ln1.gamma = layout_.add(prefix + ".ln1.gamma", d, 1, InitKind::One);
  ids.ln1.beta = layout_.add(prefix + ".ln1.beta", d, 1, InitKind::Zero);
  ids.ffn1.w = layout_.add(prefix + ".ffn1.w", d, ffn, InitKind::Uniform, bd);
  ids.ffn1.b = layout_.add(prefix + ".ffn1.b", ffn, 1, InitKind::Uniform, bd);
  ids.ffn2.w = layout_.add(prefix + ".ffn2.w", ffn, d, InitKind::Uniform, bf);
  ids.ffn2.b = layout_.add(prefix + ".ffn2.b", d, 1, InitKind::Uniform, bf);
  ids.ln2.gamma = layout_.add(prefix + ".ln2.gamma", d, 1, InitKind::One);
  ids.ln2.beta = layout_.add(prefix + ".ln2.beta", d, 1, InitKind::Zero);
  return ids;
}

SafnModel::SafnModel(const SafnConfig& config, const ModelStructure& structure)
    : config_(config), structure_(structure) {
  config_.validate();
  if (structure_.streams.empty()) throw DataError("SafnModel: no active streams");
  const int d = config_.d_model;
  const double bd = 1.0 / std::sqrt(static_cast<double>(d));

  for (int si = 0; si < structure_.n_streams(); ++si) {
    const StreamSpec& spec = structure_.streams[si];
    const std::string name = modality_name(spec.modality);
    if (spec.tokenized) {
      TokenStreamIds ids;
      ids.tok_w = layout_.add(name + ".tok.w", spec.width, d, InitKind::Uniform, bd);
      ids.tok_b = layout_.add(name + ".tok.b", spec.width, d, InitKind::Uniform, bd);
      for (int l = 0; l < config_.n_layers; ++l) {
        ids.layers.push_back(register_encoder_layer(name + ".enc" + std::to_string(l)));
      }
      ids.pool_query = layout_.add(name + ".pool.q", d, 1, InitKind::Uniform, bd);
      token_stream_pos_.push_back(si);
      token_ids_.push_back(std::move(ids));
    } else {
      const double bw = 1.0 / std::sqrt(static_cast<double>(spec.width));
      MlpStreamIds ids;
      ids.l1.w = layout_.add(name + ".mlp1.w", spec.width, d, InitKind::Uniform, bw);
      ids.l1.b = layout_.add(name + ".mlp1.b", d, 1, InitKind::Uniform, bw);
      ids.l2.w = layout_.add(name + ".mlp2.w", d, d, InitKind::Uniform, bd);
      ids.l2.b = layout_.add(name + ".mlp2.b", d, 1, InitKind::Uniform, bd);
      mlp_stream_pos_.push_back(si);
      mlp_ids_.push_back(ids);
    }
  }

  if (structure_.cross_attention) {
    if (token_ids_.size() != 2) {
      throw DataError("SafnModel: cross-attention requires both tokenized streams");
    }
    for (std::size_t t = 0; t < token_ids_.size(); ++t) {
      const std::string name =
          modality_name(structure_.streams[token_stream_pos_[t]].modality);
      cross_ids_.push_back(register_encoder_layer(name + ".cross"));
    }
  }

  const int m = structure_.n_streams();
  const int fused = m * d;
  const double bfused = 1.0 / std::sqrt(static_cast<double>(fused));
  if (structure_.gates) {
    gate_.w = layout_.add("gate.w", fused, m, InitKind::Uniform, bfused);
    gate_.b = layout_.add("gate.b", m, 1, InitKind::Uniform, bfused);
  }
  head_ln_.gamma = layout_.add("head.ln.gamma", fused, 1, InitKind::One);
  head_ln_.beta = layout_.add("head.ln.beta", fused, 1, InitKind::Zero);
  head_l1_.w = layout_.add("head.l1.w", fused, config_.head_hidden, InitKind::Uniform, bfused);
  head_l1_.b = layout_.add("head.l1.b", config_.head_hidden, 1, InitKind::Uniform, bfused);
  const double bh = 1.0 / std::sqrt(static_cast<double>(config_.head_hidden));
  head_l2_.w = layout_.add("head.l2.w", config_.head_hidden, 1, InitKind::Uniform, bh);
  head_l2_.b = layout_.add("head.l2.b", 1, 1, InitKind::Uniform, bh);

  const std::size_t expected = param_count_formula(config_, structure_);
  if (expected != layout_.total()) {
    throw NumericError("SafnModel: parameter-count formula mismatch: formula " +
                       std::to_string(expected) + " vs layout " +
                       std::to_string(layout_.total()));
  }
}

std::size_t SafnModel::param_count_formula(const SafnConfig& config,
                                           const ModelStructure& structure) {
  const std::size_t d = config.d_model;
  const std::size_t ffn = config.ffn_width();
  const std::size_t enc_layer = 4 * (d * d + d)      // q, k, v, out projections
                                + 2 * d              // ln1
                                + (d * ffn + ffn)    // ffn1
                                + (ffn * d + d)      // ffn2
                                + 2 * d;             // ln2
  std::size_t total = 0;
  std::size_t n_tokenized = 0;
  for (const StreamSpec& s : structure.streams) {
    const std::size_t f = s.width;
    if (s.tokenized) {
      total += 2 * f * d + config.n_layers * enc_layer + d;
      ++n_tokenized;
    } else {
      total += f * d + d + d * d + d;
    }
  }
  if (structure.cross_attention) total += n_tokenized * enc_layer;
  const std::size_t m = structure.streams.size();
  const std::size_t fused = m * d;
  if (structure.gates) total += fused * m + m;
  const std::size_t hidden = config.head_hidden;
  total += 2 * fused + (fused * hidden + hidden) + (hidden + 1);
  return total;
}

ParamBuffer SafnModel::make_params(uint64_t init_seed) const {
  ParamBuffer buffer(layout_);
  init_param_buffer(buffer, init_seed);
  return buffer;
}

ParamBuffer SafnModel::make_zero_buffer() const {
  return ParamBuffer(layout_);
}

Mat SafnModel::encoder_layer_forward(const EncoderLayerIds& ids, MatRef x_q, MatRef x_kv,
                                     const ParamBuffer& params, bool train_mode,
                                     std::mt19937_64& rng, EncoderLayerCache& cache) const {
  const double p = config_.dropout;
  cache.q_input = x_q;
  Mat attn_out =
      attention_forward(x_q, x_kv, params.mat(ids.q.w), params.vec(ids.q.b), params.mat(ids.k.w),
                        params.vec(ids.k.b), params.mat(ids.v.w), params.vec(ids.v.b),
                        params.mat(ids.out.w), params.vec(ids.out.b), config_.n_heads, cache.attn);
  attn_out = dropout_forward(attn_out, p, train_mode, rng, cache.attn_dropout);
  const Mat resid1 = cache.q_input + attn_out;
  cache.normed1 =
      layer_norm_forward(resid1, params.vec(ids.ln1.gamma), params.vec(ids.ln1.beta), cache.ln1);
  cache.ffn_pre =
      (cache.normed1 * params.mat(ids.ffn1.w)).rowwise() + params.vec(ids.ffn1.b).transpose();
  const Mat act = gelu_matrix(cache.ffn_pre);
  cache.ffn_hidden = dropout_forward(act, p, train_mode, rng, cache.ffn_dropout);
  Mat ffn_out =
      (cache.ffn_hidden * params.mat(ids.ffn2.w)).rowwise() + params.vec(ids.ffn2.b).transpose();
  ffn_out = dropout_forward(ffn_out, p, train_mode, rng, cache.out_dropout);
  const Mat resid2 = cache.normed1 + ffn_out;
  cache.output =
      layer_norm_forward(resid2, params.vec(ids.ln2.gamma), params.vec(ids.ln2.beta), cache.ln2);
  return cache.output;
}

void SafnModel::encoder_layer_backward(const EncoderLayerIds& ids, MatRef d_out, MatRef x_kv,
                                       const ParamBuffer& params, const EncoderLayerCache& cache,
                                       Eigen::Ref<Mat> d_x_q, Eigen::Ref<Mat> d_x_kv,
                                       ParamBuffer& grads) const {
  Mat d_resid2 = Mat::Zero(d_out.rows(), d_out.cols());
  layer_norm_backward(d_out, params.vec(ids.ln2.gamma), cache.ln2, d_resid2,
                      grads.vec(ids.ln2.gamma), grads.vec(ids.ln2.beta));

  Mat d_normed1 = d_resid2;  // residual branch
  const Mat d_ffn_out = dropout_backward(d_resid2, cache.out_dropout);
  grads.mat(ids.ffn2.w) += cache.ffn_hidden.transpose() * d_ffn_out;
  grads.vec(ids.ffn2.b) += d_ffn_out.colwise().sum().transpose();
  const Mat d_hidden = d_ffn_out * params.mat(ids.ffn2.w).transpose();
  const Mat d_act = dropout_backward(d_hidden, cache.ffn_dropout);
  const Mat d_pre = d_act.cwiseProduct(gelu_derivative_matrix(cache.ffn_pre));
  grads.mat(ids.ffn1.w) += cache.normed1.transpose() * d_pre;
  grads.vec(ids.ffn1.b) += d_pre.colwise().sum().transpose();
  d_normed1 += d_pre * params.mat(ids.ffn1.w).transpose();

  Mat d_resid1 = Mat::Zero(d_out.rows(), d_out.cols());
  layer_norm_backward(d_normed1, params.vec(ids.ln1.gamma), cache.ln1, d_resid1,
                      grads.vec(ids.ln1.gamma), grads.vec(ids.ln1.beta));
  d_x_q += d_resid1;
  const Mat d_attn_out = dropout_backward(d_resid1, cache.attn_dropout);
  AttentionGrads attn_grads{grads.mat(ids.q.w),   grads.vec(ids.q.b), grads.mat(ids.k.w),
                            grads.vec(ids.k.b),   grads.mat(ids.v.w), grads.vec(ids.v.b),
                            grads.mat(ids.out.w), grads.vec(ids.out.b)};
  attention_backward(d_attn_out, cache.q_input, x_kv, params.mat(ids.q.w), params.mat(ids.k.w),
                     params.mat(ids.v.w), params.mat(ids.out.w), config_.n_heads, cache.attn,
                     d_x_q, d_x_kv, attn_grads);
}

ForwardTrace SafnModel::forward(const ModalityBundle& bundle, const ParamBuffer& params,
                                bool train_mode, uint64_t dropout_seed) const {
  ForwardTrace trace;
  forward_into(bundle, params, train_mode, dropout_seed, trace);
  return trace;
}

void SafnModel::forward_into(const ModalityBundle& bundle, const ParamBuffer& params,
                             bool train_mode, uint64_t dropout_seed, ForwardTrace& trace) const {
  trace.train_mode = train_mode;
  const int d = config_.d_model;
  const int m = structure_.n_streams();
  std::mt19937_64 rng(dropout_seed);

  trace.inputs.resize(m);
  for (int si = 0; si < m; ++si) {
    const StreamSpec& spec = structure_.streams[si];
    const Vec& block = bundle.block(spec.modality);
    if (block.size() != spec.width) {
      throw DataError("forward: " + modality_name(spec.modality) + " block has width " +
                      std::to_string(block.size()) + ", expected " + std::to_string(spec.width));
    }
    trace.inputs[si] = block;
  }

  trace.token_traces.resize(token_ids_.size());
  trace.mlp_traces.resize(mlp_ids_.size());

  // Tokenized streams: tokenize then the self-attention encoder stack.
  for (std::size_t t = 0; t < token_ids_.size(); ++t) {
    const TokenStreamIds& ids = token_ids_[t];
    TokenStreamTrace& st = trace.token_traces[t];
    const Vec& x = trace.inputs[token_stream_pos_[t]];
    st.tokens = tokenize(x, params.mat(ids.tok_w), params.mat(ids.tok_b));
    st.enc_layers.resize(ids.layers.size());
    Mat current = st.tokens;
    for (std::size_t l = 0; l < ids.layers.size(); ++l) {
      current = encoder_layer_forward(ids.layers[l], current, current, params, train_mode, rng,
                                      st.enc_layers[l]);
    }
    st.encoded = current;
  }

  // Symmetric cross-attention: both directions read the pre-cross encodings.
  if (structure_.cross_attention) {
    for (std::size_t t = 0; t < token_ids_.size(); ++t) {
      const std::size_t other = 1 - t;
      TokenStreamTrace& st = trace.token_traces[t];
      if (!st.cross) st.cross.emplace();
      st.attended =
          encoder_layer_forward(cross_ids_[t], st.encoded, trace.token_traces[other].encoded,
                                params, train_mode, rng, *st.cross);
    }
  } else {
    for (auto& st : trace.token_traces) st.attended = st.encoded;
  }

  for (std::size_t t = 0; t < token_ids_.size(); ++t) {
    TokenStreamTrace& st = trace.token_traces[t];
    st.pooled = attention_pool(st.attended, params.vec(token_ids_[t].pool_query), st.pool);
  }

  // MLP streams.
  for (std::size_t s = 0; s < mlp_ids_.size(); ++s) {
    const MlpStreamIds& ids = mlp_ids_[s];
    MlpStreamTrace& st = trace.mlp_traces[s];
    const Vec& x = trace.inputs[mlp_stream_pos_[s]];
    st.h_pre = params.mat(ids.l1.w).transpose() * x + params.vec(ids.l1.b);
    st.h_act = st.h_pre.unaryExpr([](double v) { return gelu(v); });
    st.pooled = params.mat(ids.l2.w).transpose() * st.h_act + params.vec(ids.l2.b);
  }

  // Fusion: concatenate pooled vectors in canonical stream order.
  trace.z_concat.resize(m * d);
  {
    std::size_t token_i = 0;
    std::size_t mlp_i = 0;
    for (int si = 0; si < m; ++si) {
      const Vec& pooled = structure_.streams[si].tokenized
                              ? trace.token_traces[token_i++].pooled
                              : trace.mlp_traces[mlp_i++].pooled;
      trace.z_concat.segment(si * d, d) = pooled;
    }
  }

  if (structure_.gates) {
    trace.gate_pre = params.mat(gate_.w).transpose() * trace.z_concat + params.vec(gate_.b);
    trace.gates = trace.gate_pre.unaryExpr([](double v) { return sigmoid(v); });
    trace.fused.resize(m * d);
    for (int si = 0; si < m; ++si) {
      trace.fused.segment(si * d, d) = trace.gates[si] * trace.z_concat.segment(si * d, d);
    }
  } else {
    trace.gates = Vec::Ones(m);
    trace.fused = trace.z_concat;
  }

  // Classification head on the fused vector (as a single row).
  const Mat fused_row = trace.fused.transpose();
  trace.head_normed = layer_norm_forward(fused_row, params.vec(head_ln_.gamma),
                                         params.vec(head_ln_.beta), trace.head_ln);
  trace.head_pre =
      (trace.head_normed * params.mat(head_l1_.w)).rowwise() + params.vec(head_l1_.b).transpose();
  const Mat head_act = gelu_matrix(trace.head_pre);
  trace.head_hidden = dropout_forward(head_act, config_.dropout, train_mode, rng,
                                      trace.head_dropout);
  trace.logit = (trace.head_hidden * params.mat(head_l2_.w))(0, 0) + params.vec(head_l2_.b)[0];
  trace.prob = sigmoid(trace.logit);
}

void SafnModel::backward(const ForwardTrace& trace, const ParamBuffer& params, double d_logit,
                         const Vec& d_gates_direct, ParamBuffer& grads,
                         InputGradients* input_grads) const {
  const int d = config_.d_model;
  const int m = structure_.n_streams();
  if (trace.z_concat.size() != m * d) throw DataError("backward: trace/model mismatch");
  if (d_gates_direct.size() != 0 && d_gates_direct.size() != m) {
    throw DataError("backward: gate gradient has wrong width");
  }

  // Head.
  const Mat d_s = Mat::Constant(1, 1, d_logit);
  grads.mat(head_l2_.w) += trace.head_hidden.transpose() * d_s;
  grads.vec(head_l2_.b)[0] += d_logit;
  const Mat d_hidden = d_s * params.mat(head_l2_.w).transpose();
  const Mat d_act = dropout_backward(d_hidden, trace.head_dropout);
  const Mat d_pre = d_act.cwiseProduct(gelu_derivative_matrix(trace.head_pre));
  grads.mat(head_l1_.w) += trace.head_normed.transpose() * d_pre;
  grads.vec(head_l1_.b) += d_pre.colwise().sum().transpose();
  const Mat d_normed = d_pre * params.mat(head_l1_.w).transpose();
  Mat d_fused_row = Mat::Zero(1, m * d);
  layer_norm_backward(d_normed, params.vec(head_ln_.gamma), trace.head_ln, d_fused_row,
                      grads.vec(head_ln_.gamma), grads.vec(head_ln_.beta));
  const Vec d_fused = d_fused_row.row(0).transpose();

  // Gated fusion.
  Vec d_z = Vec::Zero(m * d);
  if (structure_.gates) {
    Vec d_alpha = Vec::Zero(m);
    for (int si = 0; si < m; ++si) {
      d_alpha[si] = trace.z_concat.segment(si * d, d).dot(d_fused.segment(si * d, d));
      d_z.segment(si * d, d) = trace.gates[si] * d_fused.segment(si * d, d);
    }
    if (d_gates_direct.size() == m) d_alpha += d_gates_direct;
    const Vec d_gate_pre =
        d_alpha.cwiseProduct(trace.gates.cwiseProduct(Vec::Ones(m) - trace.gates));
    grads.mat(gate_.w) += trace.z_concat * d_gate_pre.transpose();
    grads.vec(gate_.b) += d_gate_pre;
    d_z += params.mat(gate_.w) * d_gate_pre;
  } else {
    d_z = d_fused;
  }

  if (input_grads) {
    input_grads->assign(m, Vec());
    for (int si = 0; si < m; ++si) {
      (*input_grads)[si] = Vec::Zero(structure_.streams[si].width);
    }
  }

  // Pooling back to attended sequences.
  std::vector<Mat> d_attended(token_ids_.size());
  std::vector<Mat> d_encoded(token_ids_.size());
  {
    std::size_t token_i = 0;
    std::size_t mlp_i = 0;
    for (int si = 0; si < m; ++si) {
      const Vec d_pooled = d_z.segment(si * d, d);
      if (structure_.streams[si].tokenized) {
        const std::size_t t = token_i++;
        const TokenStreamTrace& st = trace.token_traces[t];
        d_attended[t] = Mat::Zero(st.attended.rows(), st.attended.cols());
        attention_pool_backward(d_pooled, st.attended, params.vec(token_ids_[t].pool_query),
                                st.pool, d_attended[t], grads.vec(token_ids_[t].pool_query));
      } else {
        const std::size_t s = mlp_i++;
        const MlpStreamIds& ids = mlp_ids_[s];
        const MlpStreamTrace& st = trace.mlp_traces[s];
        const Vec& x = trace.inputs[si];
        grads.mat(ids.l2.w) += st.h_act * d_pooled.transpose();
        grads.vec(ids.l2.b) += d_pooled;
        const Vec d_h_act = params.mat(ids.l2.w) * d_pooled;
        const Vec d_h_pre = d_h_act.cwiseProduct(
            st.h_pre.unaryExpr([](double v) { return gelu_derivative(v); }));
        grads.mat(ids.l1.w) += x * d_h_pre.transpose();
        grads.vec(ids.l1.b) += d_h_pre;
        if (input_grads) (*input_grads)[si] += params.mat(ids.l1.w) * d_h_pre;
      }
    }
  }

  // Cross-attention blocks: each adds gradient to both pre-cross encodings.
  for (std::size_t t = 0; t < token_ids_.size(); ++t) {
    const TokenStreamTrace& st = trace.token_traces[t];
    d_encoded[t] = Mat::Zero(st.encoded.rows(), st.encoded.cols());
  }
  if (structure_.cross_attention) {
    for (std::size_t t = 0; t < token_ids_.size(); ++t) {
      const std::size_t other = 1 - t;
      const TokenStreamTrace& st = trace.token_traces[t];
      encoder_layer_backward(cross_ids_[t], d_attended[t], trace.token_traces[other].encoded,
                             params, *st.cross, d_encoded[t], d_encoded[other], grads);
    }
  } else {
    for (std::size_t t = 0; t < token_ids_.size(); ++t) d_encoded[t] += d_attended[t];
  }

  // Encoder stacks (self-attention: both input paths accumulate together).
  for (std::size_t t = 0; t < token_ids_.size(); ++t) {
    const TokenStreamIds& ids = token_ids_[t];
    const TokenStreamTrace& st = trace.token_traces[t];
    Mat d_current = d_encoded[t];
    for (int l = static_cast<int>(ids.layers.size()) - 1; l >= 0; --l) {
      const EncoderLayerCache& cache = st.enc_layers[l];
      Mat d_input = Mat::Zero(cache.q_input.rows(), cache.q_input.cols());
      encoder_layer_backward(ids.layers[l], d_current, cache.q_input, params, cache, d_input,
                             d_input, grads);
      d_current = std::move(d_input);
    }
    const int si = token_stream_pos_[t];
    if (input_grads) {
      tokenize_backward(d_current, trace.inputs[si], params.mat(ids.tok_w), (*input_grads)[si],
                        grads.mat(ids.tok_w), grads.mat(ids.tok_b));
    } else {
      Vec scratch = Vec::Zero(structure_.streams[si].width);
      tokenize_backward(d_current, trace.inputs[si], params.mat(ids.tok_w), scratch,
                        grads.mat(ids.tok_w), grads.mat(ids.tok_b));
    }
  }
}

Mat SafnModel::run_tokenize(int stream, VecRef x, const ParamBuffer& params) const {
  const TokenStreamIds& ids = token_ids_.at(stream);
  return tokenize(x, params.mat(ids.tok_w), params.mat(ids.tok_b));
}

Mat SafnModel::run_encoder(int stream, MatRef tokens, const ParamBuffer& params, bool train_mode,
                           std::mt19937_64& rng, std::vector<EncoderLayerCache>& caches) const {
  const TokenStreamIds& ids = token_ids_.at(stream);
  caches.resize(ids.layers.size());
  Mat current = tokens;
  for (std::size_t l = 0; l < ids.layers.size(); ++l) {
    current = encoder_layer_forward(ids.layers[l], current, current, params, train_mode, rng,
                                    caches[l]);
  }
  return current;
}

Mat SafnModel::run_cross_block(int stream, MatRef queries, MatRef keyvals,
                               const ParamBuffer& params, bool train_mode, std::mt19937_64& rng,
                               EncoderLayerCache& cache) const {
  if (!structure_.cross_attention) throw DataError("run_cross_block: cross-attention disabled");
  return encoder_layer_forward(cross_ids_.at(stream), queries, keyvals, params, train_mode, rng,
                               cache);
}

Vec SafnModel::run_pool(int stream, MatRef seq, const ParamBuffer& params,
                        PoolCache& cache) const {
  return attention_pool(seq, params.vec(token_ids_.at(stream).pool_query), cache);
}

std::pair<Vec, Vec> SafnModel::run_gate_and_fuse(const Vec& z_concat,
                                                 const ParamBuffer& params) const {
  const int d = config_.d_model;
  const int m = structure_.n_streams();
  if (z_concat.size() != m * d) throw DataError("gate_and_fuse: bad input width");
  if (!structure_.gates) return {Vec::Ones(m), z_concat};
  const Vec pre = params.mat(gate_.w).transpose() * z_concat + params.vec(gate_.b);
  const Vec gates = pre.unaryExpr([](double v) { return sigmoid(v); });
  Vec fused(m * d);
  for (int si = 0; si < m; ++si) {
    fused.segment(si * d, d) = gates[si] * z_concat.segment(si * d, d);
  }
  return {gates, fused};
}

// ---- checkpoints ---------------------------------------------------------------

namespace {

json config_to_json(const SafnConfig& c) {
  return json{{"d_model", c.d_model},
              {"n_heads", c.n_heads},
              {"n_layers", c.n_layers},
              {"dropout", c.dropout},
              {"ffn_multiplier", c.ffn_multiplier},
              {"head_hidden", c.head_hidden}};
}

SafnConfig config_from_json(const json& j) {
  SafnConfig c;
  c.d_model = j.at("d_model").get<int>();
  c.n_heads = j.at("n_heads").get<int>();
  c.n_layers = j.at("n_layers").get<int>();
  c.dropout = j.at("dropout").get<double>();
  c.ffn_multiplier = j.at("ffn_multiplier").get<int>();
  c.head_hidden = j.at("head_hidden").get<int>();
  return c;
}

}  // namespace

void save_checkpoint(const std::string& path, const Checkpoint& checkpoint) {
  json streams = json::array();
  for (const StreamSpec& s : checkpoint.structure.streams) {
    streams.push_back({{"modality", modality_name(s.modality)}, {"width", s.width}});
  }
  json doc;
  doc["format_version"] = 1;
  doc["config"] = config_to_json(checkpoint.config);
  doc["structure"] = {{"streams", streams},
                      {"cross_attention", checkpoint.structure.cross_attention},
                      {"gates", checkpoint.structure.gates}};
  doc["params"] = checkpoint.params;
  if (checkpoint.preprocessor_json) {
    doc["preprocessor"] = json::parse(*checkpoint.preprocessor_json);
  }
  std::ofstream out(path);
  if (!out) throw DataError("cannot write checkpoint: " + path);
  out << doc.dump() << '\n';
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open checkpoint: " + path);
  json doc;
  try {
    in >> doc;
  } catch (const json::exception& e) {
    throw DataError("checkpoint parse error in " + path + ": " + e.what());
  }
  Checkpoint cp;
  try {
    if (doc.at("format_version").get<int>() != 1) {
      throw DataError("checkpoint " + path + ": unsupported format version");
    }
    cp.config = config_from_json(doc.at("config"));
    const json& st = doc.at("structure");
    for (const json& s : st.at("streams")) {
      StreamSpec spec;
      spec.modality = modality_from_name(s.at("modality").get<std::string>());
      spec.width = s.at("width").get<int>();
      spec.tokenized = (spec.modality == Modality::MriCt || spec.modality == Modality::Clinical);
      cp.structure.streams.push_back(spec);
    }
    cp.structure.cross_attention = st.at("cross_attention").get<bool>();
    cp.structure.gates = st.at("gates").get<bool>();
    cp.params = doc.at("params").get<std::vector<double>>();
    if (doc.contains("preprocessor")) {
      cp.preprocessor_json = doc.at("preprocessor").dump();
    }
  } catch (const json::exception& e) {
    throw DataError("checkpoint schema error in " + path + ": " + e.what());
  }
  const SafnModel model(cp.config, cp.structure);
  if (model.param_count() != cp.params.size()) {
    throw DataError("checkpoint " + path + ": parameter count mismatch");
  }
  return cp;
}

}  // namespace safn
