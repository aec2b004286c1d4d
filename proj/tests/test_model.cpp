#include <doctest.h>

#include "safn/common.hpp"
#include "safn/model.hpp"

#include <filesystem>
#include <random>

using namespace safn;

namespace {

constexpr std::array<int, kNumModalities> kWidths = {3, 4, 2, 2};

SafnConfig tiny_config() {
  SafnConfig cfg;
  cfg.d_model = 8;
  cfg.n_heads = 2;
  cfg.n_layers = 1;
  cfg.dropout = 0.0;
  cfg.head_hidden = 8;
  return cfg;
}

std::set<Modality> all_active() {
  return {Modality::MriCt, Modality::Clinical, Modality::MriVol, Modality::Demographic};
}

ModalityBundle random_bundle(const ModelStructure& structure, uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  ModalityBundle bundle;
  for (const StreamSpec& s : structure.streams) {
    Vec x(s.width);
    for (int i = 0; i < s.width; ++i) x[i] = gauss(rng);
    bundle.block(s.modality) = x;
  }
  return bundle;
}

}  // namespace

TEST_CASE("config validation") {
  SafnConfig bad = tiny_config();
  bad.n_heads = 3;  // does not divide d_model = 8
  CHECK_THROWS_AS(SafnModel(bad, ModelStructure::make(kWidths, all_active())), DataError);
  bad = tiny_config();
  bad.dropout = 1.0;
  CHECK_THROWS_AS(bad.validate(), DataError);
}

TEST_CASE("parameter count formula matches the registered layout") {
  // The constructor cross-checks formula vs layout; exercise several shapes.
  for (int layers : {1, 2, 3}) {
    for (int mult : {2, 4}) {
      SafnConfig cfg = tiny_config();
      cfg.n_layers = layers;
      cfg.ffn_multiplier = mult;
      const SafnModel full(cfg, ModelStructure::make(kWidths, all_active()));
      CHECK(full.param_count() == SafnModel::param_count_formula(cfg, full.structure()));
    }
  }
  const SafnConfig cfg = tiny_config();
  const SafnModel solo(cfg, ModelStructure::make(kWidths, {Modality::Clinical}));
  CHECK(solo.param_count() == SafnModel::param_count_formula(cfg, solo.structure()));
  const SafnModel no_gates(cfg, ModelStructure::make(kWidths, all_active(), false, true));
  CHECK(no_gates.param_count() < SafnModel::param_count_formula(cfg,
        ModelStructure::make(kWidths, all_active())));
}

TEST_CASE("eval-mode forward is a pure function") {
  const SafnModel model(tiny_config(), ModelStructure::make(kWidths, all_active()));
  const ParamBuffer params = model.make_params(5);
  const ModalityBundle bundle = random_bundle(model.structure(), 3);
  const ForwardTrace a = model.forward(bundle, params, false, 0);
  const ForwardTrace b = model.forward(bundle, params, false, 99);  // seed ignored in eval
  CHECK(a.logit == b.logit);
  CHECK((a.gates - b.gates).cwiseAbs().sum() == 0.0);
}

TEST_CASE("train-mode forward is deterministic per dropout seed") {
  SafnConfig cfg = tiny_config();
  cfg.dropout = 0.3;
  const SafnModel model(cfg, ModelStructure::make(kWidths, all_active()));
  const ParamBuffer params = model.make_params(5);
  const ModalityBundle bundle = random_bundle(model.structure(), 3);
  const ForwardTrace a = model.forward(bundle, params, true, 42);
  const ForwardTrace b = model.forward(bundle, params, true, 42);
  const ForwardTrace c = model.forward(bundle, params, true, 43);
  CHECK(a.logit == b.logit);
  CHECK(a.logit != c.logit);
}

TEST_CASE("probability stays in the open unit interval") {
  const SafnModel model(tiny_config(), ModelStructure::make(kWidths, all_active()));
  for (uint64_t seed = 0; seed < 20; ++seed) {
    const ParamBuffer params = model.make_params(seed);
    const ForwardTrace t = model.forward(random_bundle(model.structure(), seed * 7), params,
                                         false, 0);
    CHECK(t.prob > 0.0);
    CHECK(t.prob < 1.0);
    CHECK(t.prob == doctest::Approx(sigmoid(t.logit)));
    for (int j = 0; j < t.gates.size(); ++j) {
      CHECK(t.gates[j] > 0.0);
      CHECK(t.gates[j] < 1.0);
    }
  }
}

TEST_CASE("gate wiring: zero parameters give half gates; fusion identity holds") {
  const SafnModel model(tiny_config(), ModelStructure::make(kWidths, all_active()));
  ParamBuffer params = model.make_params(2);
  params.mat(model.gate_ids().w).setZero();
  params.vec(model.gate_ids().b).setZero();
  const ForwardTrace t = model.forward(random_bundle(model.structure(), 1), params, false, 0);
  for (int j = 0; j < 4; ++j) CHECK(t.gates[j] == doctest::Approx(0.5));
  CHECK((t.fused - 0.5 * t.z_concat).cwiseAbs().sum() == doctest::Approx(0.0));

  // Saturated biases.
  Vec bias(4);
  bias << 10.0, -10.0, 0.0, 0.0;
  params.vec(model.gate_ids().b) = bias;
  const auto [gates, fused] = model.run_gate_and_fuse(t.z_concat, params);
  CHECK(gates[0] == doctest::Approx(1.0).epsilon(1e-4));
  CHECK(gates[1] == doctest::Approx(4.54e-5).epsilon(0.01));
  CHECK(gates[2] == doctest::Approx(0.5));

  // H_j = alpha_j * Z_j for random parameters.
  const ParamBuffer random_params = model.make_params(11);
  const ForwardTrace rt = model.forward(random_bundle(model.structure(), 5), random_params,
                                        false, 0);
  const int d = model.config().d_model;
  for (int j = 0; j < 4; ++j) {
    const Vec expected = rt.gates[j] * rt.z_concat.segment(j * d, d);
    CHECK((rt.fused.segment(j * d, d) - expected).cwiseAbs().sum() ==
          doctest::Approx(0.0).epsilon(1e-14));
  }
}

TEST_CASE("zeroed head weights yield logit zero and probability one half") {
  const SafnModel model(tiny_config(), ModelStructure::make(kWidths, all_active()));
  ParamBuffer params = model.make_params(3);
  params.mat(model.head_l1_ids().w).setZero();
  params.vec(model.head_l1_ids().b).setZero();
  params.mat(model.head_l2_ids().w).setZero();
  params.vec(model.head_l2_ids().b).setZero();
  const ForwardTrace t = model.forward(random_bundle(model.structure(), 8), params, false, 0);
  CHECK(t.logit == doctest::Approx(0.0));
  CHECK(t.prob == doctest::Approx(0.5));
}

TEST_CASE("encoder with zeroed weights reduces to stacked layer norms") {
  const SafnModel model(tiny_config(), ModelStructure::make(kWidths, all_active()));
  ParamBuffer params = model.make_params(4);
  const auto& ids = model.token_ids(0);
  for (const EncoderLayerIds& layer : ids.layers) {
    for (const LinearIds* lin :
         {&layer.q, &layer.k, &layer.v, &layer.out, &layer.ffn1, &layer.ffn2}) {
      params.mat(lin->w).setZero();
      params.vec(lin->b).setZero();
    }
    params.vec(layer.ln1.gamma).setOnes();
    params.vec(layer.ln1.beta).setZero();
    params.vec(layer.ln2.gamma).setOnes();
    params.vec(layer.ln2.beta).setZero();
  }
  Mat tokens(2, 8);
  tokens << 1, 2, 3, 4, 5, 6, 7, 8,
            -1, 0, 1, 2, -2, 0, 2, 4;
  std::mt19937_64 rng(0);
  std::vector<EncoderLayerCache> caches;
  const Mat encoded = model.run_encoder(0, tokens, params, false, rng, caches);

  // With zero attention/FFN the layer computes LN2(LN1(x)); a normalised row
  // re-normalises to itself up to the epsilon in the variance.
  LayerNormCache ln;
  const Mat expected = layer_norm_forward(tokens, Vec::Ones(8), Vec::Zero(8), ln);
  CHECK((encoded - expected).cwiseAbs().maxCoeff() < 1e-4);
}

TEST_CASE("permutation equivariance: shuffling features with their embeddings") {
  const SafnModel model(tiny_config(), ModelStructure::make(kWidths, all_active()));
  const ParamBuffer params = model.make_params(21);
  const ModalityBundle bundle = random_bundle(model.structure(), 13);
  const ForwardTrace base = model.forward(bundle, params, false, 0);

  // Permute the clinical features together with their token embeddings.
  const std::vector<int> perm = {2, 0, 3, 1};
  ParamBuffer permuted = params;
  const auto& ids = model.token_ids(1);  // clinical stream
  for (int f = 0; f < 4; ++f) {
    permuted.mat(ids.tok_w).row(f) = params.mat(ids.tok_w).row(perm[f]);
    permuted.mat(ids.tok_b).row(f) = params.mat(ids.tok_b).row(perm[f]);
  }
  ModalityBundle shuffled = bundle;
  for (int f = 0; f < 4; ++f) {
    shuffled.block(Modality::Clinical)[f] = bundle.block(Modality::Clinical)[perm[f]];
  }
  const ForwardTrace permuted_trace = model.forward(shuffled, permuted, false, 0);

  // Encoded rows permute identically; pooled vector and logit are unchanged.
  for (int f = 0; f < 4; ++f) {
    CHECK((permuted_trace.token_traces[1].encoded.row(f) -
           base.token_traces[1].encoded.row(perm[f]))
              .cwiseAbs()
              .maxCoeff() < 1e-10);
  }
  CHECK((permuted_trace.token_traces[1].pooled - base.token_traces[1].pooled)
            .cwiseAbs()
            .maxCoeff() < 1e-10);
  CHECK(permuted_trace.logit == doctest::Approx(base.logit).epsilon(1e-10));
}

TEST_CASE("cross-attention ablation produces identity passthrough") {
  const SafnConfig cfg = tiny_config();
  const SafnModel ablated(cfg, ModelStructure::make(kWidths, all_active(), true, false));
  CHECK_FALSE(ablated.structure().cross_attention);
  const ParamBuffer params = ablated.make_params(6);
  const ForwardTrace t = ablated.forward(random_bundle(ablated.structure(), 2), params, false, 0);
  CHECK((t.token_traces[0].attended - t.token_traces[0].encoded).cwiseAbs().sum() == 0.0);

  // Pooling then operates on E directly.
  PoolCache cache;
  const Vec direct = ablated.run_pool(0, t.token_traces[0].encoded, params, cache);
  CHECK((direct - t.token_traces[0].pooled).cwiseAbs().sum() == doctest::Approx(0.0));
}

TEST_CASE("gate ablation fuses the raw concatenation") {
  const SafnModel model(tiny_config(), ModelStructure::make(kWidths, all_active(), false, true));
  const ParamBuffer params = model.make_params(6);
  const ForwardTrace t = model.forward(random_bundle(model.structure(), 2), params, false, 0);
  CHECK((t.fused - t.z_concat).cwiseAbs().sum() == 0.0);
  for (int j = 0; j < t.gates.size(); ++j) CHECK(t.gates[j] == 1.0);
}

TEST_CASE("single-modality mask shrinks the fused width") {
  const SafnModel model(tiny_config(), ModelStructure::make(kWidths, {Modality::Clinical}));
  CHECK(model.fused_width() == model.config().d_model);
  const ParamBuffer params = model.make_params(1);
  const ForwardTrace t = model.forward(random_bundle(model.structure(), 4), params, false, 0);
  CHECK(t.fused.size() == model.config().d_model);
  CHECK(t.gates.size() == 1);
}

TEST_CASE("checkpoint round trip preserves behaviour") {
  const SafnModel model(tiny_config(), ModelStructure::make(kWidths, all_active()));
  const ParamBuffer params = model.make_params(77);
  const ModalityBundle bundle = random_bundle(model.structure(), 9);
  const double logit = model.forward(bundle, params, false, 0).logit;

  Checkpoint cp;
  cp.config = model.config();
  cp.structure = model.structure();
  cp.params = params.flat();
  const auto path =
      (std::filesystem::temp_directory_path() / "safn_tests" / "ckpt.json").string();
  std::filesystem::create_directories(std::filesystem::path(path).parent_path());
  save_checkpoint(path, cp);
  const Checkpoint loaded = load_checkpoint(path);
  CHECK(loaded.params == params.flat());

  const SafnModel restored(loaded.config, loaded.structure);
  ParamBuffer restored_params = restored.make_zero_buffer();
  restored_params.flat() = loaded.params;
  CHECK(restored.forward(bundle, restored_params, false, 0).logit == doctest::Approx(logit));
}

TEST_CASE("cross-attention with zero value projections ignores the key/value stream") {
  const SafnModel model(tiny_config(), ModelStructure::make(kWidths, all_active()));
  ParamBuffer params = model.make_params(19);
  const EncoderLayerIds& ids = model.cross_ids(0);
  params.mat(ids.v.w).setZero();
  params.vec(ids.v.b).setZero();
  params.vec(ids.out.b).setZero();

  std::mt19937_64 rng(2);
  std::normal_distribution<double> gauss(0.0, 1.0);
  auto random_mat = [&](int r, int c) {
    Mat m(r, c);
    for (int i = 0; i < r; ++i) {
      for (int j = 0; j < c; ++j) m(i, j) = gauss(rng);
    }
    return m;
  };
  const Mat queries = random_mat(3, 8);
  const Mat kv_a = random_mat(5, 8);
  const Mat kv_b = random_mat(7, 8);

  // With V and the output bias zeroed the attention contributes nothing, so
  // the block reduces to the residual + norm + FFN path of the queries and
  // the key/value stream is irrelevant.
  std::mt19937_64 dummy(0);
  EncoderLayerCache cache_a;
  EncoderLayerCache cache_b;
  const Mat out_a = model.run_cross_block(0, queries, kv_a, params, false, dummy, cache_a);
  const Mat out_b = model.run_cross_block(0, queries, kv_b, params, false, dummy, cache_b);
  CHECK((out_a - out_b).cwiseAbs().maxCoeff() == doctest::Approx(0.0).epsilon(1e-14));
}

TEST_CASE("head value traced by hand on a one-unit construction") {
  // Single clinical modality, D = 8, head hidden width 8: set the head to
  // pick coordinate 0 of the normalised fused vector through one GELU unit.
  SafnConfig cfg = tiny_config();
  const SafnModel model(cfg, ModelStructure::make(kWidths, {Modality::Clinical}));
  ParamBuffer params = model.make_params(23);
  params.vec(model.head_ln_ids().gamma).setOnes();
  params.vec(model.head_ln_ids().beta).setZero();
  params.mat(model.head_l1_ids().w).setZero();
  params.mat(model.head_l1_ids().w)(0, 0) = 2.0;  // unit 0 reads coordinate 0
  params.vec(model.head_l1_ids().b).setZero();
  params.vec(model.head_l1_ids().b)[0] = 0.25;
  params.mat(model.head_l2_ids().w).setZero();
  params.mat(model.head_l2_ids().w)(0, 0) = -1.5;
  params.vec(model.head_l2_ids().b)[0] = 0.75;

  const ModalityBundle bundle = random_bundle(model.structure(), 6);
  const ForwardTrace t = model.forward(bundle, params, false, 0);
  // s = -1.5 * gelu(2 * normed_0 + 0.25) + 0.75, by hand.
  const double normed0 = t.head_normed(0, 0);
  const double expected = -1.5 * gelu(2.0 * normed0 + 0.25) + 0.75;
  CHECK(t.logit == doctest::Approx(expected).epsilon(1e-12));
  CHECK(t.prob == doctest::Approx(sigmoid(expected)));
}

TEST_CASE("zero loss gradient backpropagates to zero everywhere") {
  const SafnModel model(tiny_config(), ModelStructure::make(kWidths, all_active()));
  const ParamBuffer params = model.make_params(29);
  const ForwardTrace t = model.forward(random_bundle(model.structure(), 12), params, false, 0);
  ParamBuffer grads = model.make_zero_buffer();
  InputGradients input_grads;
  model.backward(t, params, 0.0, Vec::Zero(4), grads, &input_grads);
  for (double g : grads.flat()) CHECK(g == 0.0);
  for (const Vec& v : input_grads) CHECK(v.cwiseAbs().sum() == 0.0);
}
