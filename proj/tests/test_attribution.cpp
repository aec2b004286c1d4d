#include <doctest.h>

#include "safn/attribution.hpp"
#include "safn/common.hpp"
#include "safn/model.hpp"

#include <cmath>
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

ModelStructure full_structure() {
  return ModelStructure::make(
      kWidths, {Modality::MriCt, Modality::Clinical, Modality::MriVol, Modality::Demographic});
}

std::vector<std::vector<std::string>> generic_names(const ModelStructure& structure) {
  std::vector<std::vector<std::string>> names;
  for (const StreamSpec& s : structure.streams) {
    std::vector<std::string> stream;
    for (int f = 0; f < s.width; ++f) {
      stream.push_back(modality_name(s.modality) + "_" + std::to_string(f));
    }
    names.push_back(std::move(stream));
  }
  return names;
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

TEST_CASE("zero-valued features receive zero attribution") {
  const SafnModel model(tiny_config(), full_structure());
  const ParamBuffer params = model.make_params(3);
  ModalityBundle bundle = random_bundle(model.structure(), 1);
  bundle.block(Modality::MriVol)[0] = 0.0;

  AttributionAccumulator acc;
  acc.add(model, params, {bundle}, generic_names(model.structure()));
  const AttributionReport report = acc.finalize();
  for (const AttributionEntry& e : report.entries) {
    if (e.feature == "mri_vol_0") CHECK(e.raw == 0.0);
  }
}

TEST_CASE("probability-target input gradients match finite differences") {
  const SafnModel model(tiny_config(), full_structure());
  const ParamBuffer params = model.make_params(9);
  ModalityBundle bundle = random_bundle(model.structure(), 2);

  const ForwardTrace trace = model.forward(bundle, params, false, 0);
  ParamBuffer grads = model.make_zero_buffer();
  InputGradients input_grads;
  model.backward(trace, params, trace.prob * (1.0 - trace.prob), Vec(), grads, &input_grads);

  const double h = 1e-5;
  for (int si = 0; si < model.structure().n_streams(); ++si) {
    const Modality m = model.structure().streams[si].modality;
    for (Eigen::Index f = 0; f < bundle.block(m).size(); ++f) {
      const double saved = bundle.block(m)[f];
      bundle.block(m)[f] = saved + h;
      const double up = model.forward(bundle, params, false, 0).prob;
      bundle.block(m)[f] = saved - h;
      const double down = model.forward(bundle, params, false, 0).prob;
      bundle.block(m)[f] = saved;
      const double fd = (up - down) / (2.0 * h);
      CHECK(input_grads[si][f] ==
            doctest::Approx(fd).epsilon(1e-4).scale(std::max(1e-8, std::fabs(fd))));
    }
  }
}

TEST_CASE("duplicating a sample leaves normalised percentages unchanged") {
  const SafnModel model(tiny_config(), full_structure());
  const ParamBuffer params = model.make_params(5);
  const ModalityBundle bundle = random_bundle(model.structure(), 7);
  const ModalityBundle other = random_bundle(model.structure(), 8);

  AttributionAccumulator once;
  once.add(model, params, {bundle, other}, generic_names(model.structure()));
  AttributionAccumulator twice;
  twice.add(model, params, {bundle, other, bundle, other}, generic_names(model.structure()));
  const AttributionReport a = once.finalize();
  const AttributionReport b = twice.finalize();
  REQUIRE(a.entries.size() == b.entries.size());
  for (std::size_t i = 0; i < a.entries.size(); ++i) {
    CHECK(a.entries[i].feature == b.entries[i].feature);
    CHECK(a.entries[i].percent == doctest::Approx(b.entries[i].percent).epsilon(1e-9));
  }
}

TEST_CASE("percentages sum to one hundred and ranking is consistent") {
  const SafnModel model(tiny_config(), full_structure());
  const ParamBuffer params = model.make_params(15);
  std::vector<ModalityBundle> samples;
  for (uint64_t i = 0; i < 5; ++i) samples.push_back(random_bundle(model.structure(), 20 + i));

  AttributionAccumulator acc;
  acc.add(model, params, samples, generic_names(model.structure()));
  const AttributionReport report = acc.finalize();
  double total = 0.0;
  for (const AttributionEntry& e : report.entries) total += e.percent;
  CHECK(std::fabs(total - 100.0) < 1e-9);
  for (std::size_t i = 1; i < report.entries.size(); ++i) {
    CHECK(report.entries[i - 1].percent >= report.entries[i].percent - 1e-12);
    CHECK(report.entries[i].rank == static_cast<int>(i) + 1);
  }
}

TEST_CASE("logit-target mode differs from probability mode only by the sigmoid slope") {
  const SafnModel model(tiny_config(), full_structure());
  const ParamBuffer params = model.make_params(31);
  const ModalityBundle bundle = random_bundle(model.structure(), 3);

  AttributionAccumulator prob_acc;
  prob_acc.add(model, params, {bundle}, generic_names(model.structure()),
               AttributionTarget::Probability);
  AttributionAccumulator logit_acc;
  logit_acc.add(model, params, {bundle}, generic_names(model.structure()),
                AttributionTarget::Logit);
  const AttributionReport pr = prob_acc.finalize();
  const AttributionReport lr = logit_acc.finalize();
  // One sample: raw magnitudes scale by sigma'(s) uniformly, so the
  // normalised percentages coincide.
  std::map<std::string, double> lookup;
  for (const auto& e : lr.entries) lookup[e.feature] = e.percent;
  for (const auto& e : pr.entries) {
    CHECK(e.percent == doctest::Approx(lookup[e.feature]).epsilon(1e-9));
  }
}

TEST_CASE("top_k respects ties by name and bounds") {
  AttributionReport report;
  report.entries = {{"b_feat", Modality::Clinical, 2.0, 40.0, 1},
                    {"a_feat", Modality::Clinical, 1.0, 30.0, 2},
                    {"c_feat", Modality::MriCt, 1.0, 30.0, 3}};
  const auto top2 = top_k_features(report, 2);
  REQUIRE(top2.size() == 2);
  CHECK(top2[0].feature == "b_feat");
  CHECK(top2[1].feature == "a_feat");
  CHECK(top_k_features(report, 3).size() == 3);
  CHECK_THROWS_AS(top_k_features(report, 4), DataError);

  // The accumulator itself breaks exact ties alphabetically.
  AttributionAccumulator acc;
  const SafnModel model(tiny_config(), full_structure());
  const ParamBuffer params = model.make_zero_buffer();  // zero net: all raw = 0
  acc.add(model, params, {random_bundle(model.structure(), 1)},
          generic_names(model.structure()));
  const AttributionReport zeros = acc.finalize();
  for (std::size_t i = 1; i < zeros.entries.size(); ++i) {
    CHECK(zeros.entries[i - 1].feature < zeros.entries[i].feature);
  }
}

TEST_CASE("gate contributions reproduce the published share computation") {
  // Raw means in the published order: clinical, mri_ct, demographic, mri_vol.
  Vec gates(4);
  gates << 0.118, 0.032, 0.029, 0.018;
  const GateReport report = gate_contributions(
      {gates}, {Modality::Clinical, Modality::MriCt, Modality::Demographic, Modality::MriVol});
  CHECK(100.0 * report.share[0] == doctest::Approx(59.9).epsilon(0.002));
  CHECK(100.0 * report.share[1] == doctest::Approx(16.2).epsilon(0.01));
  CHECK(100.0 * report.share[2] == doctest::Approx(14.7).epsilon(0.01));
  CHECK(100.0 * report.share[3] == doctest::Approx(9.1).epsilon(0.01));

  // Equal means share evenly; scaling is invariant.
  const GateReport equal = gate_contributions(
      {Vec::Constant(4, 0.3)},
      {Modality::MriCt, Modality::Clinical, Modality::MriVol, Modality::Demographic});
  for (double s : equal.share) CHECK(s == doctest::Approx(0.25));

  std::vector<Vec> scaled = {3.0 * gates};
  const GateReport scaled_report = gate_contributions(
      scaled, {Modality::Clinical, Modality::MriCt, Modality::Demographic, Modality::MriVol});
  for (int j = 0; j < 4; ++j) {
    CHECK(scaled_report.share[j] == doctest::Approx(report.share[j]).epsilon(1e-12));
  }

  // Mean over samples drives the shares.
  Vec a(2), b(2);
  a << 0.2, 0.4;
  b << 0.4, 0.8;
  const GateReport mean_report =
      gate_contributions({a, b}, {Modality::MriCt, Modality::Clinical});
  CHECK(mean_report.raw_mean[0] == doctest::Approx(0.3));
  CHECK(mean_report.raw_mean[1] == doctest::Approx(0.6));
  CHECK(mean_report.share[0] == doctest::Approx(1.0 / 3.0));
}
