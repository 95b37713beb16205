#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>

#include "bnn/baselines.hpp"
#include "bnn/datasets.hpp"
#include "bnn/random.hpp"
#include "oracles.hpp"

using namespace bnn;

namespace {

Batch sine_data(Rng& rng, Eigen::Index n = 40) {
  Batch d{Matrix(n, 1), Matrix(n, 1)};
  d.x = 2.0 * standard_normal(n, rng);
  for (Eigen::Index i = 0; i < n; ++i) d.y(i, 0) = std::sin(d.x(i, 0)) + 0.2 * standard_normal(1, rng)(0);
  return d;
}

}  // namespace

TEST_CASE("map objective") {
  Rng rng(1);
  const MlpSpec spec({1, 8, 1});
  const auto model = LikelihoodModel::gaussian(0.5);
  const Batch data = sine_data(rng, 15);
  const WeightVector w = standard_normal(spec.param_count(), rng);
  SUBCASE("lambda zero is the negative log likelihood") {
    CHECK(map_objective(model, spec, w, data, 0.0) ==
          doctest::Approx(-log_likelihood(model, spec, w, data.x, data.y)).epsilon(1e-14));
  }
  SUBCASE("zero weights carry no penalty") {
    const WeightVector zero = WeightVector::Zero(spec.param_count());
    CHECK(map_objective(model, spec, zero, data, 3.0) == map_objective(model, spec, zero, data, 0.0));
  }
  SUBCASE("lambda = noise variance matches the negative log joint") {
    const double lambda = model.noise_variance();
    const auto vg = map_objective_value_and_gradient(model, spec, w, data, lambda);
    const WeightVector g = grad_log_joint(model, spec, w, data);
    CHECK(oracle::max_relative_error(vg.gradient, -g) < 1e-8);
    const double offset = -log_joint(model, spec, w, data) - vg.value;
    const WeightVector w2 = standard_normal(spec.param_count(), rng);
    CHECK(-log_joint(model, spec, w2, data) - map_objective(model, spec, w2, data, lambda) ==
          doctest::Approx(offset).epsilon(1e-10));
  }
  SUBCASE("gradient matches finite differences") {
    const auto vg = map_objective_value_and_gradient(model, spec, w, data, 0.7);
    const WeightVector fd = oracle::central_difference(
        [&](const oracle::Vec& p) { return map_objective(model, spec, p, data, 0.7); }, w);
    CHECK(oracle::max_relative_error(vg.gradient, fd) < 1e-5);
  }
  SUBCASE("classification uses a unit reference scale") {
    CHECK(penalty_reference(LikelihoodModel::bernoulli()) == 1.0);
    CHECK(penalty_reference(model) == 0.25);
  }
}

TEST_CASE("dropout") {
  Rng rng(2);
  const MlpSpec spec({1, 20, 1});
  const auto model = LikelihoodModel::gaussian(0.2);
  const Batch data = sine_data(rng);
  DropoutConfig cfg;
  cfg.training.learning_rate = 0.01;
  cfg.training.lambda = 0.04;
  cfg.training.max_steps = 4000;

  SUBCASE("vanishing rate reduces to plain MAP training") {
    cfg.dropout_rate = 1e-12;
    const MapFit d = dropout_fit(model, spec, data, cfg, 5);
    const MapFit m = map_fit(model, spec, data, cfg.training, 0.0, 5);
    CHECK(std::abs(d.final_loss - m.final_loss) <= 0.02 * std::abs(m.final_loss));
  }
  SUBCASE("deterministic per seed") {
    cfg.dropout_rate = 0.05;
    cfg.training.max_steps = 300;
    CHECK(dropout_fit(model, spec, data, cfg, 9).weights == dropout_fit(model, spec, data, cfg, 9).weights);
  }
  SUBCASE("predictive samples") {
    const WeightVector w = standard_normal(spec.param_count(), rng);
    const Matrix x = standard_normal(7, rng);
    const PredictiveSamples none = dropout_predictive_samples(w, spec, model, x, 50, 0.0, 3, false);
    const Matrix f = forward(spec, w, x);
    for (Eigen::Index s = 0; s < 50; ++s) CHECK((none.values.row(s).transpose() - f.col(0)).cwiseAbs().maxCoeff() < 1e-12);

    const PredictiveSamples a = dropout_predictive_samples(w, spec, model, x, 50, 0.3, 3, true);
    const PredictiveSamples b = dropout_predictive_samples(w, spec, model, x, 50, 0.3, 3, true);
    CHECK(a.values == b.values);
    CHECK(a.includes_observation_noise);
    CHECK(a.draws() == 50);
    // masks differ between passes
    CHECK((a.values.row(0) - a.values.row(1)).norm() > 0.0);
  }
  SUBCASE("invalid rates") {
    cfg.dropout_rate = 0.0;
    CHECK_THROWS(cfg.validate());
    cfg.dropout_rate = 1.0;
    CHECK_THROWS(cfg.validate());
  }
}

TEST_CASE("ensembles") {
  Rng rng(3);
  const MlpSpec spec({1, 10, 1});
  const auto model = LikelihoodModel::gaussian(0.2);
  const Batch data = sine_data(rng, 30);
  EnsembleConfig cfg;
  cfg.training.learning_rate = 0.01;
  cfg.training.lambda = 0.04;
  cfg.training.max_steps = 1500;

  SUBCASE("one member is a MAP estimate") {
    cfg.n_members = 1;
    const EnsembleResult e = ensemble_fit(model, spec, data, cfg, 11);
    REQUIRE(e.members.size() == 1);
    const MapFit m = map_fit(model, spec, data, cfg.training, 0.0, e.records[0].seed);
    CHECK(e.members[0] == m.weights);
  }
  SUBCASE("members are seeded independently and reproducibly") {
    cfg.n_members = 4;
    cfg.workers = 2;
    const EnsembleResult a = ensemble_fit(model, spec, data, cfg, 11);
    cfg.workers = 1;
    const EnsembleResult b = ensemble_fit(model, spec, data, cfg, 11);
    for (std::size_t i = 0; i < 4; ++i) {
      CHECK(a.members[i] == b.members[i]);
      CHECK(a.records[i].index == static_cast<int>(i));
      CHECK(a.records[i].seed == derive_seed(11, i));
    }
    CHECK(a.members[0] != a.members[1]);
    CHECK(a.as_samples().size() == 4);
  }
  SUBCASE("save and load round trip") {
    cfg.n_members = 3;
    const EnsembleResult e = ensemble_fit(model, spec, data, cfg, 2);
    const auto dir = std::filesystem::temp_directory_path() / "bnn_ensemble_test";
    std::filesystem::remove_all(dir);
    save_ensemble(e, dir.string());
    CHECK(std::filesystem::exists(dir / "members_manifest.csv"));
    const EnsembleResult back = load_ensemble(dir.string());
    REQUIRE(back.members.size() == 3);
    for (std::size_t i = 0; i < 3; ++i) {
      CHECK(back.members[i] == e.members[i]);
      CHECK(back.records[i].seed == e.records[i].seed);
      CHECK(back.records[i].final_loss == e.records[i].final_loss);
    }
    std::filesystem::remove_all(dir);
  }
  SUBCASE("invalid size") {
    cfg.n_members = 0;
    CHECK_THROWS(cfg.validate());
  }
}

TEST_CASE("ensemble keeps uncertainty in the reg2 gap") {
  const Dataset d = generate_dataset("reg2", 1);
  const MlpSpec spec = default_network("reg2");
  const auto model = d.likelihood();
  const Batch train = d.subset(Split::train);
  EnsembleConfig cfg;
  cfg.n_members = 20;
  cfg.training.learning_rate = 0.05;
  cfg.training.lambda = model.noise_variance();
  const EnsembleResult e = ensemble_fit(model, spec, train, cfg, 4);

  const Dataset grid = evenly_spaced_grid("reg2", 200);
  const PredictiveSamples ens = predictive_from_weights(e.as_samples(), spec, model, grid.x, 1, true);
  PosteriorSamples single;
  single.draws = e.members[0].transpose();
  Matrix repeated = single.draws.replicate(500, 1);
  single.draws = repeated;
  const PredictiveSamples one = predictive_from_weights(single, spec, model, grid.x, 1, true);
  const IntervalBand be = interval_band(ens), bo = interval_band(one);

  double gap_e = 0, gap_o = 0, out_e = 0;
  int n_gap = 0, n_out = 0;
  for (Eigen::Index i = 0; i < grid.x.rows(); ++i) {
    const double x = grid.x(i, 0);
    if (std::abs(x) < 1.5) {
      gap_e += be.high(i) - be.low(i);
      gap_o += bo.high(i) - bo.low(i);
      ++n_gap;
    } else if (std::abs(x) > 2.5 && std::abs(x) < 5.5) {
      out_e += be.high(i) - be.low(i);
      ++n_out;
    }
  }
  CHECK(gap_e / n_gap > gap_o / n_gap);
  CHECK(gap_e / n_gap > out_e / n_out);
}
