#include <gtest/gtest.h>

#include <cmath>

#include "countkit/data/synth.hpp"
#include "countkit/dataset.hpp"
#include "countkit/models/checkpoint.hpp"
#include "countkit/models/gradcheck.hpp"
#include "countkit/models/train.hpp"
#include "model_oracles.hpp"
#include "test_util.hpp"

using namespace countkit;

namespace {

oracles::Rows random_rows(Rng& rng, int n, int d) {
  oracles::Rows x(n, std::vector<double>(d));
  for (auto& r : x) {
    for (auto& v : r) v = rng.normal();
  }
  return x;
}

Matrix to_matrix(const oracles::Rows& x) {
  Matrix m(static_cast<Eigen::Index>(x.size()), static_cast<Eigen::Index>(x[0].size()));
  for (std::size_t i = 0; i < x.size(); ++i) {
    for (std::size_t j = 0; j < x[i].size(); ++j) m(i, j) = x[i][j];
  }
  return m;
}

void perturb(Model& m, Rng& rng) {
  for (auto& p : m.params()) {
    for (Eigen::Index j = 0; j < p.value.size(); ++j) {
      p.value.data()[j] += 0.2 * rng.normal();
      if (!p.trainable && p.name.find("running_var") != std::string::npos) {
        p.value.data()[j] = 0.5 + std::abs(p.value.data()[j]);
      }
    }
  }
}

std::vector<Sample> small_dataset(int scenes, int rows, int cols, std::uint64_t seed) {
  SynthConfig cfg;
  cfg.scene_count = scenes;
  cfg.seed = seed;
  return make_samples(generate_synthetic(cfg), rows, cols);
}

}  // namespace

TEST(Losses, HuberHandValues) {
  auto v = huber_loss(1.5, 1.0, 1.0);
  EXPECT_DOUBLE_EQ(v.loss, 0.125);
  EXPECT_DOUBLE_EQ(v.grad, 0.5);
  v = huber_loss(3.0, 1.0, 1.0);
  EXPECT_DOUBLE_EQ(v.loss, 1.5);
  EXPECT_DOUBLE_EQ(v.grad, 1.0);
  v = huber_loss(-2.0, 0.0, 0.5);
  EXPECT_DOUBLE_EQ(v.loss, 0.875);
  EXPECT_DOUBLE_EQ(v.grad, -0.5);
  v = squared_loss(3.0, 1.0);
  EXPECT_DOUBLE_EQ(v.loss, 2.0);
  EXPECT_DOUBLE_EQ(v.grad, 2.0);
}

TEST(Losses, HuberIsContinuousAtTheKink) {
  const double d = 0.7;
  EXPECT_NEAR(huber_loss(d + 1e-12, 0.0, d).loss, huber_loss(d - 1e-12, 0.0, d).loss, 1e-11);
}

TEST(Losses, CrossEntropyHandValue) {
  Matrix logits(1, 3);
  logits << 0.0, std::log(2.0), std::log(5.0);  // probabilities 1/8, 2/8, 5/8
  Eigen::MatrixXi labels(1, 1);
  labels << 1;
  Matrix d;
  EXPECT_NEAR(grouped_cross_entropy(logits, labels, 3, d), std::log(4.0), 1e-12);
  EXPECT_NEAR(d(0, 0), 0.125, 1e-12);
  EXPECT_NEAR(d(0, 1), 0.25 - 1.0, 1e-12);
  EXPECT_NEAR(d(0, 2), 0.625, 1e-12);
}

TEST(Adam, TwoStepsByHand) {
  ParamStore ps;
  ps.add("w", 1, 1);
  ps[0].value(0, 0) = 1.0;
  AdamState st;
  ps[0].grad(0, 0) = 0.5;
  adam_step(ps, st, 0.1);
  // m_hat = 0.5, v_hat = 0.25
  const double p1 = 1.0 - 0.1 * 0.5 / (0.5 + 1e-8);
  EXPECT_NEAR(ps[0].value(0, 0), p1, 1e-15);
  ps[0].grad(0, 0) = -1.0;
  adam_step(ps, st, 0.1);
  const double m = 0.9 * 0.05 + 0.1 * -1.0, v = 0.999 * 0.00025 + 0.001 * 1.0;
  const double mh = m / (1 - 0.81), vh = v / (1 - 0.999 * 0.999);
  EXPECT_NEAR(ps[0].value(0, 0), p1 - 0.1 * mh / (std::sqrt(vh) + 1e-8), 1e-15);
}

TEST(Adam, FrozenParametersDoNotMove) {
  ParamStore ps;
  ps.add("stat", 1, 2, false);
  ps[0].grad.setOnes();
  AdamState st;
  adam_step(ps, st, 1.0);
  EXPECT_TRUE(ps[0].value.isZero());
}

TEST(Orderings, ZAndMirroredN) {
  const auto [z, n] = cell_orderings(2, 3);
  EXPECT_EQ(z, (std::vector<int>{0, 1, 2, 3, 4, 5}));
  EXPECT_EQ(n, (std::vector<int>{0, 3, 1, 4, 2, 5}));
  const auto [z2, s] = cell_orderings(2, 3, ColumnOrder::snake);
  EXPECT_EQ(s, (std::vector<int>{0, 3, 4, 1, 2, 5}));
}

TEST(Orderings, EachIsAPermutation) {
  for (int r = 1; r <= 5; ++r) {
    for (int c = 1; c <= 5; ++c) {
      for (auto style : {ColumnOrder::raster, ColumnOrder::snake}) {
        auto [z, n] = cell_orderings(r, c, style);
        std::sort(n.begin(), n.end());
        EXPECT_EQ(z, n);
      }
    }
  }
}

TEST(Mlp, MatchesScalarOracleInBothModes) {
  Rng rng(5);
  for (int trial = 0; trial < 10; ++trial) {
    ModelConfig cfg;
    cfg.kind = trial % 2 ? ModelKind::glance : ModelKind::aso_sub;
    cfg.rows = cfg.cols = 1;
    cfg.feature_dim = 7;
    cfg.num_categories = 3;
    cfg.hidden = {6, 4};
    cfg.batch_norm = trial % 3 != 0;
    Model m(cfg);
    m.init(rng);
    perturb(m, rng);
    const auto x = random_rows(rng, 5, cfg.feature_dim);
    for (auto mode : {Mode::train, Mode::infer}) {
      const Matrix y = m.forward_batch(to_matrix(x), mode);
      const auto o = oracles::mlp_forward(m.params(), to_string(cfg.kind), 3, false, mode == Mode::train, x);
      for (int i = 0; i < 5; ++i) {
        for (int k = 0; k < 3; ++k) EXPECT_NEAR(y(i, k), o[i][k], 1e-12);
      }
    }
  }
}

TEST(SeqSub, MatchesScalarOracle) {
  Rng rng(6);
  for (int trial = 0; trial < 6; ++trial) {
    ModelConfig cfg;
    cfg.kind = ModelKind::seq_sub;
    cfg.rows = 1 + trial % 3;
    cfg.cols = 1 + (trial + 1) % 3;
    cfg.feature_dim = 5;
    cfg.num_categories = 2;
    cfg.encoder_dim = 4;
    cfg.lstm_hidden = 3;
    cfg.hidden = trial % 2 ? std::vector<int>{5} : std::vector<int>{};
    cfg.batch_norm = true;
    Model m(cfg);
    m.init(rng);
    perturb(m, rng);
    FeatureGrid f(cfg.rows, cfg.cols, cfg.feature_dim);
    for (auto& v : f.values) v = rng.normal();
    oracles::Rows cells;
    for (int c = 0; c < f.num_cells(); ++c) cells.emplace_back(f.cell(c).begin(), f.cell(c).end());
    const auto got = m.predict_cells(f);
    const auto want = oracles::seqsub_forward(m, cells);
    for (int c = 0; c < f.num_cells(); ++c) {
      for (int k = 0; k < 2; ++k) EXPECT_NEAR(got.at(c, k), want[c][k], 1e-12);
    }
  }
}

TEST(SeqSub, OutputDependsOnOtherCells) {
  Rng rng(7);
  ModelConfig cfg = default_model_config(ModelKind::seq_sub);
  cfg.feature_dim = 4;
  cfg.num_categories = 1;
  Model m(cfg);
  m.init(rng);
  FeatureGrid f(3, 3, 4);
  for (auto& v : f.values) v = rng.normal();
  const double before = m.predict_cells(f).at(0, 0);
  f.cell(8)[0] += 1.0;
  EXPECT_NE(m.predict_cells(f).at(0, 0), before);
}

TEST(BatchNorm, TrainModeIgnoresAPositiveRescalingOfTheWeights) {
  Rng rng(8);
  ModelConfig cfg;
  cfg.kind = ModelKind::glance;
  cfg.rows = cfg.cols = 1;
  cfg.feature_dim = 3;
  cfg.num_categories = 2;
  cfg.hidden = {4};
  Model m(cfg);
  m.init(rng);
  const Matrix x = to_matrix(random_rows(rng, 6, 3));
  const Matrix before = m.forward_batch(x, Mode::train);
  EXPECT_THROW(m.params().find("glance.l0.bias"), SchemaError);
  m.params()[m.params().find("glance.l0.weight")].value.array() *= 3.0;
  EXPECT_TRUE(m.forward_batch(x, Mode::train).isApprox(before, 1e-4));
  EXPECT_FALSE(m.forward_batch(x, Mode::infer).isApprox(before, 1e-6));
}

TEST(BatchNorm, SingleRowTrainBatchUsesRunningStatistics) {
  Rng rng(9);
  ModelConfig cfg;
  cfg.kind = ModelKind::glance;
  cfg.rows = cfg.cols = 1;
  cfg.feature_dim = 3;
  cfg.num_categories = 1;
  Model m(cfg);
  m.init(rng);
  perturb(m, rng);
  const Matrix x = to_matrix(random_rows(rng, 1, 3));
  EXPECT_TRUE(m.forward_batch(x, Mode::train).isApprox(m.forward_batch(x, Mode::infer), 1e-14));
}

TEST(BatchNorm, RunningAveragesMoveTowardBatchStatistics) {
  Rng rng(10);
  ModelConfig cfg;
  cfg.kind = ModelKind::glance;
  cfg.rows = cfg.cols = 1;
  cfg.feature_dim = 3;
  cfg.num_categories = 1;
  cfg.hidden = {2};
  Model m(cfg);
  m.init(rng);
  std::vector<Sample> data(4);
  for (auto& s : data) {
    s.features = FeatureGrid(1, 1, 3);
    for (auto& v : s.features.values) v = rng.normal();
    s.image_targets = {1.0};
  }
  const auto units = m.units(data);
  const auto t = m.assemble(data, units);
  const Matrix z = t.x * m.params()[m.params().find("glance.l0.weight")].value;
  const Eigen::RowVectorXd mean = z.colwise().mean();
  const Eigen::RowVectorXd var = (z.rowwise() - mean).array().square().colwise().mean();
  m.loss_and_grad(data, units, {LossKind::squared, 1.0}, Mode::train, true);
  EXPECT_TRUE(m.params()[m.params().find("glance.l0.bn.running_mean")].value.row(0).isApprox(0.1 * mean, 1e-12));
  const Eigen::RowVectorXd rv = 0.9 * Eigen::RowVectorXd::Ones(2) + 0.1 * var;
  EXPECT_TRUE(m.params()[m.params().find("glance.l0.bn.running_var")].value.row(0).isApprox(rv, 1e-12));
}

TEST(GtClass, ArgmaxTakesLowestIndexOnTies) {
  EXPECT_EQ(Model::argmax_first({0.2, 0.4, 0.4}), 1u);
  EXPECT_EQ(Model::argmax_first({0.5, 0.5}), 0u);
}

TEST(GtClass, TargetsClampIntoTheClassRange) {
  ModelConfig cfg;
  cfg.kind = ModelKind::gt_class;
  cfg.rows = cfg.cols = 1;
  cfg.max_count = 4;
  Model m(cfg);
  EXPECT_EQ(m.count_class(9.0), 4);
  EXPECT_EQ(m.count_class(-1.0), 0);
  EXPECT_EQ(m.count_class(2.0), 2);
}

TEST(GtClass, PredictsTheMostProbableClass) {
  Rng rng(11);
  ModelConfig cfg;
  cfg.kind = ModelKind::gt_class;
  cfg.rows = cfg.cols = 1;
  cfg.feature_dim = 3;
  cfg.num_categories = 2;
  cfg.max_count = 5;
  Model m(cfg);
  m.init(rng);
  FeatureGrid f(1, 1, 3);
  for (auto& v : f.values) v = rng.normal();
  const auto probs = m.class_probabilities(f);
  const auto pred = m.predict(f);
  for (int k = 0; k < 2; ++k) {
    double total = 0.0;
    for (double p : probs[k]) total += p;
    EXPECT_NEAR(total, 1.0, 1e-12);
    EXPECT_EQ(pred[k], static_cast<double>(Model::argmax_first(probs[k])));
  }
}

class GradientCheck : public ::testing::TestWithParam<ModelKind> {};

TEST_P(GradientCheck, TwentyRandomConfigurations) {
  Rng rng(1000 + static_cast<int>(GetParam()));
  for (int i = 0; i < 20; ++i) {
    auto c = random_gradcheck_case(GetParam(), rng);
    const auto r = gradient_check(c.model, c.data, c.batch, c.loss, 1e-5);
    EXPECT_LT(r.max_rel_error, 1e-4) << "config " << i << " worst " << r.worst_param;
    EXPECT_GT(r.checked, 0u);
  }
}

INSTANTIATE_TEST_SUITE_P(Kinds, GradientCheck,
                         ::testing::Values(ModelKind::glance, ModelKind::aso_sub, ModelKind::gt_class,
                                           ModelKind::seq_sub),
                         [](const auto& info) {
                           std::string s = to_string(info.param);
                           std::replace(s.begin(), s.end(), '-', '_');
                           return s;
                         });

TEST(GradientCheckInput, EpsilonOutsideRangeIsRejected) {
  Rng rng(1);
  auto c = random_gradcheck_case(ModelKind::glance, rng);
  EXPECT_THROW(gradient_check(c.model, c.data, c.batch, c.loss, 1e-2), SchemaError);
}

TEST(Training, OverfitsASingleSample) {
  for (auto kind : {ModelKind::glance, ModelKind::aso_sub, ModelKind::seq_sub}) {
    const bool whole = kind == ModelKind::glance;
    auto data = small_dataset(1, whole ? 1 : 2, whole ? 1 : 2, 4);
    ModelConfig mc = default_model_config(kind);
    if (!whole) mc.rows = mc.cols = 2;
    TrainConfig tc = default_train_config(kind);
    tc.learning_rate = 1e-2;
    tc.lr_decay = 1.0;
    tc.epochs = 400;
    const auto r = train(mc, data, tc);
    EXPECT_LT(r.result.loss_trace.back(), 1e-3) << to_string(kind);
  }
}

TEST(Training, SameSeedSameParameters) {
  auto data = small_dataset(40, 2, 2, 5);
  ModelConfig mc = default_model_config(ModelKind::seq_sub);
  mc.rows = mc.cols = 2;
  mc.hidden = {8};
  mc.encoder_dim = 8;
  mc.lstm_hidden = 4;
  TrainConfig tc = default_train_config(ModelKind::seq_sub);
  tc.epochs = 3;
  tc.batch_size = 8;
  const auto a = train(mc, data, tc), b = train(mc, data, tc);
  EXPECT_EQ(a.result.loss_trace, b.result.loss_trace);
  for (std::size_t i = 0; i < a.model.params().size(); ++i) {
    EXPECT_EQ(a.model.params()[i].value, b.model.params()[i].value) << a.model.params()[i].name;
  }
  tc.seed = 2;
  EXPECT_NE(train(mc, data, tc).result.loss_trace, a.result.loss_trace);
}

TEST(Training, AsoSubOnOneCellEqualsGlance) {
  auto data = small_dataset(60, 1, 1, 6);
  TrainConfig tc = default_train_config(ModelKind::glance);
  tc.epochs = 3;
  tc.batch_size = 16;
  ModelConfig g = default_model_config(ModelKind::glance);
  ModelConfig a = g;
  a.kind = ModelKind::aso_sub;
  const auto mg = train(g, data, tc), ma = train(a, data, tc);
  EXPECT_EQ(mg.result.loss_trace, ma.result.loss_trace);
  for (const auto& s : data) EXPECT_EQ(mg.model.infer(s.features), ma.model.infer(s.features));
}

TEST(Training, DivergenceRaisesNumericError) {
  auto data = small_dataset(10, 1, 1, 7);
  TrainConfig tc = default_train_config(ModelKind::glance);
  tc.learning_rate = 1e200;
  tc.epochs = 20;
  EXPECT_THROW(train(default_model_config(ModelKind::glance), data, tc), NumericError);
}

TEST(Training, InvalidConfigsAreRejected) {
  TrainConfig tc;
  tc.batch_size = 0;
  EXPECT_THROW(tc.validate(), SchemaError);
  tc = {};
  tc.lr_decay = 1.5;
  EXPECT_THROW(tc.validate(), SchemaError);
  EXPECT_THROW(Model(ModelConfig{.kind = ModelKind::glance}), SchemaError);  // 3x3 grid for a whole-image model
}

TEST(Checkpoint, RoundTripPreservesPredictionsAndBytes) {
  auto data = small_dataset(20, 3, 3, 8);
  ModelConfig mc = default_model_config(ModelKind::seq_sub);
  mc.hidden = {8};
  mc.encoder_dim = 6;
  mc.lstm_hidden = 3;
  TrainConfig tc = default_train_config(ModelKind::seq_sub);
  tc.epochs = 2;
  const auto t = train(mc, data, tc);
  const auto dir = test_util::scratch_dir("checkpoint");
  save_checkpoint(dir / "a.json", t.model, tc);
  const auto ck = load_checkpoint(dir / "a.json");
  for (const auto& s : data) EXPECT_EQ(ck.model.predict_cells(s.features), t.model.predict_cells(s.features));
  EXPECT_EQ(ck.train.epochs, 2);
  save_checkpoint(dir / "b.json", ck.model, ck.train);
  EXPECT_EQ(test_util::read_file(dir / "a.json"), test_util::read_file(dir / "b.json"));
}

TEST(Checkpoint, ShapeMismatchIsNamed) {
  Model m(default_model_config(ModelKind::glance));
  Json j = checkpoint_to_json(m, {});
  j["params"][0]["rows"] = 1;
  try {
    checkpoint_from_json(j);
    FAIL();
  } catch (const SchemaError& e) {
    EXPECT_NE(std::string(e.what()).find("glance.l0.weight"), std::string::npos);
  }
}

TEST(Models, WrongFeatureGridIsRejected) {
  Model m(default_model_config(ModelKind::aso_sub));
  EXPECT_THROW(m.predict(FeatureGrid(2, 2, featurizer::kDim)), SchemaError);
}
