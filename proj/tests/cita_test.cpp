#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "oracles.hpp"
#include "tarnet/cita.hpp"
#include "tarnet/dgp.hpp"
#include "tarnet/error.hpp"
#include "tarnet/train.hpp"

using namespace tarnet;

namespace {

FisherDiagonal diag(std::vector<double> v) { return FisherDiagonal{std::move(v), 1}; }

// Target that differs from `d` only by which arm is called "treated".
Dataset label_flipped(const Dataset& d) {
  Dataset f = d;
  for (std::size_t i = 0; i < d.size(); ++i) {
    f.t[i] = 1 - d.t[i];
    f.y0[i] = d.y1[i];
    f.y1[i] = d.y0[i];
    f.tau[i] = -d.tau[i];
  }
  return f;
}

}  // namespace

TEST(Fisher, MatchesDenseOuterProduct) {
  for (std::uint64_t s = 0; s < 10; ++s) {
    const NetworkSpec spec = s % 2 ? NetworkSpec{2, {3}, {1}} : NetworkSpec{3, {2, 2}, {}};
    ASSERT_LE(parameter_count(spec), 30u);
    TarnetModel m = TarnetModel::initialize(spec, s);
    std::mt19937_64 rng(s);
    std::normal_distribution<double> z(0.0, 0.3);
    for (std::size_t l = 0; l < m.params().layer_count(); ++l) {
      for (double& b : m.mutable_params().mutable_layer(l).biases) b = z(rng);
    }
    // Freeze flags must not matter.
    m.mutable_params() = freeze_layers(m.params(), 1);
    const Dataset d = oracle::toy_dataset(25, spec.input_dim, 40 + s);
    for (HeadOrder order : {HeadOrder::identity, HeadOrder::swapped}) {
      const auto f = diag_fisher(m, DataView(d), order);
      const auto ref = oracle::fisher_outer_product(m.params(), spec, d, order == HeadOrder::swapped);
      ASSERT_EQ(f.values.size(), ref.size());
      EXPECT_EQ(f.n_samples, d.size());
      for (std::size_t k = 0; k < ref.size(); ++k) EXPECT_NEAR(f.values[k], ref[k], 1e-10);
    }
  }
}

TEST(Fisher, HandComputedEntries) {
  // phi = relu(a x), y_t = c_t phi: one example per arm, a single live path.
  std::vector<DenseLayer> layers{{1, 1, {2.0}, {0.0}, false},
                                 {1, 1, {0.5}, {0.0}, false},
                                 {1, 1, {-1.0}, {0.0}, false}};
  const TarnetModel m({1, {1}, {}}, ParameterStore(layers, 0));
  Dataset d;
  d.dim = 1;
  d.X = {1.0, -1.0};  // the second row is dead under relu
  d.t = {0, 1};
  d.y = {3.0, 2.0};
  const auto f = diag_fisher(m, DataView(d), HeadOrder::identity);
  // row 0: h = 0.5 * 2 = 1, r = 2, w = 1; d/dc0 = -2 r phi = -8, d/da = -2 r c0 x = -2
  // row 1: phi = 0, only the h1 bias moves: d/db1 = -2 * (2 - 0) = -4
  // order: a, b_enc, c0, b0, c1, b1
  EXPECT_DOUBLE_EQ(f.values[0], 4.0 / 2.0);
  EXPECT_DOUBLE_EQ(f.values[2], 64.0 / 2.0);
  EXPECT_DOUBLE_EQ(f.values[3], 16.0 / 2.0);
  EXPECT_DOUBLE_EQ(f.values[4], 0.0);
  EXPECT_DOUBLE_EQ(f.values[5], 16.0 / 2.0);
}

TEST(Fisher, Errors) {
  const TarnetModel m = TarnetModel::initialize({2, {2}, {}}, 1);
  Dataset d = oracle::toy_dataset(6, 2, 1);
  Dataset empty;
  empty.dim = 2;
  EXPECT_THROW(diag_fisher(m, DataView(empty), HeadOrder::identity), DataError);
  std::fill(d.t.begin(), d.t.end(), 0);
  EXPECT_THROW(diag_fisher(m, DataView(d), HeadOrder::identity), DataError);
  const Dataset wide = oracle::toy_dataset(6, 3, 1);
  EXPECT_THROW(diag_fisher(m, DataView(wide), HeadOrder::identity), DimensionError);
}

TEST(CitaRaw, Examples) {
  EXPECT_EQ(cita_raw(diag({1, 2, 3}), diag({1, 2, 3})), 0.0);
  EXPECT_NEAR(cita_raw(diag({4}), diag({1})), 1.0 / std::sqrt(2.0), 1e-15);
  EXPECT_NEAR(cita_raw(diag({4, 0}), diag({0, 4})), 2.0, 1e-15);
  EXPECT_THROW(cita_raw(diag({1}), diag({1, 2})), DimensionError);
}

TEST(CitaNormalized, Examples) {
  EXPECT_EQ(cita_normalized(diag({1, 2}), diag({1, 2})), 0.0);
  EXPECT_DOUBLE_EQ(cita_normalized(diag({3, 5}), diag({0, 0})), 1.0);
  EXPECT_NEAR(cita_normalized(diag({4}), diag({1})), 1.0 / 3.0, 1e-15);
  EXPECT_THROW(cita_normalized(diag({0, 0}), diag({0, 0})), DataError);
}

TEST(CitaNormalized, WithinUnitInterval) {
  std::mt19937_64 rng(3);
  std::exponential_distribution<double> e(1.0);
  for (int r = 0; r < 500; ++r) {
    std::vector<double> a(1 + rng() % 20), b;
    for (double& v : a) v = rng() % 4 == 0 ? 0.0 : e(rng);
    for (std::size_t k = 0; k < a.size(); ++k) b.push_back(rng() % 4 == 0 ? 0.0 : e(rng));
    if (std::all_of(a.begin(), a.end(), [](double v) { return v == 0; }) &&
        std::all_of(b.begin(), b.end(), [](double v) { return v == 0; })) {
      continue;
    }
    const double s = cita_normalized(diag(a), diag(b));
    EXPECT_GE(s, 0.0);
    EXPECT_LE(s, 1.0);
  }
}

class CitaSym : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    source_ = new Dataset(gen_source(600, {}, 13));
    TrainConfig cfg;
    cfg.epochs = 20;
    cfg.seed = 2;
    model_ = new TarnetModel(train_source(DataView(*source_), {5, {16, 16, 16}, {8, 8}}, cfg).model);
  }
  static void TearDownTestSuite() {
    delete source_;
    delete model_;
  }
  static Dataset* source_;
  static TarnetModel* model_;
};
Dataset* CitaSym::source_ = nullptr;
TarnetModel* CitaSym::model_ = nullptr;

TEST_F(CitaSym, TargetEqualsSource) {
  const auto s = cita_symmetrized(*model_, DataView(*source_), DataView(*source_));
  EXPECT_EQ(s.raw, 0.0);
  EXPECT_EQ(s.normalized, 0.0);
  EXPECT_EQ(s.permutation, HeadOrder::identity);
  EXPECT_EQ(s.n_source, 600u);
}

TEST_F(CitaSym, LabelFlipScoresZero) {
  const Dataset flipped = label_flipped(*source_);
  flipped.validate();
  // Trained models have a frozen flag set somewhere in practice; irrelevant here.
  const auto s = cita_symmetrized(*model_, DataView(*source_), DataView(flipped));
  EXPECT_NEAR(s.normalized, 0.0, 1e-10);
  EXPECT_NEAR(s.raw, 0.0, 1e-10);
  EXPECT_EQ(s.permutation, HeadOrder::swapped);
  EXPECT_GT(s.one_sided_normalized, 0.0);
  EXPECT_GT(s.one_sided_raw, 0.0);
}

TEST_F(CitaSym, NeverAboveOneSided) {
  for (std::uint64_t seed = 0; seed < 6; ++seed) {
    const Dataset t = seed % 2 ? subsample_biased(*source_, 100, seed) : subsample_random(*source_, 100, seed);
    const auto s = cita_symmetrized(*model_, DataView(*source_), DataView(t));
    EXPECT_LE(s.normalized, s.one_sided_normalized);
    EXPECT_LE(s.raw, s.one_sided_raw);
    EXPECT_GE(s.normalized, 0.0);
    EXPECT_LE(s.normalized, 1.0);
    EXPECT_EQ(s.n_target, 100u);
  }
}

TEST_F(CitaSym, PrecomputedSourceFisherAgrees) {
  const Dataset t = subsample_biased(*source_, 80, 4);
  const auto f_ss = diag_fisher(*model_, DataView(*source_), HeadOrder::identity);
  const auto a = cita_symmetrized(*model_, DataView(*source_), DataView(t));
  const auto b = cita_symmetrized(f_ss, *model_, DataView(t), source_->size());
  EXPECT_EQ(a.normalized, b.normalized);
  EXPECT_EQ(a.raw, b.raw);
  EXPECT_EQ(a.permutation, b.permutation);
}

TEST_F(CitaSym, SingleGroupTargetRefused) {
  Dataset t = subsample_random(*source_, 50, 1);
  std::fill(t.t.begin(), t.t.end(), 1);
  EXPECT_THROW(cita_symmetrized(*model_, DataView(*source_), DataView(t)), DataError);
}
