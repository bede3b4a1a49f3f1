#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <vector>

#include "fedbandit/bandit.hpp"
#include "fedbandit/rng.hpp"

namespace fedbandit {
namespace {

Matrix random_pd(int d, Rng& rng, double ridge = 0.5) {
  std::normal_distribution<double> n(0.0, 1.0);
  Matrix a(d, d);
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j) a(i, j) = n(rng);
  return a * a.transpose() + ridge * Matrix::Identity(d, d);
}

Vector random_vec(int d, Rng& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  Vector v(d);
  for (int i = 0; i < d; ++i) v[i] = n(rng);
  return v;
}

TEST(EffectiveDesign, FreshSyncIsIdentity) {
  DeviceState dev = DeviceState::initial(3, 0.7);
  dev.sync.reward_vec << 1, 2, 3;
  const auto design = effective_design(dev);
  EXPECT_EQ(design.gram, dev.sync.gram);
  EXPECT_EQ(design.reward_vec, dev.sync.reward_vec);
}

TEST(EffectiveDesign, AddsLocalGram) {
  DeviceState dev = DeviceState::initial(4, 1.0);
  record_observation(dev, Vector::Unit(4, 0), 0.0);
  Vector expected(4);
  expected << 2, 1, 1, 1;
  EXPECT_EQ(effective_design(dev).gram, Matrix(expected.asDiagonal()));
}

TEST(EffectiveDesign, StaysSymmetric) {
  Rng rng(5);
  DeviceState dev = DeviceState::initial(6, 0.3);
  for (int i = 0; i < 40; ++i) record_observation(dev, random_vec(6, rng).normalized(), 1.0);
  const auto v = effective_design(dev).gram;
  EXPECT_EQ(v, v.transpose());
}

TEST(RidgeEstimate, IdentityAndScaling) {
  Vector u(2);
  u << 1, 2;
  EXPECT_TRUE(ridge_estimate(Matrix::Identity(2, 2), u).isApprox(u));
  Vector u2(2);
  u2 << 2, 0;
  Vector expected(2);
  expected << 1, 0;
  EXPECT_TRUE(ridge_estimate(2.0 * Matrix::Identity(2, 2), u2).isApprox(expected));
}

TEST(RidgeEstimate, RecoversForwardConstructedSolution) {
  Rng rng(42);
  for (int rep = 0; rep < 20; ++rep) {
    const Matrix v = random_pd(5, rng);
    const Vector theta = random_vec(5, rng);
    const Vector u = v * theta;
    const Vector est = ridge_estimate(v, u);
    EXPECT_LE((est - theta).norm(), 1e-8);
    EXPECT_LE((v * est - u).norm(), 1e-8 * (1.0 + u.norm()));
  }
}

TEST(RidgeEstimate, RejectsIndefinite) {
  Matrix v = Matrix::Identity(2, 2);
  v(1, 1) = -0.5;
  EXPECT_THROW(ridge_estimate(v, Vector::Ones(2)), NumericalError);
}

TEST(SelectAction, ZeroRadiusIsGreedy) {
  const ConfidenceEllipsoid ell{Vector::Unit(2, 0), Matrix::Identity(2, 2), 0.0};
  const std::vector<Vector> actions{Vector::Unit(2, 0), Vector::Unit(2, 1)};
  EXPECT_EQ(select_action(ell, actions).index, 0u);
}

TEST(SelectAction, ZeroCenterPrefersLongerAction) {
  const ConfidenceEllipsoid ell{Vector::Zero(2), Matrix::Identity(2, 2), 1.0};
  const std::vector<Vector> actions{Vector::Unit(2, 0), 2.0 * 0.4 * Vector::Unit(2, 1)};
  const auto choice = select_action(ell, actions);
  EXPECT_EQ(choice.index, 0u);
  EXPECT_NEAR(choice.score, 1.0, 1e-15);
}

TEST(SelectAction, TiesGoToLowestIndex) {
  const ConfidenceEllipsoid ell{Vector::Unit(3, 2), 2.0 * Matrix::Identity(3, 3), 0.5};
  const Vector x = Vector::Ones(3) / std::sqrt(3.0);
  const std::vector<Vector> actions{Vector::Unit(3, 0), x, x, x};
  EXPECT_EQ(select_action(ell, actions).index, 1u);
}

TEST(SelectAction, RoundingLevelDifferencesAreTies) {
  Vector a(2), b(2);
  a << 1.0, 0.0;
  b << 1.0 + 1e-15, 0.0;
  const ConfidenceEllipsoid ell{Vector::Unit(2, 0), Matrix::Identity(2, 2), 0.0};
  EXPECT_EQ(select_action(ell, std::vector<Vector>{a, b}).index, 0u);
  b[0] = 1.0 + 1e-9;
  EXPECT_EQ(select_action(ell, std::vector<Vector>{a, b}).index, 1u);
}

TEST(SelectAction, MatchesBruteForceWithExplicitInverse) {
  Rng rng(7);
  for (int rep = 0; rep < 50; ++rep) {
    const Matrix v = random_pd(3, rng);
    const Matrix v_inv = v.inverse();
    const ConfidenceEllipsoid ell{random_vec(3, rng), v, 0.3 + rep * 0.05};
    std::vector<Vector> actions;
    for (int k = 0; k < 5; ++k) actions.push_back(random_vec(3, rng).normalized());

    std::size_t best = 0;
    double best_score = -1e300;
    for (std::size_t k = 0; k < actions.size(); ++k) {
      const double s = ell.center.dot(actions[k]) +
                       ell.radius * std::sqrt(actions[k].dot(v_inv * actions[k]));
      if (s > best_score) {
        best_score = s;
        best = k;
      }
    }
    const auto choice = select_action(ell, actions);
    EXPECT_EQ(choice.index, best);
    EXPECT_NEAR(choice.score, best_score, 1e-10);
  }
}

TEST(SelectAction, RejectsEmptySet) {
  const ConfidenceEllipsoid ell{Vector::Zero(2), Matrix::Identity(2, 2), 1.0};
  EXPECT_THROW(select_action(ell, std::vector<Vector>{}), PreconditionError);
}

TEST(RecordObservation, FromZeroState) {
  DeviceState dev = DeviceState::initial(3, 1.0);
  record_observation(dev, Vector::Unit(3, 0), 1.0);
  Matrix expected = Matrix::Zero(3, 3);
  expected(0, 0) = 1.0;
  EXPECT_EQ(dev.local_gram, expected);
  EXPECT_EQ(dev.local_reward_vec, Vector::Unit(3, 0));
  EXPECT_EQ(dev.rounds_since_sync, 0);
  EXPECT_EQ(dev.sync.gram, Matrix::Identity(3, 3));
}

TEST(RecordObservation, OrderDoesNotMatter) {
  Vector a(2), b(2);
  a << 0.6, 0.8;
  b << 1.0, 0.0;
  DeviceState x = DeviceState::initial(2, 1.0), y = DeviceState::initial(2, 1.0);
  record_observation(x, a, 1.0);
  record_observation(x, b, 0.0);
  record_observation(y, b, 0.0);
  record_observation(y, a, 1.0);
  EXPECT_EQ(x.local_gram, y.local_gram);
  EXPECT_EQ(x.local_reward_vec, y.local_reward_vec);
}

TEST(RecordObservation, RepeatedActionClosedForm) {
  Vector x(3);
  x << 0.5, -0.25, 0.5;
  DeviceState dev = DeviceState::initial(3, 1.0);
  const int n = 16;
  for (int i = 0; i < n; ++i) record_observation(dev, x, 1.0);
  EXPECT_TRUE(dev.local_gram.isApprox(n * x * x.transpose(), 1e-14));
  EXPECT_TRUE(dev.local_reward_vec.isApprox(n * x, 1e-14));
}

TEST(SyncTrigger, NeverFiresRightAfterSync) {
  DeviceState dev = DeviceState::initial(2, 1.0);
  EXPECT_FALSE(sync_trigger(dev, 100.0 * Vector::Ones(2), 1.0, 1.0, 1e-9));
}

TEST(SyncTrigger, NoInformationDoesNotFire) {
  DeviceState dev = DeviceState::initial(2, 1.0);
  dev.rounds_since_sync = 3;
  EXPECT_FALSE(sync_trigger(dev, Vector::Zero(2), 1.0, 1.0, 1.0));
}

TEST(SyncTrigger, HandEvaluatedLogDet) {
  // log det(diag(101, 1)) - log det(I) = log 101 ~ 4.615
  DeviceState dev = DeviceState::initial(2, 1.0);
  dev.rounds_since_sync = 1;
  Vector x(2);
  x << 10, 0;
  EXPECT_TRUE(sync_trigger(dev, x, 1.0, 1.0, 1.0));
  EXPECT_TRUE(sync_trigger(dev, x, 1.0, 1.0, 4.61));
  EXPECT_FALSE(sync_trigger(dev, x, 1.0, 1.0, 4.62));
  dev.rounds_since_sync = 2;  // threshold halves
  EXPECT_TRUE(sync_trigger(dev, x, 1.0, 1.0, 9.2));
  EXPECT_FALSE(sync_trigger(dev, x, 1.0, 1.0, 9.3));
}

TEST(SyncTrigger, GammaGapEntersEveryEigenvalue) {
  // log det((1 + g) I) = d log(1 + g)
  DeviceState dev = DeviceState::initial(3, 1.0);
  dev.rounds_since_sync = 1;
  const double g = std::exp(1.0) - 1.0;  // d log(1+g) = 3
  EXPECT_TRUE(sync_trigger(dev, Vector::Zero(3), 1.0 + g, 1.0, 2.999));
  EXPECT_FALSE(sync_trigger(dev, Vector::Zero(3), 1.0 + g, 1.0, 3.001));
}

TEST(SyncTrigger, MonotoneUnderRankOneAdditions) {
  Rng rng(9);
  int fired = 0;
  for (int rep = 0; rep < 200; ++rep) {
    DeviceState dev = DeviceState::initial(4, 0.5);
    dev.rounds_since_sync = 1 + rep % 5;
    for (int k = 0; k < rep % 7; ++k) record_observation(dev, random_vec(4, rng).normalized(), 1.0);
    const Vector x = random_vec(4, rng).normalized();
    const double D = 0.5 + (rep % 11);
    if (!sync_trigger(dev, x, 0.8, 0.5, D)) continue;
    ++fired;
    const Vector z = random_vec(4, rng);
    dev.local_gram += z * z.transpose();
    EXPECT_TRUE(sync_trigger(dev, x, 0.8, 0.5, D));
  }
  EXPECT_GT(fired, 20);
}

TEST(SyncTrigger, SingularSyncGramIsCorruptState) {
  DeviceState dev = DeviceState::initial(2, 1.0);
  dev.rounds_since_sync = 1;
  dev.sync.gram(1, 1) = 0.0;
  EXPECT_THROW(sync_trigger(dev, Vector::Unit(2, 0), 1.0, 1.0, 1.0), NumericalError);
}

TEST(SyncTrigger, RejectsBadConstants) {
  DeviceState dev = DeviceState::initial(2, 1.0);
  EXPECT_THROW(sync_trigger(dev, Vector::Unit(2, 0), 0.5, 1.0, 1.0), PreconditionError);
  EXPECT_THROW(sync_trigger(dev, Vector::Unit(2, 0), 1.0, 1.0, 0.0), PreconditionError);
}

TEST(ApplySync, ResetsLocalState) {
  Rng rng(2);
  DeviceState dev = DeviceState::initial(3, 1.0);
  for (int i = 0; i < 5; ++i) {
    record_observation(dev, random_vec(3, rng).normalized(), 1.0);
    advance_without_sync(dev);
  }
  const SyncState next{random_pd(3, rng), random_vec(3, rng)};
  apply_sync(dev, next);
  EXPECT_EQ(dev.local_gram, Matrix::Zero(3, 3));
  EXPECT_EQ(dev.local_reward_vec, Vector::Zero(3));
  EXPECT_EQ(dev.rounds_since_sync, 0);
  const auto design = effective_design(dev);
  EXPECT_EQ(design.gram, next.gram);
  EXPECT_EQ(design.reward_vec, next.reward_vec);
}

TEST(ApplySync, SecondBroadcastWins) {
  Rng rng(3);
  DeviceState a = DeviceState::initial(3, 1.0), b = DeviceState::initial(3, 1.0);
  const SyncState first{random_pd(3, rng), random_vec(3, rng)};
  const SyncState second{random_pd(3, rng), random_vec(3, rng)};
  record_observation(a, Vector::Unit(3, 1), 1.0);
  apply_sync(a, first);
  apply_sync(a, second);
  apply_sync(b, second);
  EXPECT_EQ(a.sync, b.sync);
  EXPECT_EQ(a.local_gram, b.local_gram);
  EXPECT_EQ(a.rounds_since_sync, b.rounds_since_sync);
}

}  // namespace
}  // namespace fedbandit
