#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "test_support.hpp"
#include "wfr/measures.hpp"

using namespace wfr;
using namespace wfr::testing;

namespace {

TEST(Presets, MassesAreExact) {
  for (DomainKind kind : {DomainKind::Interval, DomainKind::Circle}) {
    const SpatialGrid s = build_grids(kind, 50, 1).space;
    EXPECT_NEAR(make_measure(preset::Uniform{2.5}, s).total_mass(), 2.5, 1e-13);
    EXPECT_NEAR(make_measure(preset::Bump{0.1, 0.05, 0.75}, s).total_mass(), 0.75, 1e-13);
    EXPECT_NEAR(make_measure(preset::DiracCell{7, 1.5}, s).total_mass(), 1.5, 1e-13);
    EXPECT_NEAR(make_measure(preset::Random{3.0, 0.2, 42}, s).total_mass(), 3.0, 1e-12);
    const DiscreteMeasure mix =
        make_measure(preset::Mixture{{preset::Uniform{1.0}, preset::Bump{0.5, 0.1, 2.0}}}, s);
    EXPECT_NEAR(mix.total_mass(), 3.0, 1e-12);
  }
}

TEST(Presets, BumpWrapsAroundOnTheCircle) {
  const SpatialGrid s = build_grids(DomainKind::Circle, 40, 1).space;
  const Vector d = make_measure(preset::Bump{0.0, 0.05, 1.0}, s).density;
  EXPECT_NEAR(d[0], d[39], 1e-12);
}

TEST(Presets, RandomIsReproducibleAndSeedDependent) {
  const SpatialGrid s = build_grids(DomainKind::Circle, 16, 1).space;
  const Vector a = make_measure(preset::Random{1.0, 0.2, 9}, s).density;
  const Vector b = make_measure(preset::Random{1.0, 0.2, 9}, s).density;
  const Vector c = make_measure(preset::Random{1.0, 0.2, 10}, s).density;
  EXPECT_EQ(a, b);
  EXPECT_NE(a, c);
  EXPECT_GT(a.minCoeff(), 0.0);
}

TEST(Presets, RejectInvalidInput) {
  const SpatialGrid s = build_grids(DomainKind::Interval, 8, 1).space;
  EXPECT_THROW(make_measure(preset::Uniform{-1.0}, s), InvalidArgument);
  EXPECT_THROW(make_measure(preset::Bump{0.5, 0.0, 1.0}, s), InvalidArgument);
  EXPECT_THROW(make_measure(preset::DiracCell{8, 1.0}, s), InvalidArgument);
  EXPECT_THROW(make_measure(preset::Explicit{{1.0, 2.0}}, s), ShapeError);
  EXPECT_THROW(make_measure(preset::Explicit{{1, 1, 1, 1, 1, 1, 1, -1}}, s), InvalidArgument);
}

TEST(Feasibility, SphericalPairIsFeasible) {
  const Grids g = build_grids(DomainKind::Circle, 32, 8);
  const auto r = check_feasibility(constraints::spherical_hk(g), make_measure(preset::Random{1.0, 0.2, 1}, g.space),
                                   make_measure(preset::Bump{0.3, 0.1, 1.0}, g.space), 1e-10);
  EXPECT_TRUE(r.feasible);
}

TEST(Feasibility, TotalMassProfile) {
  const Grids g = build_grids(DomainKind::Interval, 32, 8);
  const ConstraintSpec spec = constraints::total_mass([](double t) { return 1.0 + t; }, g);
  const DiscreteMeasure rho0 = make_measure(preset::Uniform{1.0}, g.space);
  EXPECT_FALSE(spec.time_independent);
  EXPECT_TRUE(check_feasibility(spec, rho0, make_measure(preset::Uniform{2.0}, g.space), 1e-10).feasible);
  const auto bad = check_feasibility(spec, rho0, make_measure(preset::Uniform{3.0}, g.space), 1e-10);
  EXPECT_FALSE(bad.feasible);
  ASSERT_EQ(bad.residual_1.size(), 1);
  EXPECT_NEAR(bad.residual_1[0], 1.0, 1e-12);
  EXPECT_NEAR(bad.residual_0[0], 0.0, 1e-12);
}

TEST(Constraints, EvaluationIsLinearInTheDensityPath) {
  std::mt19937_64 rng(21);
  const Grids g = build_grids(DomainKind::Interval, 20, 6);
  for (const ConstraintSpec& spec : {constraints::moment({0.3, 0.6}, 0.0, g),
                                     constraints::barrier({0.2, 0.4, 0.5, 0.7}, g),
                                     constraints::total_mass([](double t) { return 2.0 - t; }, g)}) {
    const Field r1 = random_field(7, 20, rng), r2 = random_field(7, 20, rng);
    const double a = 0.7, b = -1.3;
    const Field lhs = constraint_moments(spec, a * r1 + b * r2, g.space);
    const Field rhs = a * constraint_moments(spec, r1, g.space) + b * constraint_moments(spec, r2, g.space);
    EXPECT_LE((lhs - rhs).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_LE((constraint_eval(spec, r1, g.space) - (constraint_moments(spec, r1, g.space) - spec.f_values))
                  .cwiseAbs()
                  .maxCoeff(),
              0.0);
  }
}

TEST(Constraints, ClosureVanishesOnSymmetricCircleDensities) {
  const Grids g = build_grids(DomainKind::Circle, 64, 2);
  const ConstraintSpec spec = constraints::closure(g);
  EXPECT_EQ(spec.d, 2);
  // Invariant under x -> x + 1/2 kills the first Fourier mode.
  Vector d(64);
  for (int j = 0; j < 64; ++j) d[j] = 1.0 + 0.5 * std::cos(4.0 * std::numbers::pi * g.space.cell_centers[j]) +
                                      0.3 * std::sin(8.0 * std::numbers::pi * g.space.cell_centers[j]);
  const Field rho = d.transpose().replicate(3, 1);
  EXPECT_LE(constraint_eval(spec, rho, g.space).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_THROW(constraints::closure(build_grids(DomainKind::Interval, 8, 2)), InvalidArgument);
}

TEST(Constraints, TimeSamplesBecomeContinuousUnderRefinement) {
  auto max_jump = [](int nt) {
    const Grids g = build_grids(DomainKind::Interval, 40, nt);
    const ConstraintSpec spec = constraints::barrier({0.2, 0.4, 0.5, 0.7}, g);
    double worst = 0.0;
    for (int k = 0; k < nt; ++k)
      worst = std::max(worst, (spec.h_values[0].row(k + 1) - spec.h_values[0].row(k)).cwiseAbs().maxCoeff());
    return worst;
  };
  const double coarse = max_jump(8), fine = max_jump(64);
  EXPECT_LT(fine, coarse);
  EXPECT_LT(fine, 0.5 * coarse);
}

TEST(Constraints, BarrierHatIsPositiveExactlyInsideTheMovingRegion) {
  const Grids g = build_grids(DomainKind::Interval, 50, 10);
  const constraints::BarrierRegion region{0.4, 0.6, 0.5, 0.7};
  const ConstraintSpec spec = constraints::barrier(region, g);
  for (int k = 0; k <= 10; ++k)
    for (int j = 0; j < 50; ++j) {
      const double t = g.time.node(k), x = g.space.cell_centers[j];
      EXPECT_EQ(spec.h_values[0](k, j) > 0.0, region.contains(t, x));
    }
  EXPECT_THROW(constraints::barrier({0.5, 0.5, 0.5, 0.7}, g), InvalidArgument);
}

TEST(Constraints, ExplicitArraysValidateShapes) {
  const Grids g = build_grids(DomainKind::Interval, 4, 3);
  EXPECT_THROW(constraints::explicit_arrays({Field::Ones(3, 4)}, Field::Zero(4, 1), g), ShapeError);
  EXPECT_THROW(constraints::explicit_arrays({Field::Ones(4, 4)}, Field::Zero(4, 2), g), ShapeError);
  const ConstraintSpec spec = constraints::explicit_arrays({Field::Ones(4, 4)}, Field::Ones(4, 1), g);
  EXPECT_TRUE(spec.time_independent);
  EXPECT_EQ(spec.d, 1);
}

}  // namespace
