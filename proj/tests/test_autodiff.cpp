#include <gtest/gtest.h>

#include <cmath>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "drac/autodiff.hpp"
#include "support/primitive_cases.hpp"

using drac::ad::Array;
using drac::ad::Matrix;
namespace ad = drac::ad;
using drac::testing::away_from_zero;
using drac::testing::primitive_cases;
using drac::testing::PrimitiveCase;
using drac::testing::uniform;
using drac::testing::weighted;

namespace {

Matrix mat(std::initializer_list<std::initializer_list<double>> rows) {
  Matrix m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows.begin()->size()));
  Eigen::Index r = 0;
  for (const auto& row : rows) {
    Eigen::Index c = 0;
    for (double v : row) m(r, c++) = v;
    ++r;
  }
  return m;
}

}  // namespace

TEST(Autodiff, ReluForward) {
  const auto y = ad::relu(Array::constant({-1.0, 0.0, 2.0}));
  EXPECT_EQ(y.to_vector(), (std::vector<double>{0.0, 0.0, 2.0}));
}

TEST(Autodiff, ConcatForward) {
  const auto y = ad::concat(Array::constant({1.0, 2.0}), Array::constant({3.0}));
  EXPECT_EQ(y.shape(), ad::Shape{3});
  EXPECT_EQ(y.to_vector(), (std::vector<double>{1.0, 2.0, 3.0}));
}

TEST(Autodiff, AffineHandMultiply) {
  const auto w = Array::constant(mat({{1, 2}, {3, 4}}));
  const auto y = ad::affine(w, Array::constant({1.0, 1.0}), Array::constant({1.0, 1.0}));
  EXPECT_EQ(y.to_vector(), (std::vector<double>{4.0, 8.0}));
}

TEST(Autodiff, SquareDerivative) {
  const auto x = Array::variable({3.0});
  const auto g = ad::gradients(ad::sum(ad::square(x)), {x});
  EXPECT_DOUBLE_EQ(g.at(x)(0, 0), 6.0);
}

TEST(Autodiff, ReluSubgradientAtZeroIsZero) {
  const auto x = Array::variable({0.0});
  const auto g = ad::gradients(ad::sum(ad::relu(x)), {x});
  EXPECT_EQ(g.at(x)(0, 0), 0.0);
}

TEST(Autodiff, ShapeErrorNamesPrimitiveAndShapes) {
  try {
    ad::add(Array::constant({1.0, 2.0}), Array::constant({1.0, 2.0, 3.0}));
    FAIL() << "expected ShapeError";
  } catch (const ad::ShapeError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("add"), std::string::npos) << msg;
    EXPECT_NE(msg.find("[2]"), std::string::npos) << msg;
    EXPECT_NE(msg.find("[3]"), std::string::npos) << msg;
  }
  EXPECT_THROW(ad::affine(Array::constant(mat({{1, 2}})), Array::constant({0.0}), Array::constant({1.0, 2.0, 3.0})),
               ad::ShapeError);
}

TEST(Autodiff, DomainErrors) {
  EXPECT_THROW(ad::log(Array::constant({1.0, -0.5})), ad::DomainError);
  EXPECT_THROW(ad::sqrt(Array::constant({-1e-3})), ad::DomainError);
  EXPECT_NO_THROW(ad::log(Array::constant({0.0})));
}

TEST(Autodiff, LogIsFlooredAtZero) {
  const auto x = Array::variable({0.0, 2.0});
  const auto y = ad::log(x);
  EXPECT_DOUBLE_EQ(y.to_vector()[0], std::log(ad::kLogFloor));
  const auto g = ad::gradients(ad::sum(y), {x});
  EXPECT_EQ(g.at(x)(0, 0), 0.0);
  EXPECT_DOUBLE_EQ(g.at(x)(0, 1), 0.5);
}

TEST(Autodiff, NonScalarTargetIsAnError) {
  const auto x = Array::variable({1.0, 2.0});
  EXPECT_THROW(ad::gradients(ad::square(x), {x}), ad::GradientError);
}

TEST(Autodiff, ParameterOutsideHistoryIsAnError) {
  const auto x = Array::variable({1.0});
  const auto unused = Array::variable({2.0});
  EXPECT_THROW(ad::gradients(ad::sum(ad::square(x)), {x, unused}), ad::GradientError);
  const auto g = ad::gradients(ad::sum(ad::square(x)), {x, unused}, ad::Unused::zero);
  EXPECT_EQ(g.at(unused)(0, 0), 0.0);
}

TEST(Autodiff, MissingGradientEntryIsAnError) {
  const auto x = Array::variable({1.0});
  const auto other = Array::variable({1.0});
  const auto g = ad::gradients(ad::sum(x), {x});
  EXPECT_THROW(g.at(other), ad::GradientError);
}

TEST(Autodiff, StopGradientKeepsValueAndBlocksGradient) {
  const auto x = Array::variable({1.5, -2.0});
  const auto plain = ad::square(x);
  const auto stopped = ad::stop_gradient(ad::square(x));
  EXPECT_EQ(plain.value(), stopped.value());
  const auto target = ad::sum(ad::add(ad::scale(x, 3.0), stopped));
  const auto g = ad::gradients(target, {x});
  EXPECT_EQ(g.at(x), Matrix::Constant(1, 2, 3.0));
}

TEST(Autodiff, NoGradGuardRecordsNothing) {
  const auto x = Array::variable({1.0});
  Array y;
  {
    ad::NoGradGuard guard;
    y = ad::square(x);
  }
  EXPECT_FALSE(y.requires_grad());
  EXPECT_TRUE(ad::square(x).requires_grad());
}

TEST(Autodiff, SharedSubexpressionAccumulates) {
  // f = x·x + x, both uses of x contribute
  const auto x = Array::variable({2.0});
  const auto g = ad::gradients(ad::sum(ad::add(ad::mul(x, x), x)), {x});
  EXPECT_DOUBLE_EQ(g.at(x)(0, 0), 5.0);
}

TEST(Autodiff, MinimumTiesRouteToFirst) {
  const auto a = Array::variable({1.0, 3.0});
  const auto b = Array::variable({1.0, 2.0});
  const auto g = ad::gradients(ad::sum(ad::minimum(a, b)), {a, b});
  EXPECT_EQ(g.at(a), mat({{1, 0}}));
  EXPECT_EQ(g.at(b), mat({{0, 1}}));
}

TEST(Autodiff, EvaluationIsBitDeterministic) {
  std::mt19937_64 gen(3);
  const Matrix w = uniform(gen, 5, 4, -1, 1);
  const Matrix x = uniform(gen, 7, 4, -1, 1);
  auto run = [&] {
    const auto h = ad::tanh(ad::affine(Array::variable(w), Array::constant(Matrix::Zero(1, 5), ad::Shape{5}),
                                       Array::constant(x)));
    return ad::mean(ad::square(h)).item();
  };
  EXPECT_EQ(run(), run());
}

TEST(Autodiff, FiniteDifferenceOfConstantIsZero) {
  const double err = ad::finite_difference_check(
      [](const std::vector<Array>&) { return Array::scalar(4.0); }, {Matrix::Constant(1, 3, 1.0)});
  EXPECT_EQ(err, 0.0);
}

TEST(Autodiff, FiniteDifferenceThroughStopGradientRegion) {
  // v[1] reaches the output only through a stop-gradient region: its analytic
  // gradient is 0 and the checker reports the full mismatch against the
  // numeric slope (relative error 1), v[0] alone would check clean.
  const auto expr = [](const std::vector<Array>& v) {
    return ad::sum(ad::add(ad::square(v[0]), ad::stop_gradient(ad::scale(v[1], 2.0))));
  };
  std::vector<Array> vars{Array::variable({0.5, -1.0}), Array::variable({3.0, 4.0})};
  const auto g = ad::gradients(expr(vars), std::span<const Array>(vars), ad::Unused::zero);
  EXPECT_EQ(g.at(vars[1]), Matrix::Zero(1, 2));
  EXPECT_NEAR(ad::finite_difference_check(expr, {mat({{0.5, -1.0}}), mat({{3.0, 4.0}})}), 1.0, 1e-6);
  EXPECT_LT(ad::finite_difference_check([&](const std::vector<Array>& v) { return expr({v[0], Array::constant({3.0, 4.0})}); },
                                        std::vector<Array>{Array::constant({0.5, -1.0})}),
            1e-6);
}

TEST(Autodiff, FiniteDifferenceMeanSquareAffine) {
  std::mt19937_64 gen(11);
  const double err = ad::finite_difference_check(
      [](const std::vector<Array>& v) { return ad::mean(ad::square(ad::affine(v[0], v[1], v[2]))); },
      std::vector<Array>{Array::constant(uniform(gen, 3, 4, -0.5, 0.5)),
                         Array::constant(uniform(gen, 1, 3, -0.5, 0.5), ad::Shape{3}),
                         Array::constant(uniform(gen, 2, 4, -1, 1))});
  EXPECT_LT(err, 1e-4);
}

TEST(Autodiff, FiniteDifferenceTanhComposition) {
  std::mt19937_64 gen(5);
  const double err = ad::finite_difference_check(
      [](const std::vector<Array>& v) { return ad::sum(ad::tanh(ad::mul(ad::tanh(v[0]), v[1]))); },
      {uniform(gen, 2, 3, -1, 1), uniform(gen, 2, 3, -1, 1)});
  EXPECT_LT(err, 1e-4);
}

// ---------------------------------------------------------------------------
// Property: every primitive agrees with central differences on 100 random
// smooth instances.

class PrimitiveGradient : public ::testing::TestWithParam<PrimitiveCase> {};

TEST_P(PrimitiveGradient, MatchesFiniteDifferences) {
  const auto& pc = GetParam();
  std::mt19937_64 gen(std::hash<std::string>{}(pc.name));
  double worst = 0.0;
  for (int instance = 0; instance < 100; ++instance) {
    const double err = ad::finite_difference_check(pc.expression, pc.bindings(gen), 1e-5);
    worst = std::max(worst, err);
    ASSERT_LT(err, 1e-4) << pc.name << " instance " << instance;
  }
  RecordProperty("worst_relative_error", std::to_string(worst));
}


INSTANTIATE_TEST_SUITE_P(AllPrimitives, PrimitiveGradient, ::testing::ValuesIn(primitive_cases()),
                         [](const ::testing::TestParamInfo<PrimitiveCase>& info) { return info.param.name; });
