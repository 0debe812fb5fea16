#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include <gtest/gtest.h>

#include "hetgp/bench.hpp"
#include "hetgp/dense.hpp"
#include "hetgp/hom.hpp"
#include "hetgp/serialize.hpp"
#include "hetgp/sims.hpp"

using namespace hetgp;

namespace {

double rel(double a, double b) { return bench::relative_error(a, b); }

bench::SmallInstance instance(std::uint64_t seed, int t) {
  Rng rng(bench::sub_seed(seed, 1, static_cast<std::uint64_t>(t)));
  return bench::small_instance(rng, t % 2 ? KernelFamily::Matern52 : KernelFamily::SquaredExponential);
}

// Central finite-difference gradient of hom_nll over (theta, g).
Eigen::VectorXd fd_grad(const KernelSpec& k, double g, const ReplicatedDesign& d) {
  const Eigen::Index dim = k.dim();
  Eigen::VectorXd out(dim + 1);
  for (Eigen::Index j = 0; j <= dim; ++j) {
    Eigen::VectorXd tp = k.lengthscales, tm = k.lengthscales;
    double gp = g, gm = g, h;
    if (j < dim) {
      h = 1e-6 * tp[j];
      tp[j] += h;
      tm[j] -= h;
    } else {
      h = 1e-6 * g;
      gp += h;
      gm -= h;
    }
    out[j] = (hom_nll(KernelSpec(k.family, tp), gp, d) - hom_nll(KernelSpec(k.family, tm), gm, d)) /
             (2.0 * h);
  }
  return out;
}

ReplicatedDesign motorcycle() { return load_motorcycle(std::string(HETGP_DATA_DIR) + "/mcycle.csv"); }

}  // namespace

TEST(HomNll, ScalarClosedForm) {
  for (const double y : {0.3, -2.0, 5.0}) {
    for (const double g : {1e-3, 0.5, 4.0}) {
      Eigen::MatrixXd X = Eigen::MatrixXd::Zero(1, 1);
      const auto d = find_reps(X, Eigen::VectorXd::Constant(1, y));
      const double ref = 0.5 * std::log(2.0 * std::numbers::pi) + 0.5 * std::log(y * y / (1.0 + g)) +
                         0.5 * std::log(1.0 + g) + 0.5;
      EXPECT_NEAR(hom_nll(KernelSpec(KernelFamily::SquaredExponential, Eigen::VectorXd::Ones(1)), g, d), ref,
                  1e-13);
      EXPECT_NEAR(dense::dense_nll(X, Eigen::VectorXd::Constant(1, y),
                                   KernelSpec(KernelFamily::Matern52, Eigen::VectorXd::Ones(1)), g),
                  ref, 1e-13);
    }
  }
}

TEST(HomNll, MatchesDenseOracle) {
  for (int t = 0; t < 40; ++t) {
    const auto s = instance(1, t);
    for (const double g : {1e-3, 0.1, 1.0}) {
      EXPECT_LT(rel(hom_nll(s.kernel, g, s.design), dense::dense_nll(s.X, s.Y, s.kernel, g)), 1e-10);
    }
  }
}

TEST(HomNll, LargeNuggetLimitMatchesOracle) {
  for (int t = 0; t < 10; ++t) {
    const auto s = instance(2, t);
    EXPECT_LT(rel(hom_nll(s.kernel, 1e6, s.design), dense::dense_nll(s.X, s.Y, s.kernel, 1e6)), 1e-10);
  }
}

TEST(HomNll, UniqueEqualsDenseWithoutReplicates) {
  Rng rng(3);
  Eigen::MatrixXd X(6, 2);
  Eigen::VectorXd Y(6);
  for (Eigen::Index i = 0; i < 6; ++i) {
    X.row(i) << rng.uniform(), rng.uniform();
    Y[i] = rng.normal();
  }
  const KernelSpec k(KernelFamily::SquaredExponential, Eigen::VectorXd::Constant(2, 0.3));
  EXPECT_LT(rel(hom_nll(k, 0.05, find_reps(X, Y)), dense::dense_nll(X, Y, k, 0.05)), 1e-13);
}

TEST(Woodbury, QuadraticFormDeterminantAndVarianceCorrection) {
  for (int t = 0; t < 40; ++t) {
    const auto s = instance(4, t);
    const ReplicatedDesign& D = s.design;
    const Eigen::VectorXd lamN = dense::expand_lambda(s.lambda, D.mult);
    const dense::DenseTerms dt = dense::terms(s.X, s.Y, s.kernel, lamN);
    const Eigen::ArrayXd a = D.mult_d().array();
    Eigen::MatrixXd U = corr_matrix(s.kernel, D.X0);
    U.diagonal().array() += s.lambda.array() / a;
    const SpdFactor chol(U);

    const double yly = (s.Y.array().square() / lamN.array()).sum();
    const double yaly = (D.Z0.array().square() * a / s.lambda.array()).sum();
    const double quad = yly - yaly + D.Z0.dot(chol.solve(D.Z0));
    EXPECT_LT(rel(quad, dt.quad), 1e-10);

    const double logdet = chol.log_det() + ((a - 1.0) * s.lambda.array().log() + a.log()).sum();
    EXPECT_LT(rel(logdet, dt.log_det), 1e-10);

    EXPECT_LT(rel((yly - yaly) / D.N, D.replicate_ss(s.lambda) / D.N), 1e-10);
  }
}

TEST(HomNll, PermutationInvariance) {
  for (int t = 0; t < 10; ++t) {
    const auto s = instance(5, t);
    const Eigen::Index N = s.Y.size();
    std::vector<Eigen::Index> p(static_cast<std::size_t>(N));
    std::iota(p.begin(), p.end(), 0);
    std::reverse(p.begin(), p.end());
    Eigen::MatrixXd Xp(N, s.X.cols());
    Eigen::VectorXd Yp(N);
    for (Eigen::Index r = 0; r < N; ++r) {
      Xp.row(r) = s.X.row(p[static_cast<std::size_t>(r)]);
      Yp[r] = s.Y[p[static_cast<std::size_t>(r)]];
    }
    EXPECT_LT(rel(hom_nll(s.kernel, 0.2, s.design), hom_nll(s.kernel, 0.2, find_reps(Xp, Yp))), 1e-12);
  }
}

TEST(HomNllGrad, MatchesFiniteDifferences) {
  for (int t = 0; t < 20; ++t) {
    const auto s = instance(6, t);
    const double g = 0.05 + 0.1 * t;
    const Eigen::VectorXd an = hom_nll_grad(s.kernel, g, s.design);
    const Eigen::VectorXd fd = fd_grad(s.kernel, g, s.design);
    for (Eigen::Index j = 0; j < an.size(); ++j) {
      EXPECT_LT(std::abs(an[j] - fd[j]) / std::max(std::abs(fd[j]), 1e-3), 1e-5) << "t=" << t << " j=" << j;
    }
  }
}

TEST(HomNllGrad, DoubledReplicationAgreesWithDenseOracle) {
  for (int t = 0; t < 10; ++t) {
    auto s = instance(7, t);
    ReplicatedDesign D = s.design;
    D.mult *= 2;
    D.N *= 2;
    const auto [X2, unused] = expand(D);
    const Eigen::VectorXd Y2 = synthetic_replicates(D);
    const double g = 0.3;
    const Eigen::VectorXd an = hom_nll_grad(s.kernel, g, D);
    const Eigen::Index dim = s.kernel.dim();
    for (Eigen::Index j = 0; j <= dim; ++j) {
      Eigen::VectorXd tp = s.kernel.lengthscales, tm = tp;
      double gp = g, gm = g, h;
      if (j < dim) {
        h = 1e-6 * tp[j];
        tp[j] += h;
        tm[j] -= h;
      } else {
        h = 1e-6;
        gp += h;
        gm -= h;
      }
      const double fd = (dense::dense_nll(X2, Y2, KernelSpec(s.kernel.family, tp), gp) -
                         dense::dense_nll(X2, Y2, KernelSpec(s.kernel.family, tm), gm)) /
                        (2.0 * h);
      EXPECT_LT(std::abs(an[j] - fd) / std::max(std::abs(fd), 1e-3), 1e-5);
    }
  }
}

TEST(HomPredict, MatchesDenseOracle) {
  for (int t = 0; t < 30; ++t) {
    const auto s = instance(8, t);
    const double g = 0.1;
    const HomModel m = HomModel::build(s.design, s.kernel, g);
    const Predictions p = m.predict(s.Xnew);
    const Predictions q =
        dense::dense_predict(s.X, s.Y, s.kernel, Eigen::VectorXd::Constant(s.Y.size(), g), s.Xnew);
    for (Eigen::Index i = 0; i < p.size(); ++i) {
      EXPECT_LT(std::abs(p.mean[i] - q.mean[i]) / std::max(std::abs(q.mean[i]), 1e-8), 1e-10);
      EXPECT_LT(std::abs(p.sd2[i] - q.sd2[i]) / std::max(std::abs(q.sd2[i]), 1e-8), 1e-10);
    }
    EXPECT_NEAR(p.nugs[0], m.nu_hat() * g, 1e-15 * m.nu_hat());
  }
}

TEST(HomPredict, FarFromDataRevertsToPrior) {
  const auto s = instance(9, 0);
  const HomModel m = HomModel::build(s.design, s.kernel, 0.1);
  const Predictions p = m.predict(Eigen::MatrixXd::Constant(1, s.design.dim(), 1e3));
  EXPECT_NEAR(p.mean[0], 0.0, 1e-12);
  EXPECT_NEAR(p.sd2[0], m.nu_hat(), 1e-12 * m.nu_hat());
}

TEST(HomPredict, InterpolatesHeavilyReplicatedSite) {
  Eigen::MatrixXd X(1000 + 2, 1);
  Eigen::VectorXd Y(X.rows());
  Rng rng(10);
  for (Eigen::Index r = 0; r < 1000; ++r) {
    X(r, 0) = 0.5;
    Y[r] = 1.5 + 0.1 * rng.normal();
  }
  X(1000, 0) = 0.0;
  X(1001, 0) = 1.0;
  Y[1000] = 0.2;
  Y[1001] = -0.4;
  const auto d = find_reps(X, Y);
  const HomModel m = HomModel::build(d, KernelSpec(KernelFamily::SquaredExponential, Eigen::VectorXd::Constant(1, 0.1)), 1e-4);
  EXPECT_NEAR(m.predict(Eigen::MatrixXd::Constant(1, 1, 0.5)).mean[0], d.Z0[0], 1e-6);
}

TEST(HomModel, NuHatMatchesPlugInFormula) {
  const auto s = instance(11, 3);
  const double g = 0.2;
  const HomModel m = HomModel::build(s.design, s.kernel, g);
  Eigen::MatrixXd U = corr_matrix(s.kernel, s.design.X0);
  U.diagonal().array() += g / s.design.mult_d().array();
  const double ref = (s.design.replicate_ss(Eigen::VectorXd::Constant(s.design.n(), g)) +
                      s.design.Z0.dot(U.llt().solve(s.design.Z0))) / s.design.N;
  EXPECT_LT(rel(m.nu_hat(), ref), 1e-12);
}

TEST(HomFit, MotorcycleReachesInteriorOptimum) {
  const auto d = motorcycle();
  HomSettings hs;
  hs.optim.max_iter = 500;
  hs.optim.tol_f = 1e-15;
  const HomModel m = hom_fit(d, hs);
  const auto b = default_hom_bounds(d, hs.family);
  ASSERT_GT(m.kernel().lengthscales[0], b.theta_lower[0]);
  ASSERT_LT(m.kernel().lengthscales[0], b.theta_upper[0]);
  const Eigen::VectorXd grad = hom_nll_grad(m.kernel(), m.g(), d);
  EXPECT_LT(grad.lpNorm<Eigen::Infinity>(), 1e-4);
  EXPECT_NEAR(m.nll(), 621.137, 1e-2);
}

TEST(HomFit, ConstantDataPinsNuggetAtLowerBound) {
  Eigen::MatrixXd X(8, 1);
  for (Eigen::Index i = 0; i < 8; ++i) {
    X(i, 0) = i / 7.0;
  }
  const auto d = find_reps(X, Eigen::VectorXd::Constant(8, 2.0));
  const HomModel m = hom_fit(d);
  const double glo = default_hom_bounds(d, KernelFamily::SquaredExponential).g_lower;
  EXPECT_LT(m.g(), 10.0 * glo);
}

TEST(HomFit, DeterministicAndWithinBounds) {
  Rng rng(12);
  const auto raw = bench::woodbury_data(3, 30, 4);
  const auto d = find_reps(raw.X, raw.Y);
  const HomModel a = hom_fit(d);
  const HomModel b = hom_fit(d);
  EXPECT_EQ(a.kernel().lengthscales, b.kernel().lengthscales);
  EXPECT_EQ(a.g(), b.g());
  const auto bd = default_hom_bounds(d, KernelFamily::SquaredExponential);
  EXPECT_TRUE((a.kernel().lengthscales.array() >= bd.theta_lower.array() * (1 - 1e-12)).all());
  EXPECT_TRUE((a.kernel().lengthscales.array() <= bd.theta_upper.array() * (1 + 1e-12)).all());
}

TEST(HomFit, RejectsBadInput) {
  const auto s = instance(13, 0);
  HomBounds b = default_hom_bounds(s.design, KernelFamily::SquaredExponential);
  b.g_lower = 2.0;
  b.g_upper = 1.0;
  EXPECT_THROW(hom_fit(s.design, b), ValidationError);
  EXPECT_THROW(hom_nll(s.kernel, 0.0, s.design), ValidationError);
  EXPECT_THROW(HomModel::build(s.design, s.kernel, 0.1).predict(Eigen::MatrixXd::Zero(1, 5)),
               ValidationError);
}

TEST(HomSerialize, RoundTrip) {
  const auto s = instance(14, 2);
  const HomModel m = HomModel::build(s.design, s.kernel, 0.3);
  const auto j = to_json(m);
  EXPECT_EQ(j.at("version").get<int>(), kModelFormatVersion);
  const LoadedModel back = model_from_json(nlohmann::json::parse(j.dump()));
  ASSERT_TRUE(back.hom.has_value());
  const Predictions p = m.predict(s.Xnew), q = back.predict(s.Xnew);
  EXPECT_EQ(p.mean, q.mean);
  EXPECT_EQ(p.sd2, q.sd2);
  EXPECT_EQ(back.hom->nll(), m.nll());
}

TEST(HomSerialize, RejectsForeignDocuments) {
  EXPECT_THROW(model_from_json(nlohmann::json{{"format", "other"}}), ValidationError);
  EXPECT_THROW(model_from_json(nlohmann::json::object()), ValidationError);
  auto j = to_json(HomModel::build(instance(15, 0).design, instance(15, 0).kernel, 0.1));
  j["version"] = 99;
  EXPECT_THROW(model_from_json(j), ValidationError);
}
