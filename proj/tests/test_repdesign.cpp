#include <algorithm>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <tuple>
#include <vector>

#include <gtest/gtest.h>

#include "hetgp/csv.hpp"
#include "hetgp/repdesign.hpp"
#include "hetgp/rng.hpp"

using namespace hetgp;

namespace {

// Random raw data on a small grid so that rows repeat.
std::pair<Eigen::MatrixXd, Eigen::VectorXd> random_raw(Rng& rng, Eigen::Index N, Eigen::Index d) {
  Eigen::MatrixXd X(N, d);
  Eigen::VectorXd Y(N);
  for (Eigen::Index r = 0; r < N; ++r) {
    for (Eigen::Index k = 0; k < d; ++k) {
      X(r, k) = static_cast<double>(rng.uniform_int(0, 3)) / 3.0;
    }
    Y[r] = rng.normal();
  }
  return {X, Y};
}

using SiteTuple = std::tuple<std::vector<double>, int, double, double>;

std::vector<SiteTuple> site_tuples(const ReplicatedDesign& d) {
  std::vector<SiteTuple> out;
  for (Eigen::Index i = 0; i < d.n(); ++i) {
    std::vector<double> x(d.X0.row(i).data(), d.X0.row(i).data() + 0);
    for (Eigen::Index k = 0; k < d.dim(); ++k) {
      x.push_back(d.X0(i, k));
    }
    // Round to absorb summation-order differences.
    out.emplace_back(x, d.mult[i], std::round(d.Z0[i] * 1e10), std::round(d.S2[i] * 1e10));
  }
  std::sort(out.begin(), out.end());
  return out;
}

std::filesystem::path temp_file(const std::string& name, const std::string& body) {
  const auto p = std::filesystem::temp_directory_path() / name;
  std::ofstream(p) << body;
  return p;
}

}  // namespace

TEST(FindReps, AllDistinct) {
  Eigen::MatrixXd X(3, 1);
  X << 0.0, 0.5, 1.0;
  Eigen::VectorXd Y(3);
  Y << 1.0, -2.0, 4.0;
  const auto d = find_reps(X, Y);
  EXPECT_EQ(d.mult, Eigen::VectorXi::Ones(3));
  EXPECT_EQ(d.Z0, Y);
  EXPECT_EQ(d.S2, Eigen::VectorXd::Zero(3));
  EXPECT_EQ(d.N, 3);
}

TEST(FindReps, SmallExample) {
  Eigen::MatrixXd X(3, 1);
  X << 0.0, 0.0, 1.0;
  Eigen::VectorXd Y(3);
  Y << 1.0, 3.0, 5.0;
  const auto d = find_reps(X, Y);
  ASSERT_EQ(d.n(), 2);
  EXPECT_EQ(d.X0(0, 0), 0.0);
  EXPECT_EQ(d.X0(1, 0), 1.0);
  EXPECT_EQ(d.mult[0], 2);
  EXPECT_EQ(d.mult[1], 1);
  EXPECT_DOUBLE_EQ(d.Z0[0], 2.0);
  EXPECT_DOUBLE_EQ(d.Z0[1], 5.0);
  EXPECT_DOUBLE_EQ(d.S2[0], 1.0);
  EXPECT_DOUBLE_EQ(d.S2[1], 0.0);
}

TEST(FindReps, FirstAppearanceOrder) {
  Eigen::MatrixXd X(4, 1);
  X << 3.0, 1.0, 3.0, 2.0;
  const auto d = find_reps(X, Eigen::VectorXd::Zero(4));
  ASSERT_EQ(d.n(), 3);
  EXPECT_EQ(d.X0(0, 0), 3.0);
  EXPECT_EQ(d.X0(1, 0), 1.0);
  EXPECT_EQ(d.X0(2, 0), 2.0);
}

TEST(FindReps, ToleranceMerging) {
  Eigen::MatrixXd X(3, 1);
  X << 0.0, 1e-9, 0.5;
  const Eigen::VectorXd Y = Eigen::VectorXd::LinSpaced(3, 0.0, 1.0);
  EXPECT_EQ(find_reps(X, Y).n(), 3);
  EXPECT_EQ(find_reps(X, Y, 1e-6).n(), 2);
  EXPECT_THROW(find_reps(X, Y, -1.0), ValidationError);
}

TEST(FindReps, Invariants) {
  Rng rng(1);
  for (int rep = 0; rep < 30; ++rep) {
    const auto [X, Y] = random_raw(rng, 25, 2);
    const auto d = find_reps(X, Y);
    EXPECT_EQ(d.mult.sum(), d.N);
    EXPECT_NEAR((d.mult_d().array() * d.Z0.array()).sum(), Y.sum(), 1e-12);
    for (Eigen::Index i = 0; i < d.n(); ++i) {
      EXPECT_GE(d.S2[i], 0.0);
      if (d.mult[i] == 1) {
        EXPECT_EQ(d.S2[i], 0.0);
      }
      for (Eigen::Index j = i + 1; j < d.n(); ++j) {
        EXPECT_NE(d.X0.row(i), d.X0.row(j));
      }
    }
    EXPECT_NO_THROW(d.validate());
  }
}

TEST(FindReps, IdempotentOnUniqueData) {
  Rng rng(2);
  const auto [X, Y] = random_raw(rng, 30, 2);
  const auto d = find_reps(X, Y);
  const auto again = find_reps(d.X0, d.Z0);
  EXPECT_EQ(again.X0, d.X0);
  EXPECT_EQ(again.Z0, d.Z0);
  EXPECT_EQ(again.mult, Eigen::VectorXi::Ones(d.n()));
}

TEST(FindReps, RowPermutationOnlyReordersSites) {
  Rng rng(3);
  for (int rep = 0; rep < 10; ++rep) {
    const auto [X, Y] = random_raw(rng, 20, 2);
    std::vector<Eigen::Index> perm(20);
    std::iota(perm.begin(), perm.end(), 0);
    for (Eigen::Index i = 19; i > 0; --i) {
      std::swap(perm[static_cast<std::size_t>(i)], perm[static_cast<std::size_t>(rng.uniform_int(0, i))]);
    }
    Eigen::MatrixXd Xp(20, 2);
    Eigen::VectorXd Yp(20);
    for (Eigen::Index r = 0; r < 20; ++r) {
      Xp.row(r) = X.row(perm[static_cast<std::size_t>(r)]);
      Yp[r] = Y[perm[static_cast<std::size_t>(r)]];
    }
    EXPECT_EQ(site_tuples(find_reps(X, Y)), site_tuples(find_reps(Xp, Yp)));
  }
}

TEST(FindReps, Errors) {
  EXPECT_THROW(find_reps(Eigen::MatrixXd(0, 1), Eigen::VectorXd()), ValidationError);
  EXPECT_THROW(find_reps(Eigen::MatrixXd::Zero(2, 1), Eigen::VectorXd::Zero(3)), ValidationError);
  Eigen::MatrixXd X = Eigen::MatrixXd::Zero(2, 1);
  X(1, 0) = std::numeric_limits<double>::quiet_NaN();
  EXPECT_THROW(find_reps(X, Eigen::VectorXd::Zero(2)), ValidationError);
}

TEST(Expand, IdentityWithoutReplicates) {
  Eigen::MatrixXd X(3, 2);
  X << 0, 1, 2, 3, 4, 5;
  const Eigen::VectorXd Y = Eigen::VectorXd::LinSpaced(3, 1.0, 3.0);
  const auto [Xe, Ye] = expand(find_reps(X, Y));
  EXPECT_EQ(Xe, X);
  EXPECT_EQ(Ye, Y);
}

TEST(Expand, RepeatsSites) {
  Eigen::MatrixXd X(3, 1);
  X << 0.0, 0.0, 1.0;
  Eigen::VectorXd Y(3);
  Y << 1.0, 3.0, 5.0;
  const auto [Xe, Ye] = expand(find_reps(X, Y));
  ASSERT_EQ(Xe.rows(), 3);
  EXPECT_EQ(Xe(0, 0), 0.0);
  EXPECT_EQ(Xe(1, 0), 0.0);
  EXPECT_EQ(Xe(2, 0), 1.0);
  EXPECT_EQ(Ye[0], 2.0);
}

TEST(Expand, SyntheticReplicatesRoundTrip) {
  Rng rng(4);
  for (int rep = 0; rep < 20; ++rep) {
    const auto [X, Y] = random_raw(rng, 30, 2);
    const auto d = find_reps(X, Y);
    const auto [Xe, Ye] = expand(d);
    const auto back = find_reps(Xe, synthetic_replicates(d));
    ASSERT_EQ(back.n(), d.n());
    EXPECT_EQ(back.mult, d.mult);
    EXPECT_LT((back.Z0 - d.Z0).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_LT((back.S2 - d.S2).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(Unreplicated, KeepsEveryRow) {
  Eigen::MatrixXd X(3, 1);
  X << 0.0, 0.0, 1.0;
  const auto d = unreplicated(X, Eigen::VectorXd::Ones(3));
  EXPECT_EQ(d.n(), 3);
  EXPECT_EQ(d.N, 3);
}

TEST(Csv, ReadsHeaderAndRows) {
  const auto p = temp_file("hetgp_rd_ok.csv", "x1,x2,y\n0,1,2\n0.5, 1.5 ,-3e-1\n\n");
  const auto t = read_csv(p.string());
  EXPECT_EQ(t.header.size(), 3u);
  EXPECT_EQ(t.header[2], "y");
  ASSERT_EQ(t.data.rows(), 2);
  EXPECT_DOUBLE_EQ(t.data(1, 2), -0.3);
  const auto [X, Y] = split_xy(t);
  EXPECT_EQ(X.cols(), 2);
  EXPECT_EQ(Y.size(), 2);
}

TEST(Csv, Errors) {
  EXPECT_THROW(read_csv("/nonexistent/hetgp.csv"), IoError);
  EXPECT_THROW(read_csv(temp_file("hetgp_rd_empty.csv", "").string()), ValidationError);
  EXPECT_THROW(read_csv(temp_file("hetgp_rd_hdr.csv", "x,y\n").string()), ValidationError);
  EXPECT_THROW(read_csv(temp_file("hetgp_rd_ragged.csv", "x,y\n1,2\n3\n").string()), ValidationError);
  EXPECT_THROW(read_csv(temp_file("hetgp_rd_text.csv", "x,y\n1,abc\n").string()), ValidationError);
  EXPECT_THROW(read_csv(temp_file("hetgp_rd_trail.csv", "x,y\n1,2x\n").string()), ValidationError);
}

TEST(Csv, WriteReadRoundTripIsExact) {
  Rng rng(5);
  Eigen::MatrixXd M(4, 2);
  for (Eigen::Index i = 0; i < M.size(); ++i) {
    M.data()[i] = rng.normal() * 1e3;
  }
  const auto p = std::filesystem::temp_directory_path() / "hetgp_rd_rt.csv";
  write_csv(p.string(), {"a", "b"}, M);
  EXPECT_EQ(read_csv(p.string()).data, M);
  EXPECT_THROW(write_csv(p.string(), {"a"}, M), ValidationError);
}
