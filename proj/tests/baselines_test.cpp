#include <gtest/gtest.h>

#include <Eigen/Dense>
#include <random>

#include "geofuse/baselines.hpp"
#include "geofuse/rng.hpp"

using namespace geofuse;

namespace {

std::vector<Eigen::VectorXd> random_vectors(int count, int dim, std::uint64_t seed) {
  std::mt19937_64 gen(seed);
  std::vector<Eigen::VectorXd> out;
  for (int i = 0; i < count; ++i) {
    Eigen::VectorXd v(dim);
    for (int k = 0; k < dim; ++k) v[k] = normal_unit(gen);
    out.push_back(v);
  }
  return out;
}

double reconstruction_error(const std::vector<Eigen::VectorXd>& data, const Eigen::VectorXd& mean,
                            const Eigen::MatrixXd& projection) {
  double err = 0.0;
  for (const auto& v : data) {
    const Eigen::VectorXd centered = v - mean;
    err += (centered - projection.transpose() * (projection * centered)).squaredNorm();
  }
  return err;
}

}  // namespace

TEST(Concatenate, InOrder) {
  Eigen::VectorXd a(2), b(1);
  a << 1, 2;
  b << 3;
  Eigen::VectorXd joined = concatenate({a, b});
  ASSERT_EQ(joined.size(), 3);
  EXPECT_EQ(joined[0], 1);
  EXPECT_EQ(joined[1], 2);
  EXPECT_EQ(joined[2], 3);
  EXPECT_EQ(concatenate({a}), a);
  EXPECT_EQ(concatenate({Eigen::VectorXd::Zero(153), Eigen::VectorXd::Zero(352)}).size(), 505);
}

TEST(PcaFit, AxisAlignedDataRecoversAxisWithPositiveSign) {
  std::vector<Eigen::VectorXd> data;
  for (double x : {-2.0, -1.0, 0.5, 1.5, 3.0}) {
    Eigen::VectorXd v(2);
    v << x, 0.0;
    data.push_back(v);
  }
  const PcaModel model = pca_fit(data, 1);
  EXPECT_NEAR(model.projection(0, 0), 1.0, 1e-12);
  EXPECT_NEAR(model.projection(0, 1), 0.0, 1e-12);
}

TEST(PcaFit, FullDimensionProjectionIsIsometryOnCenteredData) {
  const auto data = random_vectors(40, 6, 3);
  const PcaModel model = pca_fit(data, 6);
  for (std::size_t i = 0; i < data.size(); i += 5) {
    for (std::size_t j = i + 1; j < data.size(); j += 3) {
      const double before = (data[i] - data[j]).norm();
      const double after = (pca_project(model, data[i]) - pca_project(model, data[j])).norm();
      EXPECT_NEAR(before, after, 1e-9);
    }
  }
}

TEST(PcaFit, NeverWorseThanRandomProjections) {
  const auto data = random_vectors(60, 8, 7);
  const int k = 3;
  const PcaModel model = pca_fit(data, k);
  const double pca_err = reconstruction_error(data, model.mean, model.projection);

  std::mt19937_64 gen(8);
  for (int trial = 0; trial < 20; ++trial) {
    Eigen::MatrixXd m(8, 8);
    for (int r = 0; r < 8; ++r)
      for (int c = 0; c < 8; ++c) m(r, c) = normal_unit(gen);
    const Eigen::MatrixXd q = Eigen::HouseholderQR<Eigen::MatrixXd>(m).householderQ();
    const Eigen::MatrixXd random_projection = q.leftCols(k).transpose();
    EXPECT_LE(pca_err, reconstruction_error(data, model.mean, random_projection) + 1e-9);
  }
}

TEST(PcaFit, DeterministicAndValidated) {
  const auto data = random_vectors(30, 5, 11);
  EXPECT_EQ(save_pca(pca_fit(data, 4)), save_pca(pca_fit(data, 4)));
  EXPECT_THROW(pca_fit(data, 6), ConfigError);
  EXPECT_THROW(pca_fit(data, 0), ConfigError);
  EXPECT_THROW(pca_fit({data[0], data[1]}, 4), DataError);  // too few vectors

  // Rank-deficient data: vectors confined to a 2D subspace of R^5.
  std::vector<Eigen::VectorXd> flat;
  std::mt19937_64 gen(12);
  for (int i = 0; i < 20; ++i) {
    Eigen::VectorXd v = Eigen::VectorXd::Zero(5);
    v[0] = normal_unit(gen);
    v[1] = normal_unit(gen);
    flat.push_back(v);
  }
  EXPECT_NO_THROW(pca_fit(flat, 2));
  EXPECT_THROW(pca_fit(flat, 3), DataError);
}

TEST(PcaProject, MeanMapsToZeroAndAxesToUnitCoordinates) {
  const auto data = random_vectors(50, 4, 13);
  const PcaModel model = pca_fit(data, 4);
  EXPECT_TRUE(pca_project(model, model.mean).isZero(1e-12));

  const Eigen::VectorXd axis0 = model.projection.row(0).transpose();
  const Eigen::VectorXd projected = pca_project(model, model.mean + axis0);
  EXPECT_NEAR(projected[0], 1.0, 1e-12);
  for (int c = 1; c < 4; ++c) EXPECT_NEAR(projected[c], 0.0, 1e-12);

  EXPECT_THROW(pca_project(model, Eigen::VectorXd::Zero(3)), ShapeError);
}

TEST(MinPoolDistance, PicksTheSmallestNormalizedDistance) {
  // Unit-norm pairs engineered to sit at distances 0.4 and 0.7; scaling one
  // side must not matter.
  const double c1 = 1.0 - 0.16 / 2.0, c2 = 1.0 - 0.49 / 2.0;
  Eigen::VectorXd a1(2), b1(2), a2(2), b2(2);
  a1 << 1, 0;
  b1 << c1, std::sqrt(1 - c1 * c1);
  a2 << 0, 1;
  b2 << std::sqrt(1 - c2 * c2), c2;
  b1 *= 3.0;  // normalization invariance
  const double d = min_pool_distance({a1, a2}, {b1, b2});
  EXPECT_NEAR(d, 0.4, 1e-12);
  EXPECT_LE(d, 0.7 + 1e-12);

  EXPECT_DOUBLE_EQ(min_pool_distance({a1, a2}, {a1, a2}), 0.0);
  EXPECT_NEAR(min_pool_distance({a1}, {b1}), 0.4, 1e-12);
}

TEST(MinPoolDistance, ZeroNormDescriptorsExcluded) {
  Eigen::VectorXd zero = Eigen::VectorXd::Zero(2);
  Eigen::VectorXd a(2), b(2);
  a << 1, 0;
  b << 0, 1;
  EXPECT_NEAR(min_pool_distance({zero, a}, {zero, b}), std::sqrt(2.0), 1e-12);
  EXPECT_THROW(min_pool_distance({zero}, {zero}), DataError);
  EXPECT_THROW(min_pool_distance({a, b}, {a}), ShapeError);
}

TEST(PcaSerialization, RoundTripAndErrors) {
  const auto data = random_vectors(25, 6, 17);
  const PcaModel model = pca_fit(data, 3);
  const auto bytes = save_pca(model);
  const PcaModel loaded = load_pca(bytes);
  EXPECT_EQ(save_pca(loaded), bytes);

  auto bad = bytes;
  bad[1] = 'X';
  EXPECT_THROW(load_pca(bad), DataError);
  auto truncated = bytes;
  truncated.resize(truncated.size() - 9);
  EXPECT_THROW(load_pca(truncated), DataError);
}
