#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <random>

#include "symplane/mhd_io.hpp"
#include "symplane/volume.hpp"

using namespace symplane;
namespace fs = std::filesystem;

namespace {

Volume random_volume(std::mt19937& rng, Dims3 d) {
  std::uniform_real_distribution<float> u(-1000.f, 2000.f);
  std::vector<float> data(static_cast<std::size_t>(d[0]) * d[1] * d[2]);
  for (auto& v : data) v = u(rng);
  return Volume(d, Vec3(0.7, 1.3, 2.1), Vec3(-5.5, 3.25, 10.0), std::move(data));
}

fs::path temp_dir(const std::string& name) {
  fs::path p = fs::temp_directory_path() / ("symplane_test_volume_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

}  // namespace

TEST(Volume, Validation) {
  EXPECT_THROW(Volume({2, 2, 2}, Vec3::Ones(), Vec3::Zero(), std::vector<float>(7)), ValidationError);
  EXPECT_THROW(Volume({0, 2, 2}, Vec3::Ones(), Vec3::Zero(), {}), ValidationError);
  EXPECT_THROW(Volume({1, 1, 1}, Vec3(1, 0, 1), Vec3::Zero(), std::vector<float>(1)), ValidationError);
}

TEST(Volume, WorldIndexRoundTrip) {
  Volume v = Volume::filled({4, 5, 6}, Vec3(0.5, 2, 3), Vec3(1, -2, 7), 0.f);
  Vec3 w = v.world_of(3, 1, 4);
  EXPECT_DOUBLE_EQ(w[0], 2.5);
  EXPECT_DOUBLE_EQ(w[1], 0.0);
  EXPECT_DOUBLE_EQ(w[2], 19.0);
  Vec3 ci = v.continuous_index(w);
  EXPECT_NEAR(ci[0], 3, 1e-12);
  EXPECT_NEAR(ci[1], 1, 1e-12);
  EXPECT_NEAR(ci[2], 4, 1e-12);
}

TEST(Volume, TrilinearExactAtVoxelCenters) {
  std::mt19937 rng(1);
  Volume v = random_volume(rng, {5, 4, 3});
  for (int k = 0; k < 3; ++k)
    for (int j = 0; j < 4; ++j)
      for (int i = 0; i < 5; ++i) {
        auto s = sample_trilinear(v, v.world_of(i, j, k));
        ASSERT_TRUE(s.has_value());
        EXPECT_EQ(*s, v.at(i, j, k));
      }
}

TEST(Volume, TrilinearMidpoint) {
  Volume v = Volume::filled({2, 2, 2}, Vec3::Ones(), Vec3::Zero(), 0.f);
  for (int k = 0; k < 2; ++k)
    for (int j = 0; j < 2; ++j) v.mutable_data()[v.index(1, j, k)] = 100.f;
  auto s = sample_trilinear(v, Vec3(0.5, 0.3, 0.9));
  ASSERT_TRUE(s);
  EXPECT_NEAR(*s, 50.0, 1e-12);
}

TEST(Volume, TrilinearOutOfBounds) {
  Volume v = Volume::filled({3, 3, 3}, Vec3::Ones(), Vec3::Zero(), 1.f);
  EXPECT_FALSE(sample_trilinear(v, Vec3(3, 1, 1)));
  EXPECT_FALSE(sample_trilinear(v, Vec3(-1, 1, 1)));
  EXPECT_TRUE(sample_trilinear(v, Vec3(2, 2, 2)));
}

TEST(Volume, TrilinearContinuity) {
  std::mt19937 rng(2);
  Volume v = random_volume(rng, {6, 6, 6});
  double maxdiff = 3000.0;
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const double eps = 1e-6;
  auto [lo, hi] = v.bounds();
  for (int t = 0; t < 1000; ++t) {
    Vec3 p;
    for (int a = 0; a < 3; ++a) p[a] = lo[a] + (hi[a] - lo[a] - 2 * eps) * u(rng);
    Vec3 q = p + Vec3::Constant(eps);
    auto a = sample_trilinear(v, p), b = sample_trilinear(v, q);
    ASSERT_TRUE(a && b);
    // slope bound: max difference per spacing, summed over axes
    double bound = maxdiff * eps * (1 / 0.7 + 1 / 1.3 + 1 / 2.1);
    EXPECT_LE(std::abs(*a - *b), bound + 1e-9);
  }
}

TEST(Volume, GradientOfConstantIsZero) {
  Volume v = Volume::filled({4, 4, 4}, Vec3::Ones(), Vec3::Zero(), 7.f);
  Volume g = gradient_magnitude(v);
  for (float x : g.data()) EXPECT_EQ(x, 0.f);
}

TEST(Volume, GradientOfRamp) {
  Volume v = Volume::filled({8, 5, 5}, Vec3(0.5, 1, 1), Vec3(-2, 0, 0), 0.f);
  for (int k = 0; k < 5; ++k)
    for (int j = 0; j < 5; ++j)
      for (int i = 0; i < 8; ++i) v.mutable_data()[v.index(i, j, k)] = static_cast<float>(v.world_of(i, j, k)[0]);
  Volume g = gradient_magnitude(v);
  for (int k = 1; k < 4; ++k)
    for (int j = 1; j < 4; ++j)
      for (int i = 1; i < 7; ++i) EXPECT_NEAR(g.at(i, j, k), 1.0, 1e-6);
}

TEST(Volume, GradientSupportOfSpike) {
  Volume v = Volume::filled({7, 7, 7}, Vec3::Ones(), Vec3::Zero(), 0.f);
  v.mutable_data()[v.index(3, 3, 3)] = 1.f;
  Volume g = gradient_magnitude(v);
  for (int k = 0; k < 7; ++k)
    for (int j = 0; j < 7; ++j)
      for (int i = 0; i < 7; ++i) {
        int d = std::max({std::abs(i - 3), std::abs(j - 3), std::abs(k - 3)});
        if (d > 1) {
          EXPECT_EQ(g.at(i, j, k), 0.f);
        }
      }
  EXPECT_GT(g.at(2, 3, 3), 0.f);
}

TEST(Volume, GradientRejectsDegenerateDims) {
  Volume v = Volume::filled({1, 4, 4}, Vec3::Ones(), Vec3::Zero(), 0.f);
  EXPECT_THROW(gradient_magnitude(v), ValidationError);
}

TEST(Volume, DownsampleKeepsWorldFrame) {
  Volume v = Volume::filled({4, 4, 4}, Vec3::Ones(), Vec3::Zero(), 0.f);
  for (std::size_t i = 0; i < v.voxel_count(); ++i) v.mutable_data()[i] = static_cast<float>(i % 4);
  Volume d = downsample2(v);
  EXPECT_EQ(d.dims(), (Dims3{2, 2, 2}));
  EXPECT_DOUBLE_EQ(d.spacing()[0], 2.0);
  EXPECT_DOUBLE_EQ(d.origin()[0], 0.5);
  EXPECT_FLOAT_EQ(d.at(0, 0, 0), 0.5f);
  EXPECT_FLOAT_EQ(d.at(1, 0, 0), 2.5f);
}

TEST(VoxelDomain, CountsEachVoxelOnce) {
  Volume v = Volume::filled({4, 3, 2}, Vec3::Ones(), Vec3::Zero(), 0.f);
  for (std::size_t i = 0; i < v.voxel_count(); ++i) v.mutable_data()[i] = static_cast<float>(i);
  VoxelDomain all(v);
  EXPECT_EQ(all.count(), 24u);
  std::vector<int> seen(24, 0);
  all.for_each([&](int i, int j, int k) { ++seen[v.index(i, j, k)]; });
  for (int s : seen) EXPECT_EQ(s, 1);
  VoxelDomain thr(v, 10.f, std::nullopt);
  EXPECT_EQ(thr.count(), 13u);
  VoxelDomain box(v, std::nullopt, IndexBox{{1, 0, 0}, {2, 2, 0}});
  EXPECT_EQ(box.count(), 6u);
  EXPECT_LE(box.count(), v.voxel_count());
}

TEST(MhdIo, RoundTripRandomVolumes) {
  fs::path dir = temp_dir("roundtrip");
  std::mt19937 rng(3);
  for (int t = 0; t < 5; ++t) {
    Volume v = random_volume(rng, {3 + t, 2 + t, 4});
    save_mhd(v, dir / "v.mhd");
    Volume w = load_mhd(dir / "v.mhd");
    EXPECT_EQ(w.dims(), v.dims());
    EXPECT_EQ(w.spacing(), v.spacing());
    EXPECT_EQ(w.origin(), v.origin());
    EXPECT_EQ(w.data(), v.data());
  }
}

TEST(MhdIo, RawSizeIsFourBytesPerVoxel) {
  fs::path dir = temp_dir("size");
  Volume v = Volume::filled({100, 100, 100}, Vec3::Ones(), Vec3::Zero(), 1.f);
  save_mhd(v, dir / "p.mhd");
  EXPECT_EQ(fs::file_size(dir / "p.raw"), 4000000u);
  Volume w = load_mhd(dir / "p.mhd");
  EXPECT_EQ(w.voxel_count(), 1000000u);
}

TEST(MhdIo, ReadsIntegerTypes) {
  fs::path dir = temp_dir("types");
  {
    std::ofstream h(dir / "s.mhd");
    h << "ObjectType = Image\nNDims = 3\nDimSize = 2 1 1\nElementSpacing = 1 1 1\nOffset = 0 0 0\n"
         "ElementType = MET_SHORT\nElementDataFile = s.raw\n";
    std::ofstream r(dir / "s.raw", std::ios::binary);
    std::int16_t vals[2] = {-1000, 1500};
    r.write(reinterpret_cast<const char*>(vals), sizeof vals);
  }
  Volume v = load_mhd(dir / "s.mhd");
  EXPECT_EQ(v.at(0, 0, 0), -1000.f);
  EXPECT_EQ(v.at(1, 0, 0), 1500.f);
}

TEST(MhdIo, Errors) {
  fs::path dir = temp_dir("errors");
  EXPECT_THROW(load_mhd(dir / "missing.mhd"), Error);
  {
    std::ofstream h(dir / "two.mhd");
    h << "NDims = 2\nDimSize = 2 2\nElementType = MET_FLOAT\nElementDataFile = two.raw\n";
  }
  try {
    load_mhd(dir / "two.mhd");
    FAIL();
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("unsupported dimensionality"), std::string::npos);
  }
  {
    std::ofstream h(dir / "dbl.mhd");
    h << "NDims = 3\nDimSize = 1 1 1\nElementType = MET_DOUBLE\nElementDataFile = dbl.raw\n";
  }
  EXPECT_THROW(load_mhd(dir / "dbl.mhd"), Error);
  {
    std::ofstream h(dir / "short.mhd");
    h << "NDims = 3\nDimSize = 4 1 1\nElementType = MET_FLOAT\nElementDataFile = short.raw\n";
    std::ofstream r(dir / "short.raw", std::ios::binary);
    float x = 1.f;
    r.write(reinterpret_cast<const char*>(&x), sizeof x);
  }
  EXPECT_THROW(load_mhd(dir / "short.mhd"), Error);
  Volume v = Volume::filled({1, 1, 1}, Vec3::Ones(), Vec3::Zero(), 0.f);
  EXPECT_THROW(save_mhd(v, "/proc/symplane_no_such_dir/x.mhd"), Error);
}
