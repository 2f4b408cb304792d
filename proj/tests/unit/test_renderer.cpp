#include "personerf/renderer.hpp"

#include "support/fixtures.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <random>

namespace personerf {
namespace {

TEST(IntegrateRay, ZeroDensityIsEmpty) {
  const std::vector<double> t{1, 2, 3}, dt{1, 1, 1}, sigma{0, 0, 0}, f{1, 1, 1};
  const std::vector<Vec3d> c(3, Vec3d(1, 1, 1));
  const auto r = integrate_ray<double>(t, dt, c, sigma, f);
  EXPECT_EQ(r.color, Vec3d::Zero());
  EXPECT_EQ(r.depth, 0.0);
  EXPECT_EQ(r.alpha, 0.0);
}

TEST(IntegrateRay, TwoSampleClosedForm) {
  const std::vector<double> t{1, 2}, dt{1, 1}, sigma{std::log(2.0), std::log(2.0)}, f{1, 1};
  const std::vector<Vec3d> c{Vec3d(1, 0, 0), Vec3d(0, 1, 0)};
  const auto r = integrate_ray<double>(t, dt, c, sigma, f);
  EXPECT_NEAR((r.color - Vec3d(0.5, 0.25, 0)).norm(), 0.0, 1e-12);
  EXPECT_NEAR(r.alpha, 0.75, 1e-12);
  EXPECT_NEAR(r.depth, 1.0, 1e-12);
}

TEST(IntegrateRay, SaturatedFirstSample) {
  const std::vector<double> t{0.7, 1.3, 2.0}, dt{0.6, 0.7, 0.7}, sigma{40.0, 5.0, 9.0}, f{1, 1, 1};
  const std::vector<Vec3d> c{Vec3d(0.2, 0.4, 0.9), Vec3d(1, 1, 1), Vec3d(1, 0, 0)};
  const auto r = integrate_ray<double>(t, dt, c, sigma, f);
  EXPECT_NEAR((r.color - c[0]).norm(), 0.0, 1e-6);
  EXPECT_NEAR(r.depth, 0.7, 1e-6);
  EXPECT_NEAR(r.alpha, 1.0, 1e-6);
}

struct RandomRay {
  std::vector<double> t, dt, sigma, f;
  std::vector<Vec3d> c;
};

RandomRay random_ray(std::mt19937_64& rng, int g) {
  RandomRay r;
  double pos = 0.5 + uniform01(rng);
  for (int i = 0; i < g; ++i) {
    const double step = 0.05 + 0.3 * uniform01(rng);
    r.t.push_back(pos);
    r.dt.push_back(step);
    pos += step;
    r.sigma.push_back(uniform01(rng) < 0.3 ? 0.0 : 6.0 * uniform01(rng));
    r.f.push_back(uniform01(rng));
    r.c.emplace_back(uniform01(rng), uniform01(rng), uniform01(rng));
  }
  return r;
}

TEST(IntegrateRay, WeightsAreNonNegativeAndSumToAlpha) {
  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 500; ++trial) {
    const auto ray = random_ray(rng, 16);
    const auto r = integrate_ray<double>(ray.t, ray.dt, ray.c, ray.sigma, ray.f);
    double sum = 0;
    for (double w : r.weights) {
      EXPECT_GE(w, 0.0);
      sum += w;
    }
    EXPECT_NEAR(sum, r.alpha, 1e-12);
    EXPECT_GE(r.alpha, 0.0);
    EXPECT_LE(r.alpha, 1.0);
  }
}

TEST(IntegrateRay, ForegroundAboveOneStaysInRange) {
  const std::vector<float> t{1, 2, 3}, dt{1, 1, 1}, sigma{50, 50, 50}, f{1.8f, 1.3f, 2.0f};
  const std::vector<Vec3<float>> c(3, Vec3<float>(1, 1, 1));
  const auto r = integrate_ray<float>(t, dt, c, sigma, f);
  EXPECT_GE(r.alpha, 0.0f);
  EXPECT_LE(r.alpha, 1.0f);
  for (float w : r.weights) EXPECT_GE(w, 0.0f);
  const auto g = integrate_ray_backward<float>(t, dt, c, sigma, f, Vec3<float>::Zero(), 0.0f, 1.0f);
  for (float v : g.foreground) EXPECT_EQ(v, 0.0f);
}

TEST(IntegrateRay, TrailingEmptySamplesChangeNothing) {
  std::mt19937_64 rng(2);
  auto ray = random_ray(rng, 8);
  const auto a = integrate_ray<double>(ray.t, ray.dt, ray.c, ray.sigma, ray.f);
  for (int i = 0; i < 5; ++i) {
    ray.t.push_back(ray.t.back() + 0.1);
    ray.dt.push_back(0.1);
    ray.sigma.push_back(0.0);
    ray.f.push_back(uniform01(rng));
    ray.c.emplace_back(1, 1, 1);
  }
  const auto b = integrate_ray<double>(ray.t, ray.dt, ray.c, ray.sigma, ray.f);
  EXPECT_EQ(a.color, b.color);
  EXPECT_EQ(a.depth, b.depth);
  EXPECT_EQ(a.alpha, b.alpha);
}

template <typename Scalar>
void check_integrate_gradient(double tol) {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    const auto ray = random_ray(rng, 8);
    const Vec3d gc(uniform01(rng) - 0.5, uniform01(rng) - 0.5, uniform01(rng) - 0.5);
    const double gd = uniform01(rng) - 0.5, ga = uniform01(rng) - 0.5;
    auto objective = [&](const RandomRay& r) {
      const auto o = integrate_ray<double>(r.t, r.dt, r.c, r.sigma, r.f);
      return gc.dot(o.color) + gd * o.depth + ga * o.alpha;
    };
    std::vector<Scalar> t(ray.t.begin(), ray.t.end()), dt(ray.dt.begin(), ray.dt.end()),
        sigma(ray.sigma.begin(), ray.sigma.end()), f(ray.f.begin(), ray.f.end());
    std::vector<Vec3<Scalar>> c;
    for (const auto& v : ray.c) c.push_back(v.cast<Scalar>());
    const auto g = integrate_ray_backward<Scalar>(t, dt, c, sigma, f, gc.cast<Scalar>(), Scalar(gd), Scalar(ga));
    const double h = 1e-6;
    Eigen::VectorXd an(8 * 5), fd(8 * 5);
    for (int i = 0; i < 8; ++i) {
      auto perturb = [&](auto member, int idx, int comp) {
        RandomRay p = ray, m = ray;
        if constexpr (std::is_same_v<decltype(member), int>) {
          p.c[idx][comp] += h;
          m.c[idx][comp] -= h;
        } else {
          (p.*member)[idx] += h;
          (m.*member)[idx] -= h;
        }
        return (objective(p) - objective(m)) / (2 * h);
      };
      fd[5 * i] = perturb(&RandomRay::sigma, i, 0);
      fd[5 * i + 1] = perturb(&RandomRay::f, i, 0);
      for (int d = 0; d < 3; ++d) fd[5 * i + 2 + d] = perturb(0, i, d);
      an[5 * i] = static_cast<double>(g.density[i]);
      an[5 * i + 1] = static_cast<double>(g.foreground[i]);
      for (int d = 0; d < 3; ++d) an[5 * i + 2 + d] = static_cast<double>(g.color[i][d]);
    }
    EXPECT_LE((an - fd).norm() / std::max(fd.norm(), 1e-12), tol);
  }
}

TEST(IntegrateRayGradient, MatchesFiniteDifferences64) { check_integrate_gradient<double>(1e-7); }
TEST(IntegrateRayGradient, MatchesFiniteDifferences32) { check_integrate_gradient<float>(1e-3); }

TEST(StratifiedSamples, IncreasingWithUniformLastInterval) {
  Ray ray;
  ray.t_near = 1.0;
  ray.t_far = 3.0;
  std::mt19937_64 rng(4);
  const auto s = stratified_samples(ray, 128, &rng);
  for (int i = 0; i + 1 < 128; ++i) {
    EXPECT_LT(s.t[i], s.t[i + 1]);
    EXPECT_DOUBLE_EQ(s.dt[i], s.t[i + 1] - s.t[i]);
  }
  EXPECT_DOUBLE_EQ(s.dt[127], 2.0 / 128);
  const auto centers = stratified_samples(ray, 4, nullptr);
  EXPECT_DOUBLE_EQ(centers.t[0], 1.25);
  EXPECT_DOUBLE_EQ(centers.t[3], 2.75);
}

TEST(SamplePatches, CountSizeAndContainment) {
  std::mt19937_64 rng(5);
  const PixelBox box{40, 30, 90, 100};
  const auto patches = sample_patches(rng, 128, 128, box, 6, 32, PatchKind::seen);
  ASSERT_EQ(patches.size(), 6u);
  for (const auto& p : patches) {
    EXPECT_EQ(p.size, 32);
    EXPECT_GE(p.x0, 0);
    EXPECT_GE(p.y0, 0);
    EXPECT_LE(p.x0 + 32, 128);
    EXPECT_LE(p.y0 + 32, 128);
    const double cx = p.x0 + 16, cy = p.y0 + 16;
    EXPECT_GE(cx, box.x0 - 1);
    EXPECT_LE(cx, box.x1 + 1);
    EXPECT_GE(cy, box.y0 - 1);
    EXPECT_LE(cy, box.y1 + 1);
  }
}

TEST(SamplePatches, SmallBoxNearBorderIsClamped) {
  std::mt19937_64 rng(6);
  const PixelBox box{0, 120, 3, 128};
  for (const auto& p : sample_patches(rng, 128, 128, box, 10, 32, PatchKind::seen)) {
    EXPECT_EQ(p.x0, 0);
    EXPECT_EQ(p.y0, 96);
  }
}

TEST(SamplePatches, SeededAndValidated) {
  std::mt19937_64 a(7), b(7);
  const PixelBox box{10, 10, 60, 60};
  const auto pa = sample_patches(a, 64, 64, box, 16, 8, PatchKind::unseen);
  const auto pb = sample_patches(b, 64, 64, box, 16, 8, PatchKind::unseen);
  for (std::size_t i = 0; i < pa.size(); ++i) {
    EXPECT_EQ(pa[i].x0, pb[i].x0);
    EXPECT_EQ(pa[i].y0, pb[i].y0);
  }
  EXPECT_THROW(sample_patches(a, 64, 64, PixelBox{5, 5, 5, 9}, 1, 8, PatchKind::seen), Error);
}

// A canonical sphere carved out by the motion-weight volume with a constant
// dense field, seen at the canonical pose (identity bases).
struct SphereScene {
  SkeletonRig rig = testing::chain_rig(1, 0.5);
  CanonicalNet<double> net{2, 2, 4};
  MotionWeightVolume<double> vol;
  std::vector<RigidTransform> bases;
  BasesT<double> bt;
  std::vector<double> emb{0.0, 0.0};
  Vec3d center{0.5, 0.0, 0.0};
  double radius = 0.45;

  SphereScene() {
    vol = MotionWeightVolume<double>(1, 96, Aabb{Vec3d(-0.5, -1.0, -1.0), Vec3d(1.5, 1.0, 1.0)});
    for (int iz = 0; iz < 96; ++iz)
      for (int iy = 0; iy < 96; ++iy)
        for (int ix = 0; ix < 96; ++ix) {
          const double d = (vol.node_position(ix, iy, iz) - center).norm() - radius;
          vol.logits(0, vol.node_index(ix, iy, iz)) = -200.0 * d;
          vol.logits(1, vol.node_index(ix, iy, iz)) = 0.0;
        }
    for (auto& l : net.layers) l.set_zero();
    net.density_head.set_zero();
    net.color_head.set_zero();
    net.density_head.bias[0] = 30.0;
    bases = motion_bases(rig, BodyPose::canonical(rig));
    bt = BasesT<double>(bases);
  }

  Camera camera() const {
    Camera c;
    c.width = c.height = 64;
    c.intrinsics << 150, 0, 32, 0, 150, 32, 0, 0, 1;
    c.extrinsics.translation = -center + Vec3d(0, 0, 3.0);
    return c;
  }
};

TEST(RenderPatch, ZeroDensityIsBlackAndTransparent) {
  SphereScene s;
  s.net.density_head.bias[0] = 0.0;
  const WarpField<double> warp(s.vol, s.bt);
  RenderContext<double> ctx{&s.net, &warp, s.emb, Aabb{Vec3d(-1, -1, -1), Vec3d(2, 1, 1)}, 16, 0.0};
  const auto out = render_patch<double>(ctx, PatchSpec{0, 16, 16, 32, PatchKind::seen}, s.camera());
  EXPECT_EQ(out.alpha.cwiseAbs().maxCoeff(), 0.0);
  EXPECT_EQ(out.color.cwiseAbs().maxCoeff(), 0.0);
  EXPECT_EQ(out.depth.cwiseAbs().maxCoeff(), 0.0);
}

TEST(RenderPatch, OpaqueSphereMatchesAnalyticCoverage) {
  SphereScene s;
  const WarpField<double> warp(s.vol, s.bt);
  const Aabb bounds{s.center - Vec3d::Constant(0.7), s.center + Vec3d::Constant(0.7)};
  RenderContext<double> ctx{&s.net, &warp, s.emb, bounds, 96, 0.0};
  const Camera cam = s.camera();
  const auto out = render_patch<double>(ctx, PatchSpec{0, 0, 0, 64, PatchKind::seen}, cam);
  int inter = 0, uni = 0;
  for (int y = 0; y < 64; ++y)
    for (int x = 0; x < 64; ++x) {
      // analytic ray-sphere test
      const Vec3d origin = cam.center();
      const Vec3d dir = (cam.extrinsics.rotation.transpose() * (cam.intrinsics.inverse() * Vec3d(x + 0.5, y + 0.5, 1)))
                            .normalized();
      const Vec3d oc = origin - s.center;
      const double b = oc.dot(dir), c = oc.squaredNorm() - s.radius * s.radius;
      const bool hit = b * b - c >= 0.0;
      const bool rendered = out.alpha[y * 64 + x] > 0.5;
      inter += hit && rendered;
      uni += hit || rendered;
    }
  ASSERT_GT(uni, 0);
  EXPECT_GE(static_cast<double>(inter) / uni, 0.95);
}

TEST(RenderPatch, SeededRendersAreBitIdentical) {
  SphereScene s;
  std::mt19937_64 init(9);
  s.net.init(init, 1.0);
  const WarpField<double> warp(s.vol, s.bt);
  RenderContext<double> ctx{&s.net, &warp, s.emb, Aabb{Vec3d(-1, -1, -1), Vec3d(2, 1, 1)}, 32, 0.0};
  std::mt19937_64 a(1), b(1);
  const auto ra = render_patch<double>(ctx, PatchSpec{0, 20, 20, 16, PatchKind::seen}, s.camera(), &a);
  const auto rb = render_patch<double>(ctx, PatchSpec{0, 20, 20, 16, PatchKind::seen}, s.camera(), &b);
  EXPECT_EQ(ra.color, rb.color);
  EXPECT_EQ(ra.depth, rb.depth);
  EXPECT_EQ(ra.alpha, rb.alpha);
  // premultiplied bound and depth range
  for (int p = 0; p < 256; ++p) {
    EXPECT_LE(ra.color.col(p).maxCoeff(), ra.alpha[p] + 1e-12);
    EXPECT_GE(ra.alpha[p], 0.0);
    EXPECT_LE(ra.alpha[p], 1.0);
  }
}

}  // namespace
}  // namespace personerf
