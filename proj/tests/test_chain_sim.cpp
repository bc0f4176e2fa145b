#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <set>

#include "dofield/chain_sim.hpp"

using namespace dofield;
using namespace dofield::sim;

namespace {

ChainSpec planar2() {
  ChainSpec s;
  s.k = 2;
  s.link_lengths = {1.0, 1.0};
  s.link_radii = {0.1, 0.1};
  s.joint_axes = {Vec3(0, 0, 1), Vec3(0, 0, 1)};
  s.joint_limits = {{-M_PI, M_PI}, {-M_PI, M_PI}};
  return s;
}

ChainSpec arm3() {
  ChainSpec s;
  s.k = 3;
  s.link_lengths = {0.5, 0.4, 0.3};
  s.link_radii = {0.09, 0.07, 0.055};
  s.joint_axes = {Vec3(0, 0, -1), Vec3(0, 1, 0), Vec3(0, 1, 0)};
  s.joint_limits = {{-M_PI, M_PI}, {-1.9, 1.9}, {-2.2, 2.2}};
  return s;
}

JointConfig cfg(const ChainSpec& s, std::initializer_list<double> v) {
  Eigen::VectorXd x(s.k);
  int i = 0;
  for (double d : v) x[i++] = d;
  return JointConfig(s, x);
}

// Independent oracle: the same kinematics expressed as a product of 4x4
// homogeneous transforms, written before the implementation under test.
Vec3 matrix_chain_endpoint(const ChainSpec& s, const Eigen::VectorXd& theta) {
  Mat4 m = Mat4::Identity();
  m.topRightCorner<3, 1>() = s.base_origin;
  for (int l = 0; l < s.k; ++l) {
    Mat4 rot = Mat4::Identity();
    rot.topLeftCorner<3, 3>() = rotation_about_axis(s.joint_axes[l], theta[l]);
    Mat4 trans = Mat4::Identity();
    trans(0, 3) = s.link_lengths[l];
    m = m * rot * trans;
  }
  return m.topRightCorner<3, 1>();
}

CameraModel make_camera(const Vec3& eye, const Vec3& target, double focal, int w, int h,
                        double near, double far) {
  CameraModel c;
  c.focal_px = focal;
  c.width = w;
  c.height = h;
  c.pose = look_at_pose(eye, target);
  c.near = near;
  c.far = far;
  c.validate();
  return c;
}

}  // namespace

TEST_CASE("forward kinematics identity and quarter-turn poses") {
  const ChainSpec s = planar2();
  auto caps = forward_kinematics(s, cfg(s, {0.0, 0.0}));
  REQUIRE(caps.size() == 2);
  CHECK((caps[1].b - Vec3(2, 0, 0)).norm() == doctest::Approx(0.0).epsilon(1e-15));

  caps = forward_kinematics(s, cfg(s, {0.0, M_PI / 2}));
  CHECK((caps[1].b - Vec3(1, 1, 0)).norm() < 1e-12);
}

TEST_CASE("forward kinematics matches homogeneous-transform oracle") {
  const ChainSpec s = arm3();
  Rng rng(42);
  for (int trial = 0; trial < 50; ++trial) {
    Eigen::VectorXd theta(3);
    for (int l = 0; l < 3; ++l)
      theta[l] = rng.uniform(s.joint_limits[l][0], s.joint_limits[l][1]);
    const auto caps = forward_kinematics(s, JointConfig(s, theta));
    const Vec3 oracle = matrix_chain_endpoint(s, theta);
    CHECK((caps.back().b - oracle).norm() < 1e-9);
  }
}

TEST_CASE("chain continuity is exact for random configurations") {
  const ChainSpec s = arm3();
  Rng rng(7);
  for (int trial = 0; trial < 20; ++trial) {
    Eigen::VectorXd theta(3);
    for (int l = 0; l < 3; ++l)
      theta[l] = rng.uniform(s.joint_limits[l][0], s.joint_limits[l][1]);
    const auto caps = forward_kinematics(s, JointConfig(s, theta));
    CHECK(caps[0].a == s.base_origin);
    for (std::size_t i = 1; i < caps.size(); ++i) CHECK(caps[i].a == caps[i - 1].b);
  }
}

TEST_CASE("spec and config invariants are enforced") {
  ChainSpec s = arm3();
  s.link_radii[1] = 0.0;
  CHECK_THROWS_AS(s.validate(), std::invalid_argument);
  s = arm3();
  s.joint_axes[2] = Vec3(0, 1.1, 0);
  CHECK_THROWS_AS(s.validate(), std::invalid_argument);
  s = arm3();
  s.joint_limits[0] = {1.0, -1.0};
  CHECK_THROWS_AS(s.validate(), std::invalid_argument);

  s = arm3();
  Eigen::VectorXd bad(3);
  bad << 0.0, 5.0, 0.0;  // outside limits
  CHECK_THROWS_AS(JointConfig(s, bad), std::invalid_argument);
  Eigen::VectorXd short_vec(2);
  short_vec << 0.0, 0.0;
  CHECK_THROWS_AS(JointConfig(s, short_vec), std::invalid_argument);
}

TEST_CASE("occupancy interior, exterior and near-surface points") {
  const ChainSpec s = arm3();
  const JointConfig c = cfg(s, {0.3, 0.5, -0.4});
  const auto caps = forward_kinematics(s, c);

  CHECK(occupancy(s, c, caps[0].a));  // proximal endpoint is interior
  // Far from every capsule axis.
  CHECK_FALSE(occupancy(s, c, Vec3(0, 0, 5.0)));

  // A point at signed distance about -1e-4 of capsule 1, well away from the
  // other capsules: offset from the segment midpoint along a perpendicular.
  const Capsule& cap = caps[1];
  const Vec3 axis = (cap.b - cap.a).normalized();
  Vec3 perp = axis.cross(Vec3(0, 0, 1));
  if (perp.norm() < 1e-6) perp = axis.cross(Vec3(0, 1, 0));
  perp.normalize();
  const Vec3 mid = 0.5 * (cap.a + cap.b);
  const Vec3 p = mid + (cap.radius - 1e-4) * perp;
  CHECK(capsule_sdf(cap, p) == doctest::Approx(-1e-4).epsilon(1e-6));
  CHECK(occupancy(s, c, p));
  CHECK_FALSE(occupancy(s, c, mid + (cap.radius + 1e-4) * perp));
}

TEST_CASE("occupancy is invariant under the base-rotation rigid transform") {
  const ChainSpec s = arm3();
  Rng rng(11);
  for (int trial = 0; trial < 200; ++trial) {
    const double phi = rng.uniform(-M_PI, M_PI);
    const JointConfig with_base = cfg(s, {phi, 0.7, -0.5});
    const JointConfig zero_base = cfg(s, {0.0, 0.7, -0.5});
    const Vec3 x(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1));
    // robot(phi) = R x robot(0): occupancy agrees through the inverse map.
    const Mat3 r_inv = rotation_about_axis(s.joint_axes[0], -phi);
    const double sd_a = chain_sdf(forward_kinematics(s, with_base), x);
    const double sd_b = chain_sdf(forward_kinematics(s, zero_base), r_inv * x);
    CHECK(std::abs(sd_a - sd_b) < 1e-9);
  }
}

TEST_CASE("pixel_to_ray directions") {
  CameraModel cam;
  cam.focal_px = 33.0;
  cam.width = 65;
  cam.height = 65;
  cam.near = 0.1;
  cam.far = 10.0;
  cam.validate();

  // Center pixel of an odd-sized image goes straight down the optical axis.
  Ray r = pixel_to_ray(cam, 32, 32);
  CHECK((r.dir - Vec3(0, 0, 1)).norm() < 1e-15);
  CHECK(r.t_near == cam.near);
  CHECK(r.t_far == cam.far);

  // One focal length off-center horizontally: 45 degree azimuth.
  cam.focal_px = 16.0;
  r = pixel_to_ray(cam, 32, 48);  // (48 + 0.5) - 32.5 = 16 px = one focal length
  CHECK(std::abs(r.dir.x() - r.dir.z()) < 1e-15);
  CHECK(std::abs(std::atan2(r.dir.x(), r.dir.z()) - M_PI / 4) < 1e-12);

  // Corner pixel under an arbitrary pose equals R * camera-frame direction.
  cam.pose = look_at_pose(Vec3(1.2, -0.7, 2.0), Vec3(0.1, 0.3, 0.0));
  cam.validate();
  r = pixel_to_ray(cam, 0, 0);
  const double u = (0.5 - cam.width * 0.5) / cam.focal_px;
  const double v = (0.5 - cam.height * 0.5) / cam.focal_px;
  const Vec3 expected = cam.rotation() * Vec3(u, v, 1.0).normalized();
  CHECK((r.dir - expected).norm() < 1e-12);

  CHECK_THROWS_AS(pixel_to_ray(cam, -1, 0), std::invalid_argument);
  CHECK_THROWS_AS(pixel_to_ray(cam, 0, 65), std::invalid_argument);
}

TEST_CASE("silhouette of a camera looking away is all white with warning flag") {
  const ChainSpec s = arm3();
  const JointConfig c = cfg(s, {0.0, 0.4, 0.2});
  const CameraModel cam = make_camera(Vec3(3, 0, 0.3), Vec3(6, 0, 0.3), 24, 32, 32, 0.1, 8.0);
  const SilhouetteRender out = render_silhouette(s, c, cam);
  CHECK_FALSE(out.robot_visible);
  for (auto px : out.image.pixels) CHECK(px == 1);
}

TEST_CASE("ray through the base capsule center is black") {
  const ChainSpec s = arm3();
  const JointConfig c = cfg(s, {0.0, 0.4, 0.2});
  const auto caps = forward_kinematics(s, c);
  const Vec3 center = 0.5 * (caps[0].a + caps[0].b);
  const CameraModel cam = make_camera(Vec3(2.0, 1.0, 0.8), center, 24, 33, 33, 0.1, 8.0);
  const SilhouetteRender out = render_silhouette(s, c, cam);
  CHECK(out.robot_visible);
  CHECK(out.image.at(16, 16) == 0);  // center pixel looks at `center`
}

TEST_CASE("silhouette matches brute-force ray march against occupancy") {
  const ChainSpec s = planar2();
  const JointConfig c = cfg(s, {0.35, 0.9});
  const CameraModel cam = make_camera(Vec3(1.0, -2.4, 1.1), Vec3(0.9, 0.0, 0.0), 20, 24, 24, 0.8, 4.2);
  const SilhouetteRender out = render_silhouette(s, c, cam);
  REQUIRE(out.robot_visible);

  int black = 0;
  for (int row = 0; row < cam.height; ++row) {
    for (int col = 0; col < cam.width; ++col) {
      const Ray ray = pixel_to_ray(cam, row, col);
      bool hit = false;
      for (double t = ray.t_near; t <= ray.t_far; t += 1e-4) {
        if (occupancy(s, c, ray.at(t))) {
          hit = true;
          break;
        }
      }
      CHECK(out.image.at(row, col) == (hit ? 0 : 1));
      black += hit;
    }
  }
  CHECK(black > 0);
}

TEST_CASE("base rotation equals camera rotation, pixel-identical") {
  const ChainSpec s = arm3();  // base axis -z: pose' = R_z(+phi) * pose
  const CameraModel cam = make_camera(Vec3(1.6, 0.4, 0.7), Vec3(0.2, 0, 0.1), 40, 64, 64, 0.3, 5.0);
  Rng rng(123);
  for (int trial = 0; trial < 12; ++trial) {
    const double phi = rng.uniform(-M_PI, M_PI);
    const double t1 = rng.uniform(-1.9, 1.9), t2 = rng.uniform(-2.2, 2.2);
    const Image lhs = render_silhouette(s, cfg(s, {phi, t1, t2}), cam).image;

    CameraModel rotated = cam;
    Mat4 rz = Mat4::Identity();
    rz.topLeftCorner<3, 3>() = rotation_about_axis(Vec3(0, 0, 1), phi);
    rotated.pose = rz * cam.pose;
    const Image rhs = render_silhouette(s, cfg(s, {0.0, t1, t2}), rotated).image;
    CHECK(lhs == rhs);
  }
}

TEST_CASE("surface samples lie on the union surface with area-proportional density") {
  const ChainSpec s = arm3();
  const JointConfig c = cfg(s, {0.4, 0.8, -1.1});
  const auto caps = forward_kinematics(s, c);
  const auto pts = sample_surface_points(s, c, 2000, 99);
  REQUIRE(pts.size() == 2000);
  for (const Vec3& p : pts) CHECK(std::abs(chain_sdf(caps, p)) < 1e-9);

  // Determinism: same seed identical, different seed different.
  const auto again = sample_surface_points(s, c, 2000, 99);
  CHECK(std::equal(pts.begin(), pts.end(), again.begin(),
                   [](const Vec3& a, const Vec3& b) { return a == b; }));
  const auto other = sample_surface_points(s, c, 2000, 100);
  CHECK(!std::equal(pts.begin(), pts.end(), other.begin(),
                    [](const Vec3& a, const Vec3& b) { return a == b; }));
}

TEST_CASE("cylinder-vs-cap sampling fractions match closed-form areas") {
  // Effectively a single capsule: link 2 is sunk entirely inside link 1's cap
  // sphere, so every returned point lies on link 1 and the cylinder fraction
  // has the closed-form value 2*pi*r*L / (2*pi*r*L + 4*pi*r^2).
  ChainSpec s;
  s.k = 2;
  s.link_lengths = {1.0, 0.01};
  s.link_radii = {0.1, 0.01};
  s.joint_axes = {Vec3(0, 0, 1), Vec3(0, 0, 1)};
  s.joint_limits = {{-M_PI, M_PI}, {-M_PI, M_PI}};
  const JointConfig c = cfg(s, {0.0, 0.0});
  const auto caps = forward_kinematics(s, c);

  const int n = 100000;
  const auto pts = sample_surface_points(s, c, n, 2024);
  const Vec3 axis = (caps[0].b - caps[0].a).normalized();
  const double len = s.link_lengths[0];
  int on_cyl = 0;
  for (const Vec3& p : pts) {
    CHECK(std::abs(capsule_sdf(caps[0], p)) < 1e-9);  // all on link 1
    const double axial = (p - caps[0].a).dot(axis);
    on_cyl += (axial > 0.0 && axial < len);
  }
  const double r = s.link_radii[0];
  const double frac_expected = (2 * M_PI * r * len) / (2 * M_PI * r * len + 4 * M_PI * r * r);
  const double se = std::sqrt(frac_expected * (1 - frac_expected) / n);
  CHECK(std::abs(double(on_cyl) / n - frac_expected) < 3 * se);
}

TEST_CASE("chain spec text round trip") {
  const ChainSpec s = arm3();
  const std::string text = chain_spec_to_text(s);
  const ChainSpec back = chain_spec_from_text(text);
  CHECK(back.k == s.k);
  CHECK(back.link_lengths == s.link_lengths);
  CHECK(back.link_radii == s.link_radii);
  for (int l = 0; l < s.k; ++l) {
    CHECK(back.joint_axes[l] == s.joint_axes[l]);
    CHECK(back.joint_limits[l] == s.joint_limits[l]);
  }
  CHECK(back.base_origin == s.base_origin);
  CHECK_THROWS_AS(chain_spec_from_text("bogus"), std::invalid_argument);
}

TEST_CASE("pgm round trip is byte exact") {
  const ChainSpec s = planar2();
  const CameraModel cam = make_camera(Vec3(0.8, -2.2, 0.9), Vec3(0.9, 0, 0), 18, 31, 22, 0.5, 4.0);
  const Image img = render_silhouette(s, cfg(s, {0.2, 0.7}), cam).image;
  const auto path = std::filesystem::temp_directory_path() / "dofield_test_sil.pgm";
  write_pgm(path.string(), img);
  const Image back = read_pgm(path.string());
  CHECK(back == img);
  std::filesystem::remove(path);
}
