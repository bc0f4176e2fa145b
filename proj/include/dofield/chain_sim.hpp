#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "dofield/geometry.hpp"
#include "dofield/rng.hpp"

namespace dofield::sim {

// Analytic articulated arm: a serial chain of capsules. Joint l rotates the
// cumulative frame about joint_axes[l] (right-hand rule); link l then extends
// along the cumulative frame's +x axis. The joint at index 0 is the base
// rotation; presets point its axis along -z, which makes the base-rotation /
// camera-rotation equivalence come out as pose' = R_z(theta_0) * pose.
struct ChainSpec {
  int k = 0;                                        // DOF count, base included
  std::vector<double> link_lengths;                 // meters, one per link
  std::vector<double> link_radii;                   // meters, capsule radius
  std::vector<Vec3> joint_axes;                     // unit vectors, one per DOF
  std::vector<std::array<double, 2>> joint_limits;  // radians, (min, max)
  Vec3 base_origin = Vec3::Zero();

  void validate() const;  // throws std::invalid_argument on any violation
};

// A joint configuration bound to a chain; limits are enforced at construction.
class JointConfig {
 public:
  JointConfig(const ChainSpec& spec, Eigen::VectorXd values);

  const Eigen::VectorXd& values() const { return values_; }
  double operator[](int l) const { return values_[l]; }
  int size() const { return static_cast<int>(values_.size()); }

  // Same configuration with the base DOF zeroed.
  JointConfig with_zero_base(const ChainSpec& spec) const;

 private:
  Eigen::VectorXd values_;
};

struct CameraModel {
  double focal_px = 0;       // focal length in pixels; principal point = image center
  int width = 0, height = 0;
  Mat4 pose = Mat4::Identity();  // camera-to-world ^wT_c; +x right, +y down, +z forward
  double near = 0, far = 0;      // meters

  Vec3 position() const { return pose.block<3, 1>(0, 3); }
  Mat3 rotation() const { return pose.topLeftCorner<3, 3>(); }
  void validate() const;
};

struct Ray {
  Vec3 origin = Vec3::Zero();
  Vec3 dir = Vec3::UnitZ();  // unit
  double t_near = 0, t_far = 0;

  Vec3 at(double t) const { return origin + t * dir; }
};

struct Capsule {
  Vec3 a, b;       // segment endpoints, meters
  double radius;   // meters
};

// Binary silhouette image, row-major, top-left origin. 0 = robot (black),
// 1 = background (white).
struct Image {
  int width = 0, height = 0;
  std::vector<std::uint8_t> pixels;

  Image() = default;
  Image(int w, int h, std::uint8_t fill) : width(w), height(h), pixels(std::size_t(w) * h, fill) {}
  std::uint8_t& at(int row, int col) { return pixels[std::size_t(row) * width + col]; }
  std::uint8_t at(int row, int col) const { return pixels[std::size_t(row) * width + col]; }
  bool operator==(const Image&) const = default;
};

struct SilhouetteRender {
  Image image;
  bool robot_visible = false;  // false = degenerate view warning (all white)
};

// --- kinematics & geometry ---------------------------------------------

// Capsule poses for a configuration. Capsule i's proximal endpoint is exactly
// capsule i-1's distal endpoint; capsule 0 starts at base_origin.
std::vector<Capsule> forward_kinematics(const ChainSpec& spec, const JointConfig& config);

// Signed distance to one capsule (< 0 inside).
double capsule_sdf(const Capsule& c, const Vec3& p);

// min over capsules; the chain's signed distance.
double chain_sdf(const std::vector<Capsule>& capsules, const Vec3& p);

bool occupancy(const ChainSpec& spec, const JointConfig& config, const Vec3& point);

// Parametric interval over which the ray line intersects the solid capsule
// (entry <= exit), or nullopt on a miss. The capsule is convex, so the
// intersection is a single interval; entry/exit come from the side-cylinder
// quadratic and the two cap spheres.
std::optional<std::pair<double, double>> ray_capsule_interval(const Vec3& origin, const Vec3& dir,
                                                              const Capsule& c);

// Back-project a pixel center through the pinhole camera into a world ray.
// Pixel (row, col) must be within bounds; t bounds copy camera near/far.
Ray pixel_to_ray(const CameraModel& camera, int row, int col);

// Render the chain to a binary silhouette: a pixel is black iff its ray hits
// any capsule within [near, far]. The base DOF is folded into the camera pose
// internally (see apply-base-rotation in the dataset pipeline), so a base
// rotation and the equivalent camera rotation produce identical images.
SilhouetteRender render_silhouette(const ChainSpec& spec, const JointConfig& config,
                                   const CameraModel& camera);

// n points uniform over the union surface of the chain's capsules: capsules
// are picked proportional to their total surface area and points falling
// strictly inside another capsule are rejected. Deterministic per seed.
std::vector<Vec3> sample_surface_points(const ChainSpec& spec, const JointConfig& config, int n,
                                        std::uint64_t seed);

// --- serialization -------------------------------------------------------

// chain_spec_v1 key-value text format.
std::string chain_spec_to_text(const ChainSpec& spec);
ChainSpec chain_spec_from_text(const std::string& text);
void save_chain_spec(const std::string& path, const ChainSpec& spec);
ChainSpec load_chain_spec(const std::string& path);

// Binary PGM (P5, maxval 255); silhouette value 0 -> byte 0, 1 -> byte 255.
void write_pgm(const std::string& path, const Image& image);
Image read_pgm(const std::string& path);

}  // namespace dofield::sim
