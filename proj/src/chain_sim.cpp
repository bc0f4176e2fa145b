#include "dofield/chain_sim.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace dofield::sim {

namespace {

constexpr double kUnitTol = 1e-9;

[[noreturn]] void fail(const std::string& what) { throw std::invalid_argument(what); }

std::string fmt17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

void ChainSpec::validate() const {
  if (k < 2) fail("ChainSpec: k must be >= 2 (base rotation plus at least one joint)");
  if (static_cast<int>(link_lengths.size()) != k || static_cast<int>(link_radii.size()) != k ||
      static_cast<int>(joint_axes.size()) != k || static_cast<int>(joint_limits.size()) != k) {
    fail("ChainSpec: per-link arrays must all have length k");
  }
  for (int i = 0; i < k; ++i) {
    if (!(link_lengths[i] > 0)) fail("ChainSpec: link_lengths must be > 0");
    if (!(link_radii[i] > 0)) fail("ChainSpec: link_radii must be > 0");
    if (std::abs(joint_axes[i].norm() - 1.0) > kUnitTol) fail("ChainSpec: joint_axes must be unit");
    if (!(joint_limits[i][0] < joint_limits[i][1])) fail("ChainSpec: joint limit min must be < max");
  }
}

JointConfig::JointConfig(const ChainSpec& spec, Eigen::VectorXd values) : values_(std::move(values)) {
  if (values_.size() != spec.k) fail("JointConfig: length must equal ChainSpec.k");
  for (int l = 0; l < spec.k; ++l) {
    if (values_[l] < spec.joint_limits[l][0] || values_[l] > spec.joint_limits[l][1]) {
      fail("JointConfig: theta_" + std::to_string(l) + " = " + fmt17(values_[l]) +
           " outside limits [" + fmt17(spec.joint_limits[l][0]) + ", " +
           fmt17(spec.joint_limits[l][1]) + "]");
    }
  }
}

JointConfig JointConfig::with_zero_base(const ChainSpec& spec) const {
  Eigen::VectorXd v = values_;
  v[0] = 0.0;
  return JointConfig(spec, std::move(v));
}

void CameraModel::validate() const {
  if (!(focal_px > 0)) fail("CameraModel: focal length must be > 0");
  if (width < 1 || height < 1) fail("CameraModel: image dimensions must be >= 1");
  if (!(near > 0) || !(near < far)) fail("CameraModel: need 0 < near < far");
  const Mat3 r = rotation();
  if ((r * r.transpose() - Mat3::Identity()).cwiseAbs().maxCoeff() > kUnitTol) {
    fail("CameraModel: rotation block must be orthonormal");
  }
  if (std::abs(r.determinant() - 1.0) > kUnitTol) fail("CameraModel: rotation must be proper (det +1)");
  if ((pose.row(3) - Eigen::RowVector4d(0, 0, 0, 1)).cwiseAbs().maxCoeff() != 0.0) {
    fail("CameraModel: last pose row must be [0,0,0,1]");
  }
}

std::vector<Capsule> forward_kinematics(const ChainSpec& spec, const JointConfig& config) {
  std::vector<Capsule> capsules;
  capsules.reserve(spec.k);
  Mat3 rot = Mat3::Identity();
  Vec3 p = spec.base_origin;
  for (int l = 0; l < spec.k; ++l) {
    rot = rot * rotation_about_axis(spec.joint_axes[l], config[l]);
    const Vec3 q = p + rot.col(0) * spec.link_lengths[l];  // link runs along local +x
    capsules.push_back({p, q, spec.link_radii[l]});
    p = q;
  }
  return capsules;
}

double capsule_sdf(const Capsule& c, const Vec3& p) {
  const Vec3 ab = c.b - c.a;
  const double s = std::clamp((p - c.a).dot(ab) / ab.squaredNorm(), 0.0, 1.0);
  return (p - (c.a + s * ab)).norm() - c.radius;
}

double chain_sdf(const std::vector<Capsule>& capsules, const Vec3& p) {
  double best = std::numeric_limits<double>::infinity();
  for (const Capsule& c : capsules) best = std::min(best, capsule_sdf(c, p));
  return best;
}

bool occupancy(const ChainSpec& spec, const JointConfig& config, const Vec3& point) {
  return chain_sdf(forward_kinematics(spec, config), point) <= 0.0;
}

std::optional<std::pair<double, double>> ray_capsule_interval(const Vec3& origin, const Vec3& dir,
                                                              const Capsule& c) {
  double t_min = std::numeric_limits<double>::infinity();
  double t_max = -std::numeric_limits<double>::infinity();
  auto admit = [&](double t) {
    t_min = std::min(t_min, t);
    t_max = std::max(t_max, t);
  };

  const Vec3 ab = c.b - c.a;
  const double len = ab.norm();
  const Vec3 w = ab / len;
  const Vec3 m = origin - c.a;

  // Side cylinder: components perpendicular to the axis.
  const Vec3 d_perp = dir - dir.dot(w) * w;
  const Vec3 m_perp = m - m.dot(w) * w;
  const double qa = d_perp.squaredNorm();
  const double qb = 2.0 * m_perp.dot(d_perp);
  const double qc = m_perp.squaredNorm() - c.radius * c.radius;
  if (qa > 0) {
    const double disc = qb * qb - 4.0 * qa * qc;
    if (disc >= 0) {
      const double sq = std::sqrt(disc);
      for (const double t : {(-qb - sq) / (2 * qa), (-qb + sq) / (2 * qa)}) {
        const double axial = (m + t * dir).dot(w);
        if (axial >= 0.0 && axial <= len) admit(t);
      }
    }
  }

  // Cap spheres; accept roots on the outward hemispheres.
  for (int end = 0; end < 2; ++end) {
    const Vec3& center = end == 0 ? c.a : c.b;
    const Vec3 mc = origin - center;
    const double sb = 2.0 * mc.dot(dir);
    const double sc = mc.squaredNorm() - c.radius * c.radius;
    const double disc = sb * sb - 4.0 * sc;  // dir is unit: a == 1
    if (disc < 0) continue;
    const double sq = std::sqrt(disc);
    for (const double t : {(-sb - sq) / 2.0, (-sb + sq) / 2.0}) {
      const double axial = (m + t * dir).dot(w);
      if ((end == 0 && axial <= 0.0) || (end == 1 && axial >= len)) admit(t);
    }
  }

  if (t_min > t_max) return std::nullopt;
  return std::make_pair(t_min, t_max);
}

Ray pixel_to_ray(const CameraModel& camera, int row, int col) {
  if (row < 0 || row >= camera.height || col < 0 || col >= camera.width) {
    fail("pixel_to_ray: pixel (" + std::to_string(row) + ", " + std::to_string(col) +
         ") outside image bounds");
  }
  const double u = (col + 0.5 - camera.width * 0.5) / camera.focal_px;
  const double v = (row + 0.5 - camera.height * 0.5) / camera.focal_px;
  Vec3 dir_cam(u, v, 1.0);
  dir_cam.normalize();
  Ray ray;
  ray.origin = camera.position();
  ray.dir = camera.rotation() * dir_cam;
  ray.t_near = camera.near;
  ray.t_far = camera.far;
  return ray;
}

SilhouetteRender render_silhouette(const ChainSpec& spec, const JointConfig& config,
                                   const CameraModel& camera) {
  // Fold the base DOF into the camera pose so that (theta_0, T) and
  // (0, R(axis_0, -theta_0) T) are rendered through the identical code path;
  // the equivalence is then exact by construction, not up to rounding.
  CameraModel cam = camera;
  JointConfig cfg = config;
  if (config[0] != 0.0) {
    cam.pose = rotation_about_line(spec.joint_axes[0], spec.base_origin, -config[0]) * camera.pose;
    cfg = config.with_zero_base(spec);
  }
  const std::vector<Capsule> capsules = forward_kinematics(spec, cfg);

  SilhouetteRender out;
  out.image = Image(cam.width, cam.height, 1);
  for (int row = 0; row < cam.height; ++row) {
    for (int col = 0; col < cam.width; ++col) {
      const Ray ray = pixel_to_ray(cam, row, col);
      for (const Capsule& c : capsules) {
        const auto hit = ray_capsule_interval(ray.origin, ray.dir, c);
        if (hit && std::max(hit->first, ray.t_near) <= std::min(hit->second, ray.t_far)) {
          out.image.at(row, col) = 0;
          out.robot_visible = true;
          break;
        }
      }
    }
  }
  return out;
}

std::vector<Vec3> sample_surface_points(const ChainSpec& spec, const JointConfig& config, int n,
                                        std::uint64_t seed) {
  if (n <= 0) fail("sample_surface_points: n must be > 0");
  const std::vector<Capsule> capsules = forward_kinematics(spec, config);

  // Cumulative area table: capsule area = side cylinder + full sphere of caps.
  std::vector<double> cum;
  double total = 0;
  for (const Capsule& c : capsules) {
    const double len = (c.b - c.a).norm();
    total += 2.0 * M_PI * c.radius * len + 4.0 * M_PI * c.radius * c.radius;
    cum.push_back(total);
  }

  Rng rng(seed);
  std::vector<Vec3> points;
  points.reserve(n);
  while (static_cast<int>(points.size()) < n) {
    const double pick = rng.uniform(0.0, total);
    std::size_t i = std::size_t(std::lower_bound(cum.begin(), cum.end(), pick) - cum.begin());
    if (i >= cum.size()) i = cum.size() - 1;
    const Capsule& c = capsules[i];
    const Vec3 axis = (c.b - c.a).normalized();
    const double len = (c.b - c.a).norm();
    const double area_side = 2.0 * M_PI * c.radius * len;
    const double area_caps = 4.0 * M_PI * c.radius * c.radius;

    Vec3 p;
    if (rng.uniform(0.0, area_side + area_caps) < area_side) {
      // Cylinder side: uniform in height and angle, in a frame around the axis.
      Vec3 t1 = axis.cross(std::abs(axis.x()) < 0.9 ? Vec3::UnitX() : Vec3::UnitY()).normalized();
      Vec3 t2 = axis.cross(t1);
      const double h = rng.uniform(0.0, len);
      const double phi = rng.uniform(0.0, 2.0 * M_PI);
      p = c.a + h * axis + c.radius * (std::cos(phi) * t1 + std::sin(phi) * t2);
    } else {
      // Caps: uniform on the full sphere, attached to the matching end.
      Vec3 u(rng.normal(), rng.normal(), rng.normal());
      while (u.norm() < 1e-12) u = Vec3(rng.normal(), rng.normal(), rng.normal());
      u.normalize();
      p = (u.dot(axis) >= 0.0 ? c.b : c.a) + c.radius * u;
    }

    // Keep only points on the union surface.
    bool interior = false;
    for (std::size_t j = 0; j < capsules.size(); ++j) {
      if (j != i && capsule_sdf(capsules[j], p) < -1e-12) {
        interior = true;
        break;
      }
    }
    if (!interior) points.push_back(p);
  }
  return points;
}

std::string chain_spec_to_text(const ChainSpec& spec) {
  std::ostringstream os;
  os << "chain_spec_v1\n";
  os << "k " << spec.k << "\n";
  os << "base_origin " << fmt17(spec.base_origin.x()) << " " << fmt17(spec.base_origin.y()) << " "
     << fmt17(spec.base_origin.z()) << "\n";
  os << "link_lengths";
  for (double v : spec.link_lengths) os << " " << fmt17(v);
  os << "\nlink_radii";
  for (double v : spec.link_radii) os << " " << fmt17(v);
  os << "\n";
  for (int l = 0; l < spec.k; ++l) {
    os << "joint_axis " << l << " " << fmt17(spec.joint_axes[l].x()) << " "
       << fmt17(spec.joint_axes[l].y()) << " " << fmt17(spec.joint_axes[l].z()) << "\n";
  }
  for (int l = 0; l < spec.k; ++l) {
    os << "joint_limits " << l << " " << fmt17(spec.joint_limits[l][0]) << " "
       << fmt17(spec.joint_limits[l][1]) << "\n";
  }
  return os.str();
}

ChainSpec chain_spec_from_text(const std::string& text) {
  std::istringstream is(text);
  std::string header;
  if (!std::getline(is, header) || header != "chain_spec_v1") {
    fail("chain spec: expected chain_spec_v1 header");
  }
  ChainSpec spec;
  std::string key;
  while (is >> key) {
    if (key == "k") {
      is >> spec.k;
      spec.link_lengths.resize(spec.k);
      spec.link_radii.resize(spec.k);
      spec.joint_axes.assign(spec.k, Vec3::Zero());
      spec.joint_limits.assign(spec.k, {0, 0});
    } else if (key == "base_origin") {
      is >> spec.base_origin.x() >> spec.base_origin.y() >> spec.base_origin.z();
    } else if (key == "link_lengths") {
      for (double& v : spec.link_lengths) is >> v;
    } else if (key == "link_radii") {
      for (double& v : spec.link_radii) is >> v;
    } else if (key == "joint_axis") {
      int l;
      is >> l;
      if (l < 0 || l >= spec.k) fail("chain spec: joint_axis index out of range");
      is >> spec.joint_axes[l].x() >> spec.joint_axes[l].y() >> spec.joint_axes[l].z();
    } else if (key == "joint_limits") {
      int l;
      is >> l;
      if (l < 0 || l >= spec.k) fail("chain spec: joint_limits index out of range");
      is >> spec.joint_limits[l][0] >> spec.joint_limits[l][1];
    } else {
      fail("chain spec: unknown key '" + key + "'");
    }
    if (is.fail()) fail("chain spec: malformed value after key '" + key + "'");
  }
  spec.validate();
  return spec;
}

void save_chain_spec(const std::string& path, const ChainSpec& spec) {
  std::ofstream f(path, std::ios::binary);
  if (!f) fail("save_chain_spec: cannot open " + path);
  f << chain_spec_to_text(spec);
  if (!f) fail("save_chain_spec: write failed for " + path);
}

ChainSpec load_chain_spec(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) fail("load_chain_spec: cannot open " + path);
  std::ostringstream os;
  os << f.rdbuf();
  return chain_spec_from_text(os.str());
}

void write_pgm(const std::string& path, const Image& image) {
  std::ofstream f(path, std::ios::binary);
  if (!f) fail("write_pgm: cannot open " + path);
  f << "P5\n" << image.width << " " << image.height << "\n255\n";
  std::vector<std::uint8_t> bytes(image.pixels.size());
  for (std::size_t i = 0; i < bytes.size(); ++i) bytes[i] = image.pixels[i] ? 255 : 0;
  f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!f) fail("write_pgm: write failed for " + path);
}

Image read_pgm(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) fail("read_pgm: cannot open " + path);
  std::string magic;
  int w = 0, h = 0, maxval = 0;
  f >> magic >> w >> h >> maxval;
  if (magic != "P5" || w < 1 || h < 1 || maxval != 255) fail("read_pgm: unsupported PGM " + path);
  f.get();  // single whitespace after header
  Image img(w, h, 1);
  std::vector<std::uint8_t> bytes(std::size_t(w) * h);
  f.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!f) fail("read_pgm: truncated file " + path);
  for (std::size_t i = 0; i < bytes.size(); ++i) img.pixels[i] = bytes[i] >= 128 ? 1 : 0;
  return img;
}

}  // namespace dofield::sim
