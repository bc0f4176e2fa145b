#include "dofield/curriculum.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace dofield::data {

namespace {

namespace fs = std::filesystem;

[[noreturn]] void fail(const std::string& what) { throw std::runtime_error(what); }

std::string fmt17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string sample_name(int id) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%06d", id);
  return buf;
}

void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) fail("cannot open for writing: " + path);
  f << text;
  if (!f) fail("write failed: " + path);
}

std::string read_text_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) fail("cannot open: " + path);
  std::ostringstream os;
  os << f.rdbuf();
  return os.str();
}

}  // namespace

std::vector<std::vector<int>> build_curriculum(int k) {
  if (k < 2) throw std::invalid_argument("build_curriculum: k must be >= 2 (no non-base DOFs)");
  const int m = k - 1;  // indices 1..k-1
  std::vector<std::vector<int>> subsets;
  subsets.reserve((std::size_t(1) << m) - 1);
  for (std::uint32_t mask = 1; mask < (1u << m); ++mask) {
    std::vector<int> s;
    for (int b = 0; b < m; ++b)
      if (mask & (1u << b)) s.push_back(b + 1);
    subsets.push_back(std::move(s));
  }
  std::stable_sort(subsets.begin(), subsets.end(),
                   [](const std::vector<int>& a, const std::vector<int>& b) {
                     if (a.size() != b.size()) return a.size() < b.size();
                     return a < b;  // lexicographic within a cardinality class
                   });
  return subsets;
}

JointConfig sample_config(const std::vector<int>& subset, const ChainSpec& spec, Rng& rng) {
  Eigen::VectorXd theta = Eigen::VectorXd::Zero(spec.k);
  theta[0] = rng.uniform(spec.joint_limits[0][0], spec.joint_limits[0][1]);
  for (int l : subset) {
    if (l < 1 || l >= spec.k) fail("sample_config: subset index out of range");
    theta[l] = rng.uniform(spec.joint_limits[l][0], spec.joint_limits[l][1]);
  }
  return JointConfig(spec, std::move(theta));
}

std::pair<JointConfig, Mat4> apply_base_rotation(const ChainSpec& spec, const JointConfig& raw,
                                                 const CameraModel& camera) {
  if (raw[0] == 0.0) return {raw, camera.pose};
  const Mat4 pose =
      rotation_about_line(spec.joint_axes[0], spec.base_origin, -raw[0]) * camera.pose;
  return {raw.with_zero_base(spec), pose};
}

namespace {

std::string annotation_to_text(const SampleAnnotation& a) {
  std::ostringstream os;
  os << "dofield_anno_v1\n";
  os << "sample_id " << a.sample_id << "\n";
  os << "subset " << a.subset.size();
  for (int l : a.subset) os << " " << l;
  os << "\noriginal_base_rotation " << fmt17(a.original_base_rotation) << "\n";
  os << "config " << a.config.size();
  for (Eigen::Index i = 0; i < a.config.size(); ++i) os << " " << fmt17(a.config[i]);
  os << "\ncamera_pose";
  for (int r = 0; r < 4; ++r)
    for (int c = 0; c < 4; ++c) os << " " << fmt17(a.camera_pose(r, c));
  os << "\n";
  return os.str();
}

}  // namespace

SampleAnnotation load_annotation(const std::string& path) {
  std::istringstream is(read_text_file(path));
  std::string header;
  std::getline(is, header);
  if (header != "dofield_anno_v1") fail("bad annotation header in " + path);
  SampleAnnotation a;
  std::string key;
  while (is >> key) {
    if (key == "sample_id") {
      is >> a.sample_id;
    } else if (key == "subset") {
      std::size_t n;
      is >> n;
      a.subset.resize(n);
      for (auto& l : a.subset) is >> l;
    } else if (key == "original_base_rotation") {
      is >> a.original_base_rotation;
    } else if (key == "config") {
      Eigen::Index n;
      is >> n;
      a.config.resize(n);
      for (Eigen::Index i = 0; i < n; ++i) is >> a.config[i];
    } else if (key == "camera_pose") {
      for (int r = 0; r < 4; ++r)
        for (int c = 0; c < 4; ++c) is >> a.camera_pose(r, c);
    } else {
      fail("unknown key '" + key + "' in " + path);
    }
    if (is.fail()) fail("malformed annotation " + path);
  }
  return a;
}

DatasetManifest generate_dataset(const ChainSpec& spec, const CameraModel& camera,
                                 const CurriculumPlan& plan, std::uint64_t seed,
                                 const std::string& out_dir) {
  spec.validate();
  camera.validate();
  if (plan.subsets.empty()) fail("generate_dataset: empty curriculum plan");
  if (plan.samples_per_subset < 1 || plan.base_rotations_per_sample < 1) {
    fail("generate_dataset: plan counts must be >= 1");
  }

  std::error_code ec;
  fs::create_directories(fs::path(out_dir) / "images", ec);
  fs::create_directories(fs::path(out_dir) / "annos", ec);
  if (!fs::is_directory(out_dir)) fail("generate_dataset: cannot create " + out_dir);

  DatasetManifest manifest;
  manifest.chain_spec_path = "chain.txt";
  manifest.camera = camera;
  manifest.plan = plan;
  manifest.global_seed = seed;
  manifest.root_dir = out_dir;
  sim::save_chain_spec(out_dir + "/chain.txt", spec);

  const Rng master(seed);
  int id = 0;
  for (std::size_t si = 0; si < plan.subsets.size(); ++si) {
    for (int j = 0; j < plan.samples_per_subset; ++j) {
      // One joint configuration per (subset, j), re-rendered under several
      // freshly drawn base rotations.
      Rng cfg_rng = master.split((si << 24) ^ std::uint64_t(j));
      const JointConfig raw_no_base = sample_config(plan.subsets[si], spec, cfg_rng);
      for (int r = 0; r < plan.base_rotations_per_sample; ++r) {
        Rng rot_rng = master.split((si << 40) ^ (std::uint64_t(j) << 16) ^ std::uint64_t(r) ^
                                   0x5851f42d4c957f2dull);
        Eigen::VectorXd theta = raw_no_base.values();
        theta[0] = rot_rng.uniform(spec.joint_limits[0][0], spec.joint_limits[0][1]);
        const JointConfig raw(spec, theta);

        auto [config_zero, pose] = apply_base_rotation(spec, raw, camera);
        CameraModel rotated = camera;
        rotated.pose = pose;
        const Image image = sim::render_silhouette(spec, config_zero, rotated).image;

        SampleAnnotation anno;
        anno.sample_id = id;
        anno.subset = plan.subsets[si];
        anno.original_base_rotation = raw[0];
        anno.config = config_zero.values();
        anno.camera_pose = pose;

        SampleRecord rec;
        rec.id = id;
        rec.image_path = "images/" + sample_name(id) + ".pgm";
        rec.anno_path = "annos/" + sample_name(id) + ".txt";
        rec.subset_index = static_cast<int>(si);
        rec.seed = rot_rng.seed();
        sim::write_pgm(out_dir + "/" + rec.image_path, image);
        write_text_file(out_dir + "/" + rec.anno_path, annotation_to_text(anno));
        manifest.samples.push_back(std::move(rec));
        ++id;
      }
    }
  }

  // Serialize the manifest.
  std::ostringstream os;
  os << "dofield_dataset_v1\n";
  os << "chain_spec " << manifest.chain_spec_path << "\n";
  os << "camera_focal_px " << fmt17(camera.focal_px) << "\n";
  os << "camera_size " << camera.width << " " << camera.height << "\n";
  os << "camera_depth " << fmt17(camera.near) << " " << fmt17(camera.far) << "\n";
  os << "camera_pose";
  for (int r = 0; r < 4; ++r)
    for (int c = 0; c < 4; ++c) os << " " << fmt17(camera.pose(r, c));
  os << "\n";
  os << "samples_per_subset " << plan.samples_per_subset << "\n";
  os << "base_rotations_per_sample " << plan.base_rotations_per_sample << "\n";
  os << "global_seed " << seed << "\n";
  os << "num_subsets " << plan.subsets.size() << "\n";
  for (const auto& s : plan.subsets) {
    os << "subset " << s.size();
    for (int l : s) os << " " << l;
    os << "\n";
  }
  os << "num_samples " << manifest.samples.size() << "\n";
  for (const auto& rec : manifest.samples) {
    os << "sample " << rec.id << " " << rec.image_path << " " << rec.anno_path << " "
       << rec.subset_index << " " << rec.seed << "\n";
  }
  write_text_file(out_dir + "/manifest", os.str());
  return manifest;
}

DatasetManifest load_manifest(const std::string& dataset_dir) {
  std::istringstream is(read_text_file(dataset_dir + "/manifest"));
  std::string header;
  std::getline(is, header);
  if (header != "dofield_dataset_v1") fail("bad manifest header in " + dataset_dir);

  DatasetManifest m;
  m.root_dir = dataset_dir;
  std::string key;
  std::size_t num_subsets = 0, num_samples = 0;
  while (is >> key) {
    if (key == "chain_spec") {
      is >> m.chain_spec_path;
    } else if (key == "camera_focal_px") {
      is >> m.camera.focal_px;
    } else if (key == "camera_size") {
      is >> m.camera.width >> m.camera.height;
    } else if (key == "camera_depth") {
      is >> m.camera.near >> m.camera.far;
    } else if (key == "camera_pose") {
      for (int r = 0; r < 4; ++r)
        for (int c = 0; c < 4; ++c) is >> m.camera.pose(r, c);
    } else if (key == "samples_per_subset") {
      is >> m.plan.samples_per_subset;
    } else if (key == "base_rotations_per_sample") {
      is >> m.plan.base_rotations_per_sample;
    } else if (key == "global_seed") {
      is >> m.global_seed;
    } else if (key == "num_subsets") {
      is >> num_subsets;
    } else if (key == "subset") {
      std::size_t n;
      is >> n;
      std::vector<int> s(n);
      for (auto& l : s) is >> l;
      m.plan.subsets.push_back(std::move(s));
    } else if (key == "num_samples") {
      is >> num_samples;
    } else if (key == "sample") {
      SampleRecord rec;
      is >> rec.id >> rec.image_path >> rec.anno_path >> rec.subset_index >> rec.seed;
      m.samples.push_back(std::move(rec));
    } else {
      fail("unknown manifest key '" + key + "'");
    }
    if (is.fail()) fail("malformed manifest in " + dataset_dir);
  }
  if (m.plan.subsets.size() != num_subsets || m.samples.size() != num_samples) {
    fail("manifest count mismatch in " + dataset_dir);
  }
  const std::size_t expected = m.plan.subsets.size() * std::size_t(m.plan.samples_per_subset) *
                               std::size_t(m.plan.base_rotations_per_sample);
  if (m.samples.size() != expected) fail("manifest sample count violates plan arithmetic");
  for (const auto& rec : m.samples) {
    if (!fs::exists(m.root_dir + "/" + rec.image_path)) fail("missing " + rec.image_path);
    if (!fs::exists(m.root_dir + "/" + rec.anno_path)) fail("missing " + rec.anno_path);
  }
  return m;
}

TrainingSample load_sample(const DatasetManifest& manifest, int index) {
  TrainingSample s;
  s.image = sim::read_pgm(manifest.image_file(index));
  s.anno = load_annotation(manifest.anno_file(index));
  return s;
}

BatchIterator::BatchIterator(int num_samples, int pixels_per_image, int batch_size,
                             int rays_per_image, std::uint64_t epoch_seed)
    : num_samples_(num_samples),
      pixels_per_image_(pixels_per_image),
      batch_size_(batch_size),
      rays_per_image_(rays_per_image),
      epoch_seed_(epoch_seed) {
  if (batch_size < 1) fail("BatchIterator: batch_size must be >= 1");
  if (rays_per_image < 1 || rays_per_image > pixels_per_image) {
    fail("BatchIterator: rays_per_image must be in [1, pixels per image]");
  }
  if (num_samples < 1) fail("BatchIterator: empty dataset");
  reshuffle();
}

void BatchIterator::reshuffle() {
  ++epoch_;
  cursor_ = 0;
  order_.resize(num_samples_);
  for (int i = 0; i < num_samples_; ++i) order_[i] = i;
  rng_ = Rng(mix64(epoch_seed_ ^ mix64(std::uint64_t(epoch_))));
  rng_.shuffle(order_);
}

std::vector<BatchIterator::Item> BatchIterator::next() {
  if (cursor_ >= order_.size()) reshuffle();
  std::vector<Item> batch;
  while (cursor_ < order_.size() && static_cast<int>(batch.size()) < batch_size_) {
    Item item;
    item.sample_index = order_[cursor_++];
    item.pixel_indices = rng_.sample_without_replacement(
        static_cast<std::uint32_t>(pixels_per_image_), static_cast<std::uint32_t>(rays_per_image_));
    batch.push_back(std::move(item));
  }
  return batch;
}

}  // namespace dofield::data
