#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "dofield/chain_sim.hpp"

namespace dofield::data {

using sim::CameraModel;
using sim::ChainSpec;
using sim::Image;
using sim::JointConfig;

// Ordered training curriculum over the non-base DOF indices {1,...,k-1}:
// every non-empty subset, ascending by cardinality, lexicographic within a
// cardinality class. |subsets| = 2^(k-1) - 1.
struct CurriculumPlan {
  std::vector<std::vector<int>> subsets;
  int samples_per_subset = 1;        // joint configurations drawn per subset
  int base_rotations_per_sample = 1; // base rotations drawn per configuration
};

std::vector<std::vector<int>> build_curriculum(int k);

// Draw a configuration for one curriculum subset: active DOFs uniform within
// their limits, the base DOF uniform within its limits, everything else zero.
JointConfig sample_config(const std::vector<int>& subset, const ChainSpec& spec, Rng& rng);

// Fold the base rotation into the camera (the one-camera trick): returns the
// configuration with the base zeroed and the pose rotated about the base axis
// so the rendered view is unchanged. For a -z base axis this is exactly
// pose' = R_z(theta_0) * pose.
std::pair<JointConfig, Mat4> apply_base_rotation(const ChainSpec& spec, const JointConfig& raw,
                                                 const CameraModel& camera);

struct SampleRecord {
  int id = 0;
  std::string image_path;  // relative to the dataset root
  std::string anno_path;
  int subset_index = 0;    // into CurriculumPlan.subsets
  std::uint64_t seed = 0;
};

struct DatasetManifest {
  std::string chain_spec_path;  // relative to the dataset root
  CameraModel camera;           // the physical (pre-rotation) camera
  CurriculumPlan plan;
  std::uint64_t global_seed = 0;
  std::vector<SampleRecord> samples;
  std::string root_dir;         // where the dataset lives; not serialized

  std::string image_file(int index) const { return root_dir + "/" + samples[index].image_path; }
  std::string anno_file(int index) const { return root_dir + "/" + samples[index].anno_path; }
};

// Per-sample annotation stored next to each image.
struct SampleAnnotation {
  int sample_id = 0;
  std::vector<int> subset;
  double original_base_rotation = 0;  // provenance only
  Eigen::VectorXd config;             // theta' with theta_0 == 0
  Mat4 camera_pose = Mat4::Identity();// already-rotated pose'
};

// In-memory training sample.
struct TrainingSample {
  Image image;
  SampleAnnotation anno;
};

// Generates images/NNNNNN.pgm + annos/NNNNNN.txt + manifest under out_dir.
// Byte-reproducible from (spec, camera, plan, seed).
DatasetManifest generate_dataset(const ChainSpec& spec, const CameraModel& camera,
                                 const CurriculumPlan& plan, std::uint64_t seed,
                                 const std::string& out_dir);

DatasetManifest load_manifest(const std::string& dataset_dir);
SampleAnnotation load_annotation(const std::string& path);
TrainingSample load_sample(const DatasetManifest& manifest, int index);

// Streams epoch-shuffled batches mixing all curriculum subsets; each batch
// entry carries the without-replacement pixel draw for one image.
class BatchIterator {
 public:
  struct Item {
    int sample_index = 0;
    std::vector<std::uint32_t> pixel_indices;
  };

  BatchIterator(int num_samples, int pixels_per_image, int batch_size, int rays_per_image,
                std::uint64_t epoch_seed);

  std::vector<Item> next();
  int epoch() const { return epoch_; }

 private:
  void reshuffle();

  int num_samples_, pixels_per_image_, batch_size_, rays_per_image_;
  std::uint64_t epoch_seed_;
  int epoch_ = -1;
  std::size_t cursor_ = 0;
  std::vector<int> order_;
  Rng rng_{0};
};

}  // namespace dofield::data
