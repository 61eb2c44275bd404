#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "peri/manifest.hpp"
#include "peri/volume.hpp"

namespace peri::phantom {

/// Synthetic CT cohort parameters. Lengths are in mm, intensities in HU.
struct PhantomSpec {
  int n_cases = 240;
  double malignant_fraction = 0.30;
  Dims dims{64, 64, 64};
  Spacing spacing{1.0, 1.0, 1.0};
  double background_mean = -850.0;
  double background_sd = 40.0;
  double nodule_mean = 20.0;
  double nodule_sd = 30.0;
  double radius_min = 4.0;
  double radius_max = 9.0;
  double axis_jitter = 0.25;    // semi-axes are radius * U(1 - j, 1 + j)
  double center_jitter = 2.0;   // nodule centre offset from the volume centre, U(-j, j) per axis
  double shell_inner = 2.0;
  double shell_outer = 8.0;
  double shell_offset = 60.0;   // malignant only
  double shell_texture_sd = 20.0;
  double texture_correlation = 2.0;
  double irregularity_malignant = 1.5;
  double irregularity_benign = 0.3;
  double psf_sigma = 0.6;       // blur of the noiseless nodule/background image (partial volume)
  double lobe_frequency = 1.5;  // angular wave numbers drawn from U(f / 2, 3f / 2)
  std::uint64_t seed = 7;

  /// Throws InvalidRange / InvalidArgument.
  void validate() const;
};

struct PhantomCase {
  Volume3D image;  // integer-valued, so an int16 round trip is lossless
  Mask3D mask;
  BoundingBox bbox;  // tight bounds of mask
  int label = 0;
  int attempts = 1;  // > 1 when a draw had to be rejected
};

/// Per-class counts and the 0/1 label of every case index.
std::vector<int> assign_labels(const PhantomSpec& spec);
/// 70/20/10 split computed separately inside each class.
std::vector<Split> assign_splits(const PhantomSpec& spec, const std::vector<int>& labels);

/// Case `index` is generated from its own derived stream and does not depend on
/// any other case.
PhantomCase make_case(const PhantomSpec& spec, int index, int label);

std::string case_id(int index);

/// Writes images/<id>.nii (int16), masks/<id>_mask.nii (uint8) and
/// manifest.csv under out_dir. Cases are generated on `threads` threads; the
/// bytes written do not depend on the thread count. Throws IoError.
std::vector<CaseRecord> generate_cohort(const PhantomSpec& spec, const std::filesystem::path& out_dir, int threads = 0);

/// 2|A and B| / (|A| + |B|). Throws DimensionMismatch, BothEmpty.
double ground_truth_dice(const Mask3D& truth, const Mask3D& predicted);

}  // namespace peri::phantom
