#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <span>
#include <string_view>
#include <vector>

#include "peri/volume.hpp"

namespace peri::seg {

enum class Method { Otsu, FCM, GMM, KNN };

inline constexpr std::array<Method, 4> kAllMethods = {Method::Otsu, Method::FCM, Method::GMM, Method::KNN};

std::string_view to_string(Method method);
/// Case-insensitive "otsu", "fcm", "gmm", "knn"; throws InvalidArgument.
Method parse_method(std::string_view text);

struct Params {
  int n_clusters = 2;  // fixed: nodule vs background
  double fcm_fuzzifier = 2.0;
  double fcm_tol = 1e-5;
  int fcm_max_iter = 300;
  double gmm_tol = 1e-6;  // on the change in log-likelihood
  int gmm_max_iter = 500;
  double gmm_var_floor = 1e-6;  // fraction of ROI variance
  int knn_k = 7;
  double knn_quantile_low = 0.10;
  double knn_quantile_high = 0.90;
  double knn_coord_weight = 0.05;  // per mm
  int otsu_bins = 256;
  double roi_margin_mm = 0.0;  // clustering domain is the box grown by this much
  double clip_lo = -1000.0;
  double clip_hi = 400.0;

  /// Throws InvalidArgument when an invariant is violated.
  void validate() const;
};

/// Mask in the ROI frame plus fit diagnostics.
struct RoiMask {
  Mask3D mask;
  int iterations = 0;
  bool converged = true;
  std::vector<double> diagnostics;
};

struct Result {
  Mask3D mask;  // full-volume frame
  Method method = Method::Otsu;
  int iterations = 0;
  bool converged = true;
  std::vector<double> diagnostics;  // threshold or cluster centres, see segment_*
  Region roi;
};

// --- Otsu -----------------------------------------------------------------

/// Bin of v among `bins` equal-width bins over [lo, hi]. Bin k holds
/// (lo + k w, lo + (k + 1) w]; lo itself falls in bin 0.
int histogram_bin(double v, double lo, double hi, int bins);

/// Split index k in [1, bins - 1] maximising the between-class variance of
/// classes {bins < k} and {bins >= k}; the smallest maximiser wins.
int otsu_split(std::span<const std::uint64_t> histogram);

/// Foreground = voxels strictly above the chosen bin boundary.
/// diagnostics = {threshold}. Throws DegenerateInput on a constant ROI.
RoiMask segment_otsu(const Volume3D& roi, const Params& params = {});

// --- fuzzy c-means -----------------------------------------------------------

struct FcmFit {
  std::array<double, 2> centers{};
  std::vector<double> membership0;  // membership in cluster 0 per value
  std::vector<double> membership1;
  int iterations = 0;
  bool converged = false;
};

using FcmObserver = std::function<void(int iteration, std::span<const double> u0, std::span<const double> u1)>;

/// Two-cluster FCM on scalar values, centres seeded at the 25th/75th
/// percentiles (min/max when those coincide).
FcmFit fcm_fit(std::span<const double> values, const Params& params, const FcmObserver& observer = {});

/// diagnostics = {background centre, foreground centre}.
RoiMask segment_fcm(const Volume3D& roi, const Params& params = {});

// --- Gaussian mixture ----------------------------------------------------------

struct GmmFit {
  std::array<double, 2> means{};
  std::array<double, 2> variances{};
  std::array<double, 2> weights{};
  std::vector<double> log_likelihood;  // one entry per E-step
  int iterations = 0;
  bool converged = false;
};

GmmFit gmm_fit(std::span<const double> values, const Params& params);

/// Posterior argmax component per value under a fitted mixture.
std::vector<int> gmm_assign(std::span<const double> values, const GmmFit& fit);

/// diagnostics = {background mean, foreground mean, background variance, foreground variance}.
RoiMask segment_gmm(const Volume3D& roi, const Params& params = {});

// --- seeded kNN ----------------------------------------------------------------

/// Labelled seed points and unlabelled queries in a shared feature space.
struct KnnProblem {
  int dim = 0;
  std::vector<double> seed_features;  // n_seeds * dim, row-major
  std::vector<std::uint8_t> seed_labels;
  std::vector<double> query_features;  // n_queries * dim

  std::size_t n_seeds() const { return seed_labels.size(); }
  std::size_t n_queries() const { return dim ? query_features.size() / static_cast<std::size_t>(dim) : 0; }
};

/// Majority label among the k nearest seeds (squared Euclidean distance, ties
/// to the lowest seed index) for every query. Queries run on OpenMP threads.
std::vector<std::uint8_t> knn_vote(const KnnProblem& problem, int k, int threads = 0);

namespace serial {
std::vector<std::uint8_t> knn_vote(const KnnProblem& problem, int k);
}  // namespace serial

/// Builds the seeded problem for an ROI: seeds are voxels at or below the low
/// intensity quantile (background) and at or above the high one (foreground);
/// features are (z-scored intensity, w*x_mm, w*y_mm, w*z_mm).
/// `query_voxels` receives the linear index of each query.
KnnProblem knn_problem(const Volume3D& roi, const Params& params, std::vector<std::size_t>* query_voxels = nullptr,
                       std::vector<std::size_t>* seed_voxels = nullptr);

/// diagnostics = {low quantile, high quantile, foreground seeds, background seeds}.
/// Throws DegenerateInput, InsufficientSeeds.
RoiMask segment_knn(const Volume3D& roi, const Params& params = {}, int threads = 0);

// --- pipeline ------------------------------------------------------------------

/// Keeps the 26-connected component holding the box centre (else the one whose
/// centroid is nearest to it) and fills background pockets that are
/// 6-connected but do not reach the frame border. Throws EmptyMask.
Mask3D postprocess(const Mask3D& mask, const BoundingBox& bbox);

RoiMask segment_roi(const Volume3D& roi, Method method, const Params& params = {}, int threads = 0);

/// Crop to the box (plus roi_margin_mm), clip HU, run `method`, post-process
/// and re-embed into the full frame.
Result segment(const Volume3D& volume, const BoundingBox& bbox, Method method, const Params& params = {},
               int threads = 0);

}  // namespace peri::seg
