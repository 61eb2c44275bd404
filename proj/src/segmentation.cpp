#include "peri/segmentation.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>

#include <omp.h>

#include "peri/error.hpp"
#include "peri/morphology.hpp"
#include "peri/stats.hpp"

namespace peri::seg {

std::string_view to_string(Method method) {
  switch (method) {
    case Method::Otsu: return "otsu";
    case Method::FCM: return "fcm";
    case Method::GMM: return "gmm";
    case Method::KNN: return "knn";
  }
  return "otsu";
}

Method parse_method(std::string_view text) {
  std::string s(text);
  for (char& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  for (Method m : kAllMethods)
    if (s == to_string(m)) return m;
  fail(ErrorKind::InvalidArgument, "unknown segmentation method '" + std::string(text) + "'");
}

void Params::validate() const {
  if (n_clusters != 2) fail(ErrorKind::InvalidArgument, "only two clusters are supported");
  if (!(fcm_fuzzifier > 1.0)) fail(ErrorKind::InvalidArgument, "FCM fuzzifier must be > 1");
  if (!(fcm_tol > 0.0) || !(gmm_tol > 0.0)) fail(ErrorKind::InvalidArgument, "tolerances must be > 0");
  if (fcm_max_iter < 1 || gmm_max_iter < 1) fail(ErrorKind::InvalidArgument, "iteration caps must be >= 1");
  if (!(gmm_var_floor > 0.0)) fail(ErrorKind::InvalidArgument, "GMM variance floor must be > 0");
  if (knn_k < 1 || knn_k % 2 == 0) fail(ErrorKind::InvalidArgument, "knn_k must be odd and >= 1");
  if (!(knn_quantile_low < knn_quantile_high) || knn_quantile_low < 0.0 || knn_quantile_high > 1.0)
    fail(ErrorKind::InvalidArgument, "knn quantiles must satisfy 0 <= low < high <= 1");
  if (!(knn_coord_weight >= 0.0)) fail(ErrorKind::InvalidArgument, "knn coordinate weight must be >= 0");
  if (otsu_bins < 2) fail(ErrorKind::InvalidArgument, "otsu_bins must be >= 2");
  if (!(roi_margin_mm >= 0.0)) fail(ErrorKind::InvalidArgument, "roi margin must be >= 0");
  if (!(clip_lo < clip_hi)) fail(ErrorKind::InvalidArgument, "clip window requires lo < hi");
}

namespace {

std::vector<double> roi_values(const Volume3D& roi) {
  std::vector<double> v(roi.data().begin(), roi.data().end());
  const auto [lo, hi] = std::minmax_element(v.begin(), v.end());
  if (v.empty() || *lo == *hi) fail(ErrorKind::DegenerateInput, "ROI has fewer than two distinct values");
  return v;
}

// Percentile centres; falls back to the extremes when they coincide so the two
// clusters never start identical.
std::array<double, 2> initial_centres(std::span<const double> values) {
  std::vector<double> s(values.begin(), values.end());
  std::sort(s.begin(), s.end());
  double a = stats::percentile_sorted(s, 0.25);
  double b = stats::percentile_sorted(s, 0.75);
  if (a == b) {
    a = s.front();
    b = s.back();
  }
  return {a, b};
}

Mask3D mask_from(const Volume3D& roi, const std::vector<std::uint8_t>& fg) {
  return Mask3D(roi.dims(), roi.spacing(), fg);
}

}  // namespace

// --- Otsu ---------------------------------------------------------------------

int histogram_bin(double v, double lo, double hi, int bins) {
  if (v <= lo) return 0;
  const double t = (v - lo) / (hi - lo) * static_cast<double>(bins);
  const auto k = static_cast<int>(std::ceil(t)) - 1;
  return std::clamp(k, 0, bins - 1);
}

int otsu_split(std::span<const std::uint64_t> histogram) {
  const auto bins = static_cast<int>(histogram.size());
  if (bins < 2) fail(ErrorKind::InvalidArgument, "histogram needs at least two bins");
  double n_total = 0.0, s_total = 0.0;
  for (int b = 0; b < bins; ++b) {
    n_total += static_cast<double>(histogram[b]);
    s_total += static_cast<double>(histogram[b]) * b;
  }
  // between-class variance up to a constant factor, in bin-index units
  std::vector<double> score(static_cast<std::size_t>(bins), -1.0);
  double n0 = 0.0, s0 = 0.0, best = -1.0;
  for (int k = 1; k < bins; ++k) {
    n0 += static_cast<double>(histogram[k - 1]);
    s0 += static_cast<double>(histogram[k - 1]) * (k - 1);
    const double n1 = n_total - n0;
    if (n0 <= 0.0 || n1 <= 0.0) continue;
    const double mu0 = s0 / n0;
    const double mu1 = (s_total - s0) / n1;
    score[k] = (n0 / n_total) * (n1 / n_total) * (mu0 - mu1) * (mu0 - mu1);
    best = std::max(best, score[k]);
  }
  if (best < 0.0) fail(ErrorKind::DegenerateInput, "histogram occupies a single bin");
  // near-equal scores (relative 1e-12) count as ties; the lowest split wins
  for (int k = 1; k < bins; ++k)
    if (score[k] >= 0.0 && score[k] >= best * (1.0 - 1e-12)) return k;
  return 1;
}

RoiMask segment_otsu(const Volume3D& roi, const Params& params) {
  const std::vector<double> v = roi_values(roi);
  const auto [lo_it, hi_it] = std::minmax_element(v.begin(), v.end());
  const double lo = *lo_it, hi = *hi_it;
  const int bins = params.otsu_bins;
  std::vector<std::uint64_t> hist(static_cast<std::size_t>(bins), 0);
  std::vector<int> bin_of(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    bin_of[i] = histogram_bin(v[i], lo, hi, bins);
    ++hist[bin_of[i]];
  }
  const int k = otsu_split(hist);
  std::vector<std::uint8_t> fg(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) fg[i] = bin_of[i] >= k ? 1 : 0;
  const double threshold = lo + (hi - lo) * static_cast<double>(k) / static_cast<double>(bins);
  return {mask_from(roi, fg), 1, true, {threshold}};
}

// --- FCM ----------------------------------------------------------------------

namespace {

void fcm_memberships(std::span<const double> x, const std::array<double, 2>& c, double m, std::vector<double>& u0,
                     std::vector<double>& u1) {
  const double expo = 2.0 / (m - 1.0);
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double d0 = std::abs(x[i] - c[0]);
    const double d1 = std::abs(x[i] - c[1]);
    if (d0 == 0.0 && d1 == 0.0) {
      u0[i] = u1[i] = 0.5;
    } else if (d0 == 0.0) {
      u0[i] = 1.0;
      u1[i] = 0.0;
    } else if (d1 == 0.0) {
      u0[i] = 0.0;
      u1[i] = 1.0;
    } else {
      u0[i] = 1.0 / (1.0 + std::pow(d0 / d1, expo));
      u1[i] = 1.0 / (std::pow(d1 / d0, expo) + 1.0);
    }
  }
}

}  // namespace

FcmFit fcm_fit(std::span<const double> values, const Params& params, const FcmObserver& observer) {
  params.validate();
  const double m = params.fcm_fuzzifier;
  FcmFit fit;
  fit.centers = initial_centres(values);
  const std::size_t n = values.size();
  fit.membership0.resize(n);
  fit.membership1.resize(n);
  fcm_memberships(values, fit.centers, m, fit.membership0, fit.membership1);
  if (observer) observer(0, fit.membership0, fit.membership1);

  std::vector<double> u0(n), u1(n);
  for (int it = 1; it <= params.fcm_max_iter; ++it) {
    double num0 = 0, den0 = 0, num1 = 0, den1 = 0;
    for (std::size_t i = 0; i < n; ++i) {
      const double w0 = std::pow(fit.membership0[i], m);
      const double w1 = std::pow(fit.membership1[i], m);
      num0 += w0 * values[i];
      den0 += w0;
      num1 += w1 * values[i];
      den1 += w1;
    }
    if (den0 > 0.0) fit.centers[0] = num0 / den0;
    if (den1 > 0.0) fit.centers[1] = num1 / den1;
    fcm_memberships(values, fit.centers, m, u0, u1);
    double delta = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      delta = std::max(delta, std::abs(u0[i] - fit.membership0[i]));
      delta = std::max(delta, std::abs(u1[i] - fit.membership1[i]));
    }
    fit.membership0.swap(u0);
    fit.membership1.swap(u1);
    fit.iterations = it;
    if (observer) observer(it, fit.membership0, fit.membership1);
    if (delta < params.fcm_tol) {
      fit.converged = true;
      break;
    }
  }
  return fit;
}

RoiMask segment_fcm(const Volume3D& roi, const Params& params) {
  const std::vector<double> v = roi_values(roi);
  const FcmFit fit = fcm_fit(v, params);
  const int fg_cluster = fit.centers[1] > fit.centers[0] ? 1 : 0;
  std::vector<std::uint8_t> fg(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    const double ufg = fg_cluster == 1 ? fit.membership1[i] : fit.membership0[i];
    const double ubg = fg_cluster == 1 ? fit.membership0[i] : fit.membership1[i];
    fg[i] = ufg > ubg ? 1 : 0;
  }
  return {mask_from(roi, fg), fit.iterations, fit.converged,
          {fit.centers[1 - fg_cluster], fit.centers[fg_cluster]}};
}

// --- GMM ----------------------------------------------------------------------

namespace {

double log_normal(double x, double mean, double var) {
  const double d = x - mean;
  return -0.5 * (std::log(2.0 * std::numbers::pi * var) + d * d / var);
}

// log-likelihood of the mixture and posterior of component 1 per value
double e_step(std::span<const double> x, const GmmFit& f, std::vector<double>& r1) {
  double ll = 0.0;
  const double lw0 = std::log(f.weights[0]);
  const double lw1 = std::log(f.weights[1]);
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double a = lw0 + log_normal(x[i], f.means[0], f.variances[0]);
    const double b = lw1 + log_normal(x[i], f.means[1], f.variances[1]);
    const double mx = std::max(a, b);
    const double lse = mx + std::log(std::exp(a - mx) + std::exp(b - mx));
    ll += lse;
    r1[i] = std::exp(b - lse);
  }
  return ll;
}

}  // namespace

GmmFit gmm_fit(std::span<const double> values, const Params& params) {
  params.validate();
  const std::size_t n = values.size();
  const double roi_var = stats::variance(values);
  if (!(roi_var > 0.0)) fail(ErrorKind::DegenerateInput, "ROI has zero variance");
  const double floor = params.gmm_var_floor * roi_var;

  GmmFit fit;
  fit.means = initial_centres(values);
  fit.variances = {roi_var, roi_var};
  fit.weights = {0.5, 0.5};

  std::vector<double> r1(n);
  for (int it = 1; it <= params.gmm_max_iter; ++it) {
    const double ll = e_step(values, fit, r1);
    if (!std::isfinite(ll)) fail(ErrorKind::NumericalFailure, "GMM log-likelihood is not finite");
    fit.log_likelihood.push_back(ll);
    fit.iterations = it;
    if (it > 1 && std::abs(ll - fit.log_likelihood[it - 2]) < params.gmm_tol) {
      fit.converged = true;
      break;
    }
    if (it == params.gmm_max_iter) break;

    double n1 = 0.0, s1 = 0.0, s0 = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      n1 += r1[i];
      s1 += r1[i] * values[i];
      s0 += (1.0 - r1[i]) * values[i];
    }
    const double n0 = static_cast<double>(n) - n1;
    // a component with no responsibility mass keeps its previous parameters
    if (n0 > 0.0) fit.means[0] = s0 / n0;
    if (n1 > 0.0) fit.means[1] = s1 / n1;
    double q0 = 0.0, q1 = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double d0 = values[i] - fit.means[0];
      const double d1 = values[i] - fit.means[1];
      q0 += (1.0 - r1[i]) * d0 * d0;
      q1 += r1[i] * d1 * d1;
    }
    if (n0 > 0.0) fit.variances[0] = std::max(q0 / n0, floor);
    if (n1 > 0.0) fit.variances[1] = std::max(q1 / n1, floor);
    const double w1 = n1 / static_cast<double>(n);
    fit.weights = {std::clamp(1.0 - w1, 1e-300, 1.0), std::clamp(w1, 1e-300, 1.0)};
  }
  return fit;
}

std::vector<int> gmm_assign(std::span<const double> values, const GmmFit& fit) {
  std::vector<double> r1(values.size());
  e_step(values, fit, r1);
  std::vector<int> out(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) out[i] = r1[i] > 0.5 ? 1 : 0;
  return out;
}

RoiMask segment_gmm(const Volume3D& roi, const Params& params) {
  const std::vector<double> v = roi_values(roi);
  const GmmFit fit = gmm_fit(v, params);
  const int fg_comp = fit.means[1] > fit.means[0] ? 1 : 0;
  const std::vector<int> comp = gmm_assign(v, fit);
  std::vector<std::uint8_t> fg(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) fg[i] = comp[i] == fg_comp ? 1 : 0;
  const int bg_comp = 1 - fg_comp;
  return {mask_from(roi, fg),
          fit.iterations,
          fit.converged,
          {fit.means[bg_comp], fit.means[fg_comp], fit.variances[bg_comp], fit.variances[fg_comp]}};
}

// --- kNN ----------------------------------------------------------------------

namespace {

struct Neighbour {
  double d2;
  std::size_t index;
};

std::uint8_t vote_one(const KnnProblem& p, std::size_t q, int k, std::vector<Neighbour>& best) {
  const auto dim = static_cast<std::size_t>(p.dim);
  const double* qf = p.query_features.data() + q * dim;
  best.clear();
  const std::size_t kk = std::min<std::size_t>(static_cast<std::size_t>(k), p.n_seeds());
  for (std::size_t s = 0; s < p.n_seeds(); ++s) {
    const double* sf = p.seed_features.data() + s * dim;
    double d2 = 0.0;
    for (std::size_t c = 0; c < dim; ++c) {
      const double diff = qf[c] - sf[c];
      d2 += diff * diff;
    }
    // seeds arrive in index order, so an equal distance never displaces a kept seed
    if (best.size() == kk && !(d2 < best.back().d2)) continue;
    auto pos = std::upper_bound(best.begin(), best.end(), d2,
                                [](double v, const Neighbour& nb) { return v < nb.d2; });
    best.insert(pos, Neighbour{d2, s});
    if (best.size() > kk) best.pop_back();
  }
  std::size_t votes = 0;
  for (const auto& nb : best) votes += p.seed_labels[nb.index];
  return 2 * votes > best.size() ? 1 : 0;
}

void check_problem(const KnnProblem& p, int k) {
  if (k < 1) fail(ErrorKind::InvalidArgument, "k must be >= 1");
  if (p.dim < 1) fail(ErrorKind::InvalidArgument, "feature dimension must be >= 1");
  if (p.seed_features.size() != p.n_seeds() * static_cast<std::size_t>(p.dim))
    fail(ErrorKind::DimensionMismatch, "seed feature matrix has the wrong size");
  if (p.query_features.size() % static_cast<std::size_t>(p.dim) != 0)
    fail(ErrorKind::DimensionMismatch, "query feature matrix has the wrong size");
  if (p.n_seeds() == 0) fail(ErrorKind::InsufficientSeeds, "no seeds");
}

}  // namespace

std::vector<std::uint8_t> knn_vote(const KnnProblem& problem, int k, int threads) {
  check_problem(problem, k);
  const auto nq = static_cast<std::int64_t>(problem.n_queries());
  std::vector<std::uint8_t> out(static_cast<std::size_t>(nq));
#pragma omp parallel num_threads(threads > 0 ? threads : omp_get_max_threads())
  {
    std::vector<Neighbour> best;
    best.reserve(static_cast<std::size_t>(k) + 1);
#pragma omp for schedule(static)
    for (std::int64_t q = 0; q < nq; ++q)
      out[static_cast<std::size_t>(q)] = vote_one(problem, static_cast<std::size_t>(q), k, best);
  }
  return out;
}

namespace serial {

std::vector<std::uint8_t> knn_vote(const KnnProblem& problem, int k) {
  check_problem(problem, k);
  std::vector<std::uint8_t> out(problem.n_queries());
  std::vector<Neighbour> best;
  for (std::size_t q = 0; q < out.size(); ++q) out[q] = vote_one(problem, q, k, best);
  return out;
}

}  // namespace serial

KnnProblem knn_problem(const Volume3D& roi, const Params& params, std::vector<std::size_t>* query_voxels,
                       std::vector<std::size_t>* seed_voxels) {
  params.validate();
  const std::vector<double> v = roi_values(roi);
  const double mu = stats::mean(v);
  const double sd = std::sqrt(stats::variance(v));
  std::vector<double> sorted = v;
  std::sort(sorted.begin(), sorted.end());
  const double q_lo = stats::percentile_sorted(sorted, params.knn_quantile_low);
  const double q_hi = stats::percentile_sorted(sorted, params.knn_quantile_high);

  KnnProblem p;
  p.dim = 4;
  const Dims& d = roi.dims();
  const Spacing& s = roi.spacing();
  const double w = params.knn_coord_weight;
  std::size_t n_fg = 0, n_bg = 0;
  for (std::int64_t z = 0; z < d.nz; ++z)
    for (std::int64_t y = 0; y < d.ny; ++y)
      for (std::int64_t x = 0; x < d.nx; ++x) {
        const std::size_t i = d.index(x, y, z);
        const double f[4] = {(v[i] - mu) / sd, w * static_cast<double>(x) * s.x, w * static_cast<double>(y) * s.y,
                             w * static_cast<double>(z) * s.z};
        const bool bg = v[i] <= q_lo;
        const bool fg = !bg && v[i] >= q_hi;
        if (bg || fg) {
          p.seed_features.insert(p.seed_features.end(), f, f + 4);
          p.seed_labels.push_back(fg ? 1 : 0);
          (fg ? n_fg : n_bg)++;
          if (seed_voxels) seed_voxels->push_back(i);
        } else {
          p.query_features.insert(p.query_features.end(), f, f + 4);
          if (query_voxels) query_voxels->push_back(i);
        }
      }
  if (n_fg == 0 || n_bg == 0)
    fail(ErrorKind::InsufficientSeeds, "seed quantiles left the " + std::string(n_fg == 0 ? "foreground" : "background") +
                                           " seed set empty");
  return p;
}

RoiMask segment_knn(const Volume3D& roi, const Params& params, int threads) {
  std::vector<std::size_t> queries, seeds;
  const KnnProblem p = knn_problem(roi, params, &queries, &seeds);
  const std::vector<std::uint8_t> votes = knn_vote(p, params.knn_k, threads);
  std::vector<std::uint8_t> fg(roi.size(), 0);
  for (std::size_t s = 0; s < seeds.size(); ++s) fg[seeds[s]] = p.seed_labels[s];
  for (std::size_t q = 0; q < queries.size(); ++q) fg[queries[q]] = votes[q];
  std::size_t n_fg = 0;
  for (auto l : p.seed_labels) n_fg += l;
  std::vector<double> sorted(roi.data().begin(), roi.data().end());
  std::sort(sorted.begin(), sorted.end());
  return {mask_from(roi, fg),
          1,
          true,
          {stats::percentile_sorted(sorted, params.knn_quantile_low),
           stats::percentile_sorted(sorted, params.knn_quantile_high), static_cast<double>(n_fg),
           static_cast<double>(p.n_seeds() - n_fg)}};
}

// --- pipeline -----------------------------------------------------------------

Mask3D postprocess(const Mask3D& mask, const BoundingBox& bbox) {
  if (mask.empty()) fail(ErrorKind::EmptyMask, "segmentation produced an empty mask");
  const Dims& d = mask.dims();
  const morph::Components cc = morph::connected_components(mask, 26);

  const Index3 c = bbox.center();
  std::int32_t keep = 0;
  if (d.contains(c.x, c.y, c.z)) keep = cc.labels[d.index(c.x, c.y, c.z)];
  if (keep == 0) {
    std::vector<std::array<double, 3>> sums(cc.count(), {0.0, 0.0, 0.0});
    for (std::int64_t z = 0; z < d.nz; ++z)
      for (std::int64_t y = 0; y < d.ny; ++y)
        for (std::int64_t x = 0; x < d.nx; ++x) {
          const std::int32_t l = cc.labels[d.index(x, y, z)];
          if (l == 0) continue;
          sums[l - 1][0] += static_cast<double>(x);
          sums[l - 1][1] += static_cast<double>(y);
          sums[l - 1][2] += static_cast<double>(z);
        }
    const Spacing& s = mask.spacing();
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t l = 0; l < cc.count(); ++l) {
      const double n = static_cast<double>(cc.sizes[l]);
      const double dx = (sums[l][0] / n - static_cast<double>(c.x)) * s.x;
      const double dy = (sums[l][1] / n - static_cast<double>(c.y)) * s.y;
      const double dz = (sums[l][2] / n - static_cast<double>(c.z)) * s.z;
      const double dist = dx * dx + dy * dy + dz * dz;
      if (dist < best) {
        best = dist;
        keep = static_cast<std::int32_t>(l + 1);
      }
    }
  }

  std::vector<std::uint8_t> kept(mask.size());
  for (std::size_t i = 0; i < kept.size(); ++i) kept[i] = cc.labels[i] == keep ? 1 : 0;

  std::vector<std::uint8_t> background(mask.size());
  for (std::size_t i = 0; i < kept.size(); ++i) background[i] = kept[i] ? 0 : 1;
  const morph::Components holes = morph::connected_components(Mask3D(d, mask.spacing(), background), 6);
  std::vector<std::uint8_t> reaches_border(holes.count() + 1, 0);
  for (std::int64_t z = 0; z < d.nz; ++z)
    for (std::int64_t y = 0; y < d.ny; ++y)
      for (std::int64_t x = 0; x < d.nx; ++x) {
        const bool border = x == 0 || y == 0 || z == 0 || x == d.nx - 1 || y == d.ny - 1 || z == d.nz - 1;
        if (border) reaches_border[holes.labels[d.index(x, y, z)]] = 1;
      }
  for (std::size_t i = 0; i < kept.size(); ++i) {
    const std::int32_t l = holes.labels[i];
    if (l != 0 && !reaches_border[l]) kept[i] = 1;
  }
  return Mask3D(d, mask.spacing(), std::move(kept));
}

RoiMask segment_roi(const Volume3D& roi, Method method, const Params& params, int threads) {
  params.validate();
  switch (method) {
    case Method::Otsu: return segment_otsu(roi, params);
    case Method::FCM: return segment_fcm(roi, params);
    case Method::GMM: return segment_gmm(roi, params);
    case Method::KNN: return segment_knn(roi, params, threads);
  }
  fail(ErrorKind::InvalidArgument, "unknown method");
}

Result segment(const Volume3D& volume, const BoundingBox& bbox, Method method, const Params& params, int threads) {
  params.validate();
  bbox.validate(volume.dims());
  const Region roi = expand_region(volume.dims(), volume.spacing(), bbox, params.roi_margin_mm);
  const Volume3D sub = clip_hu(extract_region(volume, roi), params.clip_lo, params.clip_hi);
  RoiMask m = segment_roi(sub, method, params, threads);
  const Mask3D cleaned = postprocess(m.mask, to_region_frame(bbox, roi));
  return {embed(cleaned, roi.offset, volume.dims()), method, m.iterations, m.converged, std::move(m.diagnostics), roi};
}

}  // namespace peri::seg
