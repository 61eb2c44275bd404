#include "peri/phantom.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <numeric>

#include "peri/error.hpp"
#include "peri/morphology.hpp"
#include "peri/nifti.hpp"
#include "peri/parallel.hpp"
#include "peri/rng.hpp"

namespace peri::phantom {

namespace {

constexpr int kIrregularityTerms = 6;
constexpr int kMaxAttempts = 50;

struct Vec3 {
  double x, y, z;
};

double dot(const Vec3& a, const Vec3& b) { return a.x * b.x + a.y * b.y + a.z * b.z; }

Vec3 random_unit(rng::Stream& s) {
  for (;;) {
    const Vec3 v{s.normal(), s.normal(), s.normal()};
    const double n = std::sqrt(dot(v, v));
    if (n > 1e-12) return {v.x / n, v.y / n, v.z / n};
  }
}

// Smooth function on the sphere with roughly unit standard deviation: a few
// low-frequency plane waves evaluated at the unit direction.
struct AngularField {
  std::array<Vec3, kIrregularityTerms> dir;
  std::array<double, kIrregularityTerms> freq;
  std::array<double, kIrregularityTerms> phase;

  AngularField(rng::Stream& s, double frequency) {
    for (int j = 0; j < kIrregularityTerms; ++j) {
      dir[j] = random_unit(s);
      freq[j] = s.uniform(0.5 * frequency, 1.5 * frequency);
      phase[j] = s.uniform(0.0, 2.0 * std::numbers::pi);
    }
  }

  double operator()(const Vec3& u) const {
    double v = 0.0;
    for (int j = 0; j < kIrregularityTerms; ++j) v += std::cos(freq[j] * dot(dir[j], u) + phase[j]);
    return v / std::sqrt(kIrregularityTerms / 2.0);
  }
};

std::vector<double> gaussian_kernel(double sigma_vox) {
  const int half = std::max(1, static_cast<int>(std::ceil(3.0 * sigma_vox)));
  std::vector<double> k(static_cast<std::size_t>(2 * half + 1));
  for (int i = -half; i <= half; ++i) k[static_cast<std::size_t>(i + half)] = std::exp(-0.5 * i * i / (sigma_vox * sigma_vox));
  const double sum = std::accumulate(k.begin(), k.end(), 0.0);
  for (double& v : k) v /= sum;
  return k;
}

// In-place separable convolution with clamped borders.
void smooth_axis(std::vector<double>& field, const Dims& d, int axis, const std::vector<double>& kernel) {
  const std::int64_t n[3] = {d.nx, d.ny, d.nz};
  const std::int64_t stride[3] = {1, d.nx, d.nx * d.ny};
  const auto half = static_cast<std::int64_t>(kernel.size() / 2);
  const std::int64_t len = n[axis];
  std::vector<double> line(static_cast<std::size_t>(len));
  const int a1 = (axis + 1) % 3, a2 = (axis + 2) % 3;
  for (std::int64_t j = 0; j < n[a2]; ++j)
    for (std::int64_t i = 0; i < n[a1]; ++i) {
      const std::int64_t base = i * stride[a1] + j * stride[a2];
      for (std::int64_t t = 0; t < len; ++t) line[static_cast<std::size_t>(t)] = field[static_cast<std::size_t>(base + t * stride[axis])];
      for (std::int64_t t = 0; t < len; ++t) {
        double acc = 0.0;
        for (std::int64_t q = -half; q <= half; ++q) {
          const std::int64_t src = std::clamp<std::int64_t>(t + q, 0, len - 1);
          acc += kernel[static_cast<std::size_t>(q + half)] * line[static_cast<std::size_t>(src)];
        }
        field[static_cast<std::size_t>(base + t * stride[axis])] = acc;
      }
    }
}

// White noise smoothed to the requested correlation length, rescaled to unit
// sample standard deviation.
std::vector<double> correlated_noise(rng::Stream& s, const Dims& d, const Spacing& sp, double length_mm) {
  std::vector<double> f(d.count());
  for (double& v : f) v = s.normal();
  for (int axis = 0; axis < 3; ++axis) smooth_axis(f, d, axis, gaussian_kernel(length_mm / sp[axis]));
  double mu = 0.0;
  for (double v : f) mu += v;
  mu /= static_cast<double>(f.size());
  double ss = 0.0;
  for (double v : f) ss += (v - mu) * (v - mu);
  const double sd = std::sqrt(ss / static_cast<double>(f.size()));
  for (double& v : f) v = (v - mu) / sd;
  return f;
}

struct NoduleDraw {
  Mask3D mask;
  bool valid = false;
};

NoduleDraw draw_nodule(const PhantomSpec& spec, rng::Stream& s, int label) {
  const Dims& d = spec.dims;
  const Spacing& sp = spec.spacing;
  const Vec3 centre{(static_cast<double>(d.nx) - 1.0) / 2.0 * sp.x + s.uniform(-spec.center_jitter, spec.center_jitter),
                    (static_cast<double>(d.ny) - 1.0) / 2.0 * sp.y + s.uniform(-spec.center_jitter, spec.center_jitter),
                    (static_cast<double>(d.nz) - 1.0) / 2.0 * sp.z + s.uniform(-spec.center_jitter, spec.center_jitter)};
  const double r = s.uniform(spec.radius_min, spec.radius_max);
  const double ax = r * s.uniform(1.0 - spec.axis_jitter, 1.0 + spec.axis_jitter);
  const double ay = r * s.uniform(1.0 - spec.axis_jitter, 1.0 + spec.axis_jitter);
  const double az = r * s.uniform(1.0 - spec.axis_jitter, 1.0 + spec.axis_jitter);
  const AngularField field(s, spec.lobe_frequency);
  const double amplitude = label == 1 ? spec.irregularity_malignant : spec.irregularity_benign;

  NoduleDraw out{Mask3D(d, sp), false};
  for (std::int64_t z = 0; z < d.nz; ++z)
    for (std::int64_t y = 0; y < d.ny; ++y)
      for (std::int64_t x = 0; x < d.nx; ++x) {
        const Vec3 v{x * sp.x - centre.x, y * sp.y - centre.y, z * sp.z - centre.z};
        const double rho = std::sqrt(dot(v, v));
        if (rho == 0.0) {
          out.mask.set(x, y, z, true);
          continue;
        }
        const Vec3 u{v.x / rho, v.y / rho, v.z / rho};
        const double ellipse = 1.0 / std::sqrt((u.x / ax) * (u.x / ax) + (u.y / ay) * (u.y / ay) + (u.z / az) * (u.z / az));
        const double boundary = std::max(0.5 * r, ellipse + amplitude * field(u));
        if (rho <= boundary) out.mask.set(x, y, z, true);
      }
  if (out.mask.empty()) return out;
  const BoundingBox box = out.mask.bounds();
  if (box.min.x == 0 || box.min.y == 0 || box.min.z == 0 || box.max.x == d.nx || box.max.y == d.ny || box.max.z == d.nz)
    return out;
  const morph::Components cc = morph::connected_components(out.mask, 26);
  const Index3 c = box.center();
  out.valid = cc.count() == 1 && out.mask.at(c.x, c.y, c.z);
  return out;
}

}  // namespace

void PhantomSpec::validate() const {
  if (n_cases < 10) fail(ErrorKind::InvalidArgument, "phantom needs at least 10 cases");
  if (!(malignant_fraction > 0.0 && malignant_fraction < 1.0))
    fail(ErrorKind::InvalidRange, "malignant_fraction must lie in (0, 1)");
  if (!(background_sd > 0.0 && nodule_sd > 0.0 && shell_texture_sd >= 0.0 && texture_correlation > 0.0 && psf_sigma >= 0.0))
    fail(ErrorKind::InvalidRange, "standard deviations must be positive");
  if (!(radius_min > 0.0 && radius_min <= radius_max)) fail(ErrorKind::InvalidRange, "bad radius range");
  if (!(axis_jitter >= 0.0 && axis_jitter < 1.0) || center_jitter < 0.0) fail(ErrorKind::InvalidRange, "bad jitter");
  if (!(shell_inner >= 0.0 && shell_inner < shell_outer)) fail(ErrorKind::InvalidRange, "bad shell range");
  if (irregularity_benign < 0.0 || irregularity_malignant < 0.0) fail(ErrorKind::InvalidRange, "bad irregularity");
  if (!(spacing.x > 0 && spacing.y > 0 && spacing.z > 0)) fail(ErrorKind::InvalidRange, "bad spacing");
  // the nodule, its shell and the outer comparison band must stay inside the volume
  const double reach = radius_max * (1.0 + axis_jitter) + irregularity_malignant + center_jitter + shell_outer + 4.0;
  for (int a = 0; a < 3; ++a) {
    const std::int64_t n = a == 0 ? dims.nx : (a == 1 ? dims.ny : dims.nz);
    if ((static_cast<double>(n) - 1.0) / 2.0 * spacing[a] < reach)
      fail(ErrorKind::InvalidRange, "volume too small for the nodule and its shell");
  }
}

std::vector<int> assign_labels(const PhantomSpec& spec) {
  const auto n = static_cast<std::size_t>(spec.n_cases);
  const auto n_mal = static_cast<std::size_t>(std::llround(spec.n_cases * spec.malignant_fraction));
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  rng::Stream s(spec.seed, "phantom.labels");
  for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[s.below(i)]);
  std::vector<int> labels(n, 0);
  for (std::size_t i = 0; i < n_mal; ++i) labels[order[i]] = 1;
  return labels;
}

std::vector<Split> assign_splits(const PhantomSpec& spec, const std::vector<int>& labels) {
  std::vector<Split> splits(labels.size(), Split::Train);
  for (int cls = 0; cls <= 1; ++cls) {
    std::vector<std::size_t> members;
    for (std::size_t i = 0; i < labels.size(); ++i)
      if (labels[i] == cls) members.push_back(i);
    rng::Stream s(spec.seed, "phantom.split", static_cast<std::uint64_t>(cls));
    for (std::size_t i = members.size(); i > 1; --i) std::swap(members[i - 1], members[s.below(i)]);
    const auto m = static_cast<double>(members.size());
    const auto n_test = static_cast<std::size_t>(std::llround(0.10 * m));
    const auto n_val = static_cast<std::size_t>(std::llround(0.20 * m));
    for (std::size_t k = 0; k < members.size(); ++k) {
      if (k < n_test) {
        splits[members[k]] = Split::Test;
      } else if (k < n_test + n_val) {
        splits[members[k]] = Split::Validation;
      }
    }
  }
  return splits;
}

PhantomCase make_case(const PhantomSpec& spec, int index, int label) {
  rng::Stream s(spec.seed, "phantom.case", static_cast<std::uint64_t>(index));
  PhantomCase pc;
  pc.label = label;
  NoduleDraw draw;
  for (pc.attempts = 1; pc.attempts <= kMaxAttempts; ++pc.attempts) {
    draw = draw_nodule(spec, s, label);
    if (draw.valid) break;
  }
  if (!draw.valid) fail(ErrorKind::NumericalFailure, "could not draw a valid nodule for case " + std::to_string(index));
  pc.mask = std::move(draw.mask);
  pc.bbox = pc.mask.bounds();

  const Dims& d = spec.dims;
  std::vector<double> hu(d.count());
  for (std::size_t i = 0; i < hu.size(); ++i) hu[i] = pc.mask[i] ? spec.nodule_mean : spec.background_mean;
  if (spec.psf_sigma > 0.0)
    for (int axis = 0; axis < 3; ++axis) smooth_axis(hu, d, axis, gaussian_kernel(spec.psf_sigma / spec.spacing[axis]));
  for (std::size_t i = 0; i < hu.size(); ++i) hu[i] += s.normal(0.0, pc.mask[i] ? spec.nodule_sd : spec.background_sd);

  if (label == 1) {
    const std::vector<double> texture = correlated_noise(s, d, spec.spacing, spec.texture_correlation);
    const morph::DistanceMap dist = morph::edt(pc.mask, spec.spacing, 1);
    for (std::size_t i = 0; i < hu.size(); ++i) {
      const double r = dist.mm[i];
      if (r > spec.shell_inner + morph::kRadiusEpsilon && r <= spec.shell_outer + morph::kRadiusEpsilon)
        hu[i] += spec.shell_offset + spec.shell_texture_sd * texture[i];
    }
  }
  std::vector<float> data(hu.size());
  for (std::size_t i = 0; i < hu.size(); ++i)
    data[i] = static_cast<float>(std::clamp(std::round(hu[i]), -32768.0, 32767.0));
  pc.image = Volume3D(d, spec.spacing, std::move(data), Origin{}, NiftiDatatype::Int16);
  return pc;
}

std::string case_id(int index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "case_%03d", index);
  return buf;
}

std::vector<CaseRecord> generate_cohort(const PhantomSpec& spec, const std::filesystem::path& out_dir, int threads) {
  spec.validate();
  std::error_code ec;
  std::filesystem::create_directories(out_dir / "images", ec);
  std::filesystem::create_directories(out_dir / "masks", ec);
  if (ec) fail(ErrorKind::IoError, "cannot create " + out_dir.string() + ": " + ec.message());

  const std::vector<int> labels = assign_labels(spec);
  const std::vector<Split> splits = assign_splits(spec, labels);
  std::vector<CaseRecord> records(labels.size());
  parallel_for(labels.size(), threads, [&](std::size_t i) {
    const int index = static_cast<int>(i);
    const PhantomCase pc = make_case(spec, index, labels[i]);
    const std::string id = case_id(index);
    const std::string image_rel = "images/" + id + ".nii";
    nifti::write(pc.image, out_dir / image_rel, NiftiDatatype::Int16);
    nifti::write_mask(pc.mask, out_dir / "masks" / (id + "_mask.nii"));
    records[i] = CaseRecord{id, image_rel, pc.bbox, labels[i], splits[i]};
  });
  write_manifest(records, out_dir / "manifest.csv");
  return records;
}

double ground_truth_dice(const Mask3D& truth, const Mask3D& predicted) {
  if (!(truth.dims() == predicted.dims())) fail(ErrorKind::DimensionMismatch, "masks differ in size");
  std::size_t a = 0, b = 0, both = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    a += truth[i];
    b += predicted[i];
    both += truth[i] && predicted[i];
  }
  if (a + b == 0) fail(ErrorKind::BothEmpty, "both masks are empty");
  return 2.0 * static_cast<double>(both) / static_cast<double>(a + b);
}

}  // namespace peri::phantom
