#include "peri/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>

#include "peri/csv.hpp"
#include "peri/error.hpp"
#include "peri/parallel.hpp"
#include "peri/rng.hpp"
#include "peri/stats.hpp"

namespace peri::eval {

namespace {

struct ClassCounts {
  std::size_t pos = 0;
  std::size_t neg = 0;
};

ClassCounts check(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size()) fail(ErrorKind::DimensionMismatch, "scores and labels differ in length");
  ClassCounts c;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] == 1) {
      ++c.pos;
    } else if (labels[i] == 0) {
      ++c.neg;
    } else {
      fail(ErrorKind::InvalidArgument, "labels must be 0 or 1");
    }
    if (!std::isfinite(scores[i])) fail(ErrorKind::NumericalFailure, "non-finite score");
  }
  if (c.pos == 0 || c.neg == 0) fail(ErrorKind::SingleClass, "both classes are required");
  return c;
}

// Works on already validated input.
double auc_unchecked(std::span<const double> scores, std::span<const int> labels, std::size_t n_pos,
                     std::size_t n_neg, std::vector<std::size_t>& order) {
  const std::size_t n = scores.size();
  order.resize(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  // Twice the midrank of a tie group spanning ranks i+1..j is i+1+j, an integer.
  std::uint64_t doubled_rank_sum = 0;
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i + 1;
    while (j < n && scores[order[j]] == scores[order[i]]) ++j;
    std::uint64_t pos_in_group = 0;
    for (std::size_t k = i; k < j; ++k) pos_in_group += static_cast<std::uint64_t>(labels[order[k]]);
    doubled_rank_sum += pos_in_group * (i + 1 + j);
    i = j;
  }
  const std::uint64_t twice_u = doubled_rank_sum - static_cast<std::uint64_t>(n_pos) * (n_pos + 1);
  return static_cast<double>(twice_u) / (2.0 * static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

void check_boot(int n_boot, double level) {
  if (n_boot < 100) fail(ErrorKind::InvalidArgument, "n_boot must be >= 100");
  if (!(level > 0.0 && level < 1.0)) fail(ErrorKind::InvalidRange, "level must lie in (0, 1)");
}

double replicate(std::span<const double> scores, std::span<const std::size_t> pos, std::span<const std::size_t> neg,
                 std::uint64_t seed, std::size_t b) {
  rng::Stream s(seed, "bootstrap", b);
  std::vector<double> rs;
  std::vector<int> rl;
  rs.reserve(pos.size() + neg.size());
  rl.reserve(pos.size() + neg.size());
  for (std::size_t k = 0; k < pos.size(); ++k) {
    rs.push_back(scores[pos[s.below(pos.size())]]);
    rl.push_back(1);
  }
  for (std::size_t k = 0; k < neg.size(); ++k) {
    rs.push_back(scores[neg[s.below(neg.size())]]);
    rl.push_back(0);
  }
  std::vector<std::size_t> order;
  return auc_unchecked(rs, rl, pos.size(), neg.size(), order);
}

void split_indices(std::span<const int> labels, std::vector<std::size_t>& pos, std::vector<std::size_t>& neg) {
  for (std::size_t i = 0; i < labels.size(); ++i) (labels[i] == 1 ? pos : neg).push_back(i);
}

AucResult summarise(std::span<const double> scores, std::span<const int> labels, std::vector<double> reps,
                    double level, std::uint64_t seed, ClassCounts c) {
  AucResult r;
  std::vector<std::size_t> order;
  r.auc = auc_unchecked(scores, labels, c.pos, c.neg, order);
  std::sort(reps.begin(), reps.end());
  const double alpha = (1.0 - level) / 2.0;
  r.ci_low = stats::percentile_sorted(reps, alpha);
  r.ci_high = stats::percentile_sorted(reps, 1.0 - alpha);
  r.n_boot = static_cast<int>(reps.size());
  r.seed = seed;
  r.n_pos = c.pos;
  r.n_neg = c.neg;
  return r;
}

}  // namespace

double auc(std::span<const double> scores, std::span<const int> labels) {
  const ClassCounts c = check(scores, labels);
  std::vector<std::size_t> order;
  return auc_unchecked(scores, labels, c.pos, c.neg, order);
}

RocCurve roc_curve(std::span<const double> scores, std::span<const int> labels) {
  const ClassCounts c = check(scores, labels);
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });

  RocCurve curve;
  curve.thresholds.push_back(std::numeric_limits<double>::infinity());
  curve.fpr.push_back(0.0);
  curve.tpr.push_back(0.0);
  std::size_t tp = 0, fp = 0, i = 0;
  while (i < order.size()) {
    const double t = scores[order[i]];
    while (i < order.size() && scores[order[i]] == t) {
      (labels[order[i]] == 1 ? tp : fp) += 1;
      ++i;
    }
    curve.thresholds.push_back(t);
    curve.fpr.push_back(static_cast<double>(fp) / static_cast<double>(c.neg));
    curve.tpr.push_back(static_cast<double>(tp) / static_cast<double>(c.pos));
  }
  return curve;
}

double trapezoid_area(const RocCurve& curve) {
  double area = 0.0;
  for (std::size_t i = 1; i < curve.fpr.size(); ++i)
    area += (curve.fpr[i] - curve.fpr[i - 1]) * (curve.tpr[i] + curve.tpr[i - 1]) / 2.0;
  return area;
}

std::vector<double> bootstrap_replicates(std::span<const double> scores, std::span<const int> labels, int n_boot,
                                         std::uint64_t seed, int threads) {
  check(scores, labels);
  if (n_boot < 1) fail(ErrorKind::InvalidArgument, "n_boot must be positive");
  std::vector<std::size_t> pos, neg;
  split_indices(labels, pos, neg);
  std::vector<double> reps(static_cast<std::size_t>(n_boot));
  parallel_for(reps.size(), threads, [&](std::size_t b) { reps[b] = replicate(scores, pos, neg, seed, b); });
  return reps;
}

AucResult bootstrap_ci(std::span<const double> scores, std::span<const int> labels, int n_boot, double level,
                       std::uint64_t seed, int threads) {
  const ClassCounts c = check(scores, labels);
  check_boot(n_boot, level);
  return summarise(scores, labels, bootstrap_replicates(scores, labels, n_boot, seed, threads), level, seed, c);
}

namespace serial {

AucResult bootstrap_ci(std::span<const double> scores, std::span<const int> labels, int n_boot, double level,
                       std::uint64_t seed) {
  const ClassCounts c = check(scores, labels);
  check_boot(n_boot, level);
  std::vector<std::size_t> pos, neg;
  split_indices(labels, pos, neg);
  std::vector<double> reps;
  for (int b = 0; b < n_boot; ++b) reps.push_back(replicate(scores, pos, neg, seed, static_cast<std::size_t>(b)));
  return summarise(scores, labels, std::move(reps), level, seed, c);
}

}  // namespace serial

// --- report CSV ----------------------------------------------------------------

bool EvalRow::operator==(const EvalRow& o) const {
  const auto& a = result;
  const auto& b = o.result;
  return model == o.model && mask_variant == o.mask_variant && split == o.split && a.auc == b.auc &&
         a.ci_low == b.ci_low && a.ci_high == b.ci_high && a.n_boot == b.n_boot && a.seed == b.seed &&
         a.n_pos == b.n_pos && a.n_neg == b.n_neg;
}

std::string eval_csv_header() { return "model,mask_variant,split,auc,ci_low,ci_high,n_pos,n_neg,n_boot,seed"; }

std::string format_eval_row(const EvalRow& row) {
  const auto& r = row.result;
  return row.model + ',' + row.mask_variant + ',' + row.split + ',' + csv::format_double(r.auc) + ',' +
         csv::format_double(r.ci_low) + ',' + csv::format_double(r.ci_high) + ',' + std::to_string(r.n_pos) + ',' +
         std::to_string(r.n_neg) + ',' + std::to_string(r.n_boot) + ',' + std::to_string(r.seed);
}

void write_eval_csv(const std::filesystem::path& path, std::span<const EvalRow> rows) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorKind::IoError, "cannot write " + path.string());
  out << eval_csv_header() << '\n';
  for (const auto& r : rows) out << format_eval_row(r) << '\n';
  if (!out) fail(ErrorKind::IoError, "write failed for " + path.string());
}

std::vector<EvalRow> read_eval_csv(const std::filesystem::path& path) {
  const csv::Table t = csv::read(path);
  if (t.header != csv::split_line(eval_csv_header()))
    fail(ErrorKind::ParseError, path.string() + ": unexpected header for an evaluation report");
  if (t.rows.empty()) fail(ErrorKind::ParseError, path.string() + ": no data rows");
  std::vector<EvalRow> out;
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    const auto& f = t.rows[i];
    const std::size_t line = t.line_numbers[i];
    EvalRow r;
    r.model = f[0];
    r.mask_variant = f[1];
    r.split = f[2];
    r.result.auc = csv::parse_double(f[3], line, "auc");
    r.result.ci_low = csv::parse_double(f[4], line, "ci_low");
    r.result.ci_high = csv::parse_double(f[5], line, "ci_high");
    r.result.n_pos = static_cast<std::size_t>(csv::parse_int(f[6], line, "n_pos"));
    r.result.n_neg = static_cast<std::size_t>(csv::parse_int(f[7], line, "n_neg"));
    r.result.n_boot = static_cast<int>(csv::parse_int(f[8], line, "n_boot"));
    // seeds are full 64-bit values
    try {
      r.result.seed = std::stoull(f[9]);
    } catch (const std::exception&) {
      fail(ErrorKind::ParseError, "line " + std::to_string(line) + ": bad seed '" + f[9] + "'");
    }
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace peri::eval
