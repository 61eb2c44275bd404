#include "peri/report.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

#include "peri/error.hpp"

namespace peri::report {

namespace {

struct Variant {
  std::string method;
  double radius = 0.0;
  bool ok = false;
};

Variant parse_variant(const std::string& v) {
  const auto pos = v.rfind("_r");
  if (pos == std::string::npos) return {};
  try {
    std::size_t used = 0;
    const std::string tail = v.substr(pos + 2);
    const double r = std::stod(tail, &used);
    if (used != tail.size()) return {};
    return {v.substr(0, pos), r, true};
  } catch (const std::exception&) {
    return {};
  }
}

std::string fmt(double v, int decimals) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", decimals, v);
  return buf;
}

std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#e377c2", "#17becf"};

// Cell fill from white (0.5) to dark blue (1.0); values below 0.5 stay white.
std::string shade(double auc) {
  const double t = std::clamp((auc - 0.5) / 0.5, 0.0, 1.0);
  const int r = static_cast<int>(255 - t * (255 - 31));
  const int g = static_cast<int>(255 - t * (255 - 119));
  const int b = static_cast<int>(255 - t * (255 - 180));
  char buf[8];
  std::snprintf(buf, sizeof buf, "#%02x%02x%02x", r, g, b);
  return buf;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorKind::IoError, "cannot write " + path.string());
  out << text;
}

}  // namespace

std::string sweep_svg(const std::vector<eval::EvalRow>& rows) {
  struct Point {
    double r, auc, lo, hi;
  };
  std::map<std::string, std::vector<Point>> series;
  std::vector<double> radii;
  for (const auto& row : rows) {
    const Variant v = parse_variant(row.mask_variant);
    if (!v.ok) continue;
    series[row.model + " / " + v.method + " / " + row.split].push_back(
        {v.radius, row.result.auc, row.result.ci_low, row.result.ci_high});
    radii.push_back(v.radius);
  }
  std::sort(radii.begin(), radii.end());
  radii.erase(std::unique(radii.begin(), radii.end()), radii.end());

  const double W = 640, H = 400, left = 60, right = 200, top = 40, bottom = 50;
  const double pw = W - left - right, ph = H - top - bottom;
  const std::size_t nr = std::max<std::size_t>(radii.size(), 1);
  auto xpos = [&](double r) {
    const auto it = std::lower_bound(radii.begin(), radii.end(), r);
    const double k = static_cast<double>(it - radii.begin());
    return left + pw * (k + 0.5) / static_cast<double>(nr);
  };
  auto ypos = [&](double auc) { return top + ph * (1.0 - std::clamp(auc, 0.0, 1.0)); };

  std::ostringstream s;
  s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\" viewBox=\"0 0 " << W
    << ' ' << H << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  s << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  s << "<text x=\"" << left << "\" y=\"24\" font-size=\"14\">AUC by peritumoral expansion radius (95% CI)</text>\n";
  s << "<g id=\"y-axis\">\n";
  for (int k = 0; k <= 5; ++k) {
    const double v = k / 5.0;
    s << "<line x1=\"" << left << "\" x2=\"" << left + pw << "\" y1=\"" << fmt(ypos(v), 2) << "\" y2=\""
      << fmt(ypos(v), 2) << "\" stroke=\"#dddddd\"/>\n";
    s << "<text x=\"" << left - 8 << "\" y=\"" << fmt(ypos(v) + 4, 2) << "\" text-anchor=\"end\">" << fmt(v, 1)
      << "</text>\n";
  }
  s << "</g>\n<g id=\"x-axis\">\n";
  s << "<line x1=\"" << left << "\" x2=\"" << left + pw << "\" y1=\"" << top + ph << "\" y2=\"" << top + ph
    << "\" stroke=\"black\"/>\n";
  for (double r : radii) {
    const std::string x = fmt(xpos(r), 2);
    s << "<line class=\"xtick\" x1=\"" << x << "\" x2=\"" << x << "\" y1=\"" << top + ph << "\" y2=\"" << top + ph + 5
      << "\" stroke=\"black\"/>\n";
    s << "<text x=\"" << x << "\" y=\"" << top + ph + 18 << "\" text-anchor=\"middle\">" << fmt(r, 0) << "</text>\n";
  }
  s << "<text x=\"" << left + pw / 2 << "\" y=\"" << H - 10 << "\" text-anchor=\"middle\">radius (mm)</text>\n";
  s << "</g>\n";

  std::size_t idx = 0;
  const double nseries = static_cast<double>(std::max<std::size_t>(series.size(), 1));
  for (auto& [name, pts] : series) {
    std::sort(pts.begin(), pts.end(), [](const Point& a, const Point& b) { return a.r < b.r; });
    const char* colour = kPalette[idx % std::size(kPalette)];
    // small horizontal offset keeps whiskers of different series apart
    const double dx = (static_cast<double>(idx) - (nseries - 1) / 2.0) * 6.0;
    s << "<g class=\"series\" stroke=\"" << colour << "\" fill=\"" << colour << "\">\n<polyline fill=\"none\" points=\"";
    for (std::size_t k = 0; k < pts.size(); ++k)
      s << (k ? " " : "") << fmt(xpos(pts[k].r) + dx, 2) << ',' << fmt(ypos(pts[k].auc), 2);
    s << "\"/>\n";
    for (const auto& p : pts) {
      const double x = xpos(p.r) + dx;
      s << "<line class=\"whisker\" x1=\"" << fmt(x, 2) << "\" x2=\"" << fmt(x, 2) << "\" y1=\"" << fmt(ypos(p.lo), 2)
        << "\" y2=\"" << fmt(ypos(p.hi), 2) << "\"/>\n";
      s << "<circle cx=\"" << fmt(x, 2) << "\" cy=\"" << fmt(ypos(p.auc), 2) << "\" r=\"3\"/>\n";
    }
    const double ly = top + 14.0 * static_cast<double>(idx);
    s << "<rect x=\"" << left + pw + 12 << "\" y=\"" << fmt(ly, 2) << "\" width=\"10\" height=\"10\"/>\n";
    s << "<text x=\"" << left + pw + 28 << "\" y=\"" << fmt(ly + 9, 2) << "\" stroke=\"none\" fill=\"black\">"
      << escape(name) << "</text>\n</g>\n";
    ++idx;
  }
  s << "</svg>\n";
  return s.str();
}

std::string grid_svg(const std::vector<eval::EvalRow>& rows) {
  std::vector<std::string> methods, models;
  std::map<std::pair<std::string, std::string>, double> cell;
  for (const auto& row : rows) {
    const Variant v = parse_variant(row.mask_variant);
    const std::string method = v.ok ? v.method : row.mask_variant;
    if (std::find(methods.begin(), methods.end(), method) == methods.end()) methods.push_back(method);
    if (std::find(models.begin(), models.end(), row.model) == models.end()) models.push_back(row.model);
    cell[{method, row.model}] = row.result.auc;
  }
  const double cw = 150, chh = 32, left = 90, top = 60;
  const double W = left + cw * static_cast<double>(models.size()) + 20;
  const double H = top + chh * static_cast<double>(methods.size()) + 20;
  std::ostringstream s;
  s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\" viewBox=\"0 0 " << W
    << ' ' << H << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  s << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  s << "<text x=\"10\" y=\"22\" font-size=\"14\">Validation AUC: segmentation x classifier</text>\n";
  for (std::size_t c = 0; c < models.size(); ++c)
    s << "<text x=\"" << fmt(left + cw * (static_cast<double>(c) + 0.5), 1) << "\" y=\"" << top - 10
      << "\" text-anchor=\"middle\">" << escape(models[c]) << "</text>\n";
  for (std::size_t r = 0; r < methods.size(); ++r) {
    const double y = top + chh * static_cast<double>(r);
    s << "<text x=\"" << left - 8 << "\" y=\"" << fmt(y + chh / 2 + 4, 1) << "\" text-anchor=\"end\">"
      << escape(methods[r]) << "</text>\n";
    for (std::size_t c = 0; c < models.size(); ++c) {
      const double x = left + cw * static_cast<double>(c);
      const auto it = cell.find({methods[r], models[c]});
      const std::string fill = it == cell.end() ? "#eeeeee" : shade(it->second);
      s << "<rect class=\"cell\" x=\"" << fmt(x, 1) << "\" y=\"" << fmt(y, 1) << "\" width=\"" << cw << "\" height=\""
        << chh << "\" fill=\"" << fill << "\" stroke=\"white\"/>\n";
      if (it != cell.end())
        s << "<text x=\"" << fmt(x + cw / 2, 1) << "\" y=\"" << fmt(y + chh / 2 + 4, 1)
          << "\" text-anchor=\"middle\">" << fmt(it->second, 3) << "</text>\n";
    }
  }
  s << "</svg>\n";
  return s.str();
}

std::string markdown(const std::vector<eval::EvalRow>& rows) {
  std::ostringstream s;
  s << "# Evaluation report\n\n";
  s << "| model | mask variant | split | AUC | 95% CI | n_pos | n_neg | n_boot |\n";
  s << "|---|---|---|---|---|---|---|---|\n";
  for (const auto& r : rows)
    s << "| " << r.model << " | " << r.mask_variant << " | " << r.split << " | " << fmt(r.result.auc, 3) << " | "
      << fmt(r.result.ci_low, 3) << " to " << fmt(r.result.ci_high, 3) << " | " << r.result.n_pos << " | "
      << r.result.n_neg << " | " << r.result.n_boot << " |\n";
  const auto best = std::max_element(rows.begin(), rows.end(), [](const auto& a, const auto& b) {
    return a.result.auc < b.result.auc;
  });
  if (best != rows.end())
    s << "\nHighest AUC: " << fmt(best->result.auc, 3) << " (" << best->model << ", " << best->mask_variant << ", "
      << best->split << ").\n";
  return s.str();
}

ReportFiles write_report(const std::vector<std::filesystem::path>& csv_paths, const std::filesystem::path& out_dir) {
  if (csv_paths.empty()) fail(ErrorKind::InvalidArgument, "no report CSVs given");
  std::vector<eval::EvalRow> grid, sweep, all;
  for (const auto& p : csv_paths)
    for (auto& r : eval::read_eval_csv(p)) {
      (r.split == "validation" ? grid : sweep).push_back(r);
      all.push_back(std::move(r));
    }
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) fail(ErrorKind::IoError, "cannot create " + out_dir.string());

  ReportFiles files;
  std::string md = markdown(all);
  if (!sweep.empty()) {
    files.svgs.push_back(out_dir / "sweep.svg");
    write_text(files.svgs.back(), sweep_svg(sweep));
    md += "\n![AUC by radius](sweep.svg)\n";
  }
  if (!grid.empty()) {
    files.svgs.push_back(out_dir / "grid.svg");
    write_text(files.svgs.back(), grid_svg(grid));
    md += "\n![Grid](grid.svg)\n";
  }
  files.markdown = out_dir / "report.md";
  write_text(files.markdown, md);
  return files;
}

}  // namespace peri::report
