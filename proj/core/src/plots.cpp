#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>

#include "seqdesign/harness.hpp"

namespace seqdesign::harness {

namespace fs = std::filesystem;

namespace {

constexpr double kWidth = 720;
constexpr double kHeight = 440;
constexpr double kLeft = 80;
constexpr double kRight = 180;
constexpr double kTop = 40;
constexpr double kBottom = 50;

const char* const kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf"};

std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

std::string num(double v) {
  std::ostringstream os;
  os << std::setprecision(4) << v;
  return os.str();
}

// Round tick step: 1, 2 or 5 times a power of ten.
double tick_step(double span, int target) {
  const double raw = span / target;
  const double mag = std::pow(10.0, std::floor(std::log10(raw)));
  for (double m : {1.0, 2.0, 5.0, 10.0}) {
    if (m * mag >= raw) return m * mag;
  }
  return 10 * mag;
}

std::string chart(const std::string& metric, const std::vector<const SummaryRow*>& rows) {
  std::vector<std::string> strategies;
  std::map<std::string, std::vector<const SummaryRow*>> series;
  double x_min = 1e300, x_max = -1e300, y_min = 1e300, y_max = -1e300;
  for (const auto* r : rows) {
    if (!series.count(r->strategy)) strategies.push_back(r->strategy);
    series[r->strategy].push_back(r);
    x_min = std::min(x_min, static_cast<double>(r->iteration));
    x_max = std::max(x_max, static_cast<double>(r->iteration));
    for (double v : {r->mean, r->ci_lo, r->ci_hi}) {
      if (std::isfinite(v)) {
        y_min = std::min(y_min, v);
        y_max = std::max(y_max, v);
      }
    }
  }
  if (x_max <= x_min) x_max = x_min + 1;
  if (!(y_max > y_min)) {
    const double pad = std::max(1e-12, std::abs(y_min) * 0.1 + (y_min == 0 ? 1 : 0));
    y_min -= pad;
    y_max += pad;
  }
  const double y_step = tick_step(y_max - y_min, 6);
  y_min = std::floor(y_min / y_step) * y_step;
  y_max = std::ceil(y_max / y_step) * y_step;

  const double pw = kWidth - kLeft - kRight;
  const double ph = kHeight - kTop - kBottom;
  auto sx = [&](double x) { return kLeft + (x - x_min) / (x_max - x_min) * pw; };
  auto sy = [&](double y) { return kTop + (y_max - y) / (y_max - y_min) * ph; };

  std::ostringstream os;
  os << std::setprecision(6);
  os << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
     << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\"" << kHeight
     << "\" viewBox=\"0 0 " << kWidth << ' ' << kHeight << "\" font-family=\"sans-serif\" font-size=\"12\""
     << " data-ymin=\"" << y_min << "\" data-ymax=\"" << y_max << "\">\n"
     << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
     << "<text x=\"" << kLeft + pw / 2 << "\" y=\"24\" text-anchor=\"middle\" font-size=\"15\">" << escape(metric)
     << " (mean, 95% CI)</text>\n";

  // Grid and ticks.
  for (double y = y_min; y <= y_max + 0.5 * y_step; y += y_step) {
    os << "<line x1=\"" << kLeft << "\" x2=\"" << kLeft + pw << "\" y1=\"" << sy(y) << "\" y2=\"" << sy(y)
       << "\" stroke=\"#e0e0e0\"/>\n"
       << "<text x=\"" << kLeft - 6 << "\" y=\"" << sy(y) + 4 << "\" text-anchor=\"end\">" << num(y) << "</text>\n";
  }
  const double x_step = std::max(1.0, tick_step(x_max - x_min, 10));
  for (double x = x_min; x <= x_max + 1e-9; x += x_step) {
    os << "<text x=\"" << sx(x) << "\" y=\"" << kTop + ph + 18 << "\" text-anchor=\"middle\">" << num(x)
       << "</text>\n";
  }
  os << "<rect x=\"" << kLeft << "\" y=\"" << kTop << "\" width=\"" << pw << "\" height=\"" << ph
     << "\" fill=\"none\" stroke=\"black\"/>\n"
     << "<text x=\"" << kLeft + pw / 2 << "\" y=\"" << kHeight - 10 << "\" text-anchor=\"middle\">iteration</text>\n";

  for (std::size_t s = 0; s < strategies.size(); ++s) {
    auto pts = series[strategies[s]];
    std::sort(pts.begin(), pts.end(), [](const SummaryRow* a, const SummaryRow* b) { return a->iteration < b->iteration; });
    const char* color = kPalette[s % (sizeof(kPalette) / sizeof(kPalette[0]))];
    os << "<g class=\"series\" data-strategy=\"" << escape(strategies[s]) << "\">\n";
    os << "<polygon fill=\"" << color << "\" fill-opacity=\"0.18\" stroke=\"none\" points=\"";
    for (const auto* r : pts) os << sx(r->iteration) << ',' << sy(r->ci_hi) << ' ';
    for (auto it = pts.rbegin(); it != pts.rend(); ++it) os << sx((*it)->iteration) << ',' << sy((*it)->ci_lo) << ' ';
    os << "\"/>\n<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"2\" points=\"";
    for (const auto* r : pts) os << sx(r->iteration) << ',' << sy(r->mean) << ' ';
    os << "\"/>\n</g>\n";
    const double ly = kTop + 14 + 20 * static_cast<double>(s);
    os << "<line x1=\"" << kLeft + pw + 14 << "\" x2=\"" << kLeft + pw + 38 << "\" y1=\"" << ly << "\" y2=\"" << ly
       << "\" stroke=\"" << color << "\" stroke-width=\"3\"/>\n"
       << "<text x=\"" << kLeft + pw + 44 << "\" y=\"" << ly + 4 << "\">" << escape(strategies[s]) << "</text>\n";
  }
  os << "</svg>\n";
  return os.str();
}

}  // namespace

std::vector<std::string> emit_plots(const std::vector<SummaryRow>& summary, const std::string& outdir) {
  if (summary.empty()) throw ConfigError("nothing to plot: the summary is empty");
  std::error_code ec;
  fs::create_directories(outdir, ec);
  if (ec) throw ConfigError("cannot create " + outdir + ": " + ec.message());

  std::vector<std::string> metrics;
  std::map<std::string, std::vector<const SummaryRow*>> by_metric;
  for (const auto& r : summary) {
    if (!by_metric.count(r.metric)) metrics.push_back(r.metric);
    by_metric[r.metric].push_back(&r);
  }
  std::vector<std::string> written;
  const std::string csv = (fs::path(outdir) / "summary.csv").string();
  write_summary(summary, csv);
  written.push_back(csv);
  for (const auto& m : metrics) {
    const std::string path = (fs::path(outdir) / (m + ".svg")).string();
    std::ofstream out(path);
    if (!out) throw ConfigError("cannot write " + path);
    out << chart(m, by_metric[m]);
    if (!out) throw ConfigError("failed writing " + path);
    written.push_back(path);
  }
  return written;
}

}  // namespace seqdesign::harness
