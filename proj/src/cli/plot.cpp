#include "plita/cli/plot.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace plita::cli {

namespace {

constexpr const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e"};

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4g", v);
  return buf;
}

std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      default: out += c;
    }
  }
  return out;
}

void write_file(const std::filesystem::path& path, const std::string& body) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << body;
}

}  // namespace

std::string line_chart(const std::string& title, const std::string& x_label, const std::vector<Series>& series) {
  const double w = 720, h = 400, left = 70, right = 150, top = 40, bottom = 50;
  double x0 = std::numeric_limits<double>::infinity(), x1 = -x0, y0 = x0, y1 = -x0;
  for (const auto& s : series) {
    for (std::size_t i = 0; i < std::min(s.x.size(), s.y.size()); ++i) {
      if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i])) continue;
      x0 = std::min(x0, s.x[i]);
      x1 = std::max(x1, s.x[i]);
      y0 = std::min(y0, s.y[i]);
      y1 = std::max(y1, s.y[i]);
    }
  }
  if (!std::isfinite(x0)) x0 = 0, x1 = 1, y0 = 0, y1 = 1;
  if (x1 == x0) x1 = x0 + 1;
  if (y1 == y0) y1 = y0 + 1;
  const double pw = w - left - right, ph = h - top - bottom;
  auto px = [&](double x) { return left + (x - x0) / (x1 - x0) * pw; };
  auto py = [&](double y) { return top + (1.0 - (y - y0) / (y1 - y0)) * ph; };

  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\"" << h
     << "\" font-family=\"sans-serif\" font-size=\"12\">\n"
     << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
     << "<text x=\"" << w / 2 << "\" y=\"24\" text-anchor=\"middle\" font-size=\"15\">" << escape(title) << "</text>\n"
     << "<rect x=\"" << left << "\" y=\"" << top << "\" width=\"" << pw << "\" height=\"" << ph
     << "\" fill=\"none\" stroke=\"#444\"/>\n";
  for (int t = 0; t <= 4; ++t) {
    const double yv = y0 + (y1 - y0) * t / 4.0, xv = x0 + (x1 - x0) * t / 4.0;
    os << "<text x=\"" << left - 6 << "\" y=\"" << py(yv) + 4 << "\" text-anchor=\"end\">" << num(yv) << "</text>\n"
       << "<text x=\"" << px(xv) << "\" y=\"" << top + ph + 18 << "\" text-anchor=\"middle\">" << num(xv)
       << "</text>\n";
  }
  os << "<text x=\"" << left + pw / 2 << "\" y=\"" << h - 10 << "\" text-anchor=\"middle\">" << escape(x_label)
     << "</text>\n";
  for (std::size_t k = 0; k < series.size(); ++k) {
    const auto& s = series[k];
    const char* color = kPalette[k % std::size(kPalette)];
    os << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.2\" points=\"";
    for (std::size_t i = 0; i < std::min(s.x.size(), s.y.size()); ++i) {
      if (std::isfinite(s.x[i]) && std::isfinite(s.y[i])) os << num(px(s.x[i])) << ',' << num(py(s.y[i])) << ' ';
    }
    os << "\"/>\n";
    const double ly = top + 14 + 18.0 * static_cast<double>(k);
    os << "<line x1=\"" << w - right + 12 << "\" y1=\"" << ly << "\" x2=\"" << w - right + 32 << "\" y2=\"" << ly
       << "\" stroke=\"" << color << "\" stroke-width=\"2\"/>\n"
       << "<text x=\"" << w - right + 38 << "\" y=\"" << ly + 4 << "\">" << escape(s.name) << "</text>\n";
  }
  os << "</svg>\n";
  return os.str();
}

std::string bar_chart(const std::string& title, const std::vector<BarPanel>& panels) {
  const double w = 900, left = 50, right = 20, top = 40, panel_h = 200, gap = 40;
  const double h = top + static_cast<double>(panels.size()) * (panel_h + gap) + 10;
  const double pw = w - left - right;
  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\"" << h
     << "\" font-family=\"sans-serif\" font-size=\"12\">\n"
     << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
     << "<text x=\"" << w / 2 << "\" y=\"24\" text-anchor=\"middle\" font-size=\"15\">" << escape(title) << "</text>\n";
  for (std::size_t p = 0; p < panels.size(); ++p) {
    const auto& panel = panels[p];
    const double y_top = top + static_cast<double>(p) * (panel_h + gap) + 16;
    const double ph = panel_h - 16;
    auto py = [&](double v) { return y_top + (1.0 - std::clamp(v, 0.0, 1.0)) * ph; };
    os << "<text x=\"" << left << "\" y=\"" << y_top - 4 << "\">" << escape(panel.title) << "</text>\n"
       << "<rect x=\"" << left << "\" y=\"" << y_top << "\" width=\"" << pw << "\" height=\"" << ph
       << "\" fill=\"none\" stroke=\"#444\"/>\n";
    for (double t : {0.0, 0.5, 1.0}) {
      os << "<text x=\"" << left - 6 << "\" y=\"" << py(t) + 4 << "\" text-anchor=\"end\">" << num(t) << "</text>\n";
    }
    const double bw = panel.values.empty() ? 0.0 : pw / static_cast<double>(panel.values.size());
    for (std::size_t i = 0; i < panel.values.size(); ++i) {
      const double v = std::clamp(panel.values[i], 0.0, 1.0);
      os << "<rect x=\"" << num(left + bw * static_cast<double>(i)) << "\" y=\"" << num(py(v)) << "\" width=\""
         << num(std::max(bw - 1.0, 0.5)) << "\" height=\"" << num(y_top + ph - py(v)) << "\" fill=\""
         << kPalette[p % std::size(kPalette)] << "\"/>\n";
    }
    if (panel.reference >= 0.0) {
      os << "<line x1=\"" << left << "\" y1=\"" << py(panel.reference) << "\" x2=\"" << left + pw << "\" y2=\""
         << py(panel.reference) << "\" stroke=\"black\" stroke-dasharray=\"6,4\"/>\n";
    }
  }
  os << "</svg>\n";
  return os.str();
}

void write_loss_plot(const std::filesystem::path& metrics_csv, const std::filesystem::path& svg) {
  std::ifstream in(metrics_csv);
  if (!in) throw std::runtime_error("cannot read " + metrics_csv.string());
  std::string line;
  std::getline(in, line);
  Series iv{"L_iv", {}, {}}, tv{"L_tv", {}, {}}, total{"total", {}, {}};
  while (std::getline(in, line)) {
    std::vector<double> cols;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cols.push_back(std::strtod(cell.c_str(), nullptr));
    if (cols.size() < 4) continue;
    for (auto* s : {&iv, &tv, &total}) s->x.push_back(cols[0]);
    iv.y.push_back(cols[1]);
    tv.y.push_back(cols[2]);
    total.y.push_back(cols[3]);
  }
  write_file(svg, line_chart("Training losses", "iteration", {total, iv, tv}));
}

void write_disentangle_plot(const eval::FeatureClusterReport& report, double baseline,
                            const std::filesystem::path& svg) {
  write_file(svg, bar_chart("Feature appearance ratio across records",
                            {{"invariant cluster", report.invariant_ratio, baseline},
                             {"tempo-variant cluster", report.tempo_variant_ratio, baseline}}));
}

}  // namespace plita::cli
