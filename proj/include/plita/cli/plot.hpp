#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "plita/eval/disentangle.hpp"

namespace plita::cli {

struct Series {
  std::string name;
  std::vector<double> x, y;
};

/// Static SVG line chart; non-finite points are skipped.
std::string line_chart(const std::string& title, const std::string& x_label, const std::vector<Series>& series);

struct BarPanel {
  std::string title;
  std::vector<double> values;
  double reference = -1.0;  // dashed horizontal line when >= 0
};

/// Vertically stacked bar panels sharing a [0, 1] value axis.
std::string bar_chart(const std::string& title, const std::vector<BarPanel>& panels);

/// Columns l_iv, l_tv and total of a metrics CSV against iter.
void write_loss_plot(const std::filesystem::path& metrics_csv, const std::filesystem::path& svg);

/// Appearance ratios per feature for both clusters, with the null mean as reference.
void write_disentangle_plot(const eval::FeatureClusterReport& report, double baseline,
                            const std::filesystem::path& svg);

}  // namespace plita::cli
