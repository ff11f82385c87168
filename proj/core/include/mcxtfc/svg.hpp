#pragma once

#include <optional>
#include <string>
#include <vector>

namespace mcxtfc {

// Static line plot: a shaded 5-95% band, its mean line, and an optional
// reference line (e.g. the noiseless truth).
struct SvgBandPlot {
  std::string title;
  std::string x_label = "t (s)";
  std::string y_label;
  std::vector<double> t;
  std::vector<double> mean;
  std::vector<double> lo;
  std::vector<double> hi;
  std::optional<std::vector<double>> reference;
};

void write_band_svg(const std::string& path, const SvgBandPlot& plot);

}  // namespace mcxtfc
