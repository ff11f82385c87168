#include "mcxtfc/svg.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "mcxtfc/errors.hpp"

namespace mcxtfc {

namespace {

constexpr double kWidth = 640, kHeight = 400;
constexpr double kLeft = 64, kRight = 16, kTop = 36, kBottom = 44;

struct Scale {
  double lo, hi, px0, px1;
  double operator()(double v) const {
    return px0 + (v - lo) / (hi - lo) * (px1 - px0);
  }
};

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4g", v);
  return buf;
}

}  // namespace

void write_band_svg(const std::string& path, const SvgBandPlot& plot) {
  const std::size_t n = plot.t.size();
  if (n < 2 || plot.mean.size() != n || plot.lo.size() != n || plot.hi.size() != n)
    throw InputError("write_band_svg: inconsistent series lengths");

  double ylo = plot.lo[0], yhi = plot.hi[0];
  for (std::size_t i = 0; i < n; ++i) {
    ylo = std::min({ylo, plot.lo[i], plot.mean[i]});
    yhi = std::max({yhi, plot.hi[i], plot.mean[i]});
  }
  if (plot.reference)
    for (double v : *plot.reference) {
      ylo = std::min(ylo, v);
      yhi = std::max(yhi, v);
    }
  if (yhi == ylo) {
    yhi += 1.0;
    ylo -= 1.0;
  }
  const double pad = 0.05 * (yhi - ylo);
  Scale sx{plot.t.front(), plot.t.back(), kLeft, kWidth - kRight};
  Scale sy{ylo - pad, yhi + pad, kHeight - kBottom, kTop};

  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot open " + path + " for writing");
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth
      << "\" height=\"" << kHeight << "\" viewBox=\"0 0 " << kWidth << " "
      << kHeight << "\">\n"
      << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";

  // Axes with 5 ticks each.
  out << "<g stroke=\"#444\" stroke-width=\"1\" font-size=\"11\" "
         "font-family=\"sans-serif\">\n";
  out << "<line x1=\"" << kLeft << "\" y1=\"" << kHeight - kBottom << "\" x2=\""
      << kWidth - kRight << "\" y2=\"" << kHeight - kBottom << "\"/>\n";
  out << "<line x1=\"" << kLeft << "\" y1=\"" << kTop << "\" x2=\"" << kLeft
      << "\" y2=\"" << kHeight - kBottom << "\"/>\n";
  for (int i = 0; i <= 4; ++i) {
    const double tx = sx.lo + (sx.hi - sx.lo) * i / 4.0;
    const double ty = sy.lo + (sy.hi - sy.lo) * i / 4.0;
    out << "<line x1=\"" << sx(tx) << "\" y1=\"" << kHeight - kBottom
        << "\" x2=\"" << sx(tx) << "\" y2=\"" << kHeight - kBottom + 4 << "\"/>\n";
    out << "<text x=\"" << sx(tx) << "\" y=\"" << kHeight - kBottom + 16
        << "\" text-anchor=\"middle\" stroke=\"none\" fill=\"#222\">" << fmt(tx)
        << "</text>\n";
    out << "<line x1=\"" << kLeft - 4 << "\" y1=\"" << sy(ty) << "\" x2=\""
        << kLeft << "\" y2=\"" << sy(ty) << "\"/>\n";
    out << "<text x=\"" << kLeft - 8 << "\" y=\"" << sy(ty) + 4
        << "\" text-anchor=\"end\" stroke=\"none\" fill=\"#222\">" << fmt(ty)
        << "</text>\n";
  }
  out << "</g>\n";

  // 5-95% band polygon.
  out << "<polygon fill=\"#4477aa\" fill-opacity=\"0.25\" stroke=\"none\" points=\"";
  for (std::size_t i = 0; i < n; ++i)
    out << sx(plot.t[i]) << ',' << sy(plot.hi[i]) << ' ';
  for (std::size_t i = n; i-- > 0;)
    out << sx(plot.t[i]) << ',' << sy(plot.lo[i]) << ' ';
  out << "\"/>\n";

  auto polyline = [&](const std::vector<double>& y, const char* style) {
    out << "<polyline fill=\"none\" " << style << " points=\"";
    for (std::size_t i = 0; i < n; ++i)
      out << sx(plot.t[i]) << ',' << sy(y[i]) << ' ';
    out << "\"/>\n";
  };
  if (plot.reference)
    polyline(*plot.reference,
             "stroke=\"#999999\" stroke-width=\"1.2\" stroke-dasharray=\"5,4\"");
  polyline(plot.mean, "stroke=\"#4477aa\" stroke-width=\"1.6\"");

  out << "<text x=\"" << kWidth / 2 << "\" y=\"20\" text-anchor=\"middle\" "
         "font-size=\"14\" font-family=\"sans-serif\">"
      << plot.title << "</text>\n";
  out << "<text x=\"" << kWidth / 2 << "\" y=\"" << kHeight - 8
      << "\" text-anchor=\"middle\" font-size=\"12\" "
         "font-family=\"sans-serif\">"
      << plot.x_label << "</text>\n";
  out << "<text x=\"14\" y=\"" << kHeight / 2
      << "\" text-anchor=\"middle\" font-size=\"12\" font-family=\"sans-serif\" "
         "transform=\"rotate(-90 14 "
      << kHeight / 2 << ")\">" << plot.y_label << "</text>\n";
  out << "</svg>\n";
}

}  // namespace mcxtfc
