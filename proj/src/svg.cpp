#include "viopose/svg.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace viopose {
namespace {

std::string polyline(const std::vector<double>& xs, const std::vector<double>& ys,
                     const std::string& color) {
  std::ostringstream os;
  os << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.2\" points=\"";
  os.precision(5);
  for (std::size_t i = 0; i < xs.size(); ++i) os << xs[i] << ',' << ys[i] << ' ';
  os << "\"/>\n";
  return os.str();
}

}  // namespace

void write_trajectory_svg(const std::string& path, const std::vector<Vec3>& pred,
                          const std::vector<Vec3>& gt, double fps, const std::string& title) {
  const int W = 640, panel_h = 130, pad = 30;
  const int H = 3 * panel_h + 2 * pad;
  const int n = static_cast<int>(std::min(pred.size(), gt.size()));
  if (n < 2) throw std::invalid_argument("svg: trajectory too short");

  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H
     << "\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  os << "<text x=\"8\" y=\"16\" font-size=\"12\">" << title << " (red: prediction, green: ground truth)"
     << "</text>\n";
  const char* axis_names[3] = {"x", "y", "z"};
  for (int a = 0; a < 3; ++a) {
    double lo = 1e300, hi = -1e300;
    for (int t = 0; t < n; ++t) {
      lo = std::min({lo, pred[t][a], gt[t][a]});
      hi = std::max({hi, pred[t][a], gt[t][a]});
    }
    if (hi - lo < 1e-9) hi = lo + 1;
    const double y0 = pad + a * panel_h;
    std::vector<double> xs(n), yp(n), yg(n);
    for (int t = 0; t < n; ++t) {
      xs[t] = 40.0 + (W - 60.0) * t / (n - 1);
      yp[t] = y0 + (panel_h - 20.0) * (1.0 - (pred[t][a] - lo) / (hi - lo)) + 10.0;
      yg[t] = y0 + (panel_h - 20.0) * (1.0 - (gt[t][a] - lo) / (hi - lo)) + 10.0;
    }
    os << "<text x=\"8\" y=\"" << y0 + panel_h / 2 << "\" font-size=\"11\">" << axis_names[a]
       << "</text>\n";
    os << polyline(xs, yg, "#2a8f2a");
    os << polyline(xs, yp, "#d03030");
  }
  os << "<text x=\"8\" y=\"" << H - 6 << "\" font-size=\"10\">" << n << " frames @ " << fps
     << " fps</text>\n</svg>\n";

  std::ofstream f(path);
  if (!f) throw std::runtime_error("svg: cannot open " + path);
  f << os.str();
}

void write_tempogram_svg(const std::string& path, const Tempogram& gt, const Tempogram& pred,
                         const std::string& title) {
  const int bins = static_cast<int>(gt.bpm_axis.size());
  const int cell = 6;
  const int W = std::max(320, bins * cell / 2 + 80);
  const int panel_h = std::max(40, gt.frames * cell);
  const int H = 2 * panel_h + 70;

  auto draw = [&](std::ostringstream& os, const Tempogram& tg, int y_off, const char* label) {
    double hi = 0;
    for (double v : tg.values) hi = std::max(hi, v);
    if (hi <= 0) hi = 1;
    os << "<text x=\"8\" y=\"" << y_off - 4 << "\" font-size=\"11\">" << label << "</text>\n";
    for (int r = 0; r < tg.frames; ++r) {
      for (int b = 0; b < static_cast<int>(tg.bpm_axis.size()); ++b) {
        const double v = tg.at(r, b) / hi;
        const int shade = static_cast<int>(255 * (1.0 - v));
        os << "<rect x=\"" << 40 + b * cell / 2 << "\" y=\"" << y_off + r * cell << "\" width=\""
           << cell / 2 << "\" height=\"" << cell << "\" fill=\"rgb(" << shade << ',' << shade
           << ',' << shade << ")\"/>\n";
      }
    }
  };

  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H
     << "\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  os << "<text x=\"8\" y=\"16\" font-size=\"12\">" << title << " (BPM 30..300)</text>\n";
  draw(os, gt, 40, "ground truth");
  draw(os, pred, 40 + panel_h + 20, "prediction");
  os << "</svg>\n";

  std::ofstream f(path);
  if (!f) throw std::runtime_error("svg: cannot open " + path);
  f << os.str();
}

}  // namespace viopose
