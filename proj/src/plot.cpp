#include "pvcast/plot.hpp"

#include <cstdio>
#include <sstream>

namespace pvcast {

namespace {

constexpr double kWidth = 640.0;
constexpr double kHeight = 360.0;
constexpr double kLeft = 64.0;
constexpr double kRight = 16.0;
constexpr double kTop = 36.0;
constexpr double kBottom = 40.0;

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

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

}  // namespace

std::string forecast_svg(const std::string& title, const Forecast& forecast, double p_max,
                         std::span<const double> observed) {
  const std::size_t n = forecast.steps();
  const double plot_w = kWidth - kLeft - kRight;
  const double plot_h = kHeight - kTop - kBottom;
  auto x = [&](std::size_t t) {
    return kLeft + (n > 1 ? plot_w * static_cast<double>(t) / static_cast<double>(n - 1) : 0.0);
  };
  auto y = [&](double frac) { return kTop + plot_h * (1.0 - frac); };

  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\"" << kHeight
     << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
  os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  os << "<text x=\"" << kLeft << "\" y=\"20\" font-size=\"14\">" << escape(title) << "</text>\n";

  for (int k = 0; k <= 4; ++k) {
    const double frac = k / 4.0;
    os << "<line x1=\"" << kLeft << "\" x2=\"" << kWidth - kRight << "\" y1=\"" << fmt(y(frac))
       << "\" y2=\"" << fmt(y(frac)) << "\" stroke=\"#ddd\"/>\n";
    os << "<text x=\"" << kLeft - 6 << "\" y=\"" << fmt(y(frac) + 4) << "\" text-anchor=\"end\">"
       << fmt(frac * p_max) << "</text>\n";
  }
  for (std::size_t t = 0; t < n; t += 6) {
    os << "<text x=\"" << fmt(x(t)) << "\" y=\"" << kHeight - kBottom + 16
       << "\" text-anchor=\"middle\">+" << t + 1 << "h</text>\n";
  }
  os << "<text x=\"" << kLeft << "\" y=\"" << kHeight - 6 << "\">hour ahead; power in W</text>\n";

  if (forecast.mode == TargetMode::pdf && forecast.pdf.size() == n && n > 0) {
    os << "<polygon fill=\"#9ecae1\" fill-opacity=\"0.6\" points=\"";
    for (std::size_t t = 0; t < n; ++t) os << fmt(x(t)) << ',' << fmt(y(quantile(forecast.pdf[t], 0.9))) << ' ';
    for (std::size_t t = n; t-- > 0;) os << fmt(x(t)) << ',' << fmt(y(quantile(forecast.pdf[t], 0.1))) << ' ';
    os << "\"/>\n";
  }
  auto polyline = [&](std::span<const double> v, const char* colour, const char* dash) {
    os << "<polyline fill=\"none\" stroke=\"" << colour << "\" stroke-width=\"2\"";
    if (*dash) os << " stroke-dasharray=\"" << dash << "\"";
    os << " points=\"";
    for (std::size_t t = 0; t < v.size(); ++t) os << fmt(x(t)) << ',' << fmt(y(v[t])) << ' ';
    os << "\"/>\n";
  };
  polyline(forecast.expected, "#08519c", "");
  if (observed.size() == n) polyline(observed, "#d94801", "5,3");

  os << "<text x=\"" << kWidth - kRight << "\" y=\"20\" text-anchor=\"end\">"
     << "<tspan fill=\"#08519c\">forecast</tspan>";
  if (forecast.mode == TargetMode::pdf) os << " <tspan fill=\"#3182bd\">10-90%</tspan>";
  if (observed.size() == n) os << " <tspan fill=\"#d94801\">observed</tspan>";
  os << "</text>\n</svg>\n";
  return os.str();
}

}  // namespace pvcast
