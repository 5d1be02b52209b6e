#pragma once

#include <algorithm>
#include <cmath>
#include <ostream>
#include <string>
#include <vector>

#include "psram/common.hpp"
#include "psram/perf.hpp"

namespace psram {

namespace detail {

struct SvgPanel {
  std::string title;
  std::string x_label;
  std::vector<double> xs, ys;
};

inline void emit_panel(std::ostream& out, const SvgPanel& p, double ox, double oy,
                       double w, double h) {
  const double ml = 60, mb = 40, mt = 28, mr = 16;
  const double px0 = ox + ml, py0 = oy + h - mb;
  const double pw = w - ml - mr, ph = h - mt - mb;
  double xmax = 1.0, ymax = 1.0;
  for (double x : p.xs) xmax = std::max(xmax, x);
  for (double y : p.ys) ymax = std::max(ymax, y);

  out << "<rect x=\"" << ox << "\" y=\"" << oy << "\" width=\"" << w << "\" height=\""
      << h << "\" fill=\"white\" stroke=\"none\"/>\n";
  out << "<line x1=\"" << px0 << "\" y1=\"" << py0 << "\" x2=\"" << px0 + pw
      << "\" y2=\"" << py0 << "\" stroke=\"black\"/>\n";
  out << "<line x1=\"" << px0 << "\" y1=\"" << py0 << "\" x2=\"" << px0 << "\" y2=\""
      << py0 - ph << "\" stroke=\"black\"/>\n";
  out << "<text x=\"" << ox + w / 2 << "\" y=\"" << oy + 18
      << "\" text-anchor=\"middle\" font-size=\"13\">" << p.title << "</text>\n";
  out << "<text x=\"" << px0 + pw / 2 << "\" y=\"" << py0 + 30
      << "\" text-anchor=\"middle\" font-size=\"11\">" << p.x_label << "</text>\n";
  out << "<text x=\"" << ox + 14 << "\" y=\"" << py0 - ph / 2
      << "\" text-anchor=\"middle\" font-size=\"11\" transform=\"rotate(-90 " << ox + 14
      << ' ' << py0 - ph / 2 << ")\">sustained ops/s</text>\n";

  out << "<polyline fill=\"none\" stroke=\"#1f6fb2\" stroke-width=\"1.5\" points=\"";
  for (std::size_t i = 0; i < p.xs.size(); ++i) {
    const double sx = px0 + p.xs[i] / xmax * pw;
    const double sy = py0 - p.ys[i] / ymax * ph;
    out << format_double(sx) << ',' << format_double(sy) << ' ';
  }
  out << "\"/>\n";
}

}  // namespace detail

/// Renders the two scaling panels (throughput vs. channel count, throughput
/// vs. frequency) from sweep rows as one SVG with two line charts. The fixed
/// value of the other variable is the grid value closest to the reference
/// operating point (52 channels, 20 GHz).
inline void write_sweep_svg(std::ostream& out, const std::vector<SweepRow>& rows) {
  double fixed_freq = 0.0, fixed_ch = 0.0;
  for (const SweepRow& r : rows) {
    if (fixed_freq == 0.0 || std::abs(r.freq_hz - 20e9) < std::abs(fixed_freq - 20e9))
      fixed_freq = r.freq_hz;
    const double c = static_cast<double>(r.channels);
    if (fixed_ch == 0.0 || std::abs(c - 52.0) < std::abs(fixed_ch - 52.0)) fixed_ch = c;
  }

  detail::SvgPanel ch_panel, fr_panel;
  ch_panel.title = "Throughput vs wavelength channels";
  ch_panel.x_label = "channels";
  fr_panel.title = "Throughput vs operating frequency";
  fr_panel.x_label = "frequency (Hz)";
  for (const SweepRow& r : rows) {
    if (r.freq_hz == fixed_freq) {
      ch_panel.xs.push_back(static_cast<double>(r.channels));
      ch_panel.ys.push_back(r.sustained_ops);
    }
    if (static_cast<double>(r.channels) == fixed_ch) {
      fr_panel.xs.push_back(r.freq_hz);
      fr_panel.ys.push_back(r.sustained_ops);
    }
  }
  auto sort_panel = [](detail::SvgPanel& p) {
    std::vector<std::size_t> order(p.xs.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return p.xs[a] < p.xs[b]; });
    detail::SvgPanel s = p;
    for (std::size_t i = 0; i < order.size(); ++i) {
      s.xs[i] = p.xs[order[i]];
      s.ys[i] = p.ys[order[i]];
    }
    p = s;
  };
  sort_panel(ch_panel);
  sort_panel(fr_panel);

  const double pw = 420, ph = 300;
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << 2 * pw
      << "\" height=\"" << ph << "\" viewBox=\"0 0 " << 2 * pw << ' ' << ph << "\">\n";
  detail::emit_panel(out, ch_panel, 0, 0, pw, ph);
  detail::emit_panel(out, fr_panel, pw, 0, pw, ph);
  out << "</svg>\n";
}

}  // namespace psram
