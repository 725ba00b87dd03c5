// Report emission: Pearson correlation, CSV tables, and self-contained SVG
// line/scatter charts (no plotting dependency; output bytes are a pure
// function of the data).
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <optional>
#include <string>
#include <vector>

#include "mixboost/common.hpp"
#include "mixboost/interaction.hpp"
#include "mixboost/metrics.hpp"

namespace mixboost {

// Two-pass Pearson correlation. Zero variance in either coordinate leaves r
// undefined and returns nullopt (reported as null, never coerced to 0).
inline std::optional<double> pearson(const std::vector<double>& xs,
                                     const std::vector<double>& ys) {
  if (xs.size() != ys.size()) throw DataError("pearson: length mismatch");
  const std::size_t n = xs.size();
  if (n < 2) throw DataError("pearson: need at least 2 points");
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < n; ++i) {
    mx += xs[i];
    my += ys[i];
  }
  mx /= static_cast<double>(n);
  my /= static_cast<double>(n);
  double sxx = 0, syy = 0, sxy = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double dx = xs[i] - mx, dy = ys[i] - my;
    sxx += dx * dx;
    syy += dy * dy;
    sxy += dx * dy;
  }
  if (sxx == 0.0 || syy == 0.0) return std::nullopt;
  return sxy / std::sqrt(sxx * syy);
}

// --- CSV ---------------------------------------------------------------------

inline std::string csv_escape(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char ch : s) {
    if (ch == '"') out += '"';
    out += ch;
  }
  return out + "\"";
}

// Minimal RFC-4180 row splitter for the files this repo writes.
inline std::vector<std::string> csv_split(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char ch = line[i];
    if (quoted) {
      if (ch == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cur += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cur += ch;
      }
    } else if (ch == '"') {
      quoted = true;
    } else if (ch == ',') {
      out.push_back(cur);
      cur.clear();
    } else {
      cur += ch;
    }
  }
  out.push_back(cur);
  return out;
}

inline std::string report_csv_header() {
  std::string out = "model_hash,seed";
  for (const std::string& name : SafetyReport::metric_names()) out += "," + name;
  return out + "\n";
}

inline std::string report_csv_row(const SafetyReport& r) {
  std::string out = r.model_hash + "," + std::to_string(r.seed);
  for (const std::string& name : SafetyReport::metric_names()) {
    const std::optional<double> v = r.metric(name);
    out += ",";
    if (v) out += format_double(*v);
  }
  return out + "\n";
}

// --- SVG ---------------------------------------------------------------------

struct SvgSeries {
  std::string label;
  std::string color;
  std::vector<std::pair<double, double>> points;
  bool line = true;
};

namespace detail {

inline std::string svg_num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", v);
  return buf;
}

inline std::string xml_escape(const std::string& s) {
  std::string out;
  for (char ch : s) {
    switch (ch) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += ch;
    }
  }
  return out;
}

inline std::string tick_label(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.3g", v);
  return buf;
}

}  // namespace detail

// One chart primitive covers both uses: polyline series (profiles) and
// point-only series (correlation scatters).
inline std::string svg_chart(const std::string& title, const std::string& x_label,
                             const std::string& y_label, const std::vector<SvgSeries>& series) {
  constexpr double W = 640, H = 440, ML = 70, MR = 20, MT = 40, MB = 50;
  double xmin = HUGE_VAL, xmax = -HUGE_VAL, ymin = HUGE_VAL, ymax = -HUGE_VAL;
  for (const SvgSeries& s : series) {
    for (const auto& [x, y] : s.points) {
      xmin = std::min(xmin, x);
      xmax = std::max(xmax, x);
      ymin = std::min(ymin, y);
      ymax = std::max(ymax, y);
    }
  }
  if (!(xmin <= xmax)) {
    xmin = 0;
    xmax = 1;
    ymin = 0;
    ymax = 1;
  }
  if (xmax == xmin) {
    xmax = xmin + 1;
    xmin -= 1;
  }
  if (ymax == ymin) {
    ymax = ymin + 1;
    ymin -= 1;
  }
  const double xpad = 0.05 * (xmax - xmin), ypad = 0.08 * (ymax - ymin);
  xmin -= xpad;
  xmax += xpad;
  ymin -= ypad;
  ymax += ypad;
  auto px = [&](double x) { return ML + (x - xmin) / (xmax - xmin) * (W - ML - MR); };
  auto py = [&](double y) { return H - MB - (y - ymin) / (ymax - ymin) * (H - MT - MB); };

  std::string svg =
      "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
      "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"640\" height=\"440\" "
      "viewBox=\"0 0 640 440\">\n"
      "<rect width=\"640\" height=\"440\" fill=\"white\"/>\n";
  svg += "<text x=\"320\" y=\"24\" text-anchor=\"middle\" font-family=\"sans-serif\" "
         "font-size=\"16\">" +
         detail::xml_escape(title) + "</text>\n";

  // axes and ticks
  svg += "<line x1=\"" + detail::svg_num(ML) + "\" y1=\"" + detail::svg_num(H - MB) +
         "\" x2=\"" + detail::svg_num(W - MR) + "\" y2=\"" + detail::svg_num(H - MB) +
         "\" stroke=\"black\"/>\n";
  svg += "<line x1=\"" + detail::svg_num(ML) + "\" y1=\"" + detail::svg_num(MT) + "\" x2=\"" +
         detail::svg_num(ML) + "\" y2=\"" + detail::svg_num(H - MB) + "\" stroke=\"black\"/>\n";
  for (int t = 0; t <= 5; ++t) {
    const double fx = xmin + (xmax - xmin) * t / 5.0;
    const double fy = ymin + (ymax - ymin) * t / 5.0;
    svg += "<line x1=\"" + detail::svg_num(px(fx)) + "\" y1=\"" + detail::svg_num(H - MB) +
           "\" x2=\"" + detail::svg_num(px(fx)) + "\" y2=\"" + detail::svg_num(H - MB + 5) +
           "\" stroke=\"black\"/>\n";
    svg += "<text x=\"" + detail::svg_num(px(fx)) + "\" y=\"" + detail::svg_num(H - MB + 18) +
           "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"11\">" +
           detail::tick_label(fx) + "</text>\n";
    svg += "<line x1=\"" + detail::svg_num(ML - 5) + "\" y1=\"" + detail::svg_num(py(fy)) +
           "\" x2=\"" + detail::svg_num(ML) + "\" y2=\"" + detail::svg_num(py(fy)) +
           "\" stroke=\"black\"/>\n";
    svg += "<text x=\"" + detail::svg_num(ML - 8) + "\" y=\"" + detail::svg_num(py(fy) + 4) +
           "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\">" +
           detail::tick_label(fy) + "</text>\n";
  }
  svg += "<text x=\"" + detail::svg_num((ML + W - MR) / 2) + "\" y=\"" + detail::svg_num(H - 12) +
         "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"13\">" +
         detail::xml_escape(x_label) + "</text>\n";
  svg += "<text x=\"18\" y=\"" + detail::svg_num((MT + H - MB) / 2) +
         "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"13\" "
         "transform=\"rotate(-90 18 " +
         detail::svg_num((MT + H - MB) / 2) + ")\">" + detail::xml_escape(y_label) + "</text>\n";

  double legend_y = MT + 8;
  for (const SvgSeries& s : series) {
    if (s.line && s.points.size() > 1) {
      std::string pts;
      for (const auto& [x, y] : s.points) {
        pts += detail::svg_num(px(x)) + "," + detail::svg_num(py(y)) + " ";
      }
      svg += "<polyline fill=\"none\" stroke=\"" + s.color + "\" stroke-width=\"1.5\" points=\"" +
             pts + "\"/>\n";
    }
    for (const auto& [x, y] : s.points) {
      svg += "<circle cx=\"" + detail::svg_num(px(x)) + "\" cy=\"" + detail::svg_num(py(y)) +
             "\" r=\"3\" fill=\"" + s.color + "\"/>\n";
    }
    if (!s.label.empty()) {
      svg += "<circle cx=\"" + detail::svg_num(W - MR - 120) + "\" cy=\"" +
             detail::svg_num(legend_y) + "\" r=\"4\" fill=\"" + s.color + "\"/>\n";
      svg += "<text x=\"" + detail::svg_num(W - MR - 110) + "\" y=\"" +
             detail::svg_num(legend_y + 4) +
             "\" font-family=\"sans-serif\" font-size=\"12\">" + detail::xml_escape(s.label) +
             "</text>\n";
      legend_y += 18;
    }
  }
  svg += "</svg>\n";
  return svg;
}

inline std::string profile_svg(const InteractionProfile& prof, const std::string& title) {
  SvgSeries s;
  s.label = "J";
  s.color = "#1f6fb4";
  for (std::size_t i = 0; i < prof.orders.size(); ++i) {
    s.points.emplace_back(static_cast<double>(prof.orders[i]) / static_cast<double>(prof.n),
                          prof.j[i]);
  }
  return svg_chart(title, "order / n", "relative interaction strength J", {s});
}

// --- Correlation table -----------------------------------------------------------

struct VariantSummary {
  std::string name;
  double m_value = 0;  // proxy M
  SafetyReport report;
};

struct CorrelationRow {
  std::string metric;
  std::optional<double> r;
  std::size_t points = 0;
};

// Pearson r between the proxy M and each metric across variants; variants
// missing a metric are dropped from that row.
inline std::vector<CorrelationRow> correlate(const std::vector<VariantSummary>& variants) {
  if (variants.size() < 3) {
    throw DataError("correlate: need at least 3 variants, got " +
                    std::to_string(variants.size()));
  }
  std::vector<CorrelationRow> rows;
  for (const std::string& metric : SafetyReport::metric_names()) {
    std::vector<double> xs, ys;
    for (const VariantSummary& v : variants) {
      const std::optional<double> y = v.report.metric(metric);
      if (y) {
        xs.push_back(v.m_value);
        ys.push_back(*y);
      }
    }
    CorrelationRow row;
    row.metric = metric;
    row.points = xs.size();
    row.r = xs.size() >= 2 ? pearson(xs, ys) : std::nullopt;
    rows.push_back(row);
  }
  return rows;
}

inline std::string correlation_csv(const std::vector<CorrelationRow>& rows) {
  std::string out = "metric,pearson_r,points\n";
  for (const CorrelationRow& row : rows) {
    out += row.metric + ",";
    if (row.r) out += format_double(*row.r);
    out += "," + std::to_string(row.points) + "\n";
  }
  return out;
}

inline std::string scatter_svg(const std::vector<VariantSummary>& variants,
                               const std::string& metric) {
  std::vector<SvgSeries> series;
  static const char* colors[] = {"#1f6fb4", "#d1495b", "#3a9d23", "#8a4fbf",
                                 "#e08902", "#00798c", "#665191", "#a05195"};
  std::size_t ci = 0;
  for (const VariantSummary& v : variants) {
    const std::optional<double> y = v.report.metric(metric);
    if (!y) continue;
    SvgSeries s;
    s.label = v.name;
    s.color = colors[ci++ % 8];
    s.line = false;
    s.points.emplace_back(v.m_value, *y);
    series.push_back(s);
  }
  return svg_chart("M vs " + metric, "proxy M", metric, series);
}

}  // namespace mixboost
