#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <stdexcept>
#include <string>
#include <string_view>
#include <system_error>
#include <type_traits>
#include <vector>

#include "clusterflow/laws.hpp"

namespace clusterflow {

/// Shortest round-trip decimal form; identical bytes on every run.
inline std::string format_double(double x) {
  if (std::isnan(x)) return "nan";
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, res.ptr);
}

inline std::string format_fixed(double x, int digits) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, x, std::chars_format::fixed, digits);
  return std::string(buf, res.ptr);
}

/// Output files of one run, keyed by relative path. Written by a single
/// collector once all work is done.
using Artifacts = std::map<std::string, std::string>;

class CsvWriter {
 public:
  explicit CsvWriter(const std::vector<std::string>& header) { append_row(header); }

  template <class... Cells>
  CsvWriter& row(const Cells&... cells) {
    std::vector<std::string> fields{cell(cells)...};
    append_row(fields);
    return *this;
  }

  const std::string& str() const noexcept { return text_; }

 private:
  static std::string cell(const std::string& s) { return s; }
  static std::string cell(std::string_view s) { return std::string(s); }
  static std::string cell(const char* s) { return s; }
  static std::string cell(bool b) { return b ? "true" : "false"; }
  static std::string cell(double x) { return format_double(x); }
  static std::string cell(const BigInt& v) { return v.str(); }
  template <class Int, std::enable_if_t<std::is_integral_v<Int>, int> = 0>
  static std::string cell(Int v) {
    return std::to_string(v);
  }

  void append_row(const std::vector<std::string>& fields) {
    for (std::size_t i = 0; i < fields.size(); ++i) {
      if (i > 0) text_ += ',';
      const auto& f = fields[i];
      if (f.find_first_of(",\"\n") == std::string::npos) {
        text_ += f;
      } else {
        text_ += '"';
        for (char c : f) {
          if (c == '"') text_ += '"';
          text_ += c;
        }
        text_ += '"';
      }
    }
    text_ += '\n';
  }

  std::string text_;
};

inline void write_artifacts(const std::filesystem::path& dir, const Artifacts& files) {
  std::filesystem::create_directories(dir);
  for (const auto& [name, contents] : files) {
    const auto path = dir / name;
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
    out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
    if (!out) throw std::runtime_error("failed writing " + path.string());
  }
}

// ---------------------------------------------------------------------------
// SVG

struct Series {
  std::string label;
  std::vector<double> x;
  std::vector<double> y;
  bool step = false;  // draw as a right-continuous step function
};

struct Segment {
  double x0, y0, x1, y1;
};

struct Panel {
  std::string title;
  std::string x_label;
  std::string y_label;
  std::vector<Series> series;
  std::vector<Segment> segments;
  bool flip_y = false;  // y grows downwards
};

/// Multi-panel line plot. `render` returns the SVG and `sidecar` the CSV of
/// exactly the numbers drawn.
class Figure {
 public:
  explicit Figure(std::string title) : title_(std::move(title)) {}

  Panel& add_panel(Panel p) {
    panels_.push_back(std::move(p));
    return panels_.back();
  }

  std::string render() const {
    const int pw = 420, ph = 320, margin = 50, top = 40;
    const int width = static_cast<int>(panels_.size()) * pw + margin;
    const int height = ph + top + margin;
    std::string s = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + std::to_string(width) + "\" height=\"" +
                    std::to_string(height) + "\" font-family=\"sans-serif\" font-size=\"11\">\n";
    s += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    s += "<text x=\"" + std::to_string(width / 2) + "\" y=\"18\" text-anchor=\"middle\" font-size=\"14\">" +
         escape(title_) + "</text>\n";
    for (std::size_t k = 0; k < panels_.size(); ++k) {
      s += render_panel(panels_[k], margin + static_cast<int>(k) * pw, top, pw - margin, ph - margin);
    }
    s += "</svg>\n";
    return s;
  }

  std::string sidecar() const {
    CsvWriter csv({"panel", "series", "x", "y"});
    for (const auto& p : panels_) {
      for (const auto& ser : p.series)
        for (std::size_t i = 0; i < ser.x.size(); ++i) csv.row(p.title, ser.label, ser.x[i], ser.y[i]);
      for (const auto& seg : p.segments) {
        csv.row(p.title, std::string("segment"), seg.x0, seg.y0);
        csv.row(p.title, std::string("segment"), seg.x1, seg.y1);
      }
    }
    return csv.str();
  }

  /// Adds `<stem>.svg` and `<stem>.csv`.
  void emit(Artifacts& out, const std::string& stem) const {
    out[stem + ".svg"] = render();
    out[stem + ".csv"] = sidecar();
  }

 private:
  static std::string escape(const std::string& in) {
    std::string o;
    for (char c : in) {
      switch (c) {
        case '<': o += "&lt;"; break;
        case '>': o += "&gt;"; break;
        case '&': o += "&amp;"; break;
        case '"': o += "&quot;"; break;
        default: o += c;
      }
    }
    return o;
  }

  static std::string colour(std::size_t i) {
    static const char* palette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e",
                                    "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};
    return palette[i % 10];
  }

  static std::string render_panel(const Panel& p, int ox, int oy, int w, int h) {
    double xmin = std::numeric_limits<double>::infinity(), xmax = -xmin;
    double ymin = xmin, ymax = -xmin;
    auto extend = [&](double x, double y) {
      xmin = std::min(xmin, x);
      xmax = std::max(xmax, x);
      ymin = std::min(ymin, y);
      ymax = std::max(ymax, y);
    };
    for (const auto& ser : p.series)
      for (std::size_t i = 0; i < ser.x.size(); ++i) extend(ser.x[i], ser.y[i]);
    for (const auto& seg : p.segments) {
      extend(seg.x0, seg.y0);
      extend(seg.x1, seg.y1);
    }
    if (!std::isfinite(xmin)) xmin = 0, xmax = 1, ymin = 0, ymax = 1;
    if (xmax <= xmin) xmax = xmin + 1;
    if (ymax <= ymin) ymax = ymin + 1;
    auto sx = [&](double x) { return format_fixed(ox + (x - xmin) / (xmax - xmin) * w, 2); };
    auto sy = [&](double y) {
      const double f = (y - ymin) / (ymax - ymin);
      return format_fixed(oy + (p.flip_y ? f : 1.0 - f) * h, 2);
    };

    std::string s = "<g>\n";
    s += "<rect x=\"" + std::to_string(ox) + "\" y=\"" + std::to_string(oy) + "\" width=\"" + std::to_string(w) +
         "\" height=\"" + std::to_string(h) + "\" fill=\"none\" stroke=\"black\"/>\n";
    s += "<text x=\"" + std::to_string(ox + w / 2) + "\" y=\"" + std::to_string(oy - 6) +
         "\" text-anchor=\"middle\">" + escape(p.title) + "</text>\n";
    s += "<text x=\"" + std::to_string(ox + w / 2) + "\" y=\"" + std::to_string(oy + h + 30) +
         "\" text-anchor=\"middle\">" + escape(p.x_label) + "</text>\n";
    s += "<text x=\"" + std::to_string(ox - 36) + "\" y=\"" + std::to_string(oy + h / 2) +
         "\" transform=\"rotate(-90 " + std::to_string(ox - 36) + " " + std::to_string(oy + h / 2) +
         ")\" text-anchor=\"middle\">" + escape(p.y_label) + "</text>\n";
    for (double f : {0.0, 0.5, 1.0}) {
      const double xv = xmin + f * (xmax - xmin);
      const double yv = ymin + f * (ymax - ymin);
      s += "<text x=\"" + sx(xv) + "\" y=\"" + std::to_string(oy + h + 14) + "\" text-anchor=\"middle\">" +
           format_fixed(xv, 2) + "</text>\n";
      s += "<text x=\"" + std::to_string(ox - 4) + "\" y=\"" + sy(yv) + "\" text-anchor=\"end\">" +
           format_fixed(yv, 2) + "</text>\n";
    }
    for (const auto& seg : p.segments) {
      s += "<line x1=\"" + sx(seg.x0) + "\" y1=\"" + sy(seg.y0) + "\" x2=\"" + sx(seg.x1) + "\" y2=\"" + sy(seg.y1) +
           "\" stroke=\"#444\" stroke-width=\"0.8\"/>\n";
    }
    for (std::size_t k = 0; k < p.series.size(); ++k) {
      const auto& ser = p.series[k];
      if (ser.x.empty()) continue;
      std::string pts;
      for (std::size_t i = 0; i < ser.x.size(); ++i) {
        if (ser.step && i > 0) pts += sx(ser.x[i]) + "," + sy(ser.y[i - 1]) + " ";
        pts += sx(ser.x[i]) + "," + sy(ser.y[i]) + " ";
      }
      s += "<polyline fill=\"none\" stroke=\"" + colour(k) + "\" stroke-width=\"1.2\" points=\"" + pts + "\"/>\n";
      s += "<text x=\"" + std::to_string(ox + w - 4) + "\" y=\"" + std::to_string(oy + 14 + 13 * static_cast<int>(k)) +
           "\" text-anchor=\"end\" fill=\"" + colour(k) + "\">" + escape(ser.label) + "</text>\n";
    }
    s += "</g>\n";
    return s;
  }

  std::string title_;
  std::vector<Panel> panels_;
};

}  // namespace clusterflow
