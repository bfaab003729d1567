#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>

#include "zst/csv.hpp"
#include "zst/harness.hpp"

namespace zst {

PlotKind parse_plot_kind(const std::string& text) {
  if (text == "overlay") return PlotKind::kOverlay;
  if (text == "control_profile") return PlotKind::kControlProfile;
  if (text == "error_curve") return PlotKind::kErrorCurve;
  if (text == "speed_heatmap") return PlotKind::kSpeedHeatmap;
  throw std::invalid_argument("unknown plot '" + text +
                              "' (expected overlay|control_profile|error_curve|speed_heatmap)");
}

std::string to_string(PlotKind kind) {
  switch (kind) {
    case PlotKind::kOverlay: return "overlay";
    case PlotKind::kControlProfile: return "control_profile";
    case PlotKind::kErrorCurve: return "error_curve";
    case PlotKind::kSpeedHeatmap: return "speed_heatmap";
  }
  return "?";
}

namespace {

struct Series {
  std::vector<double> x, y;
  std::string color;
  bool scatter = false;
  std::vector<double> value;  // colour scale for scatter series
};

Series line(std::string color) {
  Series s;
  s.color = std::move(color);
  return s;
}

struct Bounds {
  double x0 = std::numeric_limits<double>::infinity(), x1 = -x0;
  double y0 = x0, y1 = -x0;
  void add(double x, double y) {
    if (!std::isfinite(x) || !std::isfinite(y)) return;
    x0 = std::min(x0, x);
    x1 = std::max(x1, x);
    y0 = std::min(y0, y);
    y1 = std::max(y1, y);
  }
};

std::string heat_color(double t) {
  t = std::clamp(t, 0.0, 1.0);
  const int r = static_cast<int>(255 * t);
  const int b = static_cast<int>(255 * (1.0 - t));
  return "rgb(" + std::to_string(r) + ",60," + std::to_string(b) + ")";
}

void write_svg(const std::filesystem::path& file, const std::string& title,
               const std::vector<Series>& series, bool equal_axes) {
  Bounds b;
  for (const Series& s : series) {
    for (std::size_t i = 0; i < s.x.size(); ++i) b.add(s.x[i], s.y[i]);
  }
  if (!std::isfinite(b.x0)) b = {0, 1, 0, 1};
  if (b.x1 - b.x0 < 1e-9) b.x1 = b.x0 + 1.0;
  if (b.y1 - b.y0 < 1e-9) b.y1 = b.y0 + 1.0;
  const double width = 800, height = 500, margin = 40;
  double sx = (width - 2 * margin) / (b.x1 - b.x0);
  double sy = (height - 2 * margin) / (b.y1 - b.y0);
  if (equal_axes) sx = sy = std::min(sx, sy);
  auto px = [&](double x) { return margin + (x - b.x0) * sx; };
  auto py = [&](double y) { return height - margin - (y - b.y0) * sy; };

  std::ofstream out(file);
  if (!out) throw std::runtime_error("cannot open '" + file.string() + "' for writing");
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
      << "\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
      << "<text x=\"" << margin << "\" y=\"24\" font-family=\"sans-serif\" font-size=\"14\">"
      << title << "</text>\n";
  double vmin = std::numeric_limits<double>::infinity(), vmax = -vmin;
  for (const Series& s : series) {
    for (double v : s.value) {
      vmin = std::min(vmin, v);
      vmax = std::max(vmax, v);
    }
  }
  for (const Series& s : series) {
    if (s.scatter) {
      for (std::size_t i = 0; i < s.x.size(); ++i) {
        const double t = s.value.empty() || vmax <= vmin ? 0.5 : (s.value[i] - vmin) / (vmax - vmin);
        out << "<circle cx=\"" << px(s.x[i]) << "\" cy=\"" << py(s.y[i]) << "\" r=\"1.5\" fill=\""
            << (s.value.empty() ? s.color : heat_color(t)) << "\"/>\n";
      }
      continue;
    }
    out << "<polyline fill=\"none\" stroke=\"" << s.color << "\" stroke-width=\"1.5\" points=\"";
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      if (std::isfinite(s.x[i]) && std::isfinite(s.y[i])) out << px(s.x[i]) << ',' << py(s.y[i]) << ' ';
    }
    out << "\"/>\n";
  }
  out << "</svg>\n";
}

const RunTrace& need_trace(const RunTrace* trace, PlotKind kind) {
  if (trace == nullptr) throw std::invalid_argument(to_string(kind) + " plot needs a trace");
  return *trace;
}

}  // namespace

void export_plot(PlotKind kind, const RunTrace* trace, const ErrorSummary* summary,
                 const ReferencePath& path, const std::filesystem::path& out, bool svg) {
  std::ofstream csv_out(out);
  if (!csv_out) throw std::runtime_error("cannot open '" + out.string() + "' for writing");
  using csv::format;
  std::vector<Series> series;
  bool equal_axes = false;

  switch (kind) {
    case PlotKind::kOverlay: {
      const RunTrace& tr = need_trace(trace, kind);
      csv_out << "t,x,y,ref_x,ref_y\n";
      Series ref = line("gray"), vehicle = line("crimson");
      for (std::size_t i = 0; i < path.size(); ++i) {
        ref.x.push_back(path[i].x);
        ref.y.push_back(path[i].y);
      }
      if (path.closed() && path.size() > 0) {
        ref.x.push_back(path[0].x);
        ref.y.push_back(path[0].y);
      }
      for (const TraceRecord& r : tr.records) {
        const ReferenceSample& ref_sample = path[std::min(r.ref_idx, path.size() - 1)];
        csv_out << csv::join({format(r.t), format(r.truth.x), format(r.truth.y),
                              format(ref_sample.x), format(ref_sample.y)})
                << '\n';
        vehicle.x.push_back(r.truth.x);
        vehicle.y.push_back(r.truth.y);
      }
      series = {ref, vehicle};
      equal_axes = true;
      break;
    }
    case PlotKind::kControlProfile: {
      const RunTrace& tr = need_trace(trace, kind);
      csv_out << "t,steering,throttle\n";
      Series steer = line("steelblue"), throttle = line("darkorange");
      for (const TraceRecord& r : tr.records) {
        csv_out << csv::join({format(r.t), format(r.command.steering()), format(r.command.throttle())})
                << '\n';
        steer.x.push_back(r.t);
        steer.y.push_back(r.command.steering());
        throttle.x.push_back(r.t);
        throttle.y.push_back(r.command.throttle());
      }
      series = {steer, throttle};
      break;
    }
    case PlotKind::kErrorCurve: {
      if (summary == nullptr) throw std::invalid_argument("error_curve plot needs an error summary");
      if (summary->mean_error.size() != path.size()) {
        throw std::invalid_argument("error summary does not match the path");
      }
      csv_out << "ref_idx,s,x,y,mean_err,count\n";
      Series curve = line("crimson");
      for (std::size_t i = 0; i < path.size(); ++i) {
        csv_out << csv::join({std::to_string(i), format(path[i].s), format(path[i].x),
                              format(path[i].y), format(summary->mean_error[i]),
                              std::to_string(summary->count[i])})
                << '\n';
        curve.x.push_back(path[i].s);
        curve.y.push_back(summary->mean_error[i]);
      }
      series = {curve};
      break;
    }
    case PlotKind::kSpeedHeatmap: {
      const RunTrace& tr = need_trace(trace, kind);
      csv_out << "x,y,v\n";
      Series dots;
      dots.scatter = true;
      for (const TraceRecord& r : tr.records) {
        csv_out << csv::join({format(r.truth.x), format(r.truth.y), format(r.truth.v)}) << '\n';
        dots.x.push_back(r.truth.x);
        dots.y.push_back(r.truth.y);
        dots.value.push_back(r.truth.v);
      }
      series = {dots};
      equal_axes = true;
      break;
    }
  }
  csv_out.flush();
  if (!csv_out) throw std::runtime_error("failed writing '" + out.string() + "'");
  if (svg) {
    std::filesystem::path svg_file = out;
    svg_file.replace_extension(".svg");
    write_svg(svg_file, to_string(kind), series, equal_axes);
  }
}

}  // namespace zst
