#include "cashbench/svg.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>

namespace cashbench {

namespace {

constexpr int kWidth = 640;
constexpr int kHeight = 420;
constexpr int kMargin = 56;

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", v);
  return buf;
}

struct Scale {
  double lo, hi;
  double px0, px1;
  double operator()(double v) const {
    if (hi <= lo) return px0;
    return px0 + (v - lo) / (hi - lo) * (px1 - px0);
  }
};

std::string header(int width = kWidth, int height = kHeight) {
  return "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" +
         std::to_string(width) + "\" height=\"" + std::to_string(height) +
         "\" viewBox=\"0 0 " + std::to_string(width) + " " +
         std::to_string(height) + "\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
}

std::string title_text(const std::string& title, int width = kWidth) {
  return "<text x=\"" + std::to_string(width / 2) +
         "\" y=\"20\" text-anchor=\"middle\" font-family=\"sans-serif\" "
         "font-size=\"14\">" +
         title + "</text>\n";
}

std::string line(double x1, double y1, double x2, double y2,
                 const std::string& stroke, double width = 1.0) {
  return "<line x1=\"" + num(x1) + "\" y1=\"" + num(y1) + "\" x2=\"" + num(x2) +
         "\" y2=\"" + num(y2) + "\" stroke=\"" + stroke + "\" stroke-width=\"" +
         num(width) + "\"/>\n";
}

std::string rect(double x, double y, double w, double h,
                 const std::string& fill) {
  return "<rect x=\"" + num(x) + "\" y=\"" + num(y) + "\" width=\"" + num(w) +
         "\" height=\"" + num(h) + "\" fill=\"" + fill +
         "\" stroke=\"black\"/>\n";
}

std::string circle(double x, double y, double r, const std::string& fill,
                   const std::string& stroke = "black") {
  return "<circle cx=\"" + num(x) + "\" cy=\"" + num(y) + "\" r=\"" + num(r) +
         "\" fill=\"" + fill + "\" stroke=\"" + stroke + "\"/>\n";
}

std::string text(double x, double y, const std::string& s,
                 const std::string& anchor = "middle", int size = 11) {
  return "<text x=\"" + num(x) + "\" y=\"" + num(y) + "\" text-anchor=\"" +
         anchor + "\" font-family=\"sans-serif\" font-size=\"" +
         std::to_string(size) + "\">" + s + "</text>\n";
}

const char* kPalette[] = {"#888888", "#7a5195", "#ef5675", "#ffa600",
                          "#003f5c", "#58508d"};

}  // namespace

std::string svg_box_whisker(const std::vector<BoxStats>& boxes,
                            const std::string& title) {
  double lo = std::numeric_limits<double>::max(), hi = -lo;
  for (const auto& b : boxes) {
    lo = std::min({lo, b.whisker_lo, b.assigned});
    hi = std::max({hi, b.whisker_hi, b.assigned});
  }
  double pad = 0.08 * (hi - lo + 1.0);
  Scale y{lo - pad, hi + pad, kHeight - kMargin, kMargin};

  std::string out = header() + title_text(title);
  out += line(kMargin, kMargin, kMargin, kHeight - kMargin, "black");
  out += line(kMargin, kHeight - kMargin, kWidth - kMargin, kHeight - kMargin,
              "black");
  double slot = (kWidth - 2.0 * kMargin) / std::max<std::size_t>(1, boxes.size());
  for (std::size_t i = 0; i < boxes.size(); ++i) {
    const auto& b = boxes[i];
    double cx = kMargin + slot * (i + 0.5);
    double half = 0.22 * slot;
    out += line(cx, y(b.whisker_lo), cx, y(b.q1), "black");
    out += line(cx, y(b.q3), cx, y(b.whisker_hi), "black");
    out += line(cx - half * 0.6, y(b.whisker_lo), cx + half * 0.6,
                y(b.whisker_lo), "black");
    out += line(cx - half * 0.6, y(b.whisker_hi), cx + half * 0.6,
                y(b.whisker_hi), "black");
    out += rect(cx - half, y(b.q3), 2 * half, y(b.q1) - y(b.q3), "#cfe2f3");
    out += line(cx - half, y(b.median), cx + half, y(b.median), "black", 2.0);
    // Assigned village mean as a marker line.
    out += line(cx - half * 1.3, y(b.assigned), cx + half * 1.3, y(b.assigned),
                "#cc0000", 1.5);
    out += text(cx, kHeight - kMargin + 16, b.label);
  }
  out += text(kMargin - 8, kMargin - 8, "USD", "end");
  out += "</svg>\n";
  return out;
}

std::string svg_cost_equivalence(const std::vector<ArmPoint>& points,
                                 double benchmark_cost,
                                 double predicted_at_benchmark,
                                 const std::string& outcome_label) {
  const int width = 2 * kWidth;
  double clo = 0.0, chi = benchmark_cost;
  double ylo = std::numeric_limits<double>::max(), yhi = -ylo;
  for (const auto& p : points) {
    chi = std::max(chi, p.cost);
    ylo = std::min(ylo, p.outcome);
    yhi = std::max(yhi, p.outcome);
  }
  ylo = std::min(ylo, predicted_at_benchmark);
  yhi = std::max(yhi, predicted_at_benchmark);
  double pad = 0.12 * (yhi - ylo + 1e-9);
  std::string out = header(width) +
                    title_text(outcome_label + ": cost equivalence (left) vs "
                                               "cost effectiveness (right)",
                              width);

  for (int panel = 0; panel < 2; ++panel) {
    double px0 = panel * kWidth + kMargin;
    double px1 = (panel + 1) * kWidth - kMargin;
    Scale x{clo - 0.05 * chi, chi * 1.08, px0, px1};
    Scale y{ylo - pad, yhi + pad, kHeight - kMargin, kMargin};
    out += line(px0, kMargin, px0, kHeight - kMargin, "black");
    out += line(px0, kHeight - kMargin, px1, kHeight - kMargin, "black");

    const ArmPoint* control = nullptr;
    for (const auto& p : points) {
      if (p.cost == 0.0 && !p.cash) control = &p;
    }

    if (panel == 0) {
      // Weighted-through-the-points cash line from the fit provided by the
      // caller: draw between the smallest and largest cash costs.
      double c_min = chi, c_max = 0.0, y_at_min = 0.0, y_at_max = 0.0;
      double slope_num = 0.0, slope_den = 0.0, cmean = 0.0, ymean = 0.0;
      int n_cash = 0;
      for (const auto& p : points) {
        if (!p.cash) continue;
        cmean += p.cost;
        ymean += p.outcome;
        ++n_cash;
      }
      if (n_cash >= 2) {
        cmean /= n_cash;
        ymean /= n_cash;
        for (const auto& p : points) {
          if (!p.cash) continue;
          slope_num += (p.cost - cmean) * (p.outcome - ymean);
          slope_den += (p.cost - cmean) * (p.cost - cmean);
        }
        double slope = slope_den > 0 ? slope_num / slope_den : 0.0;
        for (const auto& p : points) {
          if (!p.cash) continue;
          c_min = std::min(c_min, p.cost);
          c_max = std::max(c_max, p.cost);
        }
        c_min = std::min(c_min, benchmark_cost);
        y_at_min = ymean + slope * (c_min - cmean);
        y_at_max = ymean + slope * (c_max - cmean);
        out += line(x(c_min), y(y_at_min), x(c_max), y(y_at_max), "#7a5195", 2.0);
      }
      out += circle(x(benchmark_cost), y(predicted_at_benchmark), 6, "white",
                    "#7a5195");
    } else if (control) {
      for (const auto& p : points) {
        if (p.cost > 0.0) {
          out += line(x(0.0), y(control->outcome), x(p.cost), y(p.outcome),
                      "#bbbbbb");
        }
      }
    }

    int color = 0;
    for (const auto& p : points) {
      const char* fill = kPalette[color++ % 6];
      out += circle(x(p.cost), y(p.outcome), 5, p.cash ? fill : "#444444");
      out += text(x(p.cost), y(p.outcome) - 10, p.label);
    }
    out += line(x(benchmark_cost), kMargin, x(benchmark_cost),
                kHeight - kMargin, "#cccccc");
    out += text((px0 + px1) / 2, kHeight - kMargin + 28,
                "cost per eligible household (USD)");
  }
  out += "</svg>\n";
  return out;
}

std::string svg_bar_chart(const std::vector<std::string>& groups,
                          const std::vector<std::string>& arm_labels,
                          const std::vector<std::vector<double>>& shares,
                          const std::string& title) {
  std::string out = header() + title_text(title);
  Scale y{0.0, 1.0, kHeight - kMargin, kMargin};
  out += line(kMargin, kMargin, kMargin, kHeight - kMargin, "black");
  out += line(kMargin, kHeight - kMargin, kWidth - kMargin, kHeight - kMargin,
              "black");
  double slot = (kWidth - 2.0 * kMargin) / std::max<std::size_t>(1, groups.size());
  double bar = slot / (arm_labels.size() + 1.0);
  for (std::size_t g = 0; g < groups.size(); ++g) {
    for (std::size_t a = 0; a < arm_labels.size(); ++a) {
      double v = std::clamp(shares[g][a], 0.0, 1.0);
      double x0 = kMargin + slot * g + bar * (a + 0.5);
      out += rect(x0, y(v), bar * 0.9, (kHeight - kMargin) - y(v),
                  kPalette[a % 6]);
    }
    out += text(kMargin + slot * (g + 0.5), kHeight - kMargin + 16, groups[g]);
  }
  for (std::size_t a = 0; a < arm_labels.size(); ++a) {
    double lx = kMargin + 12;
    double ly = kMargin + 16.0 * a;
    out += rect(lx, ly - 8, 10, 10, kPalette[a % 6]);
    out += text(lx + 16, ly, arm_labels[a], "start");
  }
  out += text(kMargin - 8, kMargin - 8, "share", "end");
  out += "</svg>\n";
  return out;
}

std::string svg_cdf_curves(
    const std::map<std::string, std::vector<std::pair<double, double>>>& curves,
    const std::string& title) {
  double lo = std::numeric_limits<double>::max(), hi = -lo;
  for (const auto& [_, pts] : curves) {
    for (const auto& [x, p] : pts) {
      lo = std::min(lo, x);
      hi = std::max(hi, x);
    }
  }
  if (curves.empty() || lo > hi) {
    lo = -1.0;
    hi = 1.0;
  }
  double pad = 0.06 * (hi - lo + 1e-9);
  Scale x{lo - pad, hi + pad, kMargin, kWidth - kMargin};
  Scale y{0.0, 1.0, kHeight - kMargin, kMargin};
  std::string out = header() + title_text(title);
  out += line(kMargin, kMargin, kMargin, kHeight - kMargin, "black");
  out += line(kMargin, kHeight - kMargin, kWidth - kMargin, kHeight - kMargin,
              "black");
  int color = 0;
  for (const auto& [name, pts] : curves) {
    const char* stroke = kPalette[color % 6];
    std::string poly = "<polyline fill=\"none\" stroke=\"" +
                       std::string(stroke) + "\" stroke-width=\"1.5\" points=\"";
    for (const auto& [v, p] : pts) {
      poly += num(x(v)) + "," + num(y(p)) + " ";
    }
    poly += "\"/>\n";
    out += poly;
    out += text(kWidth - kMargin - 8, kMargin + 16.0 * color, name, "end");
    out += rect(kWidth - kMargin - 120, kMargin + 16.0 * color - 8, 10, 10,
                stroke);
    ++color;
  }
  out += text(kWidth / 2, kHeight - kMargin + 28, "predicted CATE");
  out += "</svg>\n";
  return out;
}

}  // namespace cashbench
