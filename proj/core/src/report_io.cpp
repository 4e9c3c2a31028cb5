#include "livekt/report_io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include <json.hpp>

#include "livekt/error.hpp"

namespace livekt {

std::string report_to_json(const std::vector<EvalEntry>& entries) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& e : entries) {
    nlohmann::json j;
    j["dataset"] = e.dataset;
    j["model"] = e.model;
    j["T"] = e.T;
    if (e.auc) {
      j["auc"] = *e.auc;
    } else {
      j["auc"] = nullptr;
    }
    j["accuracy"] = e.accuracy;
    j["logloss"] = e.logloss;
    j["n_test_rows"] = e.n_test_rows;
    j["fit_seconds"] = e.fit_seconds;
    j["predict_seconds"] = e.predict_seconds;
    j["epochs"] = e.epochs;
    arr.push_back(std::move(j));
  }
  return arr.dump(2) + "\n";
}

std::string report_to_csv(const std::vector<EvalEntry>& entries) {
  std::ostringstream os;
  os << "dataset,model,T,auc,accuracy,logloss,n_test_rows,fit_seconds,predict_seconds,epochs\n";
  char buf[64];
  for (const auto& e : entries) {
    os << e.dataset << ',' << e.model << ',' << e.T << ',';
    if (e.auc) {
      std::snprintf(buf, sizeof(buf), "%.6f", *e.auc);
      os << buf;
    } else {
      os << "na";
    }
    std::snprintf(buf, sizeof(buf), ",%.6f,%.6f,", e.accuracy, e.logloss);
    os << buf << e.n_test_rows;
    std::snprintf(buf, sizeof(buf), ",%.6f,%.6f,", e.fit_seconds, e.predict_seconds);
    os << buf << e.epochs << '\n';
  }
  return os.str();
}

namespace {

constexpr const char* kPalette[] = {"#4477aa", "#ee6677", "#228833", "#ccbb44",
                                    "#66ccee", "#aa3377", "#bbbbbb"};

struct Series {
  std::string model;
  std::vector<std::pair<double, double>> points;  // (T, value)
};

void draw_chart(std::ostringstream& os, const std::vector<Series>& series, double x0, double y0,
                double w, double h, const std::string& title, bool log_y) {
  double xmin = 1e300, xmax = -1e300, ymin = 1e300, ymax = -1e300;
  for (const auto& s : series) {
    for (const auto& [x, y] : s.points) {
      xmin = std::min(xmin, x);
      xmax = std::max(xmax, x);
      ymin = std::min(ymin, y);
      ymax = std::max(ymax, y);
    }
  }
  if (xmin > xmax) return;
  if (xmax == xmin) xmax = xmin + 1.0;
  if (ymax == ymin) ymax = ymin + (log_y ? ymin : 1.0) + 1e-12;

  const auto ty = [&](double y) {
    if (log_y) {
      const double lo = std::log10(std::max(ymin, 1e-9));
      const double hi = std::log10(std::max(ymax, 1e-9));
      return y0 + h - h * (std::log10(std::max(y, 1e-9)) - lo) / std::max(hi - lo, 1e-12);
    }
    return y0 + h - h * (y - ymin) / (ymax - ymin);
  };
  const auto tx = [&](double x) { return x0 + w * (x - xmin) / (xmax - xmin); };

  os << "<rect x='" << x0 << "' y='" << y0 << "' width='" << w << "' height='" << h
     << "' fill='none' stroke='#999'/>\n";
  os << "<text x='" << x0 << "' y='" << y0 - 8 << "' font-size='14' fill='#333'>" << title
     << "</text>\n";

  std::size_t ci = 0;
  for (const auto& s : series) {
    const char* color = kPalette[ci % (sizeof(kPalette) / sizeof(kPalette[0]))];
    os << "<polyline fill='none' stroke='" << color << "' stroke-width='2' points='";
    for (const auto& [x, y] : s.points) os << tx(x) << ',' << ty(y) << ' ';
    os << "'/>\n";
    for (const auto& [x, y] : s.points) {
      os << "<circle cx='" << tx(x) << "' cy='" << ty(y) << "' r='3' fill='" << color << "'/>\n";
    }
    os << "<text x='" << x0 + w + 10 << "' y='" << y0 + 16.0 * static_cast<double>(ci + 1)
       << "' font-size='12' fill='" << color << "'>" << s.model << "</text>\n";
    ++ci;
  }
  for (const auto& s : series) {
    for (const auto& [x, y] : s.points) {
      (void)y;
      os << "<text x='" << tx(x) - 4 << "' y='" << y0 + h + 14 << "' font-size='10' fill='#555'>"
         << static_cast<int>(x) << "</text>\n";
    }
    break;
  }
  char lab[32];
  std::snprintf(lab, sizeof(lab), "%.3g", ymin);
  os << "<text x='" << x0 - 6 << "' y='" << y0 + h << "' font-size='10' fill='#555' text-anchor='end'>" << lab
     << "</text>\n";
  std::snprintf(lab, sizeof(lab), "%.3g", ymax);
  os << "<text x='" << x0 - 6 << "' y='" << y0 + 10 << "' font-size='10' fill='#555' text-anchor='end'>" << lab
     << "</text>\n";
}

}  // namespace

std::string report_to_svg(const std::vector<EvalEntry>& entries) {
  std::map<std::string, Series> auc_series, time_series;
  std::vector<std::string> model_order;
  for (const auto& e : entries) {
    if (!auc_series.count(e.model)) model_order.push_back(e.model);
    auto& a = auc_series[e.model];
    a.model = e.model;
    if (e.auc) a.points.emplace_back(e.T, *e.auc);
    auto& t = time_series[e.model];
    t.model = e.model;
    t.points.emplace_back(e.T, e.fit_seconds + e.predict_seconds);
  }
  std::vector<Series> auc_v, time_v;
  for (const auto& m : model_order) {
    auc_v.push_back(auc_series[m]);
    time_v.push_back(time_series[m]);
  }

  std::ostringstream os;
  os << "<svg xmlns='http://www.w3.org/2000/svg' width='640' height='560' "
        "font-family='sans-serif'>\n";
  os << "<rect width='640' height='560' fill='white'/>\n";
  draw_chart(os, auc_v, 70, 40, 440, 190, "AUC vs T", false);
  draw_chart(os, time_v, 70, 310, 440, 190, "fit+predict seconds vs T", true);
  os << "</svg>\n";
  return os.str();
}

void write_file_atomic(const std::string& path, const std::string& content) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw RuntimeError("cannot write '" + tmp + "'");
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!out) throw RuntimeError("short write to '" + tmp + "'");
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw RuntimeError("cannot rename '" + tmp + "' to '" + path + "': " + ec.message());
}

}  // namespace livekt
