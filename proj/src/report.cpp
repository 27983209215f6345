#include "semipar/report.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>

namespace semipar {

namespace {

constexpr double kDayLength = 0.2;

std::string fixed(double v, int digits = 6) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

void check_table(const SkillTable& table) {
  if (table.methods.empty()) throw ConfigError("skill table has no methods");
  if (table.rmse.rows() != static_cast<Index>(table.methods.size())) {
    throw DimensionMismatchError("skill table rows do not match the method list");
  }
}

const char* const kPalette[] = {"#1b9e77", "#d95f02", "#7570b3", "#e7298a",
                                "#66a61e", "#e6ab02", "#a6761d", "#666666"};

}  // namespace

std::string skill_csv(const SkillTable& table) {
  check_table(table);
  std::ostringstream out;
  out << "lead_steps,lead_days,method,rmse\n";
  for (Index l = 0; l <= table.horizon(); ++l) {
    const double days = static_cast<double>(l) * table.tau / kDayLength;
    for (std::size_t k = 0; k < table.methods.size(); ++k) {
      out << l << ',' << fixed(days, 3) << ',' << table.methods[k] << ','
          << fixed(table.rmse(static_cast<Index>(k), l)) << '\n';
    }
  }
  return out.str();
}

std::string skill_summary(const SkillTable& table, const std::string& title) {
  check_table(table);
  std::ostringstream out;
  out << title << '\n';
  out << "initial conditions: " << table.initial_conditions << '\n';
  out << "climatological error: " << fixed(table.climatology, 4) << '\n';
  if (!table.analysis_rmse.empty()) {
    out << "\nanalysis RMSE over the evaluation window\n";
    for (const auto& [method, v] : table.analysis_rmse) out << "  " << method << ": " << fixed(v, 4) << '\n';
  }
  out << "\nRMSE by lead (steps)\n";
  const Index horizon = table.horizon();
  std::vector<Index> leads = {0, 1, 5, 10, 16, 20, 30, 40, 50};
  leads.erase(std::remove_if(leads.begin(), leads.end(), [&](Index l) { return l > horizon; }),
              leads.end());
  if (leads.empty() || leads.back() != horizon) leads.push_back(horizon);
  for (Index l : leads) {
    std::vector<std::size_t> order(table.methods.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      return table.rmse(static_cast<Index>(a), l) < table.rmse(static_cast<Index>(b), l);
    });
    out << "  lead " << l << ':';
    for (std::size_t k : order) {
      out << ' ' << table.methods[k] << '=' << fixed(table.rmse(static_cast<Index>(k), l), 4);
    }
    out << '\n';
  }
  out << "\ncapped (divergent) forecasts / diverged members / density resets\n";
  for (std::size_t k = 0; k < table.methods.size(); ++k) {
    out << "  " << table.methods[k] << ": " << table.capped[k] << " / "
        << table.member_divergences[k] << " / " << table.density_resets[k] << '\n';
  }
  for (const auto& [method, why] : table.failures) out << "filter failure (" << method << "): " << why << '\n';
  return out.str();
}

std::string skill_svg(const SkillTable& table, const std::string& title) {
  check_table(table);
  const double width = 720, height = 440, left = 60, right = 150, top = 40, bottom = 50;
  const double plot_w = width - left - right;
  const double plot_h = height - top - bottom;
  const Index horizon = std::max<Index>(table.horizon(), 1);
  double ymax = table.climatology;
  for (Index i = 0; i < table.rmse.size(); ++i) {
    if (std::isfinite(table.rmse.data()[i])) ymax = std::max(ymax, table.rmse.data()[i]);
  }
  ymax = ymax > 0.0 ? 1.05 * ymax : 1.0;
  auto px = [&](double lead) { return left + plot_w * lead / static_cast<double>(horizon); };
  auto py = [&](double v) { return top + plot_h * (1.0 - std::min(v, ymax) / ymax); };

  std::ostringstream out;
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
      << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  out << "<text x=\"" << left << "\" y=\"24\" font-size=\"14\">" << title << "</text>\n";
  out << "<line x1=\"" << left << "\" y1=\"" << top + plot_h << "\" x2=\"" << left + plot_w
      << "\" y2=\"" << top + plot_h << "\" stroke=\"black\"/>\n";
  out << "<line x1=\"" << left << "\" y1=\"" << top << "\" x2=\"" << left << "\" y2=\""
      << top + plot_h << "\" stroke=\"black\"/>\n";
  for (int tick = 0; tick <= 5; ++tick) {
    const double lead = static_cast<double>(horizon) * tick / 5.0;
    const double v = ymax * tick / 5.0;
    out << "<text x=\"" << fixed(px(lead), 1) << "\" y=\"" << top + plot_h + 16
        << "\" text-anchor=\"middle\">" << fixed(lead, 0) << "</text>\n";
    out << "<text x=\"" << left - 6 << "\" y=\"" << fixed(py(v) + 4, 1)
        << "\" text-anchor=\"end\">" << fixed(v, 2) << "</text>\n";
  }
  out << "<text x=\"" << left + plot_w / 2 << "\" y=\"" << height - 12
      << "\" text-anchor=\"middle\">lead (steps)</text>\n";
  out << "<text x=\"16\" y=\"" << top + plot_h / 2 << "\" transform=\"rotate(-90 16 "
      << top + plot_h / 2 << ")\" text-anchor=\"middle\">RMSE</text>\n";

  auto legend = [&](std::size_t slot, const std::string& color, const std::string& label,
                    const char* dash) {
    const double y = top + 16.0 * static_cast<double>(slot);
    out << "<line x1=\"" << left + plot_w + 12 << "\" y1=\"" << y << "\" x2=\"" << left + plot_w + 36
        << "\" y2=\"" << y << "\" stroke=\"" << color << "\" stroke-width=\"2\"" << dash << "/>\n";
    out << "<text x=\"" << left + plot_w + 42 << "\" y=\"" << y + 4 << "\">" << label << "</text>\n";
  };

  for (std::size_t k = 0; k < table.methods.size(); ++k) {
    const std::string color = kPalette[k % (sizeof kPalette / sizeof kPalette[0])];
    out << "<polyline class=\"method\" data-method=\"" << table.methods[k]
        << "\" fill=\"none\" stroke=\"" << color << "\" stroke-width=\"2\" points=\"";
    for (Index l = 0; l <= table.horizon(); ++l) {
      double v = table.rmse(static_cast<Index>(k), l);
      if (!std::isfinite(v)) v = ymax;
      out << (l > 0 ? " " : "") << fixed(px(static_cast<double>(l)), 2) << ',' << fixed(py(v), 2);
    }
    out << "\"/>\n";
    legend(k, color, table.methods[k], "");
  }
  out << "<polyline class=\"climatology\" fill=\"none\" stroke=\"black\" stroke-dasharray=\"6 4\" "
         "points=\""
      << fixed(px(0.0), 2) << ',' << fixed(py(table.climatology), 2) << ' '
      << fixed(px(static_cast<double>(horizon)), 2) << ',' << fixed(py(table.climatology), 2)
      << "\"/>\n";
  legend(table.methods.size(), "black", "climatology", " stroke-dasharray=\"6 4\"");
  out << "</svg>\n";
  return out.str();
}

void emit_report(const SkillTable& table, const std::string& dir, const std::string& title) {
  check_table(table);
  std::filesystem::create_directories(dir);
  const std::filesystem::path base(dir);
  auto write = [&](const char* name, const std::string& text) {
    std::ofstream out(base / name, std::ios::binary);
    if (!out) throw ConfigError("cannot write " + (base / name).string());
    out << text;
  };
  write("skill.csv", skill_csv(table));
  write("summary.txt", skill_summary(table, title));
  write("skill.svg", skill_svg(table, title));
}

}  // namespace semipar
