#pragma once

#include <string>

#include "semipar/harness.hpp"

namespace semipar {

/// lead_steps,lead_days,method,rmse with one day = 0.2 time units.
std::string skill_csv(const SkillTable& table);
std::string skill_summary(const SkillTable& table, const std::string& title);
/// RMSE against lead time, one polyline per method plus the climatology.
std::string skill_svg(const SkillTable& table, const std::string& title);

/// Writes skill.csv, summary.txt and skill.svg into `dir` (created if needed).
void emit_report(const SkillTable& table, const std::string& dir, const std::string& title);

}  // namespace semipar
