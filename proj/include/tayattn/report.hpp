#pragma once

#include <cmath>
#include <string>

#include <json.hpp>

#include "tayattn/grad.hpp"
#include "tayattn/verify.hpp"

namespace tayattn {

namespace detail {

// JSON has no Inf/NaN; non-finite measurements are written as strings.
inline nlohmann::json json_number(double x) {
  if (std::isfinite(x)) return x;
  return std::isnan(x) ? "nan" : (x > 0 ? "inf" : "-inf");
}

}  // namespace detail

inline nlohmann::json to_json(const GradReport& r) {
  return {{"path", r.path},
          {"config", r.config},
          {"h", r.h},
          {"max_rel_err", detail::json_number(r.max_rel_err)},
          {"max_abs_err", detail::json_number(r.max_abs_err)},
          {"noise_floor", detail::json_number(r.noise_floor)},
          {"below_noise", r.below_noise},
          {"pass", r.pass}};
}

inline nlohmann::json to_json(const SuiteReport& r) {
  nlohmann::json checks = nlohmann::json::array();
  for (const auto& c : r.checks) {
    checks.push_back({{"name", c.name},
                      {"config", c.config},
                      {"measured", detail::json_number(c.measured)},
                      {"tolerance", c.tolerance},
                      {"pass", c.pass}});
  }
  return {{"suite", r.suite}, {"checks", std::move(checks)}, {"all_pass", r.all_pass()}};
}

}  // namespace tayattn
