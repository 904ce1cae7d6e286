#pragma once

#include <span>
#include <string>

#include "pvcast/model.hpp"

namespace pvcast {

/// Static SVG of a 24-step forecast in watts: expected value line, the 10-90%
/// band for pdf forecasts, and the observed expected values when given.
std::string forecast_svg(const std::string& title, const Forecast& forecast, double p_max,
                         std::span<const double> observed = {});

}  // namespace pvcast
