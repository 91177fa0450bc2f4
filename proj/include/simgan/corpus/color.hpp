#pragma once

#include <algorithm>
#include <array>
#include <cmath>

namespace simgan::corpus {

/// HSV saturation of an RGB triple; 0 for black.
inline float saturation(float r, float g, float b)
{
    const float mx = std::max({r, g, b});
    const float mn = std::min({r, g, b});
    return mx <= 0.0f ? 0.0f : (mx - mn) / mx;
}

/// Hue in degrees [0, 360); 0 for achromatic input.
inline double hue_degrees(double r, double g, double b)
{
    const double mx = std::max({r, g, b});
    const double mn = std::min({r, g, b});
    const double d = mx - mn;
    if (d <= 0.0) {
        return 0.0;
    }
    double h = 0.0;
    if (mx == r) {
        h = std::fmod((g - b) / d, 6.0);
    } else if (mx == g) {
        h = (b - r) / d + 2.0;
    } else {
        h = (r - g) / d + 4.0;
    }
    h *= 60.0;
    return h < 0.0 ? h + 360.0 : h;
}

/// h in degrees, s and v in [0,1].
inline std::array<float, 3> hsv_to_rgb(double h, double s, double v)
{
    h = std::fmod(h, 360.0);
    if (h < 0.0) {
        h += 360.0;
    }
    s = std::clamp(s, 0.0, 1.0);
    v = std::clamp(v, 0.0, 1.0);
    const double c = v * s;
    const double x = c * (1.0 - std::abs(std::fmod(h / 60.0, 2.0) - 1.0));
    const double m = v - c;
    double r = 0, g = 0, b = 0;
    switch (static_cast<int>(h / 60.0)) {
    case 0:
        r = c, g = x;
        break;
    case 1:
        r = x, g = c;
        break;
    case 2:
        g = c, b = x;
        break;
    case 3:
        g = x, b = c;
        break;
    case 4:
        r = x, b = c;
        break;
    default:
        r = c, b = x;
        break;
    }
    return {static_cast<float>(r + m), static_cast<float>(g + m), static_cast<float>(b + m)};
}

} // namespace simgan::corpus
