#include "plumecast/render.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <string>
#include <vector>

#include "plumecast/error.hpp"

namespace plumecast::render {

Colormap colormap_from_name(std::string_view s) {
  if (s == "grayscale" || s == "gray") return Colormap::grayscale;
  if (s == "diverging") return Colormap::diverging;
  throw ConfigError("colormap", "unknown colormap '" + std::string(s) + "' (expected grayscale or diverging)");
}

void RenderConfig::validate() const {
  if (clamp_min && !std::isfinite(*clamp_min)) throw ConfigError("clamp_min", "must be finite");
  if (clamp_max && !std::isfinite(*clamp_max)) throw ConfigError("clamp_max", "must be finite");
  if (clamp_min && clamp_max && !(*clamp_min < *clamp_max)) throw ConfigError("clamp", "clamp_min must be below clamp_max");
}

namespace {

unsigned char to_byte(double t) { return static_cast<unsigned char>(std::lround(std::clamp(t, 0.0, 1.0) * 255.0)); }

}  // namespace

void render(const ScalarField2D& field, const std::filesystem::path& path, const RenderConfig& cfg) {
  cfg.validate();
  const double lo = cfg.clamp_min.value_or(field.min());
  const double hi = cfg.clamp_max.value_or(field.max());
  const double span = hi - lo;
  const auto& spec = field.spec();
  const bool color = cfg.colormap == Colormap::diverging;
  std::vector<unsigned char> pixels;
  pixels.reserve(spec.cells() * (color ? 3 : 1));
  for (double v : field.values()) {
    const double t = span > 0.0 ? (v - lo) / span : 0.5;
    if (!color) {
      pixels.push_back(to_byte(t));
      continue;
    }
    // blue (0) through white (0.5) to red (1)
    const double c = std::clamp(t, 0.0, 1.0);
    double r, g, b;
    if (c < 0.5) {
      const double u = c / 0.5;
      r = 0.23 + 0.77 * u;
      g = 0.30 + 0.70 * u;
      b = 0.75 + 0.25 * u;
    } else {
      const double u = (c - 0.5) / 0.5;
      r = 1.0 - 0.29 * u;
      g = 1.0 - 1.0 * u;
      b = 1.0 - 0.85 * u;
    }
    pixels.push_back(to_byte(r));
    pixels.push_back(to_byte(g));
    pixels.push_back(to_byte(b));
  }
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write image " + path.string());
  out << (color ? "P6" : "P5") << "\n" << spec.width << " " << spec.height << "\n255\n";
  out.write(reinterpret_cast<const char*>(pixels.data()), static_cast<std::streamsize>(pixels.size()));
  if (!out) throw IoError("short write to image " + path.string());
}

ScalarField2D abs_error(const ScalarField2D& a, const ScalarField2D& b) {
  if (!(a.spec() == b.spec())) throw ShapeError("abs_error: grids differ");
  std::vector<double> out(a.spec().cells());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::abs(a[i] - b[i]);
  return ScalarField2D(a.spec(), a.unit(), std::move(out));
}

}  // namespace plumecast::render
