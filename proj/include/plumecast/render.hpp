#ifndef PLUMECAST_RENDER_HPP
#define PLUMECAST_RENDER_HPP

#include <filesystem>
#include <optional>
#include <string_view>

#include "plumecast/grid.hpp"

namespace plumecast::render {

enum class Colormap { grayscale, diverging };
Colormap colormap_from_name(std::string_view s);

struct RenderConfig {
  Colormap colormap = Colormap::grayscale;
  /// Values outside [clamp_min, clamp_max] saturate; unset bounds use the
  /// field's own range.
  std::optional<double> clamp_min;
  std::optional<double> clamp_max;

  void validate() const;
};

/// Binary PGM (grayscale) or PPM (diverging blue-white-red), one pixel per
/// cell, row 0 at the top.
void render(const ScalarField2D& field, const std::filesystem::path& path, const RenderConfig& cfg = {});

/// Cellwise |a - b|; pair with a clamp range to cap the error map.
ScalarField2D abs_error(const ScalarField2D& a, const ScalarField2D& b);

}  // namespace plumecast::render

#endif
