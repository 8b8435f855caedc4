#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace kopath {

struct Series {
  std::string label;
  std::vector<double> x;
  std::vector<double> y;
};

struct PlotStyle {
  std::string title;
  std::string x_label = "x";
  std::string y_label = "y";
  int width = 640;
  int height = 420;
};

// Standalone SVG line chart: axes with ticks, one <path> per series, legend.
// Output bytes depend only on the inputs. EmptySeries when there is nothing
// to draw or a series has x and y of different lengths.
std::string render_plot(std::span<const Series> series, const PlotStyle& style = {});
void emit_plot(std::span<const Series> series, const std::filesystem::path& path, const PlotStyle& style = {});

}  // namespace kopath
