#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "rfkit/types.hpp"

namespace rfkit::svg {

struct Series {
  std::string name;
  std::vector<double> x;
  std::vector<double> y;
  // Optional shaded band (same length as x).
  std::vector<double> low;
  std::vector<double> high;
};

struct LinePlot {
  std::string title;
  std::string xlabel;
  std::string ylabel;
  std::vector<Series> series;
  bool log_x = false;
  bool log_y = false;
  std::optional<double> vline;
};

std::string render(const LinePlot& plot);

// Diverging colour map centred at zero, scaled to max |value|.
std::string heatmap(const std::string& title, const Matrix& values);

std::string histogram(const std::string& title, const std::vector<double>& values, int bins,
                      std::optional<double> marker = {});

void write(const std::filesystem::path& path, const std::string& document);

}  // namespace rfkit::svg
