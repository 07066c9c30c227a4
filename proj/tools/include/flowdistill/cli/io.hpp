#pragma once

#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "flowdistill/distill.hpp"
#include "flowdistill/generator.hpp"
#include "flowdistill/types.hpp"

namespace flowdistill::cli {

inline constexpr const char* kTrajectoryHeader = "step,stage,t,sigma,view,loss,grad_norm,denoiser_evals,wall_ms";

// Doubles are written with %.17g so they parse back bit-exactly.
std::string format_double(double v);

std::string trajectory_csv(std::span<const TrajectoryRow> rows);
void write_trajectory_csv(const std::filesystem::path& path, std::span<const TrajectoryRow> rows);
std::vector<TrajectoryRow> parse_trajectory_csv(const std::string& text);
std::vector<TrajectoryRow> read_trajectory_csv(const std::filesystem::path& path);

// One point per row, columns x0..x{d-1}.
void write_points_csv(const std::filesystem::path& path, std::span<const Vector> points);
std::vector<Vector> read_points_csv(const std::filesystem::path& path);

// 8-bit binary PGM, values mapped linearly from [min, max] of the grid.
void write_pgm(const std::filesystem::path& path, const Vector& values, GridShape shape);
struct PgmImage {
  GridShape shape;
  std::vector<unsigned char> pixels;
};
PgmImage read_pgm(const std::filesystem::path& path);

struct Series {
  std::string name;
  std::vector<double> y;
};

// Static line chart; x is the sample index. log_y plots log10 of positive values.
std::string svg_line_plot(const std::string& title, std::span<const Series> series, bool log_y);
void write_svg(const std::filesystem::path& path, const std::string& svg);

// name=value per line.
void write_summary(const std::filesystem::path& path, const std::map<std::string, std::string>& entries);
std::map<std::string, std::string> read_summary(const std::filesystem::path& path);

void write_text(const std::filesystem::path& path, const std::string& text);
std::string read_text(const std::filesystem::path& path);

}  // namespace flowdistill::cli
