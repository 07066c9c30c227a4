#include "flowdistill/cli/io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace flowdistill::cli {

namespace {

std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::string item;
  std::stringstream in(line);
  while (std::getline(in, item, sep)) out.push_back(item);
  if (!line.empty() && line.back() == sep) out.emplace_back();
  return out;
}

double parse_double(const std::string& s) {
  std::size_t used = 0;
  const double v = std::stod(s, &used);
  if (used != s.size()) throw std::runtime_error("bad number '" + s + "'");
  return v;
}

std::size_t parse_size(const std::string& s) {
  std::size_t used = 0;
  const auto v = std::stoull(s, &used);
  if (used != s.size()) throw std::runtime_error("bad integer '" + s + "'");
  return static_cast<std::size_t>(v);
}

std::string escape_xml(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '<':
        out += "&lt;";
        break;
      case '>':
        out += "&gt;";
        break;
      case '&':
        out += "&amp;";
        break;
      default:
        out += c;
    }
  }
  return out;
}

}  // namespace

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
  out << text;
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open '" + path.string() + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

std::string trajectory_csv(std::span<const TrajectoryRow> rows) {
  std::string out = std::string(kTrajectoryHeader) + "\n";
  for (const auto& r : rows) {
    if (r.stage.find_first_of(",\n\"") != std::string::npos)
      throw std::invalid_argument("stage names may not contain commas, quotes or newlines");
    out += std::to_string(r.step) + "," + r.stage + "," + format_double(r.t) + "," + format_double(r.sigma) + "," +
           std::to_string(r.view) + "," + format_double(r.loss) + "," + format_double(r.grad_norm) + "," +
           std::to_string(r.denoiser_evals) + "," + format_double(r.wall_ms) + "\n";
  }
  return out;
}

void write_trajectory_csv(const std::filesystem::path& path, std::span<const TrajectoryRow> rows) {
  write_text(path, trajectory_csv(rows));
}

std::vector<TrajectoryRow> parse_trajectory_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line != kTrajectoryHeader)
    throw std::runtime_error("trajectory CSV: unexpected header");
  std::vector<TrajectoryRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto f = split(line, ',');
    if (f.size() != 9) throw std::runtime_error("trajectory CSV: expected 9 columns in '" + line + "'");
    TrajectoryRow r;
    r.step = parse_size(f[0]);
    r.stage = f[1];
    r.t = parse_double(f[2]);
    r.sigma = parse_double(f[3]);
    r.view = parse_size(f[4]);
    r.loss = parse_double(f[5]);
    r.grad_norm = parse_double(f[6]);
    r.denoiser_evals = parse_size(f[7]);
    r.wall_ms = parse_double(f[8]);
    rows.push_back(std::move(r));
  }
  return rows;
}

std::vector<TrajectoryRow> read_trajectory_csv(const std::filesystem::path& path) {
  return parse_trajectory_csv(read_text(path));
}

void write_points_csv(const std::filesystem::path& path, std::span<const Vector> points) {
  std::string out;
  const Eigen::Index d = points.empty() ? 0 : points.front().size();
  for (Eigen::Index j = 0; j < d; ++j) out += (j ? ",x" : "x") + std::to_string(j);
  out += "\n";
  for (const auto& p : points) {
    for (Eigen::Index j = 0; j < p.size(); ++j) out += (j ? "," : "") + format_double(p[j]);
    out += "\n";
  }
  write_text(path, out);
}

std::vector<Vector> read_points_csv(const std::filesystem::path& path) {
  std::istringstream in(read_text(path));
  std::string line;
  std::getline(in, line);
  const std::size_t d = split(line, ',').size();
  std::vector<Vector> out;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto f = split(line, ',');
    if (f.size() != d) throw std::runtime_error("points CSV: ragged row");
    Vector v(static_cast<Eigen::Index>(d));
    for (std::size_t j = 0; j < d; ++j) v[static_cast<Eigen::Index>(j)] = parse_double(f[j]);
    out.push_back(std::move(v));
  }
  return out;
}

void write_pgm(const std::filesystem::path& path, const Vector& values, GridShape shape) {
  if (static_cast<std::size_t>(values.size()) != shape.size() || shape.size() == 0)
    throw std::invalid_argument("write_pgm: value count does not match the grid");
  const double lo = values.minCoeff();
  const double hi = values.maxCoeff();
  const double span = hi > lo ? hi - lo : 1.0;
  std::string out = "P5\n" + std::to_string(shape.width) + " " + std::to_string(shape.height) + "\n255\n";
  for (Eigen::Index i = 0; i < values.size(); ++i) {
    const double u = std::clamp((values[i] - lo) / span, 0.0, 1.0);
    out += static_cast<char>(static_cast<unsigned char>(std::lround(u * 255.0)));
  }
  write_text(path, out);
}

PgmImage read_pgm(const std::filesystem::path& path) {
  const std::string bytes = read_text(path);
  std::istringstream in(bytes);
  std::string magic;
  std::size_t w = 0, h = 0, maxval = 0;
  in >> magic >> w >> h >> maxval;
  if (magic != "P5" || maxval != 255 || !in) throw std::runtime_error("read_pgm: unsupported file");
  in.get();
  PgmImage img{{h, w}, {}};
  img.pixels.resize(w * h);
  in.read(reinterpret_cast<char*>(img.pixels.data()), static_cast<std::streamsize>(img.pixels.size()));
  if (!in) throw std::runtime_error("read_pgm: truncated pixel data");
  return img;
}

std::string svg_line_plot(const std::string& title, std::span<const Series> series, bool log_y) {
  constexpr double kW = 640, kH = 360, kLeft = 60, kRight = 150, kTop = 30, kBottom = 40;
  static const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"};
  auto transform = [log_y](double v) {
    if (!log_y) return v;
    return v > 0 ? std::log10(v) : std::numeric_limits<double>::quiet_NaN();
  };
  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  std::size_t n_max = 1;
  for (const auto& s : series) {
    n_max = std::max(n_max, s.y.size());
    for (double v : s.y) {
      const double t = transform(v);
      if (std::isfinite(t)) {
        lo = std::min(lo, t);
        hi = std::max(hi, t);
      }
    }
  }
  if (!std::isfinite(lo)) lo = 0, hi = 1;
  if (hi == lo) hi = lo + 1;
  const double pw = kW - kLeft - kRight, ph = kH - kTop - kBottom;
  auto px = [&](std::size_t i) { return kLeft + pw * (n_max > 1 ? double(i) / double(n_max - 1) : 0.0); };
  auto py = [&](double t) { return kTop + ph * (1.0 - (t - lo) / (hi - lo)); };

  std::ostringstream out;
  out.precision(6);
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kW << "\" height=\"" << kH << "\">\n";
  out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  out << "<text x=\"" << kLeft << "\" y=\"18\" font-family=\"sans-serif\" font-size=\"14\">" << escape_xml(title)
      << "</text>\n";
  out << "<rect x=\"" << kLeft << "\" y=\"" << kTop << "\" width=\"" << pw << "\" height=\"" << ph
      << "\" fill=\"none\" stroke=\"black\"/>\n";
  const std::string axis = log_y ? "log10 " : "";
  out << "<text x=\"4\" y=\"" << kTop + 10 << "\" font-family=\"sans-serif\" font-size=\"10\">" << axis << hi
      << "</text>\n";
  out << "<text x=\"4\" y=\"" << kTop + ph << "\" font-family=\"sans-serif\" font-size=\"10\">" << axis << lo
      << "</text>\n";
  out << "<text x=\"" << kLeft << "\" y=\"" << kH - 12 << "\" font-family=\"sans-serif\" font-size=\"10\">0</text>\n";
  out << "<text x=\"" << kLeft + pw - 30 << "\" y=\"" << kH - 12
      << "\" font-family=\"sans-serif\" font-size=\"10\">" << n_max - 1 << "</text>\n";
  for (std::size_t k = 0; k < series.size(); ++k) {
    const char* color = colors[k % 6];
    out << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1\" points=\"";
    for (std::size_t i = 0; i < series[k].y.size(); ++i) {
      const double t = transform(series[k].y[i]);
      if (std::isfinite(t)) out << px(i) << "," << py(t) << " ";
    }
    out << "\"/>\n";
    out << "<text x=\"" << kLeft + pw + 10 << "\" y=\"" << kTop + 14 * (k + 1) << "\" fill=\"" << color
        << "\" font-family=\"sans-serif\" font-size=\"12\">" << escape_xml(series[k].name) << "</text>\n";
  }
  out << "</svg>\n";
  return out.str();
}

void write_svg(const std::filesystem::path& path, const std::string& svg) { write_text(path, svg); }

void write_summary(const std::filesystem::path& path, const std::map<std::string, std::string>& entries) {
  std::string out;
  for (const auto& [k, v] : entries) out += k + "=" + v + "\n";
  write_text(path, out);
}

std::map<std::string, std::string> read_summary(const std::filesystem::path& path) {
  std::istringstream in(read_text(path));
  std::map<std::string, std::string> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw std::runtime_error("summary: malformed line '" + line + "'");
    out[line.substr(0, eq)] = line.substr(eq + 1);
  }
  return out;
}

}  // namespace flowdistill::cli
