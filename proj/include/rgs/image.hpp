#pragma once

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace rgs {

/// Dense row-major grid of doubles. The tag keeps range-azimuth,
/// range-Doppler and Doppler-map images distinct at the type level.
template <class Tag>
class Grid {
 public:
  Grid() = default;
  Grid(int rows, int cols, double fill = 0.0) : rows_(rows), cols_(cols) {
    if (rows < 0 || cols < 0) throw std::invalid_argument("Grid: negative shape");
    data_.assign(static_cast<std::size_t>(rows) * cols, fill);
  }

  int rows() const { return rows_; }
  int cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double& operator()(int r, int c) { return data_[static_cast<std::size_t>(r) * cols_ + c]; }
  double operator()(int r, int c) const { return data_[static_cast<std::size_t>(r) * cols_ + c]; }

  std::vector<double>& data() { return data_; }
  const std::vector<double>& data() const { return data_; }

  bool same_shape(const Grid& other) const { return rows_ == other.rows_ && cols_ == other.cols_; }

  double max_value() const {
    double m = 0.0;
    for (double v : data_) m = std::max(m, v);
    return m;
  }

  void fill(double v) { std::fill(data_.begin(), data_.end(), v); }

 private:
  int rows_ = 0;
  int cols_ = 0;
  std::vector<double> data_;
};

struct RaTag {};
struct RdTag {};
struct DopplerTag {};

using RaImage = Grid<RaTag>;      // range x azimuth power
using RdImage = Grid<RdTag>;      // range x Doppler power
using DopplerMap = Grid<DopplerTag>;  // range x azimuth radial velocity

/// Full-precision CSV, one row per grid row.
template <class Tag>
void write_csv(const Grid<Tag>& img, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("write_csv: cannot open " + path);
  out.precision(std::numeric_limits<double>::max_digits10);
  for (int r = 0; r < img.rows(); ++r) {
    for (int c = 0; c < img.cols(); ++c) {
      if (c) out << ',';
      out << img(r, c);
    }
    out << '\n';
  }
  if (!out) throw std::runtime_error("write_csv: write failed for " + path);
}

template <class Tag>
Grid<Tag> read_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("read_csv: cannot open " + path);
  std::vector<std::vector<double>> rows;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::vector<double> row;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      try {
        row.push_back(std::stod(cell));
      } catch (const std::exception&) {
        throw std::runtime_error("read_csv: " + path + ": line " + std::to_string(line_no) +
                                 ": bad number '" + cell + "'");
      }
    }
    if (!rows.empty() && row.size() != rows.front().size()) {
      throw std::runtime_error("read_csv: " + path + ": line " + std::to_string(line_no) +
                               ": ragged row");
    }
    rows.push_back(std::move(row));
  }
  if (rows.empty()) return Grid<Tag>();
  Grid<Tag> img(static_cast<int>(rows.size()), static_cast<int>(rows.front().size()));
  for (int r = 0; r < img.rows(); ++r) {
    for (int c = 0; c < img.cols(); ++c) img(r, c) = rows[r][c];
  }
  return img;
}

/// 16-bit binary PGM, max-normalized. Intended for eyeballing, not for tests.
template <class Tag>
void write_pgm16(const Grid<Tag>& img, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("write_pgm16: cannot open " + path);
  out << "P5\n" << img.cols() << ' ' << img.rows() << "\n65535\n";
  double peak = 0.0;
  for (double v : img.data()) peak = std::max(peak, std::abs(v));
  const double scale = peak > 0.0 ? 65535.0 / peak : 0.0;
  for (int r = 0; r < img.rows(); ++r) {
    for (int c = 0; c < img.cols(); ++c) {
      const double v = std::clamp(std::abs(img(r, c)) * scale, 0.0, 65535.0);
      const auto q = static_cast<std::uint16_t>(v + 0.5);
      out.put(static_cast<char>(q >> 8));
      out.put(static_cast<char>(q & 0xff));
    }
  }
  if (!out) throw std::runtime_error("write_pgm16: write failed for " + path);
}

}  // namespace rgs
