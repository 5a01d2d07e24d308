#include "blockshampoo/matrix_io.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>

namespace blockshampoo {

namespace {

bool next_data_line(std::istream& in, std::string& line) {
  while (std::getline(in, line)) {
    const auto first = line.find_first_not_of(" \t\r");
    if (first != std::string::npos) return true;
  }
  return false;
}

}  // namespace

Matrix read_matrix(std::istream& in) {
  std::string line;
  if (!next_data_line(in, line)) throw std::runtime_error("matrix text: missing header");
  std::istringstream header(line);
  long long rows = -1;
  long long cols = -1;
  std::string extra;
  if (!(header >> rows >> cols) || rows < 0 || cols < 0 || (header >> extra)) {
    throw std::runtime_error("matrix text: header must be 'rows cols', got '" + line + "'");
  }
  std::vector<double> data;
  data.reserve(static_cast<std::size_t>(rows * cols));
  for (long long r = 0; r < rows; ++r) {
    if (!next_data_line(in, line)) throw std::runtime_error("matrix text: expected " + std::to_string(rows) + " rows");
    std::istringstream row(line);
    std::string token;
    long long count = 0;
    while (row >> token) {
      std::size_t used = 0;
      double v = 0.0;
      try {
        v = std::stod(token, &used);
      } catch (const std::exception&) {
        throw std::runtime_error("matrix text: bad number '" + token + "' in row " + std::to_string(r));
      }
      if (used != token.size() || !std::isfinite(v)) {
        throw std::runtime_error("matrix text: bad number '" + token + "' in row " + std::to_string(r));
      }
      data.push_back(v);
      ++count;
    }
    if (count != cols) {
      throw std::runtime_error("matrix text: row " + std::to_string(r) + " has " + std::to_string(count) +
                               " values, expected " + std::to_string(cols));
    }
  }
  return Matrix(static_cast<std::size_t>(rows), static_cast<std::size_t>(cols), std::move(data));
}

Matrix read_matrix_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  return read_matrix(in);
}

void write_matrix(std::ostream& out, const Matrix& m) {
  const auto old_flags = out.flags();
  const auto old_precision = out.precision();
  out << m.rows() << ' ' << m.cols() << '\n' << std::setprecision(17);
  for (std::size_t i = 0; i < m.rows(); ++i) {
    for (std::size_t j = 0; j < m.cols(); ++j) {
      if (j) out << ' ';
      out << m(i, j);
    }
    out << '\n';
  }
  out.flags(old_flags);
  out.precision(old_precision);
}

void write_matrix_file(const std::filesystem::path& path, const Matrix& m) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  write_matrix(out, m);
}

}  // namespace blockshampoo
