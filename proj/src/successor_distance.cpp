#include "qex/successor_distance.hpp"

#include <cstdio>
#include <istream>
#include <ostream>

namespace qex {

// Text form: "rows cols" then one row per line, values in %.17g so a
// write/read cycle is exact.
void write_matrix(std::ostream& out, const Eigen::MatrixXd& matrix) {
  out << matrix.rows() << ' ' << matrix.cols() << '\n';
  char buffer[32];
  for (Eigen::Index r = 0; r < matrix.rows(); ++r) {
    for (Eigen::Index c = 0; c < matrix.cols(); ++c) {
      std::snprintf(buffer, sizeof(buffer), "%.17g", matrix(r, c));
      out << (c == 0 ? "" : " ") << buffer;
    }
    out << '\n';
  }
}

Eigen::MatrixXd read_matrix(std::istream& in) {
  Eigen::Index rows = 0;
  Eigen::Index cols = 0;
  if (!(in >> rows >> cols) || rows < 0 || cols < 0) throw std::runtime_error("read_matrix: bad header");
  Eigen::MatrixXd matrix(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    for (Eigen::Index c = 0; c < cols; ++c) {
      std::string token;
      if (!(in >> token)) throw std::runtime_error("read_matrix: truncated data");
      matrix(r, c) = std::stod(token);
    }
  }
  return matrix;
}

}  // namespace qex
