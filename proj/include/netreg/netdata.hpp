#pragma once

// Networks, node samples, link covariates, and their CSV ingestion.
//
// CSV conventions: comma separated, no quoting. Adjacency and link-covariate
// grids have no header; node files carry a header row naming their columns.
// All types validate on construction and are immutable afterwards.

#include <Eigen/Dense>

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "netreg/error.hpp"

namespace netreg {

using Index = Eigen::Index;
using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

namespace detail {

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r'))
    s.remove_suffix(1);
  return s;
}

inline std::vector<std::string_view> split_commas(std::string_view line) {
  std::vector<std::string_view> cells;
  std::size_t start = 0;
  while (true) {
    auto pos = line.find(',', start);
    cells.push_back(trim(line.substr(start, pos - start)));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return cells;
}

inline double parse_cell(std::string_view cell, std::size_t row, std::size_t col) {
  double value = 0.0;
  if (!cell.empty() && cell.front() == '+') cell.remove_prefix(1);
  auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), value);
  if (cell.empty() || ec != std::errc{} || ptr != cell.data() + cell.size()) {
    throw ValidationError("non-numeric cell '" + std::string(cell) + "' at row " +
                          std::to_string(row + 1) + ", column " + std::to_string(col + 1));
  }
  return value;
}

inline std::vector<std::string> read_lines(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open '" + path + "'");
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    lines.push_back(line);
  }
  return lines;
}

inline void require_finite(const Matrix& m, const char* what) {
  if (!m.allFinite()) throw ValidationError(std::string(what) + " contains non-finite values");
}

inline void require_finite(const Vector& v, const char* what) {
  if (!v.allFinite()) throw ValidationError(std::string(what) + " contains non-finite values");
}

}  // namespace detail

/// Parses a header-less numeric CSV grid. Rows must have equal length.
inline Matrix read_csv_grid(const std::string& path) {
  auto lines = detail::read_lines(path);
  if (lines.empty()) throw ValidationError("'" + path + "' is empty");
  std::vector<std::vector<double>> rows;
  for (std::size_t r = 0; r < lines.size(); ++r) {
    auto cells = detail::split_commas(lines[r]);
    std::vector<double> row;
    row.reserve(cells.size());
    for (std::size_t c = 0; c < cells.size(); ++c) row.push_back(detail::parse_cell(cells[c], r, c));
    if (!rows.empty() && row.size() != rows.front().size()) {
      throw ValidationError("'" + path + "': row " + std::to_string(r + 1) + " has " +
                            std::to_string(row.size()) + " cells, expected " +
                            std::to_string(rows.front().size()));
    }
    rows.push_back(std::move(row));
  }
  Matrix m(static_cast<Index>(rows.size()), static_cast<Index>(rows.front().size()));
  for (Index i = 0; i < m.rows(); ++i)
    for (Index j = 0; j < m.cols(); ++j) m(i, j) = rows[i][j];
  return m;
}

/// Writes a grid with round-trip precision (%.17g), so reloading is bitwise exact.
inline void write_csv_grid(const std::string& path, const Matrix& m) {
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot write '" + path + "'");
  char buf[32];
  for (Index i = 0; i < m.rows(); ++i) {
    for (Index j = 0; j < m.cols(); ++j) {
      std::snprintf(buf, sizeof buf, "%.17g", m(i, j));
      if (j) out << ',';
      out << buf;
    }
    out << '\n';
  }
}

/// Binary network on n nodes. d(i,j) = 1 when i links to j.
class Network {
 public:
  /// Validates a 0/1 adjacency matrix. A nonzero diagonal is zeroed with a warning.
  static Network from_matrix(Matrix d, bool directed = false) {
    if (d.rows() != d.cols()) {
      throw ValidationError("adjacency matrix is not square (" + std::to_string(d.rows()) + "x" +
                            std::to_string(d.cols()) + ")");
    }
    if (d.rows() == 0) throw ValidationError("adjacency matrix is empty");
    for (Index i = 0; i < d.rows(); ++i) {
      for (Index j = 0; j < d.cols(); ++j) {
        double v = d(i, j);
        if (v != 0.0 && v != 1.0) {
          throw ValidationError("adjacency entry (" + std::to_string(i) + "," + std::to_string(j) +
                                ") is not 0 or 1");
        }
      }
    }
    if (d.diagonal().any()) {
      warn("adjacency matrix has nonzero diagonal entries; self-links removed");
      d.diagonal().setZero();
    }
    if (!directed) {
      for (Index i = 0; i < d.rows(); ++i) {
        for (Index j = i + 1; j < d.cols(); ++j) {
          if (d(i, j) != d(j, i)) {
            throw ValidationError("adjacency matrix is asymmetric at (" + std::to_string(i) + "," +
                                  std::to_string(j) + "); pass directed to allow this");
          }
        }
      }
    }
    return Network(std::move(d), directed);
  }

  Index size() const { return d_.rows(); }
  bool directed() const { return directed_; }
  const Matrix& adjacency() const { return d_; }
  double operator()(Index i, Index j) const { return d_(i, j); }

 private:
  Network(Matrix d, bool directed) : d_(std::move(d)), directed_(directed) {}

  Matrix d_;
  bool directed_;
};

/// Real-valued network with L layers; layer(l)(i,j) is the l-th component of link (i,j).
class WeightedNetwork {
 public:
  static WeightedNetwork from_layers(std::vector<Matrix> layers) {
    if (layers.empty()) throw ValidationError("weighted network needs at least one layer");
    const Index n = layers.front().rows();
    for (auto& w : layers) {
      if (w.rows() != n || w.cols() != n) {
        throw ValidationError("weighted network layers must all be n x n");
      }
      detail::require_finite(w, "weighted network");
      if (w.diagonal().any()) {
        warn("weighted network has nonzero diagonal entries; self-links removed");
        w.diagonal().setZero();
      }
    }
    return WeightedNetwork(std::move(layers));
  }

  Index size() const { return layers_.front().rows(); }
  Index layer_count() const { return static_cast<Index>(layers_.size()); }
  const Matrix& layer(Index l) const { return layers_[static_cast<std::size_t>(l)]; }

 private:
  explicit WeightedNetwork(std::vector<Matrix> layers) : layers_(std::move(layers)) {}

  std::vector<Matrix> layers_;
};

/// Outcomes y, regressors X (n x k), and optional agent covariates z (n x L_z).
class NodeSample {
 public:
  static NodeSample create(Vector y, Matrix x, std::optional<Matrix> z = std::nullopt,
                           std::vector<std::string> x_names = {},
                           std::vector<std::string> z_names = {}) {
    if (x.cols() == 0) throw ValidationError("node sample has no regressors");
    if (x.rows() != y.size()) throw ValidationError("regressor rows do not match outcome length");
    if (y.size() == 0) throw ValidationError("node sample is empty");
    detail::require_finite(y, "outcome");
    detail::require_finite(x, "regressors");
    if (z) {
      if (z->rows() != y.size()) throw ValidationError("covariate rows do not match outcome length");
      if (z->cols() == 0) throw ValidationError("covariate matrix has no columns");
      detail::require_finite(*z, "covariates");
    }
    if (x_names.empty())
      for (Index c = 0; c < x.cols(); ++c) x_names.push_back("x" + std::to_string(c + 1));
    if (z && z_names.empty())
      for (Index c = 0; c < z->cols(); ++c) z_names.push_back("z" + std::to_string(c + 1));
    return NodeSample(std::move(y), std::move(x), std::move(z), std::move(x_names),
                      std::move(z_names));
  }

  Index size() const { return y_.size(); }
  Index regressor_count() const { return x_.cols(); }
  const Vector& y() const { return y_; }
  const Matrix& x() const { return x_; }
  bool has_z() const { return z_.has_value(); }
  const Matrix& z() const {
    if (!z_) throw ValidationError("node sample has no agent covariates");
    return *z_;
  }
  const std::vector<std::string>& x_names() const { return x_names_; }
  const std::vector<std::string>& z_names() const { return z_names_; }

  /// Same regressors and covariates with a new outcome vector.
  NodeSample with_outcome(Vector y) const {
    return create(std::move(y), x_, z_, x_names_, z_names_);
  }
  /// Same outcome and covariates with new regressors.
  NodeSample with_regressors(Matrix x, std::vector<std::string> names = {}) const {
    return create(y_, std::move(x), z_, std::move(names), z_names_);
  }

 private:
  NodeSample(Vector y, Matrix x, std::optional<Matrix> z, std::vector<std::string> x_names,
             std::vector<std::string> z_names)
      : y_(std::move(y)),
        x_(std::move(x)),
        z_(std::move(z)),
        x_names_(std::move(x_names)),
        z_names_(std::move(z_names)) {}

  Vector y_;
  Matrix x_;
  std::optional<Matrix> z_;
  std::vector<std::string> x_names_;
  std::vector<std::string> z_names_;
};

/// Pair covariates z_ij with L_z layers.
class LinkCovariates {
 public:
  static LinkCovariates from_layers(std::vector<Matrix> layers, bool directed = false) {
    if (layers.empty()) throw ValidationError("link covariates need at least one layer");
    const Index n = layers.front().rows();
    for (const auto& z : layers) {
      if (z.rows() != n || z.cols() != n) throw ValidationError("link covariate layers must be n x n");
      detail::require_finite(z, "link covariates");
      if (!directed && (z - z.transpose()).cwiseAbs().maxCoeff() > 0)
        throw ValidationError("link covariates are asymmetric; pass directed to allow this");
    }
    return LinkCovariates(std::move(layers));
  }

  Index size() const { return layers_.front().rows(); }
  Index layer_count() const { return static_cast<Index>(layers_.size()); }
  const Matrix& layer(Index l) const { return layers_[static_cast<std::size_t>(l)]; }

  /// L1 distance across layers between z(a,b) and z(c,d).
  double l1(Index a, Index b, Index c, Index d) const {
    double s = 0.0;
    for (const auto& z : layers_) s += std::abs(z(a, b) - z(c, d));
    return s;
  }

 private:
  explicit LinkCovariates(std::vector<Matrix> layers) : layers_(std::move(layers)) {}

  std::vector<Matrix> layers_;
};

inline Network load_network(const std::string& path, bool directed = false) {
  return Network::from_matrix(read_csv_grid(path), directed);
}

inline void save_network(const std::string& path, const Network& net) {
  write_csv_grid(path, net.adjacency());
}

inline LinkCovariates load_link_covariates(const std::vector<std::string>& paths, bool directed = false) {
  std::vector<Matrix> layers;
  for (const auto& p : paths) layers.push_back(read_csv_grid(p));
  return LinkCovariates::from_layers(std::move(layers), directed);
}

/// Column roles in a node file. Empty lists are inferred from the header:
/// columns named x* are regressors and z* are agent covariates.
struct NodeSchema {
  std::string y = "y";
  std::vector<std::string> x;
  std::vector<std::string> z;
};

inline NodeSample load_nodes(const std::string& path, const NodeSchema& schema = {},
                             std::optional<Index> expected_rows = std::nullopt) {
  auto lines = detail::read_lines(path);
  if (lines.empty()) throw ValidationError("'" + path + "' is empty");
  auto header_views = detail::split_commas(lines.front());
  std::vector<std::string> header(header_views.begin(), header_views.end());

  auto column_of = [&](const std::string& name) -> std::size_t {
    for (std::size_t c = 0; c < header.size(); ++c)
      if (header[c] == name) return c;
    throw ValidationError("'" + path + "': missing column '" + name + "'");
  };

  std::vector<std::string> x_names = schema.x, z_names = schema.z;
  if (x_names.empty())
    for (const auto& h : header)
      if (!h.empty() && h.front() == 'x') x_names.push_back(h);
  if (z_names.empty())
    for (const auto& h : header)
      if (!h.empty() && h.front() == 'z') z_names.push_back(h);
  if (x_names.empty()) throw ValidationError("'" + path + "': no regressor columns");

  const std::size_t ycol = column_of(schema.y);
  std::vector<std::size_t> xcols, zcols;
  for (const auto& name : x_names) xcols.push_back(column_of(name));
  for (const auto& name : z_names) zcols.push_back(column_of(name));

  const auto n = static_cast<Index>(lines.size() - 1);
  if (expected_rows && *expected_rows != n) {
    throw ValidationError("'" + path + "' has " + std::to_string(n) + " rows but the network has " +
                          std::to_string(*expected_rows) + " nodes");
  }
  Vector y(n);
  Matrix x(n, static_cast<Index>(xcols.size()));
  Matrix z(n, static_cast<Index>(zcols.size()));
  for (Index r = 0; r < n; ++r) {
    auto cells = detail::split_commas(lines[static_cast<std::size_t>(r) + 1]);
    if (cells.size() != header.size()) {
      throw ValidationError("'" + path + "': row " + std::to_string(r + 2) + " has " +
                            std::to_string(cells.size()) + " cells, header has " +
                            std::to_string(header.size()));
    }
    auto cell = [&](std::size_t c) { return detail::parse_cell(cells[c], static_cast<std::size_t>(r) + 1, c); };
    y(r) = cell(ycol);
    for (std::size_t c = 0; c < xcols.size(); ++c) x(r, static_cast<Index>(c)) = cell(xcols[c]);
    for (std::size_t c = 0; c < zcols.size(); ++c) z(r, static_cast<Index>(c)) = cell(zcols[c]);
  }
  std::optional<Matrix> zopt;
  if (!zcols.empty()) zopt = std::move(z);
  return NodeSample::create(std::move(y), std::move(x), std::move(zopt), std::move(x_names),
                            std::move(z_names));
}

inline void save_nodes(const std::string& path, const NodeSample& s) {
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot write '" + path + "'");
  out << "y";
  for (const auto& name : s.x_names()) out << ',' << name;
  for (const auto& name : s.z_names()) out << ',' << name;
  out << '\n';
  char buf[32];
  auto put = [&](double v) {
    std::snprintf(buf, sizeof buf, "%.17g", v);
    out << buf;
  };
  for (Index i = 0; i < s.size(); ++i) {
    put(s.y()(i));
    for (Index c = 0; c < s.regressor_count(); ++c) {
      out << ',';
      put(s.x()(i, c));
    }
    if (s.has_z()) {
      for (Index c = 0; c < s.z().cols(); ++c) {
        out << ',';
        put(s.z()(i, c));
      }
    }
    out << '\n';
  }
}

/// Throws unless the sample and network describe the same n agents.
inline void check_paired(const Network& net, const NodeSample& s) {
  if (net.size() != s.size()) {
    throw ValidationError("node sample has " + std::to_string(s.size()) + " rows but the network has " +
                          std::to_string(net.size()) + " nodes");
  }
}

}  // namespace netreg
