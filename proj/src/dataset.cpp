#include "manycov/dataset.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

namespace manycov {

Dataset make_dataset(Eigen::MatrixXd y, Eigen::VectorXd r, Eigen::MatrixXd Z) {
  const Eigen::Index n = r.size();
  if (n < 2) throw data_error("dataset needs at least 2 observations");
  if (y.rows() != n || Z.rows() != n)
    throw data_error("y, r and Z must have the same number of rows");
  if (Z.cols() < 1) throw data_error("Z must have at least one column");
  if (!y.allFinite() || !r.allFinite() || !Z.allFinite())
    throw data_error("dataset contains non-finite values");
  return Dataset{std::move(y), std::move(r), std::move(Z)};
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::stringstream ss(line);
  while (std::getline(ss, cell, ',')) {
    // Trim surrounding whitespace and a possible trailing \r.
    const auto a = cell.find_first_not_of(" \t\r");
    const auto b = cell.find_last_not_of(" \t\r");
    out.push_back(a == std::string::npos ? "" : cell.substr(a, b - a + 1));
  }
  // Exported sheets often leave a trailing comma; drop the empty field
  // it creates instead of failing on the blank cell.
  if (!out.empty() && out.back().empty()) out.pop_back();
  return out;
}

double parse_cell(const std::string& cell, size_t row, const std::string& col) {
  double v = 0.0;
  const char* first = cell.data();
  const char* last = first + cell.size();
  const auto res = std::from_chars(first, last, v);
  if (res.ec != std::errc{} || res.ptr != last)
    throw data_error("row " + std::to_string(row) + ", column '" + col +
                     "': cannot parse '" + cell + "' as a number");
  return v;
}

size_t find_column(const std::vector<std::string>& header,
                   const std::string& name) {
  for (size_t j = 0; j < header.size(); ++j)
    if (header[j] == name) return j;
  std::string have;
  for (size_t j = 0; j < header.size(); ++j)
    have += (j ? "," : "") + header[j];
  throw data_error("column '" + name + "' not found; header has: " + have);
}

}  // namespace

Dataset load_csv(const std::string& path,
                 const std::vector<std::string>& y_cols,
                 const std::string& r_col,
                 const std::vector<std::string>& z_cols) {
  std::ifstream in(path);
  if (!in) throw data_error("cannot open '" + path + "'");

  std::string line;
  if (!std::getline(in, line) || line.empty())
    throw data_error("'" + path + "' is empty or missing its header row");
  const auto header = split_csv_line(line);

  std::vector<size_t> y_idx, z_idx;
  for (const auto& c : y_cols) y_idx.push_back(find_column(header, c));
  const size_t r_idx = find_column(header, r_col);
  for (const auto& c : z_cols) z_idx.push_back(find_column(header, c));

  std::vector<std::vector<double>> rows;
  size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line == "\r") continue;
    const auto cells = split_csv_line(line);
    if (cells.size() != header.size())
      throw data_error("row " + std::to_string(lineno) + " has " +
                       std::to_string(cells.size()) + " cells, header has " +
                       std::to_string(header.size()));
    std::vector<double> parsed(cells.size());
    for (size_t j = 0; j < cells.size(); ++j)
      parsed[j] = parse_cell(cells[j], lineno, header[j]);
    rows.push_back(std::move(parsed));
  }

  const Eigen::Index n = Eigen::Index(rows.size());
  Eigen::MatrixXd y(n, Eigen::Index(y_idx.size()));
  Eigen::VectorXd r(n);
  Eigen::MatrixXd Z(n, Eigen::Index(z_idx.size()));
  for (Eigen::Index i = 0; i < n; ++i) {
    for (size_t j = 0; j < y_idx.size(); ++j) y(i, Eigen::Index(j)) = rows[size_t(i)][y_idx[j]];
    r(i) = rows[size_t(i)][r_idx];
    for (size_t j = 0; j < z_idx.size(); ++j) Z(i, Eigen::Index(j)) = rows[size_t(i)][z_idx[j]];
  }
  return make_dataset(std::move(y), std::move(r), std::move(Z));
}

}  // namespace manycov
