#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "manycov/errors.hpp"

namespace manycov {

// Observations for the two-step problem: y holds the columns the moment
// function reads (outcome, treatment, ...), r is the first-step response
// and Z the first-step covariates. Rows are observations.
struct Dataset {
  Eigen::MatrixXd y;
  Eigen::VectorXd r;
  Eigen::MatrixXd Z;

  Eigen::Index n() const { return r.size(); }
  Eigen::Index k() const { return Z.cols(); }
};

// Validates shape agreement, n >= 2 and finiteness of every entry.
Dataset make_dataset(Eigen::MatrixXd y, Eigen::VectorXd r, Eigen::MatrixXd Z);

// Reads a comma-separated file with a mandatory header row and assembles
// the requested columns by name. Unknown names are reported together with
// the header actually present.
Dataset load_csv(const std::string& path,
                 const std::vector<std::string>& y_cols,
                 const std::string& r_col,
                 const std::vector<std::string>& z_cols);

}  // namespace manycov
