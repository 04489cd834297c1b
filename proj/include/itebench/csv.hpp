#pragma once

#include <Eigen/Dense>
#include <filesystem>
#include <string>
#include <vector>

namespace itebench::csv {

// 17 significant digits: lossless for IEEE-754 doubles.
std::string format_double(double v);

void write_matrix(const std::filesystem::path& path, const Eigen::MatrixXd& m,
                  const std::vector<std::string>& header = {});

// Parses a rectangular numeric CSV. When has_header is set the first line is
// skipped. Throws DataError on ragged rows or unparsable fields.
Eigen::MatrixXd read_matrix(const std::filesystem::path& path, bool has_header = false);

}  // namespace itebench::csv
