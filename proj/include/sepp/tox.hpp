#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

namespace sepp {

// Binary substance-screen matrix: V is substances x reports.
struct ToxMatrix {
  Eigen::MatrixXd V;
  std::vector<std::string> substances;
  std::vector<std::int64_t> report_ids;
  std::size_t dropped_empty = 0;  // all-zero reports removed at ingest

  Eigen::Index substance_count() const { return V.rows(); }
  Eigen::Index report_count() const { return V.cols(); }
};

// Tox CSV: `id,<substance1>,...,<substanceD>` with 0/1 cells.
ToxMatrix parse_tox(std::istream& in);
ToxMatrix load_tox(const std::filesystem::path& path);

}  // namespace sepp
