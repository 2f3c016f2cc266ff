#include "sepp/tox.hpp"

#include <fstream>
#include <istream>
#include <string>
#include <unordered_set>

#include "csv.hpp"
#include "sepp/error.hpp"

namespace sepp {

ToxMatrix parse_tox(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw Error("tox file is empty (missing header)");
  const auto header = csv::split(line);
  if (header.size() < 2 || header[0] != "id")
    csv::fail_at(1, "expected header id,<substance>,...");

  ToxMatrix tox;
  for (std::size_t c = 1; c < header.size(); ++c) tox.substances.emplace_back(header[c]);
  const std::size_t D = tox.substances.size();

  std::vector<std::vector<std::uint8_t>> columns;
  std::unordered_set<std::int64_t> seen;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (csv::trim(line).empty()) continue;
    const auto f = csv::split(line);
    if (f.size() != D + 1)
      csv::fail_at(line_no, "expected " + std::to_string(D + 1) + " fields");
    std::int64_t id = 0;
    if (!csv::parse_int(f[0], id)) csv::fail_at(line_no, "bad id");
    if (!seen.insert(id).second) csv::fail_at(line_no, "duplicate id " + std::to_string(id));
    std::vector<std::uint8_t> col(D);
    bool any = false;
    for (std::size_t d = 0; d < D; ++d) {
      if (f[d + 1] == "0") {
        col[d] = 0;
      } else if (f[d + 1] == "1") {
        col[d] = 1;
        any = true;
      } else {
        csv::fail_at(line_no, "non-binary cell for " + tox.substances[d]);
      }
    }
    if (!any) {
      ++tox.dropped_empty;
      continue;
    }
    tox.report_ids.push_back(id);
    columns.push_back(std::move(col));
  }

  tox.V = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(D),
                                static_cast<Eigen::Index>(columns.size()));
  for (std::size_t n = 0; n < columns.size(); ++n)
    for (std::size_t d = 0; d < D; ++d)
      tox.V(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(n)) = columns[n][d];
  return tox;
}

ToxMatrix load_tox(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path.string());
  return parse_tox(in);
}

}  // namespace sepp
