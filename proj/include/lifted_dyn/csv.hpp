/*
 Copyright 2026 The lifted-dyn Authors

 Licensed under the Apache License, Version 2.0 (the "License");
 you may not use this file except in compliance with the License.
 You may obtain a copy of the License at

      https://www.apache.org/licenses/LICENSE-2.0

 Unless required by applicable law or agreed to in writing, software
 distributed under the License is distributed on an "AS IS" BASIS,
 WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 See the License for the specific language governing permissions and
 limitations under the License.
*/
#ifndef LIFTED_DYN_CSV_HPP
#define LIFTED_DYN_CSV_HPP

#include <Eigen/Dense>
#include <string>
#include <vector>

namespace lifted_dyn {

/// Numeric table with a header row. Cells are written with %.17g, so a
/// write/read round trip is exact; "nan" marks missing values.
struct CsvTable {
  std::vector<std::string> header;
  Eigen::MatrixXd rows;

  Eigen::Index column(const std::string& name) const;  // throws IoError if absent
};

std::string format_csv(const CsvTable& table);
CsvTable parse_csv(const std::string& text);

void write_csv(const std::string& path, const CsvTable& table);
CsvTable read_csv(const std::string& path);

/// Shortest %.17g rendering used for every numeric cell.
std::string format_number(double value);

}  // namespace lifted_dyn

#endif  // LIFTED_DYN_CSV_HPP
