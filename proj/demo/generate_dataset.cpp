// Writes a small synthetic tabular classification dataset (csv + schema
// sidecar) so the CLI can be tried without hunting for data files.
//
//   generate_dataset [out_dir] [rows] [features] [classes] [seed]

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "forestmix/csv.hpp"
#include "forestmix/dataset.hpp"
#include "forestmix/rng.hpp"
#include "forestmix/schema.hpp"

using namespace forestmix;

int main(int argc, char** argv) {
  const std::string out_dir = argc > 1 ? argv[1] : "demo_data";
  const int n = argc > 2 ? std::atoi(argv[2]) : 400;
  const int d = argc > 3 ? std::atoi(argv[3]) : 12;
  const int C = argc > 4 ? std::atoi(argv[4]) : 3;
  const std::uint64_t seed = argc > 5 ? std::strtoull(argv[5], nullptr, 10) : 1;
  if (n < C * 4 || d < 3 || C < 2) {
    std::fprintf(stderr, "need rows >= 4*classes, features >= 3, classes >= 2\n");
    return 2;
  }
  std::filesystem::create_directories(out_dir);

  Schema schema;
  for (int j = 0; j + 1 < d; ++j) {
    schema.columns.push_back({"x" + std::to_string(j), ColumnKind::continuous, {}});
  }
  schema.columns.push_back({"group", ColumnKind::categorical, {"a", "b", "c"}});
  Column label;
  label.name = "label";
  label.kind = ColumnKind::categorical;
  for (int c = 0; c < C; ++c) label.categories.push_back("class" + std::to_string(c));
  schema.columns.push_back(label);
  schema.label_column = "label";
  save_schema(schema, out_dir + "/schema.json");

  Rng rng(seed);
  const int informative = std::max(2, (d - 1) / 2);
  std::vector<std::vector<double>> centers(static_cast<std::size_t>(C));
  for (auto& ctr : centers) {
    ctr.resize(static_cast<std::size_t>(informative));
    for (double& v : ctr) v = 1.4 * rng.normal();
  }

  std::ofstream out(out_dir + "/data.csv", std::ios::binary);
  std::vector<std::string> header;
  for (const auto& col : schema.columns) header.push_back(col.name);
  csv::write_row(out, header);
  char buf[40];
  for (int r = 0; r < n; ++r) {
    const int c = r % C;
    std::vector<std::string> row;
    for (int j = 0; j + 1 < d; ++j) {
      const double base =
          j < informative ? centers[static_cast<std::size_t>(c)][static_cast<std::size_t>(j)] : 0.0;
      std::snprintf(buf, sizeof(buf), "%.6g", base + rng.normal());
      row.emplace_back(buf);
    }
    row.emplace_back(std::string(1, static_cast<char>('a' + rng.bounded(3))));
    // a tenth of the labels are noise
    const int y = rng.u01() < 0.1 ? static_cast<int>(rng.bounded(static_cast<std::uint64_t>(C)))
                                  : c;
    row.push_back("class" + std::to_string(y));
    csv::write_row(out, row);
  }
  std::printf("wrote %s/data.csv and %s/schema.json (%d rows, %d features, %d classes)\n",
              out_dir.c_str(), out_dir.c_str(), n, d, C);
  return 0;
}
