#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "tarnet/dataset.hpp"
#include "tarnet/dgp.hpp"

namespace tarnet {

struct CsvSchema {
  std::string treatment = "t";
  std::string outcome = "y";
  // Empty means every column not claimed by another role.
  std::vector<std::string> covariates;
  // Potential-outcome columns, read only when named.
  std::optional<std::string> y0;
  std::optional<std::string> y1;
  std::optional<std::string> tau;
  char delimiter = ',';
};

struct CsvLoadResult {
  Dataset data;
  std::size_t dropped_rows = 0;
};

// Rows with a missing required cell ("", NA, NaN, null) are dropped and
// counted. Throws DataError on unknown columns, non-numeric cells, non-binary
// treatment, or when every row is dropped.
CsvLoadResult load_csv(const std::filesystem::path& path, const CsvSchema& schema);
CsvLoadResult parse_csv(const std::string& text, const CsvSchema& schema);

// Covariates (named x1..xd unless the dataset carries names), then t, y, and
// y0, y1, tau when present. Values use 17 significant digits.
std::string dataset_to_csv(const Dataset& data, char delimiter = ',');
void write_csv(const Dataset& data, const std::filesystem::path& path, char delimiter = ',');

// Schema that reads back a file produced by write_csv.
CsvSchema schema_for(const Dataset& data);

struct DatasetMetadata {
  Origin origin = Origin::external_csv;
  std::uint64_t seed = 0;
  std::size_t rows = 0;
  std::optional<DgpParams> dgp;
  std::string parent;  // source file a target was drawn from, if any
};

// Sidecar next to a dataset file: <path>.meta.json
std::filesystem::path metadata_path(const std::filesystem::path& csv_path);
void write_dataset_metadata(const std::filesystem::path& csv_path, const DatasetMetadata& meta);
DatasetMetadata read_dataset_metadata(const std::filesystem::path& csv_path);

}  // namespace tarnet
