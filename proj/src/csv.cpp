#include "tarnet/csv.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <map>
#include <set>

#include "tarnet/error.hpp"
#include "tarnet/io.hpp"
#include "tarnet/json_convert.hpp"

namespace tarnet {

namespace {

std::vector<std::string> split_line(const std::string& line, char delim) {
  std::vector<std::string> fields;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cur += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cur += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == delim) {
      fields.push_back(std::move(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  if (quoted) throw DataError("csv: unterminated quoted field");
  fields.push_back(std::move(cur));
  return fields;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t");
  return s.substr(b, e - b + 1);
}

bool is_missing(const std::string& cell) {
  return cell.empty() || cell == "NA" || cell == "NaN" || cell == "nan" || cell == "null" ||
         cell == "NULL";
}

double parse_number(const std::string& cell, std::size_t line, const std::string& column) {
  double v = 0.0;
  const char* first = cell.data();
  const char* last = cell.data() + cell.size();
  if (!cell.empty() && cell.front() == '+') ++first;
  const auto [ptr, ec] = std::from_chars(first, last, v);
  if (ec != std::errc() || ptr != last || !std::isfinite(v)) {
    throw DataError("csv: line " + std::to_string(line) + ", column '" + column +
                    "': cannot parse '" + cell + "' as a number");
  }
  return v;
}

int parse_treatment(const std::string& cell, std::size_t line, const std::string& column) {
  std::string lower = cell;
  std::transform(lower.begin(), lower.end(), lower.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  if (lower == "true") return 1;
  if (lower == "false") return 0;
  const double v = parse_number(cell, line, column);
  if (v == 0.0) return 0;
  if (v == 1.0) return 1;
  throw DataError("csv: line " + std::to_string(line) + ": treatment value '" + cell +
                  "' is not binary");
}

std::vector<std::string> split_lines(const std::string& text) {
  std::vector<std::string> lines;
  std::size_t start = 0;
  // UTF-8 byte order mark
  if (text.size() >= 3 && static_cast<unsigned char>(text[0]) == 0xEF &&
      static_cast<unsigned char>(text[1]) == 0xBB && static_cast<unsigned char>(text[2]) == 0xBF) {
    start = 3;
  }
  while (start <= text.size()) {
    auto end = text.find('\n', start);
    if (end == std::string::npos) end = text.size();
    std::string line = text.substr(start, end - start);
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(std::move(line));
    start = end + 1;
  }
  while (!lines.empty() && lines.back().empty()) lines.pop_back();
  return lines;
}

}  // namespace

CsvLoadResult parse_csv(const std::string& text, const CsvSchema& schema) {
  const auto lines = split_lines(text);
  if (lines.empty()) throw DataError("csv: empty file (header row required)");
  std::vector<std::string> header = split_line(lines[0], schema.delimiter);
  for (auto& h : header) h = trim(h);

  std::map<std::string, std::size_t> col;
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (!col.emplace(header[i], i).second) {
      throw DataError("csv: duplicate column name '" + header[i] + "'");
    }
  }
  auto require = [&](const std::string& name) {
    auto it = col.find(name);
    if (it == col.end()) throw DataError("csv: missing column '" + name + "'");
    return it->second;
  };

  std::set<std::string> claimed = {schema.treatment, schema.outcome};
  const std::size_t t_col = require(schema.treatment);
  const std::size_t y_col = require(schema.outcome);
  const bool po = schema.y0.has_value() || schema.y1.has_value() || schema.tau.has_value();
  if (po && !(schema.y0 && schema.y1 && schema.tau)) {
    throw DataError("csv: potential outcome columns must be named together (y0, y1, tau)");
  }
  std::size_t y0_col = 0, y1_col = 0, tau_col = 0;
  if (po) {
    y0_col = require(*schema.y0);
    y1_col = require(*schema.y1);
    tau_col = require(*schema.tau);
    claimed.insert({*schema.y0, *schema.y1, *schema.tau});
  }

  std::vector<std::string> cov_names = schema.covariates;
  if (cov_names.empty()) {
    for (const auto& h : header) {
      if (!claimed.count(h)) cov_names.push_back(h);
    }
  }
  std::set<std::string> seen;
  for (const auto& c : cov_names) {
    if (!seen.insert(c).second) throw DataError("csv: covariate '" + c + "' listed twice");
    if (claimed.count(c)) throw DataError("csv: column '" + c + "' has two roles");
  }
  if (cov_names.empty()) throw DataError("csv: no covariate columns");
  std::vector<std::size_t> cov_cols;
  for (const auto& c : cov_names) cov_cols.push_back(require(c));

  CsvLoadResult result;
  Dataset& d = result.data;
  d.dim = cov_cols.size();
  d.covariate_names = cov_names;
  d.origin = Origin::external_csv;

  std::vector<std::size_t> required = cov_cols;
  required.push_back(t_col);
  required.push_back(y_col);
  if (po) required.insert(required.end(), {y0_col, y1_col, tau_col});

  for (std::size_t ln = 1; ln < lines.size(); ++ln) {
    if (lines[ln].empty()) continue;
    auto fields = split_line(lines[ln], schema.delimiter);
    if (fields.size() != header.size()) {
      throw DataError("csv: line " + std::to_string(ln + 1) + " has " +
                      std::to_string(fields.size()) + " fields, header has " +
                      std::to_string(header.size()));
    }
    for (auto& f : fields) f = trim(f);
    const bool missing = std::any_of(required.begin(), required.end(),
                                     [&](std::size_t c) { return is_missing(fields[c]); });
    if (missing) {
      ++result.dropped_rows;
      continue;
    }
    for (std::size_t k = 0; k < cov_cols.size(); ++k) {
      d.X.push_back(parse_number(fields[cov_cols[k]], ln + 1, cov_names[k]));
    }
    d.t.push_back(parse_treatment(fields[t_col], ln + 1, schema.treatment));
    d.y.push_back(parse_number(fields[y_col], ln + 1, schema.outcome));
    if (po) {
      d.y0.push_back(parse_number(fields[y0_col], ln + 1, *schema.y0));
      d.y1.push_back(parse_number(fields[y1_col], ln + 1, *schema.y1));
      d.tau.push_back(parse_number(fields[tau_col], ln + 1, *schema.tau));
    }
  }
  if (d.size() == 0) throw DataError("csv: every row was dropped or the file has no data rows");
  d.validate();
  return result;
}

CsvLoadResult load_csv(const std::filesystem::path& path, const CsvSchema& schema) {
  return parse_csv(read_file(path), schema);
}

std::string dataset_to_csv(const Dataset& data, char delimiter) {
  data.validate();
  std::vector<std::string> names = data.covariate_names;
  if (names.empty()) {
    for (std::size_t k = 0; k < data.dim; ++k) names.push_back("x" + std::to_string(k + 1));
  }
  const bool po = data.has_potential_outcomes();
  std::string out;
  for (const auto& n : names) {
    out += n;
    out += delimiter;
  }
  out += "t";
  out += delimiter;
  out += "y";
  if (po) {
    for (const char* c : {"y0", "y1", "tau"}) {
      out += delimiter;
      out += c;
    }
  }
  out += '\n';
  for (std::size_t i = 0; i < data.size(); ++i) {
    for (double v : data.row(i)) {
      out += format_double(v);
      out += delimiter;
    }
    out += std::to_string(data.t[i]);
    out += delimiter;
    out += format_double(data.y[i]);
    if (po) {
      for (double v : {data.y0[i], data.y1[i], data.tau[i]}) {
        out += delimiter;
        out += format_double(v);
      }
    }
    out += '\n';
  }
  return out;
}

void write_csv(const Dataset& data, const std::filesystem::path& path, char delimiter) {
  write_file_atomic(path, dataset_to_csv(data, delimiter));
}

CsvSchema schema_for(const Dataset& data) {
  CsvSchema s;
  s.covariates = data.covariate_names;
  if (s.covariates.empty()) {
    for (std::size_t k = 0; k < data.dim; ++k) s.covariates.push_back("x" + std::to_string(k + 1));
  }
  if (data.has_potential_outcomes()) {
    s.y0 = "y0";
    s.y1 = "y1";
    s.tau = "tau";
  }
  return s;
}

std::filesystem::path metadata_path(const std::filesystem::path& csv_path) {
  std::filesystem::path p = csv_path;
  p += ".meta.json";
  return p;
}

void write_dataset_metadata(const std::filesystem::path& csv_path, const DatasetMetadata& meta) {
  nlohmann::json j;
  j["origin"] = to_string(meta.origin);
  j["seed"] = meta.seed;
  j["rows"] = meta.rows;
  if (meta.dgp) j["dgp"] = *meta.dgp;
  if (!meta.parent.empty()) j["parent"] = meta.parent;
  write_file_atomic(metadata_path(csv_path), j.dump(2) + "\n");
}

DatasetMetadata read_dataset_metadata(const std::filesystem::path& csv_path) {
  DatasetMetadata meta;
  try {
    const auto j = nlohmann::json::parse(read_file(metadata_path(csv_path)));
    meta.origin = origin_from_string(j.at("origin").get<std::string>());
    meta.seed = j.at("seed").get<std::uint64_t>();
    meta.rows = j.at("rows").get<std::size_t>();
    if (j.contains("dgp")) meta.dgp = j["dgp"].get<DgpParams>();
    if (j.contains("parent")) meta.parent = j["parent"].get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("dataset metadata: ") + e.what());
  }
  return meta;
}

}  // namespace tarnet
