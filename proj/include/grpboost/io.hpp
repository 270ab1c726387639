#pragma once

#include <chrono>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "grpboost/spatial.hpp"

namespace grpboost {

using Date = std::chrono::sys_days;

Date parse_date(const std::string& s);
std::string format_date(Date d);
/// Days since 1970-01-01.
long day_ordinal(Date d);

/// Shortest decimal that round-trips to the same double.
std::string format_double(double v);

/// Daily fields of several variables on one grid. Each variable is a
/// (days x grid points) matrix.
struct GriddedDataset {
  Grid grid;
  std::vector<Date> days;
  std::map<std::string, Eigen::MatrixXd> variables;
  std::string response;
  nlohmann::json provenance = nlohmann::json::array();

  const Eigen::MatrixXd& variable(const std::string& name) const;
  std::size_t n_days() const { return days.size(); }
  /// Index of a day; throws DataError when absent.
  std::size_t day_index(Date d) const;
  /// Throws DataError on a broken invariant (ordering, shapes, NaN response).
  void validate() const;
};

Grid load_grid_csv(const std::filesystem::path& path);
void save_grid_csv(const std::filesystem::path& path, const Grid& grid);

struct VariableTable {
  std::vector<Date> days;
  Eigen::MatrixXd values;  // days x grid points
};

/// Reads `date,id,value` rows. Rejects duplicate (date, id) cells and reports
/// the first missing cell. Errors name the file and line.
VariableTable load_variable_csv(const std::filesystem::path& path, std::size_t n_points);
std::string variable_csv(const std::vector<Date>& days, const Eigen::MatrixXd& values);

/// Builds a dataset from a grid CSV and one `date,id,value` CSV per variable.
/// All variables must cover the same days.
GriddedDataset load_dataset(const std::filesystem::path& grid_csv,
                            const std::map<std::string, std::filesystem::path>& variable_csvs,
                            const std::string& response);

/// Directory layout: grid.csv, <variable>.csv, dataset.json (response name,
/// variable list, provenance).
void save_dataset_dir(const std::filesystem::path& dir, const GriddedDataset& ds);
GriddedDataset load_dataset_dir(const std::filesystem::path& dir);

/// Writes to a sibling temporary file and renames it into place.
void atomic_write(const std::filesystem::path& path, const std::string& content);
std::string read_file(const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Preprocessing

/// Removes the least-squares line in t from the series.
std::vector<double> detrend(std::span<const double> series, std::span<const double> t);

struct Climatology {
  /// Indexed by day of year 0..365 (leap-year calendar); NaN where undefined.
  std::vector<double> mean;
  std::vector<double> sd;
};

/// For each date of the reference years, mean and SD over the dates within
/// +-window/2 days; both then averaged per calendar day over the years.
Climatology climatology(std::span<const Date> days, std::span<const double> series, int ref_first_year,
                        int ref_last_year, int window = 31);

/// (value - mean) / SD with the climatology of the reference period. Throws
/// NumericError naming the day of year on a zero SD and DataError when a day
/// of year has no climatology.
std::vector<double> standardized_anomalies(std::span<const Date> days, std::span<const double> series,
                                           int ref_first_year, int ref_last_year, int window = 31);

int day_of_year(Date d);

/// Mean over the `width` calendar days before each day (t-width .. t-1), or
/// t-width+1 .. t when inclusive. NaN where any of those days is absent from
/// the index (start of the record, gaps).
std::vector<double> rolling_mean(std::span<const Date> days, std::span<const double> series, int width,
                                 bool inclusive = false);

/// Keeps only days whose month is listed.
GriddedDataset filter_months(const GriddedDataset& ds, const std::vector<int>& months);

/// Applies preprocessing steps in order and appends each to the provenance.
/// Steps are JSON objects:
///   {"op": "detrend", "variable": v}
///   {"op": "anomalies", "variable": v, "reference": [y0, y1], "window": w}
///   {"op": "rolling_mean", "variable": v, "width": w, "inclusive": b}
///   {"op": "months", "months": [6, 7, 8]}
GriddedDataset preprocess(GriddedDataset ds, const nlohmann::json& steps);

// ---------------------------------------------------------------------------
// Configuration

/// Flat `key = value` text. `[section]` lines prefix following keys with
/// `section.`; `#` starts a comment.
class Config {
 public:
  static Config parse(const std::string& text, const std::string& origin = "config");
  static Config load(const std::filesystem::path& path);

  bool has(const std::string& key) const { return values_.count(key) > 0; }
  std::string str(const std::string& key) const;
  std::string str(const std::string& key, const std::string& fallback) const;
  double num(const std::string& key) const;
  double num(const std::string& key, double fallback) const;
  long integer(const std::string& key, long fallback) const;
  bool flag(const std::string& key, bool fallback) const;
  std::vector<std::string> list(const std::string& key) const;
  void set(const std::string& key, const std::string& value) { values_[key] = value; }
  const std::map<std::string, std::string>& values() const { return values_; }
  /// Directory of the file the config came from, for relative paths.
  std::filesystem::path base_dir;
  std::filesystem::path path(const std::string& key) const;

 private:
  std::map<std::string, std::string> values_;
};

std::vector<std::string> split(const std::string& s, char sep);
std::string trim(const std::string& s);

}  // namespace grpboost
