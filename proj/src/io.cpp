#include "grpboost/io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>
#include <unordered_map>

#include "grpboost/error.hpp"
#include "grpboost/stats.hpp"

namespace grpboost {

namespace fs = std::filesystem;
using namespace std::chrono;

namespace {

double parse_number(const std::string& s, const std::string& where) {
  const std::string t = trim(s);
  if (t == "NA" || t == "NaN" || t == "nan" || t.empty()) return std::numeric_limits<double>::quiet_NaN();
  double v = 0.0;
  const auto res = std::from_chars(t.data(), t.data() + t.size(), v);
  if (res.ec != std::errc() || res.ptr != t.data() + t.size()) {
    throw DataError(where + ": not a number: '" + t + "'");
  }
  return v;
}

long parse_long(const std::string& s, const std::string& where) {
  const std::string t = trim(s);
  long v = 0;
  const auto res = std::from_chars(t.data(), t.data() + t.size(), v);
  if (res.ec != std::errc() || res.ptr != t.data() + t.size()) {
    throw DataError(where + ": not an integer: '" + t + "'");
  }
  return v;
}

std::vector<std::string> read_lines(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(line);
  }
  return lines;
}

}  // namespace

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == sep) {
      out.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  out.push_back(cur);
  return out;
}

Date parse_date(const std::string& s) {
  const std::string t = trim(s);
  int y = 0;
  unsigned m = 0, d = 0;
  char dash1 = 0, dash2 = 0;
  std::istringstream in(t);
  in >> y >> dash1 >> m >> dash2 >> d;
  if (!in || dash1 != '-' || dash2 != '-' || t.size() != 10) throw DataError("bad ISO date '" + t + "'");
  const year_month_day ymd{year{y}, month{m}, day{d}};
  if (!ymd.ok()) throw DataError("invalid date '" + t + "'");
  return sys_days{ymd};
}

std::string format_date(Date d) {
  const year_month_day ymd{d};
  char buf[16];
  std::snprintf(buf, sizeof buf, "%04d-%02u-%02u", static_cast<int>(ymd.year()),
                static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()));
  return buf;
}

long day_ordinal(Date d) { return d.time_since_epoch().count(); }

std::string format_double(double v) {
  if (std::isnan(v)) return "NaN";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

// ---------------------------------------------------------------------------

const Eigen::MatrixXd& GriddedDataset::variable(const std::string& name) const {
  const auto it = variables.find(name);
  if (it == variables.end()) throw DataError("dataset has no variable '" + name + "'");
  return it->second;
}

std::size_t GriddedDataset::day_index(Date d) const {
  const auto it = std::lower_bound(days.begin(), days.end(), d);
  if (it == days.end() || *it != d) throw DataError("day " + format_date(d) + " not in dataset");
  return static_cast<std::size_t>(it - days.begin());
}

void GriddedDataset::validate() const {
  for (std::size_t t = 1; t < days.size(); ++t) {
    if (!(days[t - 1] < days[t])) throw DataError("day index not strictly increasing at " + format_date(days[t]));
  }
  for (const auto& [name, m] : variables) {
    if (static_cast<std::size_t>(m.rows()) != days.size() || static_cast<std::size_t>(m.cols()) != grid.size()) {
      throw DataError("variable '" + name + "' does not cover days x grid");
    }
  }
  if (!response.empty()) {
    const auto& y = variable(response);
    for (Eigen::Index t = 0; t < y.rows(); ++t) {
      for (Eigen::Index d = 0; d < y.cols(); ++d) {
        if (!std::isfinite(y(t, d))) {
          throw DataError("response '" + response + "' missing at " + format_date(days[static_cast<std::size_t>(t)]) +
                          ", id " + std::to_string(d));
        }
      }
    }
  }
}

Grid load_grid_csv(const fs::path& path) {
  const auto lines = read_lines(path);
  if (lines.empty()) throw DataError(path.string() + ": empty grid file");
  const auto header = split(lines[0], ',');
  const bool has_lonlat = header.size() == 5;
  if (!(header.size() == 3 || has_lonlat) || trim(header[0]) != "id" || trim(header[1]) != "x" ||
      trim(header[2]) != "y" || (has_lonlat && (trim(header[3]) != "lon" || trim(header[4]) != "lat"))) {
    throw DataError(path.string() + ":1: expected header id,x,y[,lon,lat]");
  }
  std::vector<GridPoint> pts;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    if (trim(lines[i]).empty()) continue;
    const std::string where = path.string() + ":" + std::to_string(i + 1);
    const auto f = split(lines[i], ',');
    if (f.size() != header.size()) throw DataError(where + ": expected " + std::to_string(header.size()) + " fields");
    GridPoint p;
    p.id = static_cast<int>(parse_long(f[0], where));
    p.x = parse_number(f[1], where);
    p.y = parse_number(f[2], where);
    if (has_lonlat) {
      p.lon = parse_number(f[3], where);
      p.lat = parse_number(f[4], where);
    }
    if (!std::isfinite(p.x) || !std::isfinite(p.y)) throw DataError(where + ": coordinates must be finite");
    pts.push_back(p);
  }
  return Grid(std::move(pts));
}

void save_grid_csv(const fs::path& path, const Grid& grid) {
  const bool lonlat = grid.size() > 0 && grid[0].lon.has_value();
  std::string out = lonlat ? "id,x,y,lon,lat\n" : "id,x,y\n";
  for (const auto& p : grid.points()) {
    out += std::to_string(p.id) + "," + format_double(p.x) + "," + format_double(p.y);
    if (lonlat) out += "," + format_double(p.lon.value_or(NAN)) + "," + format_double(p.lat.value_or(NAN));
    out += "\n";
  }
  atomic_write(path, out);
}

VariableTable load_variable_csv(const fs::path& path, std::size_t n_points) {
  const auto lines = read_lines(path);
  if (lines.empty() || trim(lines[0]) != "date,id,value") {
    throw DataError(path.string() + ":1: expected header date,id,value");
  }
  std::map<Date, std::vector<double>> cells;
  std::map<Date, std::vector<char>> seen;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    if (trim(lines[i]).empty()) continue;
    const std::string where = path.string() + ":" + std::to_string(i + 1);
    const auto f = split(lines[i], ',');
    if (f.size() != 3) throw DataError(where + ": expected 3 fields");
    Date d;
    try {
      d = parse_date(f[0]);
    } catch (const DataError& e) {
      throw DataError(where + ": " + e.what());
    }
    const long id = parse_long(f[1], where);
    if (id < 0 || static_cast<std::size_t>(id) >= n_points) throw DataError(where + ": id " + std::to_string(id) + " not on the grid");
    auto& row = cells[d];
    auto& s = seen[d];
    if (row.empty()) {
      row.assign(n_points, NAN);
      s.assign(n_points, 0);
    }
    if (s[static_cast<std::size_t>(id)]) {
      throw DataError(where + ": duplicate cell (" + format_date(d) + ", " + std::to_string(id) + ")");
    }
    s[static_cast<std::size_t>(id)] = 1;
    row[static_cast<std::size_t>(id)] = parse_number(f[2], where);
  }
  VariableTable out;
  out.values.resize(static_cast<Eigen::Index>(cells.size()), static_cast<Eigen::Index>(n_points));
  Eigen::Index t = 0;
  for (const auto& [d, row] : cells) {
    const auto& s = seen[d];
    for (std::size_t id = 0; id < n_points; ++id) {
      if (!s[id]) {
        throw DataError(path.string() + ": missing cell (" + format_date(d) + ", " + std::to_string(id) + ")");
      }
      out.values(t, static_cast<Eigen::Index>(id)) = row[id];
    }
    out.days.push_back(d);
    ++t;
  }
  return out;
}

std::string variable_csv(const std::vector<Date>& days, const Eigen::MatrixXd& values) {
  std::string out = "date,id,value\n";
  out.reserve(static_cast<std::size_t>(values.size()) * 24);
  for (std::size_t t = 0; t < days.size(); ++t) {
    const std::string ds = format_date(days[t]);
    for (Eigen::Index d = 0; d < values.cols(); ++d) {
      out += ds;
      out += ',';
      out += std::to_string(d);
      out += ',';
      out += format_double(values(static_cast<Eigen::Index>(t), d));
      out += '\n';
    }
  }
  return out;
}

GriddedDataset load_dataset(const fs::path& grid_csv, const std::map<std::string, fs::path>& variable_csvs,
                            const std::string& response) {
  GriddedDataset ds;
  ds.grid = load_grid_csv(grid_csv);
  ds.response = response;
  bool first = true;
  for (const auto& [name, path] : variable_csvs) {
    auto table = load_variable_csv(path, ds.grid.size());
    if (first) {
      ds.days = table.days;
      first = false;
    } else if (table.days != ds.days) {
      throw DataError("variable '" + name + "' covers different days than the others");
    }
    ds.variables[name] = std::move(table.values);
  }
  if (!response.empty() && !ds.variables.count(response)) throw DataError("response variable '" + response + "' not loaded");
  ds.validate();
  return ds;
}

void save_dataset_dir(const fs::path& dir, const GriddedDataset& ds) {
  fs::create_directories(dir);
  save_grid_csv(dir / "grid.csv", ds.grid);
  nlohmann::json meta;
  meta["format"] = "grpboost-dataset/1";
  meta["response"] = ds.response;
  meta["variables"] = nlohmann::json::array();
  for (const auto& [name, m] : ds.variables) {
    meta["variables"].push_back(name);
    atomic_write(dir / (name + ".csv"), variable_csv(ds.days, m));
  }
  meta["provenance"] = ds.provenance;
  atomic_write(dir / "dataset.json", meta.dump(2) + "\n");
}

GriddedDataset load_dataset_dir(const fs::path& dir) {
  nlohmann::json meta;
  try {
    meta = nlohmann::json::parse(read_file(dir / "dataset.json"));
  } catch (const nlohmann::json::exception& e) {
    throw DataError((dir / "dataset.json").string() + ": " + e.what());
  }
  std::map<std::string, fs::path> vars;
  for (const auto& v : meta.at("variables")) vars[v.get<std::string>()] = dir / (v.get<std::string>() + ".csv");
  auto ds = load_dataset(dir / "grid.csv", vars, meta.value("response", std::string()));
  ds.provenance = meta.value("provenance", nlohmann::json::array());
  return ds;
}

void atomic_write(const fs::path& path, const std::string& content) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write " + tmp.string());
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!out) throw DataError("write failed for " + tmp.string());
  }
  fs::rename(tmp, path);
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// ---------------------------------------------------------------------------
// Preprocessing

std::vector<double> detrend(std::span<const double> series, std::span<const double> t) {
  if (series.size() != t.size()) throw DataError("detrend: series and time index differ in length");
  const std::size_t n = series.size();
  std::vector<double> out(series.begin(), series.end());
  if (n < 2) return out;
  const double tm = mean(t);
  const double ym = mean(series);
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    sxy += (t[i] - tm) * (series[i] - ym);
    sxx += (t[i] - tm) * (t[i] - tm);
  }
  const double slope = sxx > 0.0 ? sxy / sxx : 0.0;
  for (std::size_t i = 0; i < n; ++i) out[i] = series[i] - ym - slope * (t[i] - tm);
  return out;
}

int day_of_year(Date d) {
  // Leap-year calendar so 29 February has its own slot.
  const year_month_day ymd{d};
  const sys_days start{year{2000} / January / 1};
  const sys_days same{year{2000} / ymd.month() / ymd.day()};
  return static_cast<int>((same - start).count());
}

Climatology climatology(std::span<const Date> days, std::span<const double> series, int ref_first_year,
                        int ref_last_year, int window) {
  if (days.size() != series.size()) throw DataError("climatology: length mismatch");
  if (window < 1) throw ConfigError("climatology window must be positive");
  const int half = window / 2;
  std::vector<double> msum(366, 0.0), ssum(366, 0.0);
  std::vector<int> count(366, 0);
  std::size_t lo = 0;
  for (std::size_t i = 0; i < days.size(); ++i) {
    const int yr = static_cast<int>(year_month_day{days[i]}.year());
    if (yr < ref_first_year || yr > ref_last_year) continue;
    while (lo < days.size() && days[lo] < days[i] - std::chrono::days{half}) ++lo;
    std::vector<double> win;
    for (std::size_t j = lo; j < days.size() && days[j] <= days[i] + std::chrono::days{half}; ++j) {
      if (std::isfinite(series[j])) win.push_back(series[j]);
    }
    if (win.size() < 2) continue;
    const int doy = day_of_year(days[i]);
    msum[static_cast<std::size_t>(doy)] += mean(win);
    ssum[static_cast<std::size_t>(doy)] += sample_sd(win);
    ++count[static_cast<std::size_t>(doy)];
  }
  Climatology c;
  c.mean.assign(366, NAN);
  c.sd.assign(366, NAN);
  for (std::size_t d = 0; d < 366; ++d) {
    if (count[d] > 0) {
      c.mean[d] = msum[d] / count[d];
      c.sd[d] = ssum[d] / count[d];
    }
  }
  return c;
}

std::vector<double> standardized_anomalies(std::span<const Date> days, std::span<const double> series,
                                           int ref_first_year, int ref_last_year, int window) {
  const auto c = climatology(days, series, ref_first_year, ref_last_year, window);
  std::vector<double> out(series.size());
  for (std::size_t i = 0; i < series.size(); ++i) {
    const auto doy = static_cast<std::size_t>(day_of_year(days[i]));
    if (std::isnan(c.mean[doy])) {
      throw DataError("no reference climatology for day of year " + std::to_string(doy + 1));
    }
    if (!(c.sd[doy] > 0.0)) {
      throw NumericError("zero climatological SD at day of year " + std::to_string(doy + 1));
    }
    out[i] = (series[i] - c.mean[doy]) / c.sd[doy];
  }
  return out;
}

std::vector<double> rolling_mean(std::span<const Date> days, std::span<const double> series, int width,
                                 bool inclusive) {
  if (width < 1) throw ConfigError("rolling window width must be at least 1");
  if (days.size() != series.size()) throw DataError("rolling_mean: length mismatch");
  std::unordered_map<long, std::size_t> index;
  for (std::size_t i = 0; i < days.size(); ++i) index[day_ordinal(days[i])] = i;
  std::vector<double> out(series.size(), NAN);
  for (std::size_t i = 0; i < days.size(); ++i) {
    const long t = day_ordinal(days[i]);
    const long first = inclusive ? t - width + 1 : t - width;
    double s = 0.0;
    bool ok = true;
    for (long k = first; k < first + width; ++k) {
      const auto it = index.find(k);
      if (it == index.end() || !std::isfinite(series[it->second])) {
        ok = false;
        break;
      }
      s += series[it->second];
    }
    if (ok) out[i] = s / width;
  }
  return out;
}

GriddedDataset filter_months(const GriddedDataset& ds, const std::vector<int>& months) {
  const std::set<int> keep(months.begin(), months.end());
  std::vector<Eigen::Index> idx;
  GriddedDataset out;
  out.grid = ds.grid;
  out.response = ds.response;
  out.provenance = ds.provenance;
  for (std::size_t t = 0; t < ds.days.size(); ++t) {
    if (keep.count(static_cast<int>(static_cast<unsigned>(year_month_day{ds.days[t]}.month())))) {
      idx.push_back(static_cast<Eigen::Index>(t));
      out.days.push_back(ds.days[t]);
    }
  }
  for (const auto& [name, m] : ds.variables) {
    Eigen::MatrixXd sub(static_cast<Eigen::Index>(idx.size()), m.cols());
    for (std::size_t r = 0; r < idx.size(); ++r) sub.row(static_cast<Eigen::Index>(r)) = m.row(idx[r]);
    out.variables[name] = std::move(sub);
  }
  return out;
}

GriddedDataset preprocess(GriddedDataset ds, const nlohmann::json& steps) {
  std::vector<double> ordinal;
  for (auto d : ds.days) ordinal.push_back(static_cast<double>(day_ordinal(d)));
  auto per_point = [&](const std::string& var, auto&& fn) {
    auto it = ds.variables.find(var);
    if (it == ds.variables.end()) throw ConfigError("preprocess: no variable '" + var + "'");
    auto& m = it->second;
    std::vector<double> col(static_cast<std::size_t>(m.rows()));
    for (Eigen::Index d = 0; d < m.cols(); ++d) {
      for (Eigen::Index t = 0; t < m.rows(); ++t) col[static_cast<std::size_t>(t)] = m(t, d);
      const std::vector<double> out = fn(col);
      for (Eigen::Index t = 0; t < m.rows(); ++t) m(t, d) = out[static_cast<std::size_t>(t)];
    }
  };
  for (const auto& step : steps) {
    const std::string op = step.at("op").get<std::string>();
    if (op == "detrend") {
      per_point(step.at("variable").get<std::string>(), [&](const std::vector<double>& c) { return detrend(c, ordinal); });
    } else if (op == "anomalies") {
      const auto ref = step.at("reference").get<std::vector<int>>();
      if (ref.size() != 2) throw ConfigError("preprocess: anomalies reference must be [first, last]");
      const int window = step.value("window", 31);
      per_point(step.at("variable").get<std::string>(), [&](const std::vector<double>& c) {
        return standardized_anomalies(ds.days, c, ref[0], ref[1], window);
      });
    } else if (op == "rolling_mean") {
      const int width = step.at("width").get<int>();
      const bool inclusive = step.value("inclusive", false);
      per_point(step.at("variable").get<std::string>(), [&](const std::vector<double>& c) {
        return rolling_mean(ds.days, c, width, inclusive);
      });
    } else if (op == "months") {
      auto prov = ds.provenance;
      ds = filter_months(ds, step.at("months").get<std::vector<int>>());
      ds.provenance = prov;
      ordinal.clear();
      for (auto d : ds.days) ordinal.push_back(static_cast<double>(day_ordinal(d)));
    } else {
      throw ConfigError("preprocess: unknown op '" + op + "'");
    }
    ds.provenance.push_back(step);
  }
  ds.validate();
  return ds;
}

// ---------------------------------------------------------------------------
// Config

Config Config::parse(const std::string& text, const std::string& origin) {
  Config c;
  std::string section;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const std::string where = origin + ":" + std::to_string(lineno);
    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError(where + ": malformed section header");
      section = trim(line.substr(1, line.size() - 2));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError(where + ": expected key = value");
    std::string key = trim(line.substr(0, eq));
    if (key.empty()) throw ConfigError(where + ": empty key");
    if (!section.empty()) key = section + "." + key;
    if (c.values_.count(key)) throw ConfigError(where + ": duplicate key '" + key + "'");
    c.values_[key] = trim(line.substr(eq + 1));
  }
  return c;
}

Config Config::load(const fs::path& path) {
  if (!fs::is_regular_file(path)) throw ConfigError("config file not found: " + path.string());
  auto c = parse(read_file(path), path.string());
  c.base_dir = path.parent_path();
  return c;
}

std::string Config::str(const std::string& key) const {
  const auto it = values_.find(key);
  if (it == values_.end()) throw ConfigError("missing config key '" + key + "'");
  return it->second;
}

std::string Config::str(const std::string& key, const std::string& fallback) const {
  const auto it = values_.find(key);
  return it == values_.end() ? fallback : it->second;
}

double Config::num(const std::string& key) const {
  const std::string s = str(key);
  double v = 0.0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
    throw ConfigError("config key '" + key + "' is not a number: '" + s + "'");
  }
  return v;
}

double Config::num(const std::string& key, double fallback) const { return has(key) ? num(key) : fallback; }

long Config::integer(const std::string& key, long fallback) const {
  if (!has(key)) return fallback;
  const std::string s = str(key);
  long v = 0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
    throw ConfigError("config key '" + key + "' is not an integer: '" + s + "'");
  }
  return v;
}

bool Config::flag(const std::string& key, bool fallback) const {
  if (!has(key)) return fallback;
  const std::string s = str(key);
  if (s == "true" || s == "1" || s == "yes" || s == "on") return true;
  if (s == "false" || s == "0" || s == "no" || s == "off") return false;
  throw ConfigError("config key '" + key + "' is not a boolean: '" + s + "'");
}

std::vector<std::string> Config::list(const std::string& key) const {
  std::vector<std::string> out;
  if (!has(key)) return out;
  for (const auto& part : split(str(key), ',')) {
    const auto t = trim(part);
    if (!t.empty()) out.push_back(t);
  }
  return out;
}

fs::path Config::path(const std::string& key) const {
  fs::path p = str(key);
  if (p.is_relative()) p = base_dir / p;
  return p;
}

}  // namespace grpboost
