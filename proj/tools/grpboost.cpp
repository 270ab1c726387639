#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "grpboost/boosting.hpp"
#include "grpboost/error.hpp"
#include "grpboost/evaluation.hpp"
#include "grpboost/io.hpp"
#include "grpboost/pipeline.hpp"
#include "grpboost/stats.hpp"
#include "grpboost/svg.hpp"
#include "grpboost/synthetic.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace grpboost;

namespace {

// ---------------------------------------------------------------------------
// Config helpers

std::optional<Config> load_config(const std::string& path) {
  if (path.empty()) return std::nullopt;
  return Config::load(path);
}

std::vector<std::size_t> day_range(const GriddedDataset& ds, const std::string& range) {
  std::vector<std::size_t> out;
  if (range.empty()) return all_rows(ds.n_days());
  const auto dots = range.find("..");
  if (dots == std::string::npos) throw ConfigError("date range must look like A..B: '" + range + "'");
  const Date a = parse_date(trim(range.substr(0, dots)));
  const Date b = parse_date(trim(range.substr(dots + 2)));
  if (b < a) throw ConfigError("date range ends before it starts: '" + range + "'");
  if (!ds.days.empty() && (b < ds.days.front() || a > ds.days.back())) {
    throw ConfigError("date range " + range + " lies outside the day index");
  }
  for (std::size_t t = 0; t < ds.n_days(); ++t) {
    if (ds.days[t] >= a && ds.days[t] <= b) out.push_back(t);
  }
  if (out.empty()) throw DataError("no days in range " + range);
  return out;
}

std::vector<int> int_list(const std::vector<std::string>& items, const std::string& what) {
  std::vector<int> out;
  for (const auto& s : items) {
    try {
      std::size_t used = 0;
      out.push_back(std::stoi(s, &used));
      if (used != s.size()) throw std::invalid_argument(s);
    } catch (const std::exception&) {
      throw ConfigError(what + ": not an integer: '" + s + "'");
    }
  }
  return out;
}

/// `model.region` lists grid ids; `model.region_box = x0, x1, y0, y1` selects
/// points inside a planar box. Defaults to the whole grid.
std::vector<int> target_region(const Config& cfg, const Grid& grid) {
  std::vector<int> region;
  if (cfg.has("model.region")) {
    region = int_list(cfg.list("model.region"), "model.region");
  } else if (cfg.has("model.region_box")) {
    const auto box = cfg.list("model.region_box");
    if (box.size() != 4) throw ConfigError("model.region_box needs x0, x1, y0, y1");
    const double x0 = std::stod(box[0]), x1 = std::stod(box[1]), y0 = std::stod(box[2]), y1 = std::stod(box[3]);
    for (const auto& p : grid.points()) {
      if (p.x >= x0 && p.x <= x1 && p.y >= y0 && p.y <= y1) region.push_back(p.id);
    }
  } else {
    for (const auto& p : grid.points()) region.push_back(p.id);
  }
  if (region.empty()) throw ConfigError("target region is empty");
  for (int id : region) {
    if (id < 0 || static_cast<std::size_t>(id) >= grid.size()) {
      throw ConfigError("target region id " + std::to_string(id) + " is not on the grid");
    }
  }
  return region;
}

TrainConfig train_config(const Config& cfg, const std::string& section, TrainConfig tc) {
  tc.n_trees = static_cast<int>(cfg.integer(section + ".n_trees", tc.n_trees));
  tc.max_depth = static_cast<int>(cfg.integer(section + ".max_depth", tc.max_depth));
  tc.learning_rate = cfg.num(section + ".learning_rate", tc.learning_rate);
  tc.lambda = cfg.num(section + ".lambda", tc.lambda);
  tc.gamma_complexity = cfg.num(section + ".gamma", tc.gamma_complexity);
  tc.min_child_hessian = cfg.num(section + ".min_child_hessian", tc.min_child_hessian);
  tc.max_delta_step = cfg.num(section + ".max_delta_step", tc.max_delta_step);
  tc.validate();
  return tc;
}

FitConfig fit_config(const Config& cfg) {
  FitConfig fc;
  fc.risk_level = cfg.num("model.risk_level", fc.risk_level);
  fc.xi = cfg.num("model.xi", fc.xi);
  fc.alpha = cfg.num("model.alpha", fc.alpha);
  fc.theta_scale = cfg.num("model.theta_scale", fc.theta_scale);
  fc.vecchia_k = static_cast<int>(cfg.integer("model.vecchia_k", fc.vecchia_k));
  const auto zs = cfg.str("model.z_scale", "gpd_scale");
  if (zs == "exp_theta") {
    fc.z_scale = ZScale::kExpTheta;
  } else if (zs == "gpd_scale") {
    fc.z_scale = ZScale::kGpdScale;
  } else {
    throw ConfigError("model.z_scale must be exp_theta or gpd_scale");
  }
  fc.prefit_dependence = cfg.flag("model.prefit_dependence", fc.prefit_dependence);
  fc.n_folds = static_cast<std::size_t>(cfg.integer("model.n_folds", static_cast<long>(fc.n_folds)));
  fc.cross_validate = cfg.flag("model.cross_validate", fc.cross_validate);
  fc.seed = static_cast<std::uint64_t>(cfg.integer("model.seed", static_cast<long>(fc.seed)));
  fc.occurrence = train_config(cfg, "occurrence", fc.occurrence);
  fc.intensity = train_config(cfg, "intensity", fc.intensity);
  fc.dependence = train_config(cfg, "dependence", fc.dependence);
  if (!(fc.risk_level > 0.0 && fc.risk_level < 1.0)) throw ConfigError("model.risk_level must lie in (0, 1)");
  if (fc.xi == 0.0) throw ConfigError("model.xi must be nonzero");
  if (fc.vecchia_k < 0) throw ConfigError("model.vecchia_k must be nonnegative");
  return fc;
}

PredictorSchema schema_from(const Config& cfg, const GriddedDataset& ds) {
  return make_schema(ds.grid, target_region(cfg, ds.grid), ds.response, cfg.str("data.z500", "z500"),
                     cfg.str("data.sm", "sm"));
}

fs::path output_dir(const Config* cfg, const std::string& override_dir) {
  fs::path dir = !override_dir.empty() ? fs::path(override_dir)
                 : cfg != nullptr && cfg->has("output.dir") ? cfg->path("output.dir")
                                                            : fs::path(".");
  fs::create_directories(dir);
  return dir;
}

GriddedDataset processed_dataset(const Config* cfg, const std::string& override_dir) {
  if (!override_dir.empty()) return load_dataset_dir(override_dir);
  if (cfg == nullptr || !cfg->has("data.processed")) throw ConfigError("no dataset: pass --data or set data.processed");
  return load_dataset_dir(cfg->path("data.processed"));
}

SubModelBundle load_bundle(const std::string& path) { return SubModelBundle::parse(read_file(path)); }

void write_json(const fs::path& path, const json& j) { atomic_write(path, j.dump(1) + "\n"); }

std::string join_csv(const std::vector<std::string>& cells) {
  std::string s;
  for (std::size_t i = 0; i < cells.size(); ++i) {
    if (i) s += ',';
    s += cells[i];
  }
  return s;
}

// ---------------------------------------------------------------------------
// Commands

int cmd_synthdata(const std::string& out, const SyntheticSpec& spec) {
  const auto ds = synthetic_dataset(spec);
  fs::create_directories(out);
  save_grid_csv(fs::path(out) / "grid.csv", ds.grid);
  for (const auto& [name, m] : ds.variables) atomic_write(fs::path(out) / (name + ".csv"), variable_csv(ds.days, m));
  std::cout << "wrote " << ds.n_days() << " days x " << ds.grid.size() << " points to " << out << "\n";
  return 0;
}

json preprocess_steps(const Config& cfg) {
  json steps = json::array();
  for (const auto& v : cfg.list("preprocess.detrend")) steps.push_back({{"op", "detrend"}, {"variable", v}});
  const auto anomalies = cfg.list("preprocess.anomalies");
  if (!anomalies.empty()) {
    const auto ref = int_list(cfg.list("preprocess.reference"), "preprocess.reference");
    if (ref.size() != 2) throw ConfigError("preprocess.reference needs first, last year");
    const long window = cfg.integer("preprocess.window", 31);
    for (const auto& v : anomalies) {
      steps.push_back({{"op", "anomalies"}, {"variable", v}, {"reference", ref}, {"window", window}});
    }
  }
  const bool inclusive = cfg.flag("preprocess.inclusive", false);
  for (const auto& item : cfg.list("preprocess.rolling")) {
    const auto colon = item.find(':');
    if (colon == std::string::npos) throw ConfigError("preprocess.rolling entries look like variable:width");
    const auto width = int_list({trim(item.substr(colon + 1))}, "preprocess.rolling");
    steps.push_back({{"op", "rolling_mean"}, {"variable", trim(item.substr(0, colon))}, {"width", width[0]},
                     {"inclusive", inclusive}});
  }
  const auto months = cfg.list("preprocess.months");
  if (!months.empty()) steps.push_back({{"op", "months"}, {"months", int_list(months, "preprocess.months")}});
  return steps;
}

GriddedDataset raw_dataset(const Config& cfg) {
  std::map<std::string, fs::path> vars;
  for (const auto& item : cfg.list("data.variables")) {
    const auto eq = item.find('=');
    if (eq == std::string::npos) throw ConfigError("data.variables entries look like name=path");
    fs::path p = trim(item.substr(eq + 1));
    if (p.is_relative()) p = cfg.base_dir / p;
    vars[trim(item.substr(0, eq))] = p;
  }
  if (vars.empty()) throw ConfigError("data.variables is empty");
  return load_dataset(cfg.path("data.grid"), vars, cfg.str("data.response", "t2m"));
}

int cmd_preprocess(const Config& cfg) {
  auto ds = preprocess(raw_dataset(cfg), preprocess_steps(cfg));
  const auto dir = cfg.path("data.processed");
  save_dataset_dir(dir, ds);
  std::cout << "processed " << ds.n_days() << " days, " << ds.variables.size() << " variables -> " << dir.string()
            << "\n";
  return 0;
}

int cmd_thresholds(const Config& cfg, const std::string& data, const std::string& out) {
  const auto ds = processed_dataset(&cfg, data);
  const auto days = day_range(ds, cfg.str("model.train", ""));
  const auto region = target_region(cfg, ds.grid);
  Eigen::MatrixXd y(static_cast<Eigen::Index>(days.size()), static_cast<Eigen::Index>(ds.grid.size()));
  const auto& yall = ds.variable(ds.response);
  for (std::size_t i = 0; i < days.size(); ++i) y.row(static_cast<Eigen::Index>(i)) = yall.row(static_cast<Eigen::Index>(days[i]));
  auto spec = select_thresholds(y, region, cfg.num("model.risk_level", 0.95));
  for (auto& t : spec.exceedance_days) t = days[t];
  json j = spec.to_json();
  json dates = json::array();
  for (auto t : spec.exceedance_days) dates.push_back(format_date(ds.days[t]));
  j["exceedance_dates"] = dates;
  write_json(output_dir(&cfg, out) / "thresholds.json", j);
  std::cout << "|T| = " << spec.exceedance_days.size() << "  u = " << format_double(spec.u)
            << "  q' = " << format_double(spec.q_prime) << "\n";
  return 0;
}

void write_cv(const fs::path& dir, const StageReport& stage) {
  std::ostringstream csv;
  csv << "n_trees,mean_loss,standard_error,train_loss\n";
  const std::size_t n = std::max(stage.cv ? stage.cv->mean_loss.size() : 0, stage.trace.train_loss.size());
  PlotSeries cv{"cv mean loss", {}, {}, {}, {}, false};
  PlotSeries tr{"train loss", {}, {}, {}, {}, false};
  for (std::size_t i = 0; i < n; ++i) {
    const bool has_cv = stage.cv && i < stage.cv->mean_loss.size();
    const bool has_tr = i < stage.trace.train_loss.size();
    csv << i << ',' << (has_cv ? format_double(stage.cv->mean_loss[i]) : "") << ','
        << (has_cv ? format_double(stage.cv->standard_error[i]) : "") << ','
        << (has_tr ? format_double(stage.trace.train_loss[i] / static_cast<double>(std::max<std::size_t>(stage.n_rows, 1))) : "")
        << '\n';
    if (has_cv) {
      cv.x.push_back(static_cast<double>(i));
      cv.y.push_back(stage.cv->mean_loss[i]);
      cv.lower.push_back(stage.cv->mean_loss[i] - stage.cv->standard_error[i]);
      cv.upper.push_back(stage.cv->mean_loss[i] + stage.cv->standard_error[i]);
    }
    if (has_tr) {
      tr.x.push_back(static_cast<double>(i));
      tr.y.push_back(stage.trace.train_loss[i] / static_cast<double>(std::max<std::size_t>(stage.n_rows, 1)));
    }
  }
  atomic_write(dir / ("cv_" + stage.name + ".csv"), csv.str());
  PlotSpec plot{stage.name + ": loss per row", "boosting iterations", "loss", {}, false};
  if (!cv.x.empty()) plot.series.push_back(cv);
  plot.series.push_back(tr);
  atomic_write(dir / ("cv_" + stage.name + ".svg"), svg_line_plot(plot));
}

int cmd_fit(const Config& cfg, const std::string& data, const std::string& out) {
  const auto ds = processed_dataset(&cfg, data);
  const auto days = day_range(ds, cfg.str("model.train", ""));
  const auto schema = schema_from(cfg, ds);
  const auto fc = fit_config(cfg);
  const auto result = fit_all(ds, schema, fc, days);
  const auto dir = output_dir(&cfg, out);
  atomic_write(dir / "bundle.json", result.bundle.dump());
  json report;
  report["thresholds"] = {{"u", result.bundle.thresholds.u},
                          {"q_prime", result.bundle.thresholds.q_prime},
                          {"n_exceedances", result.bundle.thresholds.exceedance_days.size()}};
  report["dependence"] = {{"alpha", result.bundle.alpha}, {"theta_scale", result.bundle.theta_scale}};
  report["stages"] = json::array();
  for (const auto& s : result.stages) {
    json js{{"name", s.name}, {"n_rows", s.n_rows}, {"n_trees", s.n_trees}};
    if (s.cv) js["cv_selected"] = s.cv->selected_n_trees, js["cv_min_index"] = s.cv->min_index;
    js["loss_increases"] = s.trace.loss_increases.size();
    report["stages"].push_back(js);
    write_cv(dir, s);
    std::cout << s.name << ": " << s.n_rows << " rows, " << s.n_trees << " trees\n";
  }
  write_json(dir / "fit_report.json", report);
  return 0;
}

json prediction_json(const GriddedDataset& ds, std::size_t t, const DayPrediction& p) {
  json j{{"date", format_date(ds.days[t])}, {"p_occurrence", p.p_occurrence}, {"theta_extent", p.theta_extent}};
  j["theta_int"] = p.theta_int;
  return j;
}

int cmd_predict(const std::string& bundle_path, const std::string& data, const std::string& day,
                const std::string& out_file) {
  const auto bundle = load_bundle(bundle_path);
  const auto ds = load_dataset_dir(data);
  const auto t = ds.day_index(parse_date(day));
  const auto j = prediction_json(ds, t, predict_day(bundle, ds, t));
  if (out_file.empty()) {
    std::cout << j.dump(1) << "\n";
  } else {
    write_json(out_file, j);
  }
  return 0;
}

int cmd_simulate(const std::string& bundle_path, const std::string& data, const std::string& day, std::size_t n,
                 std::uint64_t seed, std::optional<double> override_extent, const std::string& out_file) {
  const auto bundle = load_bundle(bundle_path);
  const auto ds = load_dataset_dir(data);
  const auto t = ds.day_index(parse_date(day));
  const auto pred = predict_day(bundle, ds, t);
  const auto scen = generate_scenarios(bundle, pred, n, seed, override_extent);
  std::ostringstream csv;
  csv << "sim_id,date,id,value\n";
  const auto date = format_date(ds.days[t]);
  for (std::size_t i = 0; i < scen.fields.size(); ++i) {
    for (std::size_t d = 0; d < scen.fields[i].size(); ++d) {
      csv << i << ',' << date << ',' << d << ',' << format_double(scen.fields[i][d]) << '\n';
    }
  }
  const fs::path out = out_file.empty() ? fs::path("scenarios.csv") : fs::path(out_file);
  if (out.has_parent_path()) fs::create_directories(out.parent_path());
  atomic_write(out, csv.str());
  json meta = prediction_json(ds, t, pred);
  meta["n"] = n;
  meta["seed"] = seed;
  if (override_extent) meta["override_extent"] = *override_extent;
  meta["risk"] = scen.risk;
  meta["accepted"] = scen.stats.accepted;
  meta["proposals"] = scen.stats.proposals;
  fs::path meta_path = out;
  meta_path.replace_extension(".json");
  write_json(meta_path, meta);
  std::cout << "wrote " << scen.fields.size() << " scenarios for " << date << " to " << out.string() << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// evaluate

struct EvalContext {
  const SubModelBundle& bundle;
  const GriddedDataset& ds;
  std::vector<std::size_t> days;           // test days
  std::vector<std::size_t> exceedance;     // test days with r >= u
};

EvalContext eval_context(const SubModelBundle& bundle, const GriddedDataset& ds, std::vector<std::size_t> days) {
  EvalContext c{bundle, ds, std::move(days), {}};
  const auto& y = ds.variable(bundle.schema.response);
  const auto w = region_weights(bundle.thresholds.region, ds.grid.size());
  std::vector<double> field(ds.grid.size());
  for (auto t : c.days) {
    for (std::size_t d = 0; d < field.size(); ++d) field[d] = y(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(d));
    if (risk_functional(field, w) >= bundle.thresholds.u) c.exceedance.push_back(t);
  }
  return c;
}

std::vector<double> observed_field(const GriddedDataset& ds, const std::string& var, std::size_t t) {
  const auto& y = ds.variable(var);
  std::vector<double> f(ds.grid.size());
  for (std::size_t d = 0; d < f.size(); ++d) f[d] = y(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(d));
  return f;
}

std::vector<std::pair<int, int>> read_pairs(const std::string& path, const SubModelBundle& bundle) {
  std::vector<std::pair<int, int>> pairs;
  const int D = static_cast<int>(bundle.grid.size());
  if (path.empty()) {
    const int s = bundle.thresholds.region.front();
    for (int k : {1, D / 4, D / 2, D - 1}) {
      const int other = (s + k) % D;
      if (other != s && std::find_if(pairs.begin(), pairs.end(), [&](auto& p) { return p.second == other; }) == pairs.end()) {
        pairs.emplace_back(s, other);
      }
    }
    return pairs;
  }
  std::istringstream in(read_file(path));
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    line = trim(line);
    if (line.empty() || line[0] == '#' || line.rfind("s1", 0) == 0) continue;
    const auto cells = split(line, ',');
    if (cells.size() != 2) throw DataError(path + ":" + std::to_string(lineno) + ": expected s1,s2");
    const auto ids = int_list({trim(cells[0]), trim(cells[1])}, path + ":" + std::to_string(lineno));
    for (int id : ids) {
      if (id < 0 || id >= D) throw DataError(path + ":" + std::to_string(lineno) + ": id off the grid");
    }
    pairs.emplace_back(ids[0], ids[1]);
  }
  if (pairs.empty()) throw DataError(path + ": no pairs");
  return pairs;
}

/// Simulated scenarios for every test exceedance day, seeded per day.
std::vector<std::vector<std::vector<double>>> simulate_days(const EvalContext& c, std::size_t n_sim,
                                                            std::uint64_t seed) {
  std::vector<std::vector<std::vector<double>>> out;
  for (auto t : c.exceedance) {
    const auto pred = predict_day(c.bundle, c.ds, t);
    out.push_back(generate_scenarios(c.bundle, pred, n_sim, derive_seed(seed, t)).fields);
  }
  return out;
}

struct PairBrier {
  std::vector<double> spatial;
  std::vector<double> independent;
};

PairBrier pair_brier(const EvalContext& c, const std::vector<std::vector<std::vector<double>>>& sims,
                     std::pair<int, int> pair) {
  PairBrier out;
  const auto& b = c.bundle.thresholds.b;
  const auto s1 = static_cast<std::size_t>(pair.first), s2 = static_cast<std::size_t>(pair.second);
  for (std::size_t i = 0; i < c.exceedance.size(); ++i) {
    const auto obs = observed_field(c.ds, c.bundle.schema.response, c.exceedance[i]);
    const int event = obs[s1] > b[s1] && obs[s2] > b[s2] ? 1 : 0;
    double both = 0.0, e1 = 0.0, e2 = 0.0;
    for (const auto& f : sims[i]) {
      const bool a1 = f[s1] > b[s1], a2 = f[s2] > b[s2];
      both += a1 && a2;
      e1 += a1;
      e2 += a2;
    }
    const double n = static_cast<double>(std::max<std::size_t>(sims[i].size(), 1));
    const double ps = both / n, pi = (e1 / n) * (e2 / n);
    out.spatial.push_back((ps - event) * (ps - event));
    out.independent.push_back((pi - event) * (pi - event));
  }
  return out;
}

struct EvalOptions {
  std::string bundle;
  std::string compare;
  std::string data;
  std::string out;
  std::string test_range;
  std::string metrics = "roc,brier,qq,extremogram";
  std::string pairs;
  int point = -1;
  std::size_t n_sim = 200;
  std::size_t n_perm = 10000;
  std::size_t n_boot = 1000;
  double q = 0.75;
  std::uint64_t seed = 1;
};

int cmd_evaluate(const Config* cfg, const EvalOptions& o) {
  const auto bundle = load_bundle(o.bundle);
  const auto ds = processed_dataset(cfg, o.data);
  const std::string range = !o.test_range.empty() ? o.test_range : cfg ? cfg->str("model.test", "") : "";
  const auto ctx = eval_context(bundle, ds, day_range(ds, range));
  const auto dir = output_dir(cfg, o.out);
  const auto metrics = split(o.metrics, ',');
  auto wants = [&](const std::string& m) {
    return std::any_of(metrics.begin(), metrics.end(), [&](const std::string& s) { return trim(s) == m; });
  };
  json report{{"test_days", ctx.days.size()}, {"test_exceedances", ctx.exceedance.size()}, {"seed", o.seed}};

  if (wants("roc")) {
    std::vector<int> labels;
    std::vector<double> scores;
    const auto ex = std::set<std::size_t>(ctx.exceedance.begin(), ctx.exceedance.end());
    for (auto t : ctx.days) {
      labels.push_back(ex.count(t) ? 1 : 0);
      scores.push_back(predict_day(bundle, ds, t).p_occurrence);
    }
    const auto roc = roc_auc(labels, scores);
    std::ostringstream csv;
    csv << "fpr,tpr,threshold\n";
    for (std::size_t i = 0; i < roc.fpr.size(); ++i) {
      csv << format_double(roc.fpr[i]) << ',' << format_double(roc.tpr[i]) << ',' << format_double(roc.thresholds[i])
          << '\n';
    }
    atomic_write(dir / "roc.csv", csv.str());
    PlotSpec plot{"ROC, AUC " + format_double(std::round(roc.auc * 1000) / 1000), "false positive rate",
                  "true positive rate", {{"occurrence", roc.fpr, roc.tpr, {}, {}, false}}, true};
    atomic_write(dir / "roc.svg", svg_line_plot(plot));
    const auto br = brier(labels, scores);
    report["roc"] = {{"auc", roc.auc}, {"brier", br.value}};
    std::cout << "AUC " << format_double(roc.auc) << "\n";
  }

  const bool need_sims = wants("brier") || wants("extremogram");
  std::vector<std::vector<std::vector<double>>> sims;
  if (need_sims) {
    if (ctx.exceedance.empty()) throw DataError("no exceedance days in the test range");
    sims = simulate_days(ctx, o.n_sim, o.seed);
  }

  if (wants("brier")) {
    const auto pairs = read_pairs(o.pairs, bundle);
    std::optional<SubModelBundle> other;
    std::vector<std::vector<std::vector<double>>> other_sims;
    if (!o.compare.empty()) {
      other = load_bundle(o.compare);
      other_sims = simulate_days(eval_context(*other, ds, ctx.days), o.n_sim, o.seed);
    }
    std::ostringstream csv;
    csv << "s1,s2,distance,spatial,independence,p_value" << (other ? ",compare,p_value_compare" : "") << '\n';
    report["brier"] = json::array();
    for (std::size_t k = 0; k < pairs.size(); ++k) {
      const auto pb = pair_brier(ctx, sims, pairs[k]);
      const auto a = mean(pb.spatial), b = mean(pb.independent);
      const double p = permutation_test(pb.spatial, pb.independent, o.n_perm, derive_seed(o.seed, 1000 + k));
      const double dist = anisotropic_distance(bundle.grid[static_cast<std::size_t>(pairs[k].first)],
                                               bundle.grid[static_cast<std::size_t>(pairs[k].second)], 0.0);
      json jp{{"s1", pairs[k].first}, {"s2", pairs[k].second}, {"distance", dist}, {"spatial", a},
              {"independence", b}, {"p_value", p}};
      csv << pairs[k].first << ',' << pairs[k].second << ',' << format_double(dist) << ',' << format_double(a) << ','
          << format_double(b) << ',' << format_double(p);
      if (other) {
        const auto pc = pair_brier(eval_context(*other, ds, ctx.days), other_sims, pairs[k]);
        const double c = mean(pc.spatial);
        const double pcmp = permutation_test(pb.spatial, pc.spatial, o.n_perm, derive_seed(o.seed, 2000 + k));
        csv << ',' << format_double(c) << ',' << format_double(pcmp);
        jp["compare"] = c;
        jp["p_value_compare"] = pcmp;
      }
      csv << '\n';
      report["brier"].push_back(jp);
    }
    atomic_write(dir / "brier.csv", csv.str());
  }

  if (wants("qq")) {
    const int point = o.point >= 0 ? o.point : bundle.thresholds.region.front();
    if (static_cast<std::size_t>(point) >= bundle.grid.size()) throw ConfigError("--point is off the grid");
    const auto d = static_cast<std::size_t>(point);
    std::vector<double> excess, scales;
    for (auto t : ctx.exceedance) {
      const double y = ds.variable(bundle.schema.response)(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(d));
      if (y <= bundle.thresholds.b[d]) continue;
      const auto pred = predict_day(bundle, ds, t);
      excess.push_back(y - bundle.thresholds.b[d]);
      scales.push_back(gpd_scale(pred.theta_int[d], bundle.thresholds.m[d], bundle.xi));
    }
    if (excess.size() < 10) {
      throw DataError("qq: only " + std::to_string(excess.size()) + " excesses at point " + std::to_string(point));
    }
    const auto qq = qq_tail(excess, scales, bundle.xi, o.n_boot, 0.95, derive_seed(o.seed, 3000));
    std::ostringstream csv;
    csv << "prob,model,empirical,lower,upper\n";
    for (std::size_t i = 0; i < qq.probs.size(); ++i) {
      csv << format_double(qq.probs[i]) << ',' << format_double(qq.model[i]) << ',' << format_double(qq.empirical[i])
          << ',' << format_double(qq.lower[i]) << ',' << format_double(qq.upper[i]) << '\n';
    }
    atomic_write(dir / "qq.csv", csv.str());
    PlotSpec plot{"QQ at grid point " + std::to_string(point), "model quantile", "empirical quantile",
                  {{"scaled excesses", qq.model, qq.empirical, qq.lower, qq.upper, true}}, true};
    atomic_write(dir / "qq.svg", svg_line_plot(plot));
    report["qq"] = {{"point", point}, {"n", excess.size()}, {"fraction_inside", qq.fraction_inside()}};
  }

  if (wants("extremogram")) {
    std::vector<std::vector<double>> obs, model;
    for (auto t : ctx.exceedance) obs.push_back(observed_field(ds, bundle.schema.response, t));
    for (const auto& day : sims) model.insert(model.end(), day.begin(), day.end());
    if (obs.size() < 20) throw DataError("extremogram: need 20 exceedance days, have " + std::to_string(obs.size()));
    const auto pe = extremogram(obs, bundle.grid, o.q);
    const auto pm = extremogram(model, bundle.grid, o.q);
    double max_d = 0.0;
    for (const auto& p : pe) max_d = std::max(max_d, p.distance);
    const auto be = bin_extremogram(pe, 10, max_d), bm = bin_extremogram(pm, 10, max_d);
    std::ostringstream csv;
    csv << "lo,hi,n_pairs,empirical,model\n";
    PlotSeries se{"observed", {}, {}, {}, {}, true}, sm{"model", {}, {}, {}, {}, false};
    for (std::size_t i = 0; i < be.size(); ++i) {
      csv << format_double(be[i].lo) << ',' << format_double(be[i].hi) << ',' << be[i].n_pairs << ','
          << format_double(be[i].mean) << ',' << format_double(bm[i].mean) << '\n';
      if (be[i].n_pairs == 0) continue;
      const double mid = 0.5 * (be[i].lo + be[i].hi);
      se.x.push_back(mid), se.y.push_back(be[i].mean);
      sm.x.push_back(mid), sm.y.push_back(bm[i].mean);
    }
    atomic_write(dir / "extremogram.csv", csv.str());
    PlotSpec plot{"extremogram, q = " + format_double(o.q), "distance (100 km)", "conditional exceedance", {se, sm},
                  false};
    atomic_write(dir / "extremogram.svg", svg_line_plot(plot));
    report["extremogram"] = {{"q", o.q}, {"n_observed", obs.size()}, {"n_model", model.size()}};
  }
  write_json(dir / "evaluate_report.json", report);
  return 0;
}

// ---------------------------------------------------------------------------
// explain

int cmd_explain(const Config* cfg, const std::string& bundle_path, const std::string& data, const std::string& range,
                const std::string& submodel, bool top_decile, const std::string& out) {
  const auto bundle = load_bundle(bundle_path);
  const auto ds = processed_dataset(cfg, data);
  const auto days = day_range(ds, range);
  const std::size_t D = bundle.grid.size();
  const TreeEnsemble* ens = nullptr;
  FeatureMatrix x;
  std::vector<std::string> labels;  // per row: date[,id]
  if (submodel == "occ") {
    ens = &bundle.occurrence;
    x = occurrence_features(ds, bundle.schema, days);
    for (auto t : days) labels.push_back(format_date(ds.days[t]));
  } else if (submodel == "dep") {
    ens = &bundle.dependence;
    x = dependence_features(ds, bundle.schema, days);
    for (auto t : days) labels.push_back(format_date(ds.days[t]));
  } else if (submodel == "int") {
    ens = &bundle.intensity;
    std::vector<PointDay> keys;
    for (auto t : days) {
      for (std::size_t d = 0; d < D; ++d) {
        keys.push_back({d, t});
        labels.push_back(format_date(ds.days[t]) + "," + std::to_string(d));
      }
    }
    x = intensity_features(ds, bundle.schema, keys);
  } else {
    throw ConfigError("--submodel must be occ, int or dep");
  }
  std::vector<ShapAttribution> attr;
  std::vector<double> pred;
  for (std::size_t r = 0; r < x.rows(); ++r) {
    attr.push_back(tree_shap(*ens, x.row(r)));
    pred.push_back(ens->predict(x.row(r)));
  }
  const auto rows = top_decile ? top_fraction(pred, 0.1) : all_rows(pred.size());
  std::vector<int> feature_point(x.cols(), -1);
  for (std::size_t f = 0; f < std::min(D, x.cols()); ++f) feature_point[f] = static_cast<int>(f);
  const auto summary = region_shap_summary(attr, feature_point, D, rows);

  const auto dir = output_dir(cfg, out);
  std::ostringstream csv;
  csv << (submodel == "int" ? "date,id," : "date,") << "prediction,base," << join_csv(x.names()) << '\n';
  for (std::size_t r = 0; r < attr.size(); ++r) {
    csv << labels[r] << ',' << format_double(pred[r]) << ',' << format_double(attr[r].base);
    for (double v : attr[r].phi) csv << ',' << format_double(v);
    csv << '\n';
  }
  atomic_write(dir / ("shap_" + submodel + ".csv"), csv.str());
  std::ostringstream sum;
  sum << "id,x,y,mean_abs_shap\n";
  for (std::size_t d = 0; d < D; ++d) {
    sum << d << ',' << format_double(bundle.grid[d].x) << ',' << format_double(bundle.grid[d].y) << ','
        << format_double(summary[d]) << '\n';
  }
  atomic_write(dir / ("shap_" + submodel + "_summary.csv"), sum.str());
  std::cout << "explained " << attr.size() << " rows; summary over " << rows.size() << " rows\n";
  return 0;
}

// ---------------------------------------------------------------------------
// synthstudy

StudyConfig study_config(const Config& cfg) {
  StudyConfig sc;
  sc.n_reps = static_cast<std::size_t>(cfg.integer("study.n_reps", static_cast<long>(sc.n_reps)));
  sc.grid_nx = static_cast<int>(cfg.integer("study.grid_nx", sc.grid_nx));
  sc.grid_ny = static_cast<int>(cfg.integer("study.grid_ny", sc.grid_ny));
  sc.spacing = cfg.num("study.spacing", sc.spacing);
  sc.n_days = static_cast<std::size_t>(cfg.integer("study.n_days", static_cast<long>(sc.n_days)));
  sc.n_predictors = static_cast<std::size_t>(cfg.integer("study.n_predictors", static_cast<long>(sc.n_predictors)));
  sc.alpha = cfg.num("study.alpha", sc.alpha);
  sc.theta_scale = cfg.num("study.theta_scale", sc.theta_scale);
  sc.vecchia_k = static_cast<int>(cfg.integer("study.vecchia_k", sc.vecchia_k));
  sc.early_iteration = static_cast<std::size_t>(cfg.integer("study.early_iteration", static_cast<long>(sc.early_iteration)));
  sc.seed = static_cast<std::uint64_t>(cfg.integer("study.seed", static_cast<long>(sc.seed)));
  if (cfg.has("study.driver_columns")) {
    const auto c = int_list(cfg.list("study.driver_columns"), "study.driver_columns");
    if (c.size() != 2 || c[0] < 0 || c[1] < 0) throw ConfigError("study.driver_columns needs two column indices");
    sc.driver_columns = {static_cast<std::size_t>(c[0]), static_cast<std::size_t>(c[1])};
  }
  if (cfg.has("study.pairs")) {
    sc.pairs.clear();
    for (const auto& item : cfg.list("study.pairs")) {
      const auto dash = item.find('-');
      if (dash == std::string::npos) throw ConfigError("study.pairs entries look like s1-s2");
      const auto ids = int_list({trim(item.substr(0, dash)), trim(item.substr(dash + 1))}, "study.pairs");
      sc.pairs.emplace_back(ids[0], ids[1]);
    }
  }
  sc.train = train_config(cfg, "study", sc.train);
  return sc;
}

int cmd_synthstudy(const Config& cfg, const std::string& out) {
  const auto sc = study_config(cfg);
  const auto rep = simulation_study(sc);
  const auto dir = output_dir(&cfg, out);
  std::ostringstream csv;
  csv << "iteration,s1,s2,day,theta_true,truth,q1,median,q3\n";
  json j;
  for (const auto* it : {&rep.early, &rep.late}) {
    j[it == &rep.early ? "early" : "late"] = {{"n_trees", it->n_trees}, {"coverage", it->coverage},
                                              {"median_abs_bias", it->median_abs_bias}};
    for (std::size_t p = 0; p < sc.pairs.size(); ++p) {
      std::vector<BoxStats> boxes;
      for (std::size_t t = 0; t < rep.theta_true.size(); ++t) {
        auto b = box_stats(std::to_string(t), it->estimate[p][t], rep.pi_true[p][t]);
        csv << it->n_trees << ',' << sc.pairs[p].first << ',' << sc.pairs[p].second << ',' << t << ','
            << format_double(rep.theta_true[t]) << ',' << format_double(rep.pi_true[p][t]) << ','
            << format_double(b.q1) << ',' << format_double(b.median) << ',' << format_double(b.q3) << '\n';
        boxes.push_back(b);
      }
      // Days ordered by the truth, as in a recovery boxplot.
      std::vector<std::size_t> order(boxes.size());
      for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
      std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return boxes[a].truth < boxes[b].truth; });
      std::vector<BoxStats> sorted;
      for (std::size_t step = std::max<std::size_t>(1, order.size() / 40), i = 0; i < order.size(); i += step) {
        sorted.push_back(boxes[order[i]]);
      }
      const auto name = "study_" + std::to_string(sc.pairs[p].first) + "_" + std::to_string(sc.pairs[p].second) +
                        "_iter" + std::to_string(it->n_trees) + ".svg";
      atomic_write(dir / name, svg_boxplot("pair " + std::to_string(sc.pairs[p].first) + "-" +
                                               std::to_string(sc.pairs[p].second) + " after " +
                                               std::to_string(it->n_trees) + " trees",
                                           "pi", sorted));
    }
  }
  atomic_write(dir / "study.csv", csv.str());
  j["n_reps"] = sc.n_reps;
  j["seed"] = sc.seed;
  write_json(dir / "study_report.json", j);
  std::cout << "coverage early " << format_double(rep.early.coverage) << " late " << format_double(rep.late.coverage)
            << "; median |bias| early " << format_double(rep.early.median_abs_bias) << " late "
            << format_double(rep.late.median_abs_bias) << "; " << format_double(std::round(rep.seconds)) << " s\n";
  return 0;
}

void report_error(const char* kind, const std::string& message) {
  std::cerr << json{{"error", {{"kind", kind}, {"message", message}}}}.dump() << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Generalized r-Pareto models with gradient boosted trees"};
  app.require_subcommand(1);
  std::string config_path, data, out, bundle, day, range, submodel;

  auto* synth = app.add_subcommand("synthdata", "write a synthetic raw dataset");
  SyntheticSpec spec;
  std::string years = "2001..2012";
  synth->add_option("--out", out, "output directory")->required();
  synth->add_option("--nx", spec.nx);
  synth->add_option("--ny", spec.ny);
  synth->add_option("--spacing", spec.spacing);
  synth->add_option("--years", years, "first..last");
  synth->add_option("--seed", spec.seed)->required();

  auto* pre = app.add_subcommand("preprocess", "detrend, anomalies, rolling means, season filter");
  pre->add_option("--config", config_path)->required();

  auto* thr = app.add_subcommand("thresholds", "select u, q' and marginal thresholds");
  thr->add_option("--config", config_path)->required();
  thr->add_option("--data", data, "processed dataset directory");
  thr->add_option("--out", out);

  auto* fit = app.add_subcommand("fit", "fit the three sub-models");
  fit->add_option("--config", config_path)->required();
  fit->add_option("--data", data);
  fit->add_option("--out", out);

  auto* pred = app.add_subcommand("predict", "predict one day");
  pred->add_option("--bundle", bundle)->required();
  pred->add_option("--data", data)->required();
  pred->add_option("--day", day)->required();
  pred->add_option("--out", out, "JSON file; stdout when omitted");

  auto* sim = app.add_subcommand("simulate", "simulate scenarios for one day");
  std::size_t n_sim = 0;
  std::uint64_t seed = 0;
  std::optional<double> override_extent;
  sim->add_option("--bundle", bundle)->required();
  sim->add_option("--data", data)->required();
  sim->add_option("--day", day)->required();
  sim->add_option("-n", n_sim)->required();
  sim->add_option("--seed", seed)->required();
  sim->add_option("--override-extent", override_extent);
  sim->add_option("--out", out, "CSV file");

  auto* ev = app.add_subcommand("evaluate", "ROC, Brier, QQ and extremogram on a test range");
  EvalOptions eo;
  ev->add_option("--config", config_path);
  ev->add_option("--bundle", eo.bundle)->required();
  ev->add_option("--compare", eo.compare, "second bundle for paired Brier tests");
  ev->add_option("--data", eo.data);
  ev->add_option("--out", eo.out);
  ev->add_option("--test-range", eo.test_range, "A..B");
  ev->add_option("--metrics", eo.metrics);
  ev->add_option("--pairs", eo.pairs, "CSV of s1,s2");
  ev->add_option("--point", eo.point, "grid point for the QQ plot");
  ev->add_option("--n-sim", eo.n_sim);
  ev->add_option("--n-perm", eo.n_perm);
  ev->add_option("--n-boot", eo.n_boot);
  ev->add_option("--q", eo.q);
  ev->add_option("--seed", eo.seed)->required();

  auto* ex = app.add_subcommand("explain", "SHAP attributions of one sub-model");
  bool top_decile = false;
  ex->add_option("--config", config_path);
  ex->add_option("--bundle", bundle)->required();
  ex->add_option("--data", data);
  ex->add_option("--range", range, "A..B");
  ex->add_option("--submodel", submodel)->required()->check(CLI::IsMember({"occ", "int", "dep"}));
  ex->add_flag("--top-decile", top_decile);
  ex->add_option("--out", out);

  auto* st = app.add_subcommand("synthstudy", "parameter-recovery simulation study");
  st->add_option("--config", config_path)->required();
  st->add_option("--out", out);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    report_error("config", e.what());
    return 2;
  }

  try {
    const auto cfg = load_config(config_path);
    const Config* cp = cfg ? &*cfg : nullptr;
    if (*synth) {
      const auto dots = years.find("..");
      if (dots == std::string::npos) throw ConfigError("--years must look like first..last");
      spec.first_year = std::stoi(years.substr(0, dots));
      spec.last_year = std::stoi(years.substr(dots + 2));
      return cmd_synthdata(out, spec);
    }
    if (*pre) return cmd_preprocess(*cfg);
    if (*thr) return cmd_thresholds(*cfg, data, out);
    if (*fit) return cmd_fit(*cfg, data, out);
    if (*pred) return cmd_predict(bundle, data, day, out);
    if (*sim) return cmd_simulate(bundle, data, day, n_sim, seed, override_extent, out);
    if (*ev) {
      if (eo.data.empty()) eo.data = data;
      return cmd_evaluate(cp, eo);
    }
    if (*ex) {
      if (range.empty() && cp) range = cp->str("model.test", "");
      return cmd_explain(cp, bundle, data, range, submodel, top_decile, out);
    }
    if (*st) return cmd_synthstudy(*cfg, out);
  } catch (const Error& e) {
    report_error(e.kind_name(), e.what());
    return e.exit_code();
  } catch (const nlohmann::json::exception& e) {
    report_error("data", e.what());
    return 3;
  } catch (const std::invalid_argument& e) {
    report_error("config", e.what());
    return 2;
  } catch (const std::exception& e) {
    report_error("data", e.what());
    return 3;
  }
  return 0;
}
