#pragma once

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "popstock/analytics.hpp"
#include "popstock/chart.hpp"
#include "popstock/csv.hpp"
#include "popstock/error.hpp"
#include "popstock/inference.hpp"
#include "popstock/ingest.hpp"
#include "popstock/parallel.hpp"
#include "popstock/pipeline.hpp"
#include "popstock/regions.hpp"
#include "popstock/stocks.hpp"
#include "popstock/synth.hpp"
#include "popstock/validation.hpp"

namespace popstock::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitData = 2;

struct RunConfig {
  std::string subcommand;
  std::string regions, events, places, homes, stocks, labels, reference, config;
  std::string window, as_of, event_date, select;
  std::string component = "non_residents";
  std::string grain = "monthly_daily_mean";
  std::string transform = "identity";
  std::string thresholds, baseline_dates;
  int tz_offset = 0;
  int n_days = 1;
  unsigned threads = default_threads();
  std::optional<std::uint64_t> seed;
  std::optional<std::int64_t> sample_population;
  double confidence = 0.99;
  double margin = 0.05;
  bool volume = false;
  std::string out;
};

namespace detail {

inline Error usage(const std::string& msg) { return Error(ErrorCode::Usage, msg); }

inline std::ifstream open_in(const std::string& path, const char* what) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, std::string("cannot open ") + what + " '" + path + "'");
  return in;
}

inline std::filesystem::path out_dir(const RunConfig& cfg) {
  if (cfg.out.empty()) throw usage("--out is required");
  std::filesystem::create_directories(cfg.out);
  return cfg.out;
}

template <typename Writer>
void write_out(const std::filesystem::path& path, Writer&& writer) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::IoError, "cannot write '" + path.string() + "'");
  writer(out);
  if (!out) throw Error(ErrorCode::IoError, "write failed for '" + path.string() + "'");
}

inline Date parse_date_flag(const std::string& s, const char* flag) {
  const auto d = Date::parse(s);
  if (!d) throw usage(std::string(flag) + " expects YYYY-MM-DD, got '" + s + "'");
  return *d;
}

/// Inference window plus the dates for which stocks are emitted.
struct WindowPlan {
  StudyWindow window;
  StudyWindow stock_dates;
};

/// `START:END` (inclusive) or `trailing:N` with --as-of; the trailing form
/// infers over the N days before as-of and reports the day before as-of.
inline WindowPlan plan_window(const RunConfig& cfg) {
  if (cfg.window.empty()) throw usage("--window is required");
  const auto colon = cfg.window.find(':');
  if (colon == std::string::npos) throw usage("--window expects START:END or trailing:N");
  const auto head = cfg.window.substr(0, colon), tail = cfg.window.substr(colon + 1);
  if (head == "trailing") {
    const auto n = csv::parse_int<std::int32_t>(tail);
    if (!n || *n < 1) throw usage("trailing window length must be a positive integer");
    if (cfg.as_of.empty()) throw usage("--window trailing:N requires --as-of");
    const Date as_of = parse_date_flag(cfg.as_of, "--as-of");
    return {StudyWindow::trailing(as_of, *n), StudyWindow(as_of - 1, as_of - 1)};
  }
  const Date start = parse_date_flag(head, "--window");
  const Date end = parse_date_flag(tail, "--window");
  if (end < start) throw usage("--window end precedes start");
  return {StudyWindow(start, end), StudyWindow(start, end)};
}

inline StockComponent component_flag(const RunConfig& cfg) {
  const auto c = parse_component(cfg.component);
  if (!c) throw usage("--component must be residents, non_residents, unknown or total_active");
  return *c;
}

inline std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  if (s.empty()) return out;
  for (auto& f : csv::split(s))
    if (!f.empty()) out.push_back(f);
  return out;
}

inline std::string one_line(std::string s) {
  std::replace(s.begin(), s.end(), '\n', ' ');
  return s;
}

inline void report_ingest(const IngestResult& r, std::ostream& err) {
  err << "info code=IngestSummary resolved=" << r.stats.resolved
      << " unresolvable=" << r.stats.unresolvable << " record_errors=" << r.stats.record_errors;
  for (const auto& [reason, n] : r.stats.by_reason) err << ' ' << reason << '=' << n;
  err << '\n';
  std::size_t shown = 0;
  for (const auto& e : r.errors) {
    if (++shown > 20) break;
    err << "warning code=" << to_string(e.kind) << " line=" << e.line
        << (e.detail.empty() ? "" : " detail=" + one_line(e.detail)) << '\n';
  }
}

inline IngestResult load_events(const RunConfig& cfg, const RegionSet& set, std::ostream& err) {
  PlaceRegistry places;
  if (!cfg.places.empty()) {
    auto in = open_in(cfg.places, "places file");
    places = load_places(in);
  }
  auto in = open_in(cfg.events, "events file");
  auto result = ingest_events(in, set, places, cfg.tz_offset, cfg.threads);
  report_ingest(result, err);
  return result;
}

inline std::vector<DailyStock> load_stock_rows(const RunConfig& cfg) {
  if (cfg.stocks.empty()) throw usage("--stocks is required");
  auto in = open_in(cfg.stocks, "stocks file");
  return read_stocks(in);
}

inline std::vector<CompactHome> homes_for(const RunConfig& cfg, EventTable& table,
                                          const UserGroups& groups, const StudyWindow& window) {
  if (cfg.n_days < 1) throw usage("--ndays must be >= 1");
  if (cfg.homes.empty()) return infer_homes(table, groups, window, cfg.n_days, cfg.threads);
  auto in = open_in(cfg.homes, "homes file");
  const auto homes = read_homes(in);
  return to_compact(table, homes);
}

// --- subcommands -----------------------------------------------------------

inline int cmd_infer(const RunConfig& cfg, std::ostream&, std::ostream& err) {
  const auto plan = plan_window(cfg);
  if (cfg.n_days < 1) throw usage("--ndays must be >= 1");
  const auto dir = out_dir(cfg);
  const auto set = load_regions_file(cfg.regions);
  auto ingested = load_events(cfg, set, err);
  const auto groups = group_by_user(ingested.table);
  const auto homes = infer_homes(ingested.table, groups, plan.window, cfg.n_days, cfg.threads);
  const auto assignments = to_assignments(ingested.table, homes);
  write_out(dir / "homes.csv", [&](std::ostream& o) { write_homes(o, assignments); });
  return kExitOk;
}

inline int cmd_stocks(const RunConfig& cfg, std::ostream&, std::ostream& err) {
  const auto plan = plan_window(cfg);
  const auto dir = out_dir(cfg);
  const auto set = load_regions_file(cfg.regions);
  auto ingested = load_events(cfg, set, err);
  const auto groups = group_by_user(ingested.table);
  const auto homes = homes_for(cfg, ingested.table, groups, plan.window);
  const auto stocks = compute_stocks(ingested.table, groups, homes, plan.stock_dates,
                                     std::max(1u, cfg.threads), cfg.threads);
  write_out(dir / "stocks.csv", [&](std::ostream& o) { write_stocks(o, stocks); });
  if (cfg.volume) {
    const auto volume = compute_volume(ingested.table, plan.stock_dates);
    write_out(dir / "volume.csv", [&](std::ostream& o) { write_volume(o, volume); });
    write_out(dir / "normalized.csv", [&](std::ostream& o) { write_normalized(o, stocks, volume); });
  }
  return kExitOk;
}

inline std::vector<ZSeries> zseries_for(const std::vector<StockSeries>& all, std::ostream& err) {
  std::vector<ZSeries> out;
  for (const auto& s : all) {
    try {
      out.push_back(make_zseries(s));
    } catch (const Error& e) {
      err << "warning code=" << to_string(e.code()) << " region=" << s.region.str()
          << " message=" << one_line(e.what()) << '\n';
    }
  }
  return out;
}

inline int cmd_analyze(const RunConfig& cfg, std::ostream&, std::ostream& err) {
  const auto component = component_flag(cfg);
  const auto dir = out_dir(cfg);
  const auto rows = load_stock_rows(cfg);
  const auto series = series_by_region(rows, component);
  const auto zs = zseries_for(series, err);

  write_out(dir / "zscores.csv", [&](std::ostream& o) {
    write_zscores_header(o);
    for (const auto& z : zs) write_zscores(o, z);
  });
  for (const auto& z : zs) chart::emit_chart(z, (dir / ("chart_" + z.region.str() + ".svg")).string());

  if (!cfg.event_date.empty()) {
    const Date event = parse_date_flag(cfg.event_date, "--event-date");
    std::vector<Date> baseline;
    for (const auto& d : split_list(cfg.baseline_dates)) baseline.push_back(parse_date_flag(d, "--baseline-dates"));
    if (baseline.empty()) throw usage("--event-date requires --baseline-dates");
    std::vector<InfluxRow> influx;
    for (const auto& s : series) {
      const auto value_at = [&](Date d) -> double {
        auto it = std::lower_bound(s.dates.begin(), s.dates.end(), d);
        if (it == s.dates.end() || *it != d)
          throw Error(ErrorCode::MismatchedKey, "region " + s.region.str() + " has no row for " + d.iso());
        return s.values[static_cast<std::size_t>(it - s.dates.begin())];
      };
      std::vector<double> base;
      for (auto d : baseline) base.push_back(value_at(d));
      const double value = value_at(event);
      try {
        influx.push_back({s.region, event, value, mean_of(base), influx_ratio(value, base)});
      } catch (const Error& e) {
        err << "warning code=" << to_string(e.code()) << " region=" << s.region.str() << '\n';
      }
    }
    write_out(dir / "influx.csv", [&](std::ostream& o) { write_influx(o, influx); });
  } else if (!cfg.baseline_dates.empty()) {
    throw usage("--baseline-dates requires --event-date");
  }
  return kExitOk;
}

inline int cmd_report(const RunConfig& cfg, std::ostream&, std::ostream& err) {
  const auto component = component_flag(cfg);
  const auto dir = out_dir(cfg);
  const auto rows = load_stock_rows(cfg);
  auto series = series_by_region(rows, component);
  const auto selected = split_list(cfg.select);
  if (!selected.empty()) {
    std::vector<StockSeries> keep;
    for (const auto& code : selected) {
      auto it = std::find_if(series.begin(), series.end(),
                             [&](const StockSeries& s) { return s.region.str() == code; });
      if (it == series.end()) throw Error(ErrorCode::UnknownRegion, "no stock rows for region " + code);
      keep.push_back(*it);
    }
    series = std::move(keep);
  }
  const auto zs = zseries_for(series, err);
  chart::emit_panels(zs, (dir / "report.svg").string());
  return kExitOk;
}

inline int cmd_validate(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
  bool did_something = false;
  if (cfg.sample_population) {
    out << sample_size(*cfg.sample_population, cfg.confidence, cfg.margin) << '\n';
    did_something = true;
  }
  if (!cfg.labels.empty() || !cfg.homes.empty()) {
    if (cfg.labels.empty() || cfg.homes.empty()) throw usage("internal validation needs --homes and --labels");
    const auto dir = out_dir(cfg);
    auto hin = open_in(cfg.homes, "homes file");
    const auto homes = index_homes(read_homes(hin));
    auto lin = open_in(cfg.labels, "labels file");
    const auto labels = read_labels(lin);
    std::map<RegionCode, std::string> groups;
    if (!cfg.regions.empty()) {
      const auto set = load_regions_file(cfg.regions);
      check_labels(labels, set);
      groups = set.groups();
    }
    std::vector<std::int64_t> thresholds = default_thresholds();
    if (!cfg.thresholds.empty()) {
      thresholds.clear();
      for (const auto& t : split_list(cfg.thresholds)) {
        const auto v = csv::parse_int<std::int64_t>(t);
        if (!v || *v < 1) throw usage("--thresholds expects positive integers");
        thresholds.push_back(*v);
      }
    }
    const auto report = internal_accuracy(homes, labels, groups);
    const auto table = threshold_sweep(homes, labels, thresholds);
    write_out(dir / "threshold_table.csv", [&](std::ostream& o) { write_threshold_table(o, table); });
    write_out(dir / "accuracy.csv", [&](std::ostream& o) { write_accuracy(o, report); });
    write_out(dir / "misidentifications.csv",
              [&](std::ostream& o) { write_misidentifications(o, report, groups); });
    did_something = true;
  }
  if (!cfg.reference.empty()) {
    const auto dir = out_dir(cfg);
    const auto transform = parse_transform(cfg.transform);
    if (!transform) throw usage("--transform must be identity or log10_log10");
    const auto grain = parse_grain(cfg.grain);
    if (!grain) throw usage("--grain must be annual_daily_mean, monthly_daily_mean or monthly_sum");
    const auto rows = load_stock_rows(cfg);
    const auto aggregates = aggregate_series(rows, component_flag(cfg), *grain);
    auto rin = open_in(cfg.reference, "reference file");
    const auto reference = read_reference(rin);
    const auto groups = external_report(aggregates, reference, *transform);
    for (const auto& g : groups) {
      if (g.dropped) err << "warning code=JoinDropped group=" << g.group << " dropped=" << g.dropped << '\n';
      if (g.error) err << "warning code=" << to_string(*g.error) << " group=" << g.group << '\n';
    }
    write_out(dir / "aggregates.csv", [&](std::ostream& o) { write_aggregates(o, aggregates); });
    write_out(dir / "external.csv", [&](std::ostream& o) { write_external_report(o, groups, *transform); });
    did_something = true;
  }
  if (!did_something)
    throw usage("validate needs --sample-size, --homes/--labels, or --stocks/--reference");
  return kExitOk;
}

/// Synthetic world config (JSON):
///   seed, n_users, window "START:END", home_share, events_per_user_per_day,
///   day_trip_probability, grid {rows, cols} or regions "<geojson path>",
///   special_events [{date, region, visitor_multiplier}].
inline synth::SynthConfig read_synth_config(const RunConfig& cfg, bool& grid) {
  if (cfg.config.empty()) throw usage("--config is required");
  auto in = open_in(cfg.config, "synth config");
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::InvalidConfig, std::string("synth config is not valid JSON: ") + e.what());
  }
  try {
    synth::SynthConfig sc;
    sc.seed = cfg.seed.value_or(j.value("seed", std::uint64_t{1}));
    sc.n_users = j.value("n_users", std::size_t{100});
    sc.home_share = j.value("home_share", 0.8);
    sc.events_per_user_per_day = j.value("events_per_user_per_day", 1.0);
    sc.day_trip_probability = j.value("day_trip_probability", 1.0);
    sc.threads = cfg.threads;
    RunConfig wcfg;
    wcfg.window = cfg.window.empty() ? j.value("window", std::string()) : cfg.window;
    sc.window = plan_window(wcfg).window;
    grid = cfg.regions.empty() && !j.contains("regions");
    if (grid) {
      const auto g = j.value("grid", nlohmann::json::object());
      sc.regions = synth::grid_regions(g.value("rows", std::size_t{3}), g.value("cols", std::size_t{3}));
    } else {
      sc.regions = load_regions_file(cfg.regions.empty() ? j["regions"].get<std::string>() : cfg.regions);
    }
    for (const auto& s : j.value("special_events", nlohmann::json::array())) {
      const auto date = Date::parse(s.at("date").get<std::string>());
      if (!date) throw Error(ErrorCode::InvalidConfig, "special event date must be YYYY-MM-DD");
      sc.special_events.push_back(
          {*date, RegionCode::make(s.at("region").get<std::string>()), s.value("visitor_multiplier", 1.0)});
    }
    return sc;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::InvalidConfig, std::string("synth config: ") + e.what());
  }
}

inline int cmd_synth(const RunConfig& cfg, std::ostream&, std::ostream& err) {
  bool grid = false;
  const auto sc = read_synth_config(cfg, grid);
  const auto dir = out_dir(cfg);
  const auto world = synth::generate_world(sc);
  const auto geo = synth::realize_geo_events(world.events, sc.regions, sc.seed);
  write_out(dir / "events.csv", [&](std::ostream& o) {
    o << kEventsHeader << '\n';
    for (const auto& e : geo) write_event_row(o, e);
  });
  write_out(dir / "truth.csv", [&](std::ostream& o) { synth::write_truth(o, world.truth); });
  if (grid) write_out(dir / "regions.geojson", [&](std::ostream& o) { o << to_geojson(sc.regions).dump(1) << '\n'; });
  err << "info code=SynthSummary events=" << world.events.size() << " users=" << world.truth.size() << '\n';
  return kExitOk;
}

inline void add_common(CLI::App* sub, RunConfig& cfg) {
  sub->add_option("--threads", cfg.threads, "Worker threads")->check(CLI::PositiveNumber);
  sub->add_option("--out", cfg.out, "Output directory");
}

}  // namespace detail

/// Parses argv (argv[0] is the program name), runs one subcommand and
/// returns the exit code: 0 ok, 1 usage error, 2 data error. Diagnostics go
/// to `err` as single `error code=<Code> message=<text>` lines.
inline int run(const std::vector<std::string>& args, std::ostream& out = std::cout,
               std::ostream& err = std::cerr) {
  RunConfig cfg;
  CLI::App app{"Daily resident / non-resident population stocks from geotagged events", "popstock"};
  app.require_subcommand(1);

  auto* infer = app.add_subcommand("infer", "events -> homes.csv");
  infer->add_option("--regions", cfg.regions, "Region boundary GeoJSON")->required();
  infer->add_option("--events", cfg.events, "Events CSV")->required();
  infer->add_option("--places", cfg.places, "Place registry CSV");
  infer->add_option("--window", cfg.window, "START:END or trailing:N")->required();
  infer->add_option("--as-of", cfg.as_of, "Query date for trailing windows");
  infer->add_option("--tz-offset", cfg.tz_offset, "UTC offset in minutes for local dates");
  infer->add_option("--ndays", cfg.n_days, "n-day collapse interval");
  detail::add_common(infer, cfg);

  auto* stocks = app.add_subcommand("stocks", "events (+ homes) -> stocks.csv");
  stocks->add_option("--regions", cfg.regions, "Region boundary GeoJSON")->required();
  stocks->add_option("--events", cfg.events, "Events CSV")->required();
  stocks->add_option("--places", cfg.places, "Place registry CSV");
  stocks->add_option("--homes", cfg.homes, "Precomputed homes CSV (inferred when absent)");
  stocks->add_option("--window", cfg.window, "START:END or trailing:N")->required();
  stocks->add_option("--as-of", cfg.as_of, "Query date for trailing windows");
  stocks->add_option("--tz-offset", cfg.tz_offset, "UTC offset in minutes for local dates");
  stocks->add_option("--ndays", cfg.n_days, "n-day collapse interval");
  stocks->add_flag("--volume", cfg.volume, "Also write volume.csv and normalized.csv");
  detail::add_common(stocks, cfg);

  auto* analyze = app.add_subcommand("analyze", "stocks -> zscores.csv, influx.csv, charts");
  analyze->add_option("--stocks", cfg.stocks, "Stocks CSV")->required();
  analyze->add_option("--component", cfg.component, "Stock component");
  analyze->add_option("--event-date", cfg.event_date, "Date to compare against the baseline");
  analyze->add_option("--baseline-dates", cfg.baseline_dates, "Comma-separated baseline dates");
  detail::add_common(analyze, cfg);

  auto* validate = app.add_subcommand("validate", "sample size, internal and external validation");
  validate->add_option("--sample-size", cfg.sample_population, "Population for Cochran sample size");
  validate->add_option("--confidence", cfg.confidence, "Confidence level");
  validate->add_option("--margin", cfg.margin, "Margin of error");
  validate->add_option("--homes", cfg.homes, "Homes CSV");
  validate->add_option("--labels", cfg.labels, "Labels CSV");
  validate->add_option("--regions", cfg.regions, "Region GeoJSON (equivalence groups)");
  validate->add_option("--thresholds", cfg.thresholds, "Comma-separated ascending thresholds");
  validate->add_option("--stocks", cfg.stocks, "Stocks CSV for external validation");
  validate->add_option("--reference", cfg.reference, "Reference CSV");
  validate->add_option("--component", cfg.component, "Stock component")->default_str("residents");
  validate->add_option("--grain", cfg.grain, "annual_daily_mean, monthly_daily_mean or monthly_sum");
  validate->add_option("--transform", cfg.transform, "identity or log10_log10");
  detail::add_common(validate, cfg);

  auto* synth = app.add_subcommand("synth", "config -> events.csv, truth.csv");
  synth->add_option("--config", cfg.config, "Synthetic world JSON")->required();
  synth->add_option("--regions", cfg.regions, "Region GeoJSON (default: grid from config)");
  synth->add_option("--window", cfg.window, "Override config window");
  synth->add_option("--seed", cfg.seed, "Override config seed");
  detail::add_common(synth, cfg);

  auto* report = app.add_subcommand("report", "stocks -> report.svg (annual z distribution)");
  report->add_option("--stocks", cfg.stocks, "Stocks CSV")->required();
  report->add_option("--component", cfg.component, "Stock component");
  report->add_option("--select", cfg.select, "Comma-separated region codes");
  detail::add_common(report, cfg);

  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error code=Usage message=" << detail::one_line(e.what()) << '\n';
    return kExitUsage;
  }

  const bool validate_used = validate->parsed();
  if (validate_used && validate->count("--component") == 0) cfg.component = "residents";

  try {
    if (infer->parsed()) return detail::cmd_infer(cfg, out, err);
    if (stocks->parsed()) return detail::cmd_stocks(cfg, out, err);
    if (analyze->parsed()) return detail::cmd_analyze(cfg, out, err);
    if (validate_used) return detail::cmd_validate(cfg, out, err);
    if (synth->parsed()) return detail::cmd_synth(cfg, out, err);
    if (report->parsed()) return detail::cmd_report(cfg, out, err);
  } catch (const Error& e) {
    err << "error code=" << to_string(e.code()) << " message=" << detail::one_line(e.what()) << '\n';
    return e.code() == ErrorCode::Usage ? kExitUsage : kExitData;
  } catch (const std::exception& e) {
    err << "error code=IoError message=" << detail::one_line(e.what()) << '\n';
    return kExitData;
  }
  return kExitUsage;
}

}  // namespace popstock::cli
