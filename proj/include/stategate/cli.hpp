#pragma once

#include <CLI11.hpp>

#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "stategate/errors.hpp"
#include "stategate/evaluation.hpp"
#include "stategate/format.hpp"
#include "stategate/oracle_check.hpp"

namespace stategate::cli {

inline constexpr const char* kConfigEnv = "STATEGATE_CONFIG";

enum class OutputFormat { csv, jsonl };

struct RunConfig {
  std::string command;
  ExperimentSpec spec{};
  std::size_t frames = 300;
  std::vector<std::size_t> lengths{50, 500};
  std::vector<Strategy> strategies{std::begin(kAllStrategies), std::end(kAllStrategies)};
  std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12, 13, 14, 15, 16, 17, 18, 19, 20};
  std::vector<float> taus{0.5f, 1.0f, 2.0f};
  std::size_t oracle_instances = 1000;
  std::string out;
  std::string trace;
  OutputFormat format = OutputFormat::csv;

  // Every setting as ordered key=value pairs, using config-file key names.
  std::vector<std::pair<std::string, std::string>> effective() const {
    auto join = [](const auto& xs, auto fmt) {
      std::string s;
      for (const auto& x : xs) s += (s.empty() ? "" : ",") + fmt(x);
      return s;
    };
    auto num = [](auto x) { return std::to_string(x); };
    auto real = [](float x) { return format_real(x); };
    const auto& sc = spec.scene;
    const auto& d = spec.decoder;
    const auto& g = spec.gate;
    return {
        {"command", command},
        {"scene-regions", num(sc.regions)},
        {"obs-channels", num(d.obs_channels)},
        {"dynamic-fraction", real(sc.dynamic_fraction)},
        {"drift-rate", real(sc.drift_rate)},
        {"noise-sigma", real(sc.noise_sigma)},
        {"schedule", std::string(to_string(sc.schedule.kind))},
        {"window", num(sc.schedule.window)},
        {"period", num(sc.schedule.period)},
        {"state-tokens", num(d.state_tokens)},
        {"frame-tokens", num(d.frame_tokens)},
        {"channels", num(d.channels)},
        {"layers", num(d.layers)},
        {"model-seed", num(d.seed)},
        {"sink-logit", real(d.sink_logit)},
        {"no-sink", d.use_sink ? "false" : "true"},
        {"position-scale", real(d.position_scale)},
        {"qk-jitter", real(d.projection_jitter)},
        {"write-rule", d.write_rule == WriteRule::convex ? "convex" : "additive"},
        {"tau", real(g.tau)},
        {"eps-mean", real(g.eps_mean)},
        {"spat-gain", real(g.spat_gain)},
        {"spat-bias", real(g.spat_bias)},
        {"attn-source", std::string(to_string(g.attn_source))},
        {"strategy", join(strategies, [](Strategy s) { return std::string(to_string(s)); })},
        {"frames", num(frames)},
        {"lengths", join(lengths, num)},
        {"seeds", join(seeds, num)},
        {"taus", join(taus, real)},
        {"instances", num(oracle_instances)},
        {"format", format == OutputFormat::csv ? "csv" : "jsonl"},
    };
  }
};

// Thrown by parse_config when --help was requested; carries the help text.
struct HelpRequested {
  std::string text;
};

namespace detail {

inline CLI::Validator positive() {
  return CLI::Validator(
      [](std::string& s) -> std::string {
        double v = 0;
        if (!CLI::detail::lexical_cast(s, v) || !(v > 0.0)) return "value must be > 0, got " + s;
        return {};
      },
      "> 0");
}

inline CLI::Validator at_least_one() {
  return CLI::Validator(
      [](std::string& s) -> std::string {
        long long v = 0;
        if (!CLI::detail::lexical_cast(s, v) || v < 1) return "value must be >= 1, got " + s;
        return {};
      },
      ">= 1");
}

inline CLI::Validator nonnegative() {
  return CLI::Validator(
      [](std::string& s) -> std::string {
        double v = 0;
        if (!CLI::detail::lexical_cast(s, v) || !(v >= 0.0)) return "value must be >= 0, got " + s;
        return {};
      },
      ">= 0");
}

// "frame_tokens: ..." -> "frame-tokens"
inline std::string config_key_for(const std::string& msg) {
  std::string key = msg.substr(0, msg.find(':'));
  for (auto& ch : key)
    if (ch == '_') ch = '-';
  return key;
}

}  // namespace detail

/// Parses argv (without the program name). Precedence: flags, then the
/// config file (--config, else $STATEGATE_CONFIG), then built-in defaults.
inline RunConfig parse_config(const std::vector<std::string>& args, std::optional<std::string> env_config = std::nullopt) {
  RunConfig cfg;
  auto& sc = cfg.spec.scene;
  auto& d = cfg.spec.decoder;
  auto& g = cfg.spec.gate;

  CLI::App app{"Streaming state-gating experiments on a synthetic memory benchmark", "stategate"};
  app.allow_config_extras(CLI::config_extras_mode::error);
  app.set_config("--config", env_config.value_or(""), "flat key=value config file", false);

  static const std::vector<std::string> commands{"run", "ablate", "degrade", "sweep-tau", "oracle-check"};
  app.add_option("command", cfg.command, "run | ablate | degrade | sweep-tau | oracle-check")
      ->required()
      ->check(CLI::IsMember(commands));

  app.add_option("--scene-regions", sc.regions, "regions R")->check(detail::at_least_one())->capture_default_str();
  app.add_option("--obs-channels", d.obs_channels, "observation channels")->check(detail::at_least_one())->capture_default_str();
  app.add_option("--dynamic-fraction", sc.dynamic_fraction, "fraction of drifting regions")->check(CLI::Range(0.0, 1.0))->capture_default_str();
  app.add_option("--drift-rate", sc.drift_rate, "per-frame drift std")->check(detail::nonnegative())->capture_default_str();
  app.add_option("--noise-sigma", sc.noise_sigma, "observation noise std")->check(detail::nonnegative())->capture_default_str();
  std::string schedule = "sliding";
  app.add_option("--schedule", schedule, "coverage: full | sliding | revisit")
      ->check(CLI::IsMember({"full", "sliding", "revisit"}))
      ->capture_default_str();
  app.add_option("--window", sc.schedule.window, "visible regions per frame")->check(detail::at_least_one())->capture_default_str();
  app.add_option("--period", sc.schedule.period, "full-coverage period (revisit)")->check(detail::at_least_one())->capture_default_str();

  app.add_option("--state-tokens", d.state_tokens, "state tokens N")->check(detail::at_least_one())->capture_default_str();
  app.add_option("--frame-tokens", d.frame_tokens, "frame tokens K")->check(detail::at_least_one())->capture_default_str();
  app.add_option("--channels", d.channels, "channels C")->check(detail::at_least_one())->capture_default_str();
  app.add_option("--layers", d.layers, "decoder layers L")->check(detail::at_least_one())->capture_default_str();
  app.add_option("--model-seed", d.seed, "decoder weight seed")->capture_default_str();
  app.add_option("--sink-logit", d.sink_logit, "attention sink logit")->capture_default_str();
  bool no_sink = false;
  app.add_flag("--no-sink", no_sink, "disable the attention sink");
  app.add_option("--position-scale", d.position_scale, "positional code norm")->check(detail::nonnegative())->capture_default_str();
  app.add_option("--qk-jitter", d.projection_jitter, "Gaussian jitter on tied query/key projections")->check(detail::nonnegative())->capture_default_str();
  std::string write_rule = "convex";
  app.add_option("--write-rule", write_rule, "convex | additive")->check(CLI::IsMember({"convex", "additive"}))->capture_default_str();

  app.add_option("--tau", g.tau, "temporal threshold")->check(detail::positive())->capture_default_str();
  app.add_option("--eps-mean", g.eps_mean, "mean-delta guard")->check(detail::positive())->capture_default_str();
  app.add_option("--spat-gain", g.spat_gain, "spatial gate gain")->check(detail::positive())->capture_default_str();
  app.add_option("--spat-bias", g.spat_bias, "spatial gate bias")->capture_default_str();
  std::string attn_source = "post";
  app.add_option("--attn-source", attn_source, "post | preabs")->check(CLI::IsMember({"post", "preabs"}))->capture_default_str();

  std::vector<std::string> strategy_names;
  app.add_option("--strategy", strategy_names, "uniform | temporal | spatial | fused (repeatable)")
      ->check(CLI::IsMember({"uniform", "temporal", "spatial", "fused"}))
      ->delimiter(',');
  app.add_option("--frames", cfg.frames, "frames per session")->check(detail::at_least_one())->capture_default_str();
  app.add_option("--lengths", cfg.lengths, "comma list of lengths (degrade)")->delimiter(',')->check(detail::at_least_one());
  app.add_option("--seeds", cfg.seeds, "comma list of seeds")->delimiter(',');
  app.add_option("--taus", cfg.taus, "comma list of tau values (sweep-tau)")->delimiter(',')->check(detail::positive());
  app.add_option("--instances", cfg.oracle_instances, "random instances (oracle-check)")->check(detail::at_least_one())->capture_default_str();
  app.add_option("--out", cfg.out, "output file (default stdout)");
  app.add_option("--trace", cfg.trace, "write the first seed's stream as JSON lines (run)");
  std::string format = "csv";
  app.add_option("--format", format, "csv | jsonl")->check(CLI::IsMember({"csv", "jsonl"}))->capture_default_str();

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    throw HelpRequested{app.help()};
  } catch (const CLI::CallForAllHelp&) {
    throw HelpRequested{app.help()};
  } catch (const CLI::ParseError& e) {
    throw ConfigError(e.what());
  }

  sc.schedule.kind = parse_coverage(schedule);
  d.use_sink = !no_sink;
  d.write_rule = write_rule == "convex" ? WriteRule::convex : WriteRule::additive;
  g.attn_source = attn_source == "post" ? AttentionSource::post_softmax : AttentionSource::pre_softmax_abs;
  cfg.format = format == "csv" ? OutputFormat::csv : OutputFormat::jsonl;
  if (!strategy_names.empty()) {
    cfg.strategies.clear();
    for (const auto& s : strategy_names) cfg.strategies.push_back(parse_strategy(s));
  }

  try {
    cfg.spec.validate();
  } catch (const ConfigError& e) {
    const std::string msg = e.what();
    throw ConfigError("--" + detail::config_key_for(msg) + msg.substr(msg.find(':')));
  }
  if (cfg.seeds.empty()) throw ConfigError("--seeds: at least one seed is required");
  if (cfg.command == "ablate" && cfg.strategies.size() < 2) throw ConfigError("--strategy: ablate needs at least two strategies");
  if (cfg.command == "degrade") {
    if (cfg.lengths.size() < 2) throw ConfigError("--lengths: need at least two lengths");
    if (!std::is_sorted(cfg.lengths.begin(), cfg.lengths.end())) throw ConfigError("--lengths: must be sorted ascending");
  }
  return cfg;
}

/// A flat output table; cells are preformatted, `quoted` marks string cells
/// for JSON.
struct Cell {
  std::string text;
  bool quoted = false;
};

struct Table {
  std::string name;
  std::vector<std::string> columns;
  std::vector<std::vector<Cell>> rows;
};

inline Cell str_cell(std::string_view s) { return {std::string(s), true}; }
inline Cell int_cell(std::uint64_t v) { return {std::to_string(v), false}; }
inline Cell real_cell(double v) { return {format_real(v), false}; }

inline std::string json_escape(const std::string& s) {
  std::string out;
  for (char ch : s) {
    if (ch == '"' || ch == '\\') out += '\\';
    out += ch;
  }
  return out;
}

inline void write_tables(std::ostream& os, const RunConfig& cfg, const std::vector<Table>& tables) {
  const auto eff = cfg.effective();
  if (cfg.format == OutputFormat::csv) {
    os << "# stategate " << cfg.command << '\n';
    for (const auto& [k, v] : eff) os << "# " << k << '=' << v << '\n';
    for (std::size_t t = 0; t < tables.size(); ++t) {
      if (t) os << "# " << tables[t].name << '\n';
      const auto& tab = tables[t];
      for (std::size_t c = 0; c < tab.columns.size(); ++c) os << (c ? "," : "") << tab.columns[c];
      os << '\n';
      for (const auto& row : tab.rows) {
        for (std::size_t c = 0; c < row.size(); ++c) os << (c ? "," : "") << row[c].text;
        os << '\n';
      }
    }
    return;
  }
  os << "{\"record\":\"config\"";
  for (const auto& [k, v] : eff) os << ",\"" << k << "\":\"" << json_escape(v) << '"';
  os << "}\n";
  for (const auto& tab : tables) {
    for (const auto& row : tab.rows) {
      os << "{\"record\":\"" << tab.name << '"';
      for (std::size_t c = 0; c < row.size(); ++c) {
        os << ",\"" << tab.columns[c] << "\":";
        if (row[c].quoted) os << '"' << json_escape(row[c].text) << '"';
        else os << row[c].text;
      }
      os << "}\n";
    }
  }
}

// Writes to `path.tmp` and renames over `path`.
inline void write_atomically(const std::string& path, const std::string& content) {
  const std::filesystem::path target(path);
  std::filesystem::path tmp = target;
  tmp += ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw std::runtime_error("cannot open " + tmp.string() + " for writing");
    f << content;
    f.flush();
    if (!f) throw std::runtime_error("write failed for " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, target, ec);
  if (ec) {
    std::filesystem::remove(tmp);
    throw std::runtime_error("cannot rename " + tmp.string() + " to " + path + ": " + ec.message());
  }
}

struct Outcome {
  std::vector<Table> tables;
  bool ok = true;
};

inline Outcome run_command(const RunConfig& cfg) {
  Outcome o;
  const ExperimentSpec& spec = cfg.spec;
  if (cfg.command == "run") {
    const DecoderWeights weights = make_decoder_weights(spec.decoder);
    Table frames{"rows", {"strategy", "seed", "frame", "error", "mask_mean", "mask_min", "mask_max"}, {}};
    Table summary{"summary", {"strategy", "seed", "frames", "final_error", "mean_mask"}, {}};
    for (Strategy s : cfg.strategies)
      for (std::uint64_t seed : cfg.seeds) {
        SessionResult r = run_session(spec, weights, s, cfg.frames, seed);
        for (std::size_t t = 0; t < r.frames; ++t) {
          const auto& m = r.mask_stats[t];
          frames.rows.push_back({str_cell(to_string(s)), int_cell(seed), int_cell(t + 1), real_cell(r.per_frame_error[t]),
                                 real_cell(m.mean), real_cell(m.min), real_cell(m.max)});
        }
        summary.rows.push_back({str_cell(to_string(s)), int_cell(seed), int_cell(r.frames), real_cell(r.final_error),
                                real_cell(r.mean_mask())});
      }
    o.tables = {std::move(frames), std::move(summary)};
  } else if (cfg.command == "ablate") {
    AblationTable t = run_ablation(spec, cfg.strategies, cfg.frames, cfg.seeds);
    Table rows{"rows", {"strategy", "seed", "frames", "final_error", "mean_mask"}, {}};
    for (const auto& r : t.rows)
      rows.rows.push_back({str_cell(to_string(r.strategy)), int_cell(r.seed), int_cell(r.frames),
                           real_cell(r.final_error), real_cell(r.mean_mask)});
    Table summary{"summary", {"strategy", "median_final_error", "q1_final_error", "q3_final_error", "iqr_final_error"}, {}};
    for (const auto& s : t.summary)
      summary.rows.push_back({str_cell(to_string(s.strategy)), real_cell(s.median_final_error), real_cell(s.q1_final_error),
                              real_cell(s.q3_final_error), real_cell(double(s.q3_final_error) - s.q1_final_error)});
    o.tables = {std::move(rows), std::move(summary)};
  } else if (cfg.command == "degrade") {
    DegradationReport rep = degradation_curve(spec, cfg.lengths, cfg.strategies, cfg.seeds);
    Table rows{"rows", {"strategy", "length", "median_final_error"}, {}};
    Table summary{"summary", {"strategy", "growth_ratio"}, {}};
    for (Strategy s : cfg.strategies) {
      const auto& errs = rep.errors_by_strategy.at(s);
      for (std::size_t i = 0; i < rep.lengths.size(); ++i)
        rows.rows.push_back({str_cell(to_string(s)), int_cell(rep.lengths[i]), real_cell(errs[i])});
      summary.rows.push_back({str_cell(to_string(s)), real_cell(rep.growth_ratio.at(s))});
    }
    o.tables = {std::move(rows), std::move(summary)};
  } else if (cfg.command == "sweep-tau") {
    TauSweep sw = tau_sweep(spec, cfg.taus, cfg.frames, cfg.seeds);
    Table rows{"rows", {"tau", "seed", "frames", "final_error"}, {}};
    for (const auto& r : sw.rows)
      rows.rows.push_back({real_cell(r.tau), int_cell(r.seed), int_cell(r.frames), real_cell(r.final_error)});
    Table summary{"summary", {"tau", "median_final_error"}, {}};
    for (const auto& s : sw.summary) summary.rows.push_back({real_cell(s.tau), real_cell(s.median_final_error)});
    o.tables = {std::move(rows), std::move(summary)};
  } else if (cfg.command == "oracle-check") {
    const std::uint64_t seed = cfg.seeds.front();
    OracleReport rep = run_oracle_suite(cfg.oracle_instances, seed);
    Table rows{"rows", {"op", "checks", "failures", "max_rel_error"}, {}};
    for (const auto& op : rep.ops)
      rows.rows.push_back({str_cell(op.op), int_cell(op.checks), int_cell(op.failures), real_cell(op.max_rel_error)});
    Table summary{"summary", {"instances", "tolerance", "failures", "result"}, {}};
    summary.rows.push_back({int_cell(rep.instances), real_cell(rep.tolerance), int_cell(rep.failures()),
                            str_cell(rep.passed() ? "pass" : "fail")});
    o.tables = {std::move(rows), std::move(summary)};
    o.ok = rep.passed();
  } else {
    throw ConfigError("command: unknown '" + cfg.command + "'");
  }
  return o;
}

inline void write_trace(const RunConfig& cfg) {
  const auto& sp = cfg.spec.scene;
  Scene scene = generate_scene(sp.regions, cfg.spec.decoder.obs_channels, sp.dynamic_fraction, sp.drift_rate,
                               scene_seed(cfg.seeds.front()));
  ObservationStream stream(std::move(scene), sp.schedule, sp.noise_sigma, stream_seed(cfg.seeds.front()));
  std::ostringstream os;
  for (std::size_t t = 0; t < cfg.frames; ++t) write_trace_line(os, stream.next());
  write_atomically(cfg.trace, os.str());
}

enum ExitCode : int { kOk = 0, kCheckFailed = 1, kUsage = 2, kIo = 3 };

/// Runs a parsed config; returns the process exit status.
inline int execute(const RunConfig& cfg, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  Outcome o;
  try {
    o = run_command(cfg);
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << '\n';
    return kUsage;
  }
  std::ostringstream body;
  write_tables(body, cfg, o.tables);
  try {
    if (cfg.out.empty()) out << body.str();
    else write_atomically(cfg.out, body.str());
    if (cfg.command == "run" && !cfg.trace.empty()) write_trace(cfg);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kIo;
  }
  if (!o.ok) {
    err << "oracle-check: mismatches found\n";
    if (!cfg.out.empty()) write_tables(err, cfg, o.tables);
    return kCheckFailed;
  }
  return kOk;
}

inline int run_cli(int argc, char** argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  std::vector<std::string> args(argv + 1, argv + argc);
  std::optional<std::string> env;
  if (const char* p = std::getenv(kConfigEnv); p && *p) env = p;
  RunConfig cfg;
  try {
    cfg = parse_config(args, env);
  } catch (const HelpRequested& h) {
    out << h.text;
    return kOk;
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << "\nrun with --help for usage\n";
    return kUsage;
  }
  return execute(cfg, out, err);
}

}  // namespace stategate::cli
