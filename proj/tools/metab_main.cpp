// metab: maximum-entropy density estimation from tabulated summary data.
//
// Subcommands: fit, shares, simulate, moments. All outputs embed the tool
// version, the resolved configuration, and the seed; files are written to a
// temp path and atomically renamed, so failed runs leave no partial files.

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "metab/baselines.hpp"
#include "metab/errors.hpp"
#include "metab/functionals.hpp"
#include "metab/mecore.hpp"
#include "metab/simlab.hpp"
#include "metab/smoothing.hpp"
#include "metab/strfmt.hpp"
#include "metab/tabio.hpp"
#include "metab/version.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct CommonOpts {
  std::string input;
  std::string format_file;
  std::string output_dir = ".";
  std::string form;
  std::string order;
  double total_multiplier = 0.0;  // 0 = unset
  std::optional<double> lower_bound;
  bool renormalize = false;
  std::optional<double> total_units;
  std::optional<double> total_income;
  std::uint64_t seed = 0;
};

json opts_json(const CommonOpts& o) {
  json j;
  j["input"] = o.input;
  if (!o.format_file.empty()) j["format"] = o.format_file;
  j["output_dir"] = o.output_dir;
  if (!o.form.empty()) j["form"] = o.form;
  if (!o.order.empty()) j["order"] = o.order;
  if (o.total_multiplier > 0.0) j["total_multiplier"] = o.total_multiplier;
  if (o.lower_bound) j["lower_bound"] = *o.lower_bound;
  if (o.renormalize) j["renormalize"] = true;
  if (o.total_units) j["total_units"] = *o.total_units;
  if (o.total_income) j["total_income"] = *o.total_income;
  return j;
}

json make_meta(const std::string& command, const json& config,
               std::uint64_t seed) {
  json meta;
  meta["version"] = metab::kVersion;
  meta["command"] = command;
  meta["config"] = config;
  meta["seed"] = seed;
  return meta;
}

void atomic_write(const fs::path& path, const std::string& content) {
  fs::create_directories(path.parent_path().empty() ? "."
                                                    : path.parent_path());
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) {
      throw metab::ValidationError("cannot open output file " + tmp.string());
    }
    out << content;
    if (!out.good()) {
      throw metab::ValidationError("write failed for " + tmp.string());
    }
  }
  fs::rename(tmp, path);
}

std::string csv_meta_header(const json& meta) {
  std::ostringstream out;
  out << "# version=" << metab::kVersion << "\n";
  out << "# command=" << meta.at("command").get<std::string>() << "\n";
  out << "# seed=" << meta.at("seed").get<std::uint64_t>() << "\n";
  out << "# config=" << meta.at("config").dump() << "\n";
  return out.str();
}

metab::TabulatedSummary load_table(const CommonOpts& o) {
  metab::FormatDescriptor fd;
  if (!o.format_file.empty()) {
    std::ifstream f(o.format_file);
    if (!f) {
      throw metab::ValidationError("cannot open format file " + o.format_file);
    }
    fd = metab::parse_format_descriptor(f);
  }
  if (o.form == "cumulative") {
    fd.form = metab::FormatDescriptor::Form::cumulative;
  } else if (o.form == "per_group") {
    fd.form = metab::FormatDescriptor::Form::per_group;
  } else if (!o.form.empty()) {
    throw metab::ValidationError("unknown --form '" + o.form + "'");
  }
  if (o.order == "descending") {
    fd.order = metab::FormatDescriptor::Order::descending;
  } else if (o.order == "ascending") {
    fd.order = metab::FormatDescriptor::Order::ascending;
  } else if (!o.order.empty()) {
    throw metab::ValidationError("unknown --order '" + o.order + "'");
  }
  if (o.total_multiplier > 0.0) fd.total_multiplier = o.total_multiplier;
  if (o.lower_bound) fd.lower_bound = o.lower_bound;

  std::ifstream in(o.input);
  if (!in) throw metab::ValidationError("cannot open input file " + o.input);
  return metab::parse_summary(in, fd, o.total_units);
}

std::vector<double> make_grid(const metab::MEDensity& d, std::size_t points,
                              std::optional<double> gmin,
                              std::optional<double> gmax) {
  const double total = d.total_mass();
  const double lo = gmin.value_or(d.lower_bound);
  const double hi =
      gmax.value_or(metab::quantile(d, total * (1.0 - 1e-4)));
  if (!(hi > lo)) throw metab::ValidationError("empty evaluation grid");
  std::vector<double> ys(points);
  if (lo > 0.0) {
    const double la = std::log(lo), lb = std::log(hi);
    for (std::size_t i = 0; i < points; ++i) {
      ys[i] = std::exp(la + (lb - la) * i / double(points - 1));
    }
  } else {
    for (std::size_t i = 0; i < points; ++i) {
      ys[i] = lo + (hi - lo) * i / double(points - 1);
    }
  }
  return ys;
}

int cmd_fit(const CommonOpts& common, bool smooth, std::optional<double> tk_fix,
            bool grid_log, std::size_t grid_points,
            std::optional<double> grid_min, std::optional<double> grid_max) {
  const auto summary = load_table(common);
  const auto moments = metab::to_bin_moments(summary, common.renormalize);
  const auto density = metab::fit_me_density(moments);

  json config = opts_json(common);
  config["smooth"] = smooth;
  if (tk_fix) config["tk_fix"] = *tk_fix;
  config["grid_points"] = grid_points;
  if (grid_log) config["grid_log"] = true;
  const json meta = make_meta("fit", config, common.seed);

  const fs::path dir = common.output_dir;

  {
    json out;
    out["meta"] = meta;
    out["density"] = json::parse(metab::density_to_json(density));
    atomic_write(dir / "density.json", out.dump(2) + "\n");
  }
  {
    std::ostringstream csv;
    csv << csv_meta_header(meta);
    metab::write_pdf_cdf_csv(csv, density,
                             make_grid(density, grid_points, grid_min, grid_max));
    atomic_write(dir / "grid.csv", csv.str());
  }
  if (grid_log) {
    // density of log income: x -> f(e^x) e^x
    const double total = density.total_mass();
    double lo = density.lower_bound;
    if (!(lo > 0.0)) lo = metab::quantile(density, total * 1e-4);
    if (!(lo > 0.0)) {
      throw metab::ValidationError("--grid-log needs positive support");
    }
    const double hi = metab::quantile(density, total * (1.0 - 1e-4));
    std::vector<double> xs(grid_points);
    const double la = std::log(lo), lb = std::log(hi);
    for (std::size_t i = 0; i < grid_points; ++i) {
      xs[i] = la + (lb - la) * i / double(grid_points - 1);
    }
    std::ostringstream csv;
    csv << csv_meta_header(meta);
    metab::write_log_pdf_csv(csv, density, xs);
    atomic_write(dir / "log_grid.csv", csv.str());
  }

  if (smooth) {
    const double tk = tk_fix.value_or(moments.lower_bound);
    const auto fit = metab::smooth_thresholds(moments, tk);
    {
      json out;
      out["meta"] = meta;
      out["density"] = json::parse(metab::smoothed_fit_to_json(fit));
      atomic_write(dir / "density_smoothed.json", out.dump(2) + "\n");
    }
    std::ostringstream csv;
    csv << csv_meta_header(meta);
    metab::write_pdf_cdf_csv(
        csv, fit.density, make_grid(fit.density, grid_points, grid_min, grid_max));
    atomic_write(dir / "grid_smoothed.csv", csv.str());
    if (grid_log) {
      const double total = fit.density.total_mass();
      double lo = fit.density.lower_bound;
      if (!(lo > 0.0)) lo = metab::quantile(fit.density, total * 1e-4);
      const double hi = metab::quantile(fit.density, total * (1.0 - 1e-4));
      std::vector<double> xs(grid_points);
      const double la = std::log(lo), lb = std::log(hi);
      for (std::size_t i = 0; i < grid_points; ++i) {
        xs[i] = la + (lb - la) * i / double(grid_points - 1);
      }
      std::ostringstream lcsv;
      lcsv << csv_meta_header(meta);
      metab::write_log_pdf_csv(lcsv, fit.density, xs);
      atomic_write(dir / "log_grid_smoothed.csv", lcsv.str());
    }
  }
  return 0;
}

int cmd_shares(const CommonOpts& common, const std::string& method,
               std::vector<double> fractiles, bool smooth,
               std::optional<double> tk_fix, std::size_t lorenz_points) {
  const auto summary = load_table(common);
  const auto moments = metab::to_bin_moments(summary, common.renormalize);

  if (fractiles.empty()) {
    fractiles = {0.001, 0.01, 0.05, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9};
  }
  std::optional<double> external_mean;
  if (common.total_income) {
    if (!common.total_units) {
      throw metab::ValidationError(
          "--total-income needs --total-units for a per-capita mean");
    }
    external_mean = *common.total_income / *common.total_units;
  }

  json config = opts_json(common);
  config["method"] = method;
  config["fractiles"] = fractiles;
  config["smooth"] = smooth;
  const json meta = make_meta("shares", config, common.seed);
  const fs::path dir = common.output_dir;

  const bool want_me = method == "me" || method == "both";
  const bool want_piketty = method == "piketty" || method == "both";
  if (!want_me && !want_piketty) {
    throw metab::ValidationError("--method must be me, piketty, or both");
  }

  json summary_out;
  summary_out["meta"] = meta;

  if (want_me) {
    metab::MEDensity density;
    if (smooth) {
      const auto fit =
          metab::smooth_thresholds(moments, tk_fix.value_or(moments.lower_bound));
      density = fit.density;
    } else {
      density = metab::fit_me_density(moments);
    }
    std::vector<double> shares;
    shares.reserve(fractiles.size());
    for (double p : fractiles) {
      shares.push_back(metab::top_share(density, p, external_mean));
    }
    std::ostringstream csv;
    csv << csv_meta_header(meta);
    metab::write_top_share_csv(csv, fractiles, shares);
    atomic_write(dir / "shares_me.csv", csv.str());

    std::vector<double> grid(lorenz_points);
    for (std::size_t i = 0; i < lorenz_points; ++i) {
      grid[i] = double(i) / double(lorenz_points - 1);
    }
    const auto lorenz = metab::lorenz_curve(density, grid);
    std::ostringstream lcsv;
    lcsv << csv_meta_header(meta);
    metab::write_lorenz_csv(lcsv, lorenz);
    atomic_write(dir / "lorenz.csv", lcsv.str());

    if (std::abs(density.total_mass() - 1.0) <= 1e-9 && !external_mean) {
      summary_out["gini"] = metab::gini(density);
    } else {
      summary_out["gini"] = nullptr;  // undefined under partial coverage
    }
    summary_out["fitted_mean"] =
        metab::tail_expectation(density, density.lower_bound);
  }

  if (want_piketty) {
    const auto interp = metab::ParetoInterp::from_summary(summary);
    std::vector<double> shares;
    bool any_tie = false;
    for (double p : fractiles) {
      shares.push_back(metab::piketty_top_share(interp, p, external_mean));
      any_tie = any_tie || interp.select_row(p).tie;
    }
    std::ostringstream csv;
    csv << csv_meta_header(meta);
    metab::write_top_share_csv(csv, fractiles, shares);
    atomic_write(dir / "shares_piketty.csv", csv.str());
    summary_out["piketty_tie_break"] = any_tie;
  }

  summary_out["total_returns"] = summary.cum_counts.back();
  summary_out["total_income"] = summary.cum_sums.back();
  atomic_write(dir / "shares_summary.json", summary_out.dump(2) + "\n");
  return 0;
}

int cmd_simulate(const CommonOpts& common, const std::string& config_path,
                 bool full, bool density_rmse, std::optional<std::uint64_t> seed,
                 unsigned threads) {
  std::ifstream in(config_path);
  if (!in) {
    throw metab::ValidationError("cannot open experiment config " + config_path);
  }
  std::ostringstream buf;
  buf << in.rdbuf();
  auto cfg = metab::ExperimentConfig::from_json(buf.str());
  if (seed) cfg.seed = *seed;
  if (full) {
    // paper-scale run: 1000 replications (sample sizes stay as configured)
    cfg.replications = 1000;
  }

  const fs::path dir = common.output_dir;
  json config = json::parse(cfg.to_json());
  config["full"] = full;
  const json meta = make_meta("simulate", config, cfg.seed);

  if (density_rmse) {
    const auto report = metab::density_rmse_experiment(cfg, threads);
    std::ostringstream csv;
    csv << csv_meta_header(meta);
    csv << report.to_csv();
    atomic_write(dir / "density_rmse.csv", csv.str());
    std::cerr << "density RMSE experiment finished in " << report.wall_seconds
              << " s\n";
  } else {
    const auto report = metab::run_experiment(cfg, threads);
    std::ostringstream csv;
    csv << csv_meta_header(meta);
    csv << report.to_csv();
    atomic_write(dir / "report.csv", csv.str());
    json out = json::parse(report.to_json());
    out["meta"]["command"] = "simulate";
    atomic_write(dir / "report.json", out.dump(2) + "\n");
    std::cerr << "experiment finished in " << report.wall_seconds << " s\n";
  }
  return 0;
}

int cmd_moments(const CommonOpts& common) {
  const auto summary = load_table(common);
  const auto moments = metab::to_bin_moments(summary, common.renormalize);
  const json meta = make_meta("moments", opts_json(common), common.seed);
  const fs::path dir = common.output_dir;
  {
    json out;
    out["meta"] = meta;
    out["summary"] = json::parse(metab::summary_to_json(summary));
    out["moments"] = json::parse(metab::moments_to_json(moments));
    atomic_write(dir / "moments.json", out.dump(2) + "\n");
  }
  {
    std::ostringstream csv;
    metab::write_summary_csv(csv, summary);
    atomic_write(dir / "summary.csv", csv.str());
  }
  return 0;
}

void emit_error(int code, const std::string& kind, const std::string& message,
                std::optional<std::size_t> bin = {}) {
  json err;
  err["error"]["code"] = code;
  err["error"]["kind"] = kind;
  err["error"]["message"] = message;
  if (bin && *bin > 0) err["error"]["bin"] = *bin;
  std::cerr << err.dump() << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"maximum-entropy density estimation from tabulated summary data"};
  app.require_subcommand(1);

  CommonOpts common;
  bool smooth = false;
  std::optional<double> tk_fix;
  bool grid_log = false;
  std::size_t grid_points = 513;
  std::optional<double> grid_min, grid_max;
  std::string method = "me";
  std::vector<double> fractiles;
  std::size_t lorenz_points = 101;
  std::string sim_config;
  bool full = false;
  bool density_rmse = false;
  std::optional<std::uint64_t> sim_seed;
  unsigned threads = metab::default_threads();

  const auto add_table_opts = [&](CLI::App* cmd) {
    cmd->add_option("--input", common.input, "input CSV table")->required();
    cmd->add_option("--format", common.format_file,
                    "format descriptor sidecar (key=value)");
    cmd->add_option("--form", common.form, "cumulative|per_group");
    cmd->add_option("--order", common.order, "descending|ascending");
    cmd->add_option("--total-multiplier", common.total_multiplier,
                    "unit multiplier on the totals column");
    cmd->add_option("--lower-bound", common.lower_bound,
                    "finite lower end of the bottom bin");
    cmd->add_flag("--renormalize", common.renormalize,
                  "normalize masses by the tabulated count instead of n");
    cmd->add_option("--total-units", common.total_units,
                    "external total population (tax units)");
    cmd->add_option("--output-dir", common.output_dir, "output directory");
    cmd->add_option("--seed", common.seed, "seed echoed into outputs");
  };

  auto* fit = app.add_subcommand("fit", "fit the ME density to a table");
  add_table_opts(fit);
  fit->add_flag("--smooth", smooth, "also produce the threshold-smoothed fit");
  fit->add_option("--tk-fix", tk_fix, "fixed bottom threshold for smoothing");
  fit->add_flag("--grid-log", grid_log, "emit the log-income density grid");
  fit->add_option("--grid-points", grid_points, "grid resolution");
  fit->add_option("--grid-min", grid_min, "grid lower end");
  fit->add_option("--grid-max", grid_max, "grid upper end");

  auto* shares = app.add_subcommand("shares", "top income shares and Lorenz/Gini");
  add_table_opts(shares);
  shares->add_option("--method", method, "me|piketty|both");
  shares->add_option("--fractiles", fractiles, "top fractiles to evaluate");
  shares->add_flag("--smooth", smooth, "use the smoothed fit");
  shares->add_option("--tk-fix", tk_fix, "fixed bottom threshold for smoothing");
  shares->add_option("--total-income", common.total_income,
                     "external total income (post-multiplier units)");
  shares->add_option("--lorenz-points", lorenz_points, "Lorenz grid size");

  auto* simulate = app.add_subcommand("simulate", "Monte-Carlo estimator study");
  simulate->add_option("--config", sim_config, "experiment config JSON")
      ->required();
  simulate->add_option("--output-dir", common.output_dir, "output directory");
  simulate->add_flag("--full", full, "paper-scale replication count");
  simulate->add_flag("--density-rmse", density_rmse,
                     "density RMSE experiment instead of top shares");
  simulate->add_option("--seed", sim_seed, "override the config seed");
  simulate->add_option("--threads", threads, "worker cap (METAB_THREADS)");

  auto* moments = app.add_subcommand("moments", "dump validated bin moments");
  add_table_opts(moments);

  CLI11_PARSE(app, argc, argv);

  try {
    if (app.got_subcommand(fit)) {
      return cmd_fit(common, smooth, tk_fix, grid_log, grid_points, grid_min,
                     grid_max);
    }
    if (app.got_subcommand(shares)) {
      return cmd_shares(common, method, fractiles, smooth, tk_fix,
                        lorenz_points);
    }
    if (app.got_subcommand(simulate)) {
      return cmd_simulate(common, sim_config, full, density_rmse, sim_seed,
                          threads);
    }
    if (app.got_subcommand(moments)) {
      return cmd_moments(common);
    }
  } catch (const metab::InfeasibleBinError& e) {
    emit_error(3, "infeasible_bin", e.what(), e.bin());
    return 3;
  } catch (const metab::ConvergenceError& e) {
    emit_error(4, "no_convergence", e.what());
    return 4;
  } catch (const metab::ValidationError& e) {
    emit_error(2, "validation", e.what());
    return 2;
  } catch (const nlohmann::json::exception& e) {
    emit_error(2, "validation", e.what());
    return 2;
  } catch (const std::exception& e) {
    emit_error(1, "internal", e.what());
    return 1;
  }
  return 0;
}
