#include "metab/simlab.hpp"

#include "metab/baselines.hpp"
#include "metab/errors.hpp"
#include "metab/functionals.hpp"
#include "metab/mecore.hpp"
#include "metab/strfmt.hpp"
#include "metab/version.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <sstream>
#include <thread>

namespace metab {

namespace {
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
}

std::vector<double> density_fractile_grid() {
  std::vector<double> p = {0.001, 0.005, 0.01, 0.05};
  for (int i = 2; i <= 18; ++i) p.push_back(i * 0.05);  // 0.10 .. 0.90
  p.insert(p.end(), {0.95, 0.99, 0.995, 0.999, 1.0});
  return p;
}

std::vector<double> topshare_fractile_grid() {
  std::vector<double> p = {0.001, 0.01, 0.05};
  for (int i = 2; i <= 19; ++i) p.push_back(i * 0.05);  // 0.10 .. 0.95
  p.push_back(1.0);
  return p;
}

unsigned default_threads() {
  unsigned hw = std::thread::hardware_concurrency();
  if (hw == 0) hw = 1;
  if (const char* env = std::getenv("METAB_THREADS")) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end != env && v > 0) hw = std::min<unsigned>(hw, (unsigned)v);
  }
  return hw;
}

void parallel_for(std::size_t count, unsigned threads,
                  const std::function<void(std::size_t)>& body) {
  if (count == 0) return;
  threads = std::max(1u, std::min<unsigned>(threads, count));
  if (threads == 1) {
    for (std::size_t i = 0; i < count; ++i) body(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr first_error;
  std::mutex error_mutex;
  auto worker = [&] {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= count) return;
      try {
        body(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!first_error) first_error = std::current_exception();
        return;
      }
    }
  };
  std::vector<std::thread> pool;
  pool.reserve(threads);
  for (unsigned t = 0; t < threads; ++t) pool.emplace_back(worker);
  for (auto& th : pool) th.join();
  if (first_error) std::rethrow_exception(first_error);
}

TabulationResult tabulate_fixed_thresholds(const Distribution& dist,
                                           const std::vector<double>& fractiles,
                                           std::size_t n, RngStream& rng) {
  if (n < 1) throw ValidationError("tabulate: n must be >= 1");
  const std::size_t k = fractiles.size();
  if (k < 2) throw ValidationError("tabulate: need at least 2 fractiles");
  // thresholds t_k = Q(1 - p_k), ascending for binning
  std::vector<double> asc(k);
  for (std::size_t i = 0; i < k; ++i) {
    const double p = fractiles[k - 1 - i];
    asc[i] = (p >= 1.0) ? dist.support_lower() : dist.quantile(1.0 - p);
  }
  std::vector<double> counts(k, 0.0), sums(k, 0.0);
  double mean = 0.0, m2 = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double y = dist.sample(rng);
    auto it = std::upper_bound(asc.begin(), asc.end(), y);
    std::size_t bin = it == asc.begin() ? 0 : (it - asc.begin() - 1);
    counts[bin] += 1.0;
    sums[bin] += y;
    const double d = y - mean;
    mean += d / (i + 1.0);
    m2 += d * (y - mean);
  }
  TabulationResult out;
  out.sample_mean = mean;
  out.sample_sd = n > 1 ? std::sqrt(m2 / (n - 1.0)) : 0.0;
  TabulatedSummary& s = out.summary;
  s.thresholds.resize(k);
  s.cum_counts.resize(k);
  s.cum_sums.resize(k);
  double cn = 0.0, cs = 0.0;
  for (std::size_t i = 0; i < k; ++i) {
    const std::size_t from_top = k - 1 - i;  // descending storage
    s.thresholds[i] = asc[from_top];
    cn += counts[from_top];
    cs += sums[from_top];
    s.cum_counts[i] = cn;
    s.cum_sums[i] = cs;
  }
  s.n = static_cast<double>(n);
  s.lower_bound = s.thresholds.back();
  s.validate();
  return out;
}

TabulatedSummary tabulate_empirical(std::vector<double>& sample,
                                    const std::vector<double>& fractiles) {
  const std::size_t n = sample.size();
  if (n < 2) throw ValidationError("tabulate: need at least 2 observations");
  // m_k = top-count per fractile, distinct and increasing
  std::vector<std::size_t> m;
  for (double p : fractiles) {
    if (!(p > 0.0 && p <= 1.0)) {
      throw ValidationError("tabulate: fractiles must lie in (0, 1]");
    }
    auto mk = static_cast<std::size_t>(std::llround(p * n));
    mk = std::clamp<std::size_t>(mk, 1, n);
    if (m.empty() || mk > m.back()) m.push_back(mk);
  }
  if (m.size() < 2) throw ValidationError("tabulate: fractile grid collapses");
  // selection: place each order statistic, narrowing from the top
  std::size_t right = n;  // exclusive end of the not-yet-partitioned prefix
  for (auto it = m.begin(); it != m.end(); ++it) {
    const std::size_t pos = n - *it;  // ascending index of Y_(m)
    std::nth_element(sample.begin(), sample.begin() + pos,
                     sample.begin() + right);
    right = pos;
    if (pos == 0) break;
  }
  TabulatedSummary s;
  const std::size_t k = m.size();
  s.thresholds.resize(k);
  s.cum_counts.resize(k);
  s.cum_sums.resize(k);
  double acc = 0.0;
  std::size_t covered = 0;  // how many top elements are already summed
  for (std::size_t i = 0; i < k; ++i) {
    const std::size_t mk = m[i];
    const std::size_t pos = n - mk;
    for (std::size_t j = n - covered; j-- > pos + 1;) acc += sample[j];
    acc += sample[pos];
    covered = mk;
    s.thresholds[i] = sample[pos];
    s.cum_counts[i] = static_cast<double>(mk);
    s.cum_sums[i] = acc;
  }
  s.n = static_cast<double>(n);
  s.lower_bound = s.thresholds.back();
  s.validate();
  return s;
}

ExperimentConfig ExperimentConfig::from_json(const std::string& text) {
  const auto j = nlohmann::json::parse(text);
  ExperimentConfig cfg;
  cfg.model = ModelSpec::from_json(j.at("model").dump());
  if (j.contains("methods")) {
    cfg.methods = j.at("methods").get<std::vector<std::string>>();
  }
  if (j.contains("bk_c")) cfg.bk_c = j.at("bk_c").get<std::vector<double>>();
  if (j.contains("sample_sizes")) {
    cfg.sample_sizes = j.at("sample_sizes").get<std::vector<std::size_t>>();
  }
  if (j.contains("p0")) cfg.p0 = j.at("p0").get<std::vector<double>>();
  if (j.contains("replications")) {
    cfg.replications = j.at("replications").get<std::size_t>();
  }
  if (j.contains("seed")) cfg.seed = j.at("seed").get<std::uint64_t>();
  if (j.contains("threshold_grid")) {
    const std::string g = j.at("threshold_grid").get<std::string>();
    if (g == "topshare_k22") {
      cfg.threshold_fractiles = topshare_fractile_grid();
    } else if (g == "density_k26") {
      cfg.threshold_fractiles = density_fractile_grid();
    } else {
      throw ValidationError("unknown threshold_grid '" + g + "'");
    }
  }
  if (j.contains("threshold_fractiles")) {
    cfg.threshold_fractiles =
        j.at("threshold_fractiles").get<std::vector<double>>();
  }
  if (j.contains("empirical_thresholds")) {
    cfg.empirical_thresholds = j.at("empirical_thresholds").get<bool>();
  }
  if (j.contains("eval_quantiles")) {
    cfg.eval_quantiles = j.at("eval_quantiles").get<std::vector<double>>();
  }
  return cfg;
}

std::string ExperimentConfig::to_json() const {
  nlohmann::json j;
  j["model"] = nlohmann::json::parse(model.to_json());
  j["methods"] = methods;
  j["bk_c"] = bk_c;
  j["sample_sizes"] = sample_sizes;
  j["p0"] = p0;
  j["replications"] = replications;
  j["seed"] = seed;
  j["threshold_fractiles"] = threshold_fractiles;
  j["empirical_thresholds"] = empirical_thresholds;
  if (!eval_quantiles.empty()) j["eval_quantiles"] = eval_quantiles;
  return j.dump();
}

namespace {

// expand "bk" into one entry per bandwidth constant
struct MethodPlan {
  std::string name;
  enum class Kind { me, piketty, bk } kind;
  double c = 0.0;
};

std::vector<MethodPlan> plan_methods(const ExperimentConfig& cfg) {
  std::vector<MethodPlan> plans;
  for (const auto& m : cfg.methods) {
    if (m == "me") {
      plans.push_back({"me", MethodPlan::Kind::me, 0.0});
    } else if (m == "piketty") {
      plans.push_back({"piketty", MethodPlan::Kind::piketty, 0.0});
    } else if (m == "bk") {
      for (double c : cfg.bk_c) {
        plans.push_back({"bk(c=" + dtos(c) + ")", MethodPlan::Kind::bk, c});
      }
    } else {
      throw ValidationError("unknown method '" + m + "'");
    }
  }
  if (plans.empty()) throw ValidationError("no methods requested");
  return plans;
}

// closed-form moment reproduction check on a fitted density (spot check)
bool reproduces_moments(const MEDensity& d) {
  for (const auto& b : d.bins) {
    if (b.q <= 0.0) continue;
    const double mean = bin_tilted_mean(b.lower, b.upper, b.lambda);
    const double scale = std::max(std::abs(b.y), 1e-300);
    if (!(std::abs(mean - b.y) <= 1e-10 * scale)) return false;
  }
  return true;
}

}  // namespace

const SimCell& SimReport::cell(std::size_t method, std::size_t n_idx,
                               std::size_t p_idx) const {
  return cells[(method * sample_sizes.size() + n_idx) * p0.size() + p_idx];
}

std::string SimReport::to_csv() const {
  std::ostringstream out;
  out << "metric,method,n";
  for (double p : p0) out << ",p0=" << dtos(p);
  out << "\n";
  for (const char* metric : {"rel_bias", "rel_rmse"}) {
    const bool bias = std::string(metric) == "rel_bias";
    for (std::size_t mi = 0; mi < method_names.size(); ++mi) {
      for (std::size_t ni = 0; ni < sample_sizes.size(); ++ni) {
        out << metric << ',' << method_names[mi] << ',' << sample_sizes[ni];
        for (std::size_t pi = 0; pi < p0.size(); ++pi) {
          const SimCell& c = cell(mi, ni, pi);
          out << ',' << dtos(bias ? c.rel_bias : c.rel_rmse);
        }
        out << "\n";
      }
    }
  }
  return out.str();
}

std::string SimReport::to_json() const {
  nlohmann::json j;
  j["config"] = nlohmann::json::parse(config.to_json());
  j["method_names"] = method_names;
  j["sample_sizes"] = sample_sizes;
  j["p0"] = p0;
  nlohmann::json cs = nlohmann::json::array();
  for (const auto& c : cells) {
    cs.push_back({{"rel_bias", c.rel_bias},
                  {"rel_rmse", c.rel_rmse},
                  {"failures", c.failures}});
  }
  j["cells"] = std::move(cs);
  j["meta"] = {{"version", kVersion},
               {"seed", config.seed},
               {"wall_seconds", wall_seconds}};
  return j.dump();
}

SimReport run_experiment(const ExperimentConfig& cfg, unsigned threads) {
  const auto t0 = std::chrono::steady_clock::now();
  const auto dist = cfg.model.build();
  const auto plans = plan_methods(cfg);
  const std::size_t n_methods = plans.size();
  const std::size_t n_sizes = cfg.sample_sizes.size();
  const std::size_t n_p = cfg.p0.size();
  const std::size_t reps = cfg.replications;
  if (reps < 1) throw ValidationError("replications must be >= 1");

  std::vector<double> s0(n_p);
  for (std::size_t pi = 0; pi < n_p; ++pi) {
    s0[pi] = dist->top_share(cfg.p0[pi]);
  }

  SimReport report;
  report.config = cfg;
  for (const auto& p : plans) report.method_names.push_back(p.name);
  report.sample_sizes = cfg.sample_sizes;
  report.p0 = cfg.p0;
  report.cells.assign(n_methods * n_sizes * n_p, SimCell{});

  // per-replication relative errors; NaN marks a failed (method, rep)
  std::vector<double> slots(n_methods * n_p * reps, kNaN);
  const auto slot = [&](std::size_t mi, std::size_t pi, std::size_t rep)
      -> double& { return slots[(mi * n_p + pi) * reps + rep]; };

  for (std::size_t ni = 0; ni < n_sizes; ++ni) {
    const std::size_t n = cfg.sample_sizes[ni];
    std::fill(slots.begin(), slots.end(), kNaN);

    parallel_for(reps, threads, [&](std::size_t rep) {
      RngStream rng(cfg.seed, ni * reps + rep);
      TabulationResult tab;
      if (cfg.empirical_thresholds) {
        std::vector<double> sample(n);
        double mean = 0.0, m2 = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
          sample[i] = dist->sample(rng);
          const double d = sample[i] - mean;
          mean += d / (i + 1.0);
          m2 += d * (sample[i] - mean);
        }
        tab.summary = tabulate_empirical(sample, cfg.threshold_fractiles);
        tab.sample_mean = mean;
        tab.sample_sd = n > 1 ? std::sqrt(m2 / (n - 1.0)) : 0.0;
      } else {
        tab = tabulate_fixed_thresholds(*dist, cfg.threshold_fractiles, n, rng);
      }
      const BinMoments moments = to_bin_moments(tab.summary);

      for (std::size_t mi = 0; mi < n_methods; ++mi) {
        const auto& plan = plans[mi];
        try {
          if (plan.kind == MethodPlan::Kind::me) {
            const MEDensity fit = fit_me_density(moments);
            if (rep % 100 == 0 && !reproduces_moments(fit)) {
              throw ValidationError("moment reproduction spot check failed");
            }
            for (std::size_t pi = 0; pi < n_p; ++pi) {
              slot(mi, pi, rep) = top_share(fit, cfg.p0[pi]) / s0[pi] - 1.0;
            }
          } else if (plan.kind == MethodPlan::Kind::piketty) {
            const auto interp = ParetoInterp::from_summary(tab.summary);
            for (std::size_t pi = 0; pi < n_p; ++pi) {
              slot(mi, pi, rep) =
                  piketty_top_share(interp, cfg.p0[pi]) / s0[pi] - 1.0;
            }
          } else {
            const double h =
                bk_bandwidth_with_sigma(plan.c, tab.sample_sd, (double)n);
            for (std::size_t pi = 0; pi < n_p; ++pi) {
              slot(mi, pi, rep) =
                  bk_top_share(moments, h, cfg.p0[pi]) / s0[pi] - 1.0;
            }
          }
        } catch (const std::exception&) {
          for (std::size_t pi = 0; pi < n_p; ++pi) {
            slot(mi, pi, rep) = kNaN;
          }
        }
      }
    });

    // sequential reduction in replication order: deterministic across
    // worker counts
    for (std::size_t mi = 0; mi < n_methods; ++mi) {
      for (std::size_t pi = 0; pi < n_p; ++pi) {
        double sum = 0.0, sumsq = 0.0;
        std::size_t ok = 0, fail = 0;
        for (std::size_t rep = 0; rep < reps; ++rep) {
          const double e = slot(mi, pi, rep);
          if (std::isnan(e)) {
            ++fail;
            continue;
          }
          sum += e;
          sumsq += e * e;
          ++ok;
        }
        SimCell& c =
            report.cells[(mi * n_sizes + ni) * n_p + pi];
        c.failures = fail;
        c.rel_bias = ok ? sum / ok : kNaN;
        c.rel_rmse = ok ? std::sqrt(sumsq / ok) : kNaN;
      }
    }
  }

  report.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
          .count();
  return report;
}

double DensityRmseReport::at(std::size_t method, std::size_t n_idx,
                             std::size_t q_idx) const {
  return rmse[(method * sample_sizes.size() + n_idx) * quantiles.size() +
              q_idx];
}

std::string DensityRmseReport::to_csv() const {
  std::ostringstream out;
  out << "method,n,tau,rel_rmse\n";
  for (std::size_t mi = 0; mi < method_names.size(); ++mi) {
    for (std::size_t ni = 0; ni < sample_sizes.size(); ++ni) {
      for (std::size_t qi = 0; qi < quantiles.size(); ++qi) {
        out << method_names[mi] << ',' << sample_sizes[ni] << ','
            << dtos(quantiles[qi]) << ',' << dtos(at(mi, ni, qi)) << "\n";
      }
    }
  }
  return out.str();
}

DensityRmseReport density_rmse_experiment(const ExperimentConfig& cfg,
                                          unsigned threads) {
  const auto t0 = std::chrono::steady_clock::now();
  const auto dist = cfg.model.build();
  const auto plans = plan_methods(cfg);

  std::vector<double> taus = cfg.eval_quantiles;
  if (taus.empty()) {
    for (int i = 1; i <= 49; ++i) taus.push_back(0.02 * i);  // 0.02 .. 0.98
  }
  const std::size_t n_q = taus.size();
  std::vector<double> ys(n_q), fs(n_q);
  for (std::size_t i = 0; i < n_q; ++i) {
    ys[i] = dist->quantile(taus[i]);
    fs[i] = dist->pdf(ys[i]);
    if (!(fs[i] > 0.0)) {
      throw ValidationError("density RMSE: true density vanishes at a grid point");
    }
  }

  const std::size_t n_methods = plans.size();
  const std::size_t n_sizes = cfg.sample_sizes.size();
  const std::size_t reps = cfg.replications;

  DensityRmseReport report;
  report.config = cfg;
  for (const auto& p : plans) report.method_names.push_back(p.name);
  report.sample_sizes = cfg.sample_sizes;
  report.quantiles = taus;
  report.rmse.assign(n_methods * n_sizes * n_q, kNaN);

  std::vector<double> slots(n_methods * n_q * reps, kNaN);
  const auto slot = [&](std::size_t mi, std::size_t qi, std::size_t rep)
      -> double& { return slots[(mi * n_q + qi) * reps + rep]; };

  for (std::size_t ni = 0; ni < n_sizes; ++ni) {
    const std::size_t n = cfg.sample_sizes[ni];
    std::fill(slots.begin(), slots.end(), kNaN);

    parallel_for(reps, threads, [&](std::size_t rep) {
      RngStream rng(cfg.seed, (n_sizes + ni) * reps + rep);
      TabulationResult tab =
          tabulate_fixed_thresholds(*dist, cfg.threshold_fractiles, n, rng);
      const BinMoments moments = to_bin_moments(tab.summary);
      for (std::size_t mi = 0; mi < n_methods; ++mi) {
        const auto& plan = plans[mi];
        try {
          if (plan.kind == MethodPlan::Kind::me) {
            const MEDensity fit = fit_me_density(moments);
            for (std::size_t qi = 0; qi < n_q; ++qi) {
              slot(mi, qi, rep) = density_eval(fit, ys[qi]) / fs[qi] - 1.0;
            }
          } else if (plan.kind == MethodPlan::Kind::bk) {
            const double h =
                bk_bandwidth_with_sigma(plan.c, tab.sample_sd, (double)n);
            for (std::size_t qi = 0; qi < n_q; ++qi) {
              slot(mi, qi, rep) = bk_density(moments, h, ys[qi]) / fs[qi] - 1.0;
            }
          } else {
            throw ValidationError("density RMSE supports methods me and bk");
          }
        } catch (const std::exception&) {
          for (std::size_t qi = 0; qi < n_q; ++qi) slot(mi, qi, rep) = kNaN;
        }
      }
    });

    for (std::size_t mi = 0; mi < n_methods; ++mi) {
      for (std::size_t qi = 0; qi < n_q; ++qi) {
        double sumsq = 0.0;
        std::size_t ok = 0;
        for (std::size_t rep = 0; rep < reps; ++rep) {
          const double e = slot(mi, qi, rep);
          if (std::isnan(e)) continue;
          sumsq += e * e;
          ++ok;
        }
        report.rmse[(mi * n_sizes + ni) * n_q + qi] =
            ok ? std::sqrt(sumsq / ok) : kNaN;
      }
    }
  }

  report.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
          .count();
  return report;
}

}  // namespace metab
