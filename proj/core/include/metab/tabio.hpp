#pragma once

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace metab {

class Distribution;

enum class Provenance { empirical, population, smoothed };

const char* to_string(Provenance p);
Provenance provenance_from_string(const std::string& s);

// Input-format descriptor for tabulated CSV files. Unset fields fall back
// to directives embedded in the file ("# key=value" lines) and then to the
// canonical defaults (cumulative, descending, multiplier 1, US locale).
struct FormatDescriptor {
  enum class Form { cumulative, per_group };
  enum class Order { descending, ascending };

  std::optional<Form> form;
  std::optional<Order> order;
  std::optional<double> total_multiplier;
  std::optional<double> lower_bound;
  std::optional<std::string> locale;  // "us" strips $ and thousands commas
};

// Parse a key=value sidecar config (blank lines and '#' comments ignored).
FormatDescriptor parse_format_descriptor(std::istream& in);

// Tabulated summary {(t_k, n_k, S_{n_k})} in cumulative form, top bin
// first. thresholds holds the K bin lower edges in strictly decreasing
// order; the last one is the finite lower end of the support and is
// mirrored in lower_bound.
struct TabulatedSummary {
  std::vector<double> thresholds;
  std::vector<double> cum_counts;
  std::vector<double> cum_sums;
  double n = 0.0;           // total population; defaults to cum_counts.back()
  double lower_bound = 0.0;

  std::size_t bins() const { return thresholds.size(); }
  void validate() const;  // throws ValidationError, bin index in the message
};

// Parse a delimited text table with columns (threshold, count, total).
// Accepts per-group or cumulative counts, either row order, a unit
// multiplier on totals, and an optional open bottom bin (empty threshold
// cell on the lowest row) closed by the configured lower bound.
TabulatedSummary parse_summary(std::istream& csv, const FormatDescriptor& fmt,
                               std::optional<double> total_population = {});

// Canonical serialization: cumulative, descending, multiplier 1, embedded
// directives. parse_summary(write_summary_csv(s)) == s exactly.
void write_summary_csv(std::ostream& out, const TabulatedSummary& s);

std::string summary_to_json(const TabulatedSummary& s);
TabulatedSummary summary_from_json(const std::string& text);

// Per-bin probabilities and conditional means on the same threshold grid.
// y[i] is NaN on zero-mass bins.
struct BinMoments {
  std::vector<double> thresholds;  // descending, K values; last = lower_bound
  double lower_bound = 0.0;
  std::vector<double> q;
  std::vector<double> y;
  Provenance provenance = Provenance::empirical;

  std::size_t bins() const { return thresholds.size(); }
  double lower_edge(std::size_t i) const { return thresholds[i]; }
  double upper_edge(std::size_t i) const;  // +inf for i == 0
  double total_mass() const;
  void validate() const;
};

// Empirical analogs q̂_k = (n_k - n_{k-1})/n, ŷ_k = ΔS/Δn. With
// renormalize, masses are taken against the tabulated count n_K instead of
// the population n, so uncovered mass is spread over the table.
BinMoments to_bin_moments(const TabulatedSummary& s, bool renormalize = false);

// Population bin moments of an analytic distribution on a threshold grid
// (descending, last entry = finite lower support edge). Closed forms where
// the distribution provides them, adaptive quadrature otherwise.
BinMoments population_moments(const Distribution& dist,
                              const std::vector<double>& thresholds);

std::string moments_to_json(const BinMoments& m);
BinMoments moments_from_json(const std::string& text);

}  // namespace metab
