#include "metab/tabio.hpp"

#include "metab/errors.hpp"
#include "metab/models.hpp"
#include "metab/strfmt.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>

namespace metab {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (char ch : line) {
    if (ch == '"') {
      quoted = !quoted;
    } else if (ch == ',' && !quoted) {
      out.push_back(trim(cur));
      cur.clear();
    } else {
      cur.push_back(ch);
    }
  }
  out.push_back(trim(cur));
  return out;
}

// Strip currency prefixes and US-style thousands separators, then parse.
bool parse_number(const std::string& raw, const std::string& locale,
                  double* out) {
  std::string s;
  s.reserve(raw.size());
  for (char ch : raw) {
    if (ch == '"' || ch == ' ' || ch == '\t') continue;
    if (locale == "us" && (ch == '$' || ch == ',')) continue;
    s.push_back(ch);
  }
  if (s.empty()) return false;
  try {
    std::size_t pos = 0;
    const double v = std::stod(s, &pos);
    if (pos != s.size()) return false;
    *out = v;
    return true;
  } catch (const std::exception&) {
    return false;
  }
}

struct ResolvedFormat {
  FormatDescriptor::Form form = FormatDescriptor::Form::cumulative;
  FormatDescriptor::Order order = FormatDescriptor::Order::descending;
  double total_multiplier = 1.0;
  std::optional<double> lower_bound;
  std::string locale = "us";
};

void apply_key(FormatDescriptor& fd, const std::string& key,
               const std::string& value) {
  if (key == "form") {
    if (value == "cumulative") {
      fd.form = FormatDescriptor::Form::cumulative;
    } else if (value == "per_group") {
      fd.form = FormatDescriptor::Form::per_group;
    } else {
      throw ValidationError("format: unknown form '" + value + "'");
    }
  } else if (key == "order") {
    if (value == "descending") {
      fd.order = FormatDescriptor::Order::descending;
    } else if (value == "ascending") {
      fd.order = FormatDescriptor::Order::ascending;
    } else {
      throw ValidationError("format: unknown order '" + value + "'");
    }
  } else if (key == "total_multiplier") {
    double v = 0.0;
    if (!parse_number(value, "us", &v) || !(v > 0.0)) {
      throw ValidationError("format: bad total_multiplier '" + value + "'");
    }
    fd.total_multiplier = v;
  } else if (key == "lower_bound") {
    double v = 0.0;
    if (!parse_number(value, "us", &v)) {
      throw ValidationError("format: bad lower_bound '" + value + "'");
    }
    fd.lower_bound = v;
  } else if (key == "locale") {
    fd.locale = value;
  }
  // unknown keys are ignored so sidecars can carry annotations
}

ResolvedFormat resolve(const FormatDescriptor& from_file,
                       const FormatDescriptor& from_caller) {
  ResolvedFormat r;
  const auto pick = [](auto caller, auto file, auto fallback) {
    return caller ? *caller : (file ? *file : fallback);
  };
  r.form = pick(from_caller.form, from_file.form,
                FormatDescriptor::Form::cumulative);
  r.order = pick(from_caller.order, from_file.order,
                 FormatDescriptor::Order::descending);
  r.total_multiplier =
      pick(from_caller.total_multiplier, from_file.total_multiplier, 1.0);
  r.locale = pick(from_caller.locale, from_file.locale, std::string("us"));
  if (from_caller.lower_bound) {
    r.lower_bound = from_caller.lower_bound;
  } else if (from_file.lower_bound) {
    r.lower_bound = from_file.lower_bound;
  }
  return r;
}

}  // namespace

const char* to_string(Provenance p) {
  switch (p) {
    case Provenance::empirical: return "empirical";
    case Provenance::population: return "population";
    case Provenance::smoothed: return "smoothed";
  }
  return "empirical";
}

Provenance provenance_from_string(const std::string& s) {
  if (s == "empirical") return Provenance::empirical;
  if (s == "population") return Provenance::population;
  if (s == "smoothed") return Provenance::smoothed;
  throw ValidationError("unknown provenance '" + s + "'");
}

FormatDescriptor parse_format_descriptor(std::istream& in) {
  FormatDescriptor fd;
  std::string line;
  while (std::getline(in, line)) {
    line = trim(line);
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ValidationError("format: expected key=value, got '" + line + "'");
    }
    apply_key(fd, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  return fd;
}

void TabulatedSummary::validate() const {
  const std::size_t k = bins();
  if (k < 2) throw ValidationError("table must have at least 2 bins");
  if (cum_counts.size() != k || cum_sums.size() != k) {
    throw ValidationError("table column lengths disagree");
  }
  for (std::size_t i = 0; i < k; ++i) {
    if (!std::isfinite(thresholds[i]) || !std::isfinite(cum_counts[i]) ||
        !std::isfinite(cum_sums[i])) {
      throw ValidationError("non-finite entry in bin " + std::to_string(i + 1));
    }
    if (i > 0 && !(thresholds[i] < thresholds[i - 1])) {
      throw ValidationError("thresholds not strictly decreasing at bin " +
                            std::to_string(i + 1));
    }
    if (cum_counts[i] < 0.0 ||
        (i > 0 && cum_counts[i] < cum_counts[i - 1])) {
      throw ValidationError("negative group count in bin " +
                            std::to_string(i + 1));
    }
    if (i > 0 && cum_sums[i] < cum_sums[i - 1]) {
      throw ValidationError("cumulative sums decrease at bin " +
                            std::to_string(i + 1));
    }
  }
  if (!(cum_counts.back() > 0.0)) {
    throw ValidationError("table holds no observations");
  }
  if (!(n >= cum_counts.back())) {
    throw ValidationError("total population below tabulated count");
  }
  if (lower_bound != thresholds.back()) {
    throw ValidationError("lower bound does not close the bottom bin");
  }
  // group means must lie in [t_k, t_{k-1}); strict interiority is enforced
  // at fit time
  for (std::size_t i = 0; i < k; ++i) {
    const double dn = cum_counts[i] - (i ? cum_counts[i - 1] : 0.0);
    if (dn <= 0.0) continue;
    const double ds = cum_sums[i] - (i ? cum_sums[i - 1] : 0.0);
    const double mean = ds / dn;
    const double lo = thresholds[i];
    const double hi = i ? thresholds[i - 1] : kInf;
    if (!(mean >= lo) || !(mean < hi)) {
      throw ValidationError("group mean outside its bin: bin " +
                            std::to_string(i + 1));
    }
  }
}

TabulatedSummary parse_summary(std::istream& csv, const FormatDescriptor& fmt,
                               std::optional<double> total_population) {
  FormatDescriptor file_fd;
  struct Row {
    std::optional<double> threshold;
    double count;
    double total;
  };
  std::vector<Row> rows;
  std::optional<double> file_n;

  std::string line;
  bool seen_header = false;
  std::size_t lineno = 0;
  // locale is needed while scanning; resolve it up-front from caller only,
  // refine after directives if the file sets one
  std::string locale = fmt.locale.value_or("us");
  while (std::getline(csv, line)) {
    ++lineno;
    line = trim(line);
    if (line.empty()) continue;
    if (line[0] == '#') {
      const auto body = trim(line.substr(1));
      const auto eq = body.find('=');
      if (eq != std::string::npos) {
        const std::string key = trim(body.substr(0, eq));
        const std::string value = trim(body.substr(eq + 1));
        if (key == "n") {
          double v = 0.0;
          if (parse_number(value, "us", &v)) file_n = v;
        } else {
          apply_key(file_fd, key, value);
          if (key == "locale" && !fmt.locale) locale = value;
        }
      }
      continue;
    }
    const auto fields = split_csv_line(line);
    if (!seen_header) {
      seen_header = true;
      double probe = 0.0;
      bool numeric = fields.size() >= 2;
      for (std::size_t j = 1; j < std::min<std::size_t>(fields.size(), 3); ++j) {
        numeric = numeric && parse_number(fields[j], locale, &probe);
      }
      if (!numeric) continue;  // header row, skip
    }
    if (fields.size() < 3) {
      throw ValidationError("malformed row at line " + std::to_string(lineno) +
                            ": expected threshold,count,total");
    }
    Row r{};
    double v = 0.0;
    if (fields[0].empty()) {
      r.threshold = std::nullopt;  // open bottom bin
    } else if (parse_number(fields[0], locale, &v)) {
      r.threshold = v;
    } else {
      throw ValidationError("malformed threshold at line " +
                            std::to_string(lineno));
    }
    if (!parse_number(fields[1], locale, &r.count)) {
      throw ValidationError("malformed count at line " + std::to_string(lineno));
    }
    if (!parse_number(fields[2], locale, &r.total)) {
      throw ValidationError("malformed total at line " + std::to_string(lineno));
    }
    rows.push_back(r);
  }
  if (rows.size() < 2) {
    throw ValidationError("table must have at least 2 rows");
  }

  const ResolvedFormat rf = resolve(file_fd, fmt);

  if (rf.order == FormatDescriptor::Order::ascending) {
    std::reverse(rows.begin(), rows.end());
  }
  // rows are now top bin first; only the last row may omit its threshold
  for (std::size_t i = 0; i + 1 < rows.size(); ++i) {
    if (!rows[i].threshold) {
      throw ValidationError(
          "only the bottom bin may omit its threshold (row order " +
          std::string(rf.order == FormatDescriptor::Order::ascending
                          ? "ascending"
                          : "descending") +
          ")");
    }
  }

  TabulatedSummary s;
  const std::size_t k = rows.size();
  s.thresholds.resize(k);
  s.cum_counts.resize(k);
  s.cum_sums.resize(k);
  double cn = 0.0, cs = 0.0;
  for (std::size_t i = 0; i < k; ++i) {
    const double cnt = rows[i].count;
    const double tot = rows[i].total * rf.total_multiplier;
    if (rf.form == FormatDescriptor::Form::per_group) {
      if (cnt < 0.0) {
        throw ValidationError("negative group count in bin " +
                              std::to_string(i + 1));
      }
      cn += cnt;
      cs += tot;
      s.cum_counts[i] = cn;
      s.cum_sums[i] = cs;
    } else {
      s.cum_counts[i] = cnt;
      s.cum_sums[i] = tot;
    }
    s.thresholds[i] = rows[i].threshold.value_or(kNaN);
  }

  // close the bottom bin
  if (!rows.back().threshold) {
    if (!rf.lower_bound) {
      throw ValidationError(
          "table has an open bottom bin: a lower bound is required "
          "(lower_bound=... or --lower-bound)");
    }
    s.thresholds.back() = *rf.lower_bound;
  } else if (rf.lower_bound) {
    if (!(*rf.lower_bound <= *rows.back().threshold)) {
      throw ValidationError(
          "configured lower bound lies above the smallest published "
          "threshold");
    }
    s.thresholds.back() = *rf.lower_bound;
  }
  s.lower_bound = s.thresholds.back();
  s.n = total_population.value_or(file_n.value_or(s.cum_counts.back()));
  s.validate();
  return s;
}

void write_summary_csv(std::ostream& out, const TabulatedSummary& s) {
  out << "# metab tabulated summary\n";
  out << "# form=cumulative\n";
  out << "# order=descending\n";
  out << "# total_multiplier=1\n";
  out << "# lower_bound=" << dtos(s.lower_bound) << "\n";
  out << "# n=" << dtos(s.n) << "\n";
  out << "threshold,cum_count,cum_sum\n";
  for (std::size_t i = 0; i < s.bins(); ++i) {
    out << dtos(s.thresholds[i]) << ',' << dtos(s.cum_counts[i]) << ','
        << dtos(s.cum_sums[i]) << "\n";
  }
}

std::string summary_to_json(const TabulatedSummary& s) {
  nlohmann::json j;
  j["thresholds"] = s.thresholds;
  j["cum_counts"] = s.cum_counts;
  j["cum_sums"] = s.cum_sums;
  j["n"] = s.n;
  j["lower_bound"] = s.lower_bound;
  return j.dump();
}

TabulatedSummary summary_from_json(const std::string& text) {
  const auto j = nlohmann::json::parse(text);
  TabulatedSummary s;
  s.thresholds = j.at("thresholds").get<std::vector<double>>();
  s.cum_counts = j.at("cum_counts").get<std::vector<double>>();
  s.cum_sums = j.at("cum_sums").get<std::vector<double>>();
  s.n = j.at("n").get<double>();
  s.lower_bound = j.at("lower_bound").get<double>();
  s.validate();
  return s;
}

double BinMoments::upper_edge(std::size_t i) const {
  return i == 0 ? kInf : thresholds[i - 1];
}

double BinMoments::total_mass() const {
  double t = 0.0;
  for (double v : q) t += v;
  return t;
}

void BinMoments::validate() const {
  const std::size_t k = bins();
  if (k < 1) throw ValidationError("moments: empty threshold grid");
  if (q.size() != k || y.size() != k) {
    throw ValidationError("moments: column lengths disagree");
  }
  for (std::size_t i = 1; i < k; ++i) {
    if (!(thresholds[i] < thresholds[i - 1])) {
      throw ValidationError("moments: thresholds not strictly decreasing");
    }
  }
  if (thresholds.back() != lower_bound) {
    throw ValidationError("moments: lower bound does not close the grid");
  }
  double total = 0.0;
  for (std::size_t i = 0; i < k; ++i) {
    if (!(q[i] >= 0.0)) throw ValidationError("moments: negative bin mass");
    total += q[i];
  }
  if (total > 1.0 + 1e-12) {
    throw ValidationError("moments: bin masses sum above 1");
  }
}

BinMoments to_bin_moments(const TabulatedSummary& s, bool renormalize) {
  s.validate();
  BinMoments m;
  m.thresholds = s.thresholds;
  m.lower_bound = s.lower_bound;
  m.provenance = Provenance::empirical;
  const double denom = renormalize ? s.cum_counts.back() : s.n;
  const std::size_t k = s.bins();
  m.q.resize(k);
  m.y.resize(k);
  for (std::size_t i = 0; i < k; ++i) {
    const double dn = s.cum_counts[i] - (i ? s.cum_counts[i - 1] : 0.0);
    const double ds = s.cum_sums[i] - (i ? s.cum_sums[i - 1] : 0.0);
    m.q[i] = dn / denom;
    m.y[i] = dn > 0.0 ? ds / dn : kNaN;
  }
  m.validate();
  return m;
}

BinMoments population_moments(const Distribution& dist,
                              const std::vector<double>& thresholds) {
  if (thresholds.size() < 1) {
    throw ValidationError("population_moments: empty threshold grid");
  }
  BinMoments m;
  m.thresholds = thresholds;
  m.lower_bound = thresholds.back();
  m.provenance = Provenance::population;
  const std::size_t k = thresholds.size();
  m.q.resize(k);
  m.y.resize(k);
  for (std::size_t i = 0; i < k; ++i) {
    const double lo = thresholds[i];
    const double hi = i ? thresholds[i - 1] : kInf;
    const double qi = i ? dist.cdf(hi) - dist.cdf(lo) : 1.0 - dist.cdf(lo);
    const double pe_lo = dist.partial_expectation(lo);
    const double pe_hi = i ? dist.partial_expectation(hi) : 0.0;
    if (qi > 1e-15) {
      m.q[i] = qi;
      m.y[i] = (pe_lo - pe_hi) / qi;
    } else {
      m.q[i] = 0.0;
      m.y[i] = kNaN;
    }
  }
  m.validate();
  return m;
}

std::string moments_to_json(const BinMoments& m) {
  nlohmann::json j;
  j["thresholds"] = m.thresholds;
  j["lower_bound"] = m.lower_bound;
  j["q"] = m.q;
  nlohmann::json ys = nlohmann::json::array();
  for (double v : m.y) {
    if (std::isnan(v)) {
      ys.push_back(nullptr);
    } else {
      ys.push_back(v);
    }
  }
  j["y"] = ys;
  j["provenance"] = to_string(m.provenance);
  return j.dump();
}

BinMoments moments_from_json(const std::string& text) {
  const auto j = nlohmann::json::parse(text);
  BinMoments m;
  m.thresholds = j.at("thresholds").get<std::vector<double>>();
  m.lower_bound = j.at("lower_bound").get<double>();
  m.q = j.at("q").get<std::vector<double>>();
  for (const auto& v : j.at("y")) {
    m.y.push_back(v.is_null() ? kNaN : v.get<double>());
  }
  m.provenance = provenance_from_string(j.at("provenance").get<std::string>());
  m.validate();
  return m;
}

}  // namespace metab
