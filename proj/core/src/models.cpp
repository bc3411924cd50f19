#include "metab/models.hpp"

#include "metab/errors.hpp"
#include "metab/normal.hpp"
#include "metab/quadrature.hpp"

#include <boost/math/special_functions/gamma.hpp>
#include <nlohmann/json.hpp>

#include <cmath>
#include <limits>

namespace metab {

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();
}

double Distribution::partial_expectation(double t) const {
  const double lo = std::max(t, support_lower());
  return integrate([this](double y) { return y * pdf(y); }, lo, kInf, 1e-12);
}

double Distribution::top_share(double p) const {
  if (!(p > 0.0 && p <= 1.0)) {
    throw ValidationError("top_share: p must lie in (0, 1]");
  }
  if (p == 1.0) return 1.0;
  return partial_expectation(quantile(1.0 - p)) / mean();
}

// --- Exponential ---------------------------------------------------------

Exponential::Exponential(double rate) : rate_(rate) {
  if (!(rate > 0.0)) throw ValidationError("exponential: rate must be > 0");
}
std::string Exponential::name() const { return "exponential"; }
double Exponential::pdf(double y) const {
  return y < 0.0 ? 0.0 : rate_ * std::exp(-rate_ * y);
}
double Exponential::cdf(double y) const {
  return y < 0.0 ? 0.0 : -std::expm1(-rate_ * y);
}
double Exponential::quantile(double p) const {
  if (!(p >= 0.0 && p < 1.0)) {
    throw ValidationError("exponential quantile: p in [0,1)");
  }
  return -std::log1p(-p) / rate_;
}
double Exponential::partial_expectation(double t) const {
  if (t <= 0.0) return mean();
  return (t + 1.0 / rate_) * std::exp(-rate_ * t);
}
double Exponential::sample(RngStream& rng) const {
  return rng.exponential() / rate_;
}
double Exponential::top_share(double p) const {
  if (!(p > 0.0 && p <= 1.0)) {
    throw ValidationError("top_share: p must lie in (0, 1]");
  }
  return p - p * std::log(p);
}

// --- Uniform --------------------------------------------------------------

UniformDist::UniformDist(double a, double b) : a_(a), b_(b) {
  if (!(a < b)) throw ValidationError("uniform: requires a < b");
}
std::string UniformDist::name() const { return "uniform"; }
double UniformDist::pdf(double y) const {
  return (y >= a_ && y < b_) ? 1.0 / (b_ - a_) : 0.0;
}
double UniformDist::cdf(double y) const {
  if (y <= a_) return 0.0;
  if (y >= b_) return 1.0;
  return (y - a_) / (b_ - a_);
}
double UniformDist::quantile(double p) const { return a_ + p * (b_ - a_); }
double UniformDist::partial_expectation(double t) const {
  const double c = std::min(std::max(t, a_), b_);
  return 0.5 * (b_ * b_ - c * c) / (b_ - a_);
}
double UniformDist::sample(RngStream& rng) const {
  return a_ + (b_ - a_) * rng.uniform_open01();
}

// --- Lognormal -------------------------------------------------------------

Lognormal::Lognormal(double sigma) : Lognormal(sigma, -0.5 * sigma * sigma) {}
Lognormal::Lognormal(double sigma, double mu) : sigma_(sigma), mu_(mu) {
  if (!(sigma > 0.0)) throw ValidationError("lognormal: sigma must be > 0");
}
std::string Lognormal::name() const { return "lognormal"; }
double Lognormal::pdf(double y) const {
  if (y <= 0.0) return 0.0;
  const double z = (std::log(y) - mu_) / sigma_;
  return norm_pdf(z) / (sigma_ * y);
}
double Lognormal::cdf(double y) const {
  if (y <= 0.0) return 0.0;
  return norm_cdf((std::log(y) - mu_) / sigma_);
}
double Lognormal::quantile(double p) const {
  if (p <= 0.0) return 0.0;
  return std::exp(mu_ + sigma_ * norm_quantile(p));
}
double Lognormal::mean() const { return std::exp(mu_ + 0.5 * sigma_ * sigma_); }
double Lognormal::partial_expectation(double t) const {
  if (t <= 0.0) return mean();
  // E[Y 1{Y>t}] = e^{mu+sigma^2/2} Phi(sigma - (log t - mu)/sigma)
  return mean() * norm_cdf(sigma_ - (std::log(t) - mu_) / sigma_);
}
double Lognormal::sample(RngStream& rng) const {
  return std::exp(mu_ + sigma_ * rng.normal());
}

// --- Gamma -----------------------------------------------------------------

GammaDist::GammaDist(double shape) : GammaDist(shape, shape) {}
GammaDist::GammaDist(double shape, double rate) : shape_(shape), rate_(rate) {
  if (!(shape > 0.0) || !(rate > 0.0)) {
    throw ValidationError("gamma: shape and rate must be > 0");
  }
}
std::string GammaDist::name() const { return "gamma"; }
double GammaDist::pdf(double y) const {
  if (y <= 0.0) return 0.0;
  return std::exp(shape_ * std::log(rate_) + (shape_ - 1.0) * std::log(y) -
                  rate_ * y - std::lgamma(shape_));
}
double GammaDist::cdf(double y) const {
  if (y <= 0.0) return 0.0;
  return boost::math::gamma_p(shape_, rate_ * y);
}
double GammaDist::quantile(double p) const {
  if (p <= 0.0) return 0.0;
  return boost::math::gamma_p_inv(shape_, p) / rate_;
}
double GammaDist::partial_expectation(double t) const {
  if (t <= 0.0) return mean();
  // int_t^inf y f = (shape/rate) Q(shape+1, rate t)
  return mean() * boost::math::gamma_q(shape_ + 1.0, rate_ * t);
}
double GammaDist::sample(RngStream& rng) const {
  return rng.gamma(shape_) / rate_;
}

// --- Weibull ----------------------------------------------------------------

WeibullDist::WeibullDist(double shape)
    : WeibullDist(shape, std::pow(std::tgamma(1.0 + 1.0 / shape), shape)) {}
WeibullDist::WeibullDist(double shape, double b) : shape_(shape), b_(b) {
  if (!(shape > 0.0) || !(b > 0.0)) {
    throw ValidationError("weibull: shape and b must be > 0");
  }
}
std::string WeibullDist::name() const { return "weibull"; }
double WeibullDist::pdf(double y) const {
  if (y <= 0.0) return 0.0;
  return b_ * shape_ * std::pow(y, shape_ - 1.0) *
         std::exp(-b_ * std::pow(y, shape_));
}
double WeibullDist::cdf(double y) const {
  if (y <= 0.0) return 0.0;
  return -std::expm1(-b_ * std::pow(y, shape_));
}
double WeibullDist::quantile(double p) const {
  if (p <= 0.0) return 0.0;
  return std::pow(-std::log1p(-p) / b_, 1.0 / shape_);
}
double WeibullDist::mean() const {
  return std::pow(b_, -1.0 / shape_) * std::tgamma(1.0 + 1.0 / shape_);
}
double WeibullDist::partial_expectation(double t) const {
  if (t <= 0.0) return mean();
  // substitute z = b y^k: b^{-1/k} Gamma_upper(1 + 1/k, b t^k)
  return std::pow(b_, -1.0 / shape_) *
         boost::math::tgamma(1.0 + 1.0 / shape_, b_ * std::pow(t, shape_));
}
double WeibullDist::sample(RngStream& rng) const {
  return std::pow(rng.exponential() / b_, 1.0 / shape_);
}

// --- Double Pareto -----------------------------------------------------------

DoublePareto::DoublePareto(double alpha, double beta)
    : DoublePareto(alpha, beta,
                   (beta + 1.0) * (alpha - 1.0) / (alpha * beta)) {}
DoublePareto::DoublePareto(double alpha, double beta, double m)
    : params_{alpha, beta, m} {
  params_.validate();
}
std::string DoublePareto::name() const { return "double_pareto"; }
double DoublePareto::pdf(double y) const { return dpareto_pdf(params_, y); }
double DoublePareto::cdf(double y) const { return dpareto_cdf(params_, y); }
double DoublePareto::quantile(double p) const {
  if (p <= 0.0) return 0.0;
  return dpareto_quantile(params_, p);
}
double DoublePareto::partial_expectation(double t) const {
  if (t <= 0.0) return mean();
  const double a = params_.alpha, b = params_.beta, m = params_.m;
  const double c = a * b * m / (a + b);
  if (t >= m) {
    return c / (a - 1.0) * std::pow(t / m, 1.0 - a);
  }
  return mean() - c / (b + 1.0) * std::pow(t / m, b + 1.0);
}
double DoublePareto::sample(RngStream& rng) const {
  return dpareto_sample(params_, rng.uniform_open01(), rng.uniform_open01());
}
double DoublePareto::top_share(double p) const {
  return dpareto_top_share(params_, p);
}

// --- ModelSpec ----------------------------------------------------------------

ModelSpec ModelSpec::lognormal(double sigma) {
  ModelSpec s;
  s.family = Family::lognormal;
  s.shape1 = sigma;
  return s;
}
ModelSpec ModelSpec::gamma(double shape) {
  ModelSpec s;
  s.family = Family::gamma;
  s.shape1 = shape;
  return s;
}
ModelSpec ModelSpec::weibull(double shape) {
  ModelSpec s;
  s.family = Family::weibull;
  s.shape1 = shape;
  return s;
}
ModelSpec ModelSpec::double_pareto(double alpha, double beta,
                                   std::optional<double> m) {
  ModelSpec s;
  s.family = Family::double_pareto;
  s.shape1 = alpha;
  s.shape2 = beta;
  s.scale = m;
  return s;
}

std::string ModelSpec::family_name() const {
  switch (family) {
    case Family::lognormal: return "lognormal";
    case Family::gamma: return "gamma";
    case Family::weibull: return "weibull";
    case Family::double_pareto: return "double_pareto";
  }
  return "double_pareto";
}

ModelSpec ModelSpec::from_json(const std::string& text) {
  const auto j = nlohmann::json::parse(text);
  const std::string fam = j.at("family").get<std::string>();
  ModelSpec s;
  if (fam == "lognormal") {
    s = lognormal(j.at("sigma").get<double>());
  } else if (fam == "gamma") {
    s = gamma(j.at("shape").get<double>());
  } else if (fam == "weibull") {
    s = weibull(j.at("shape").get<double>());
  } else if (fam == "double_pareto") {
    s = double_pareto(j.at("alpha").get<double>(), j.at("beta").get<double>());
    if (j.contains("m")) s.scale = j.at("m").get<double>();
  } else {
    throw ValidationError("unknown model family '" + fam + "'");
  }
  if (j.contains("scale")) s.scale = j.at("scale").get<double>();
  return s;
}

std::string ModelSpec::to_json() const {
  nlohmann::json j;
  j["family"] = family_name();
  switch (family) {
    case Family::lognormal: j["sigma"] = shape1; break;
    case Family::gamma: j["shape"] = shape1; break;
    case Family::weibull: j["shape"] = shape1; break;
    case Family::double_pareto:
      j["alpha"] = shape1;
      j["beta"] = shape2;
      break;
  }
  if (scale) {
    if (family == Family::double_pareto) {
      j["m"] = *scale;
    } else {
      j["scale"] = *scale;
    }
  }
  return j.dump();
}

std::unique_ptr<Distribution> ModelSpec::build(bool verify) const {
  std::unique_ptr<Distribution> d;
  switch (family) {
    case Family::lognormal:
      d = scale ? std::make_unique<Lognormal>(shape1, *scale)
                : std::make_unique<Lognormal>(shape1);
      break;
    case Family::gamma:
      d = scale ? std::make_unique<GammaDist>(shape1, *scale)
                : std::make_unique<GammaDist>(shape1);
      break;
    case Family::weibull:
      d = scale ? std::make_unique<WeibullDist>(shape1, *scale)
                : std::make_unique<WeibullDist>(shape1);
      break;
    case Family::double_pareto:
      d = scale ? std::make_unique<DoublePareto>(shape1, shape2, *scale)
                : std::make_unique<DoublePareto>(shape1, shape2);
      break;
  }
  if (verify) {
    // quadrature cross-check of the implied mean against the analytic value
    const double analytic = d->mean();
    const double numeric = integrate(
        [&d](double y) { return y * d->pdf(y); }, d->support_lower(), kInf,
        1e-9);
    if (!(std::abs(numeric - analytic) <= 1e-6 * std::max(1.0, analytic))) {
      throw ValidationError("model mean check failed for " + family_name());
    }
  }
  return d;
}

}  // namespace metab
