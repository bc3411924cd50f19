#pragma once

#include "metab/baselines.hpp"
#include "metab/rng.hpp"

#include <memory>
#include <string>

namespace metab {

// Analytic distribution handle used for population moments, simulation
// truth, and oracle tests. partial_expectation(t) = int_t^inf y f(y) dy.
class Distribution {
public:
  virtual ~Distribution() = default;
  virtual std::string name() const = 0;
  virtual double pdf(double y) const = 0;
  virtual double cdf(double y) const = 0;
  virtual double quantile(double p) const = 0;
  virtual double mean() const = 0;
  virtual double support_lower() const = 0;
  virtual double partial_expectation(double t) const;  // adaptive quadrature
  virtual double sample(RngStream& rng) const = 0;

  // Income share of the top p fractile; exact when partial_expectation is.
  virtual double top_share(double p) const;
};

class Exponential final : public Distribution {
public:
  explicit Exponential(double rate);
  std::string name() const override;
  double pdf(double y) const override;
  double cdf(double y) const override;
  double quantile(double p) const override;
  double mean() const override { return 1.0 / rate_; }
  double support_lower() const override { return 0.0; }
  double partial_expectation(double t) const override;
  double sample(RngStream& rng) const override;
  double top_share(double p) const override;  // p - p log p

private:
  double rate_;
};

class UniformDist final : public Distribution {
public:
  UniformDist(double a, double b);
  std::string name() const override;
  double pdf(double y) const override;
  double cdf(double y) const override;
  double quantile(double p) const override;
  double mean() const override { return 0.5 * (a_ + b_); }
  double support_lower() const override { return a_; }
  double partial_expectation(double t) const override;
  double sample(RngStream& rng) const override;

private:
  double a_, b_;
};

class Lognormal final : public Distribution {
public:
  // mu defaults to -sigma^2/2 so the mean normalizes to 1
  explicit Lognormal(double sigma);
  Lognormal(double sigma, double mu);
  std::string name() const override;
  double pdf(double y) const override;
  double cdf(double y) const override;
  double quantile(double p) const override;
  double mean() const override;
  double support_lower() const override { return 0.0; }
  double partial_expectation(double t) const override;
  double sample(RngStream& rng) const override;

private:
  double sigma_, mu_;
};

class GammaDist final : public Distribution {
public:
  // rate defaults to the shape so the mean normalizes to 1
  explicit GammaDist(double shape);
  GammaDist(double shape, double rate);
  std::string name() const override;
  double pdf(double y) const override;
  double cdf(double y) const override;
  double quantile(double p) const override;
  double mean() const override { return shape_ / rate_; }
  double support_lower() const override { return 0.0; }
  double partial_expectation(double t) const override;
  double sample(RngStream& rng) const override;

private:
  double shape_, rate_;
};

class WeibullDist final : public Distribution {
public:
  // density b k y^{k-1} e^{-b y^k}; b defaults to Gamma(1+1/k)^k (unit mean)
  explicit WeibullDist(double shape);
  WeibullDist(double shape, double b);
  std::string name() const override;
  double pdf(double y) const override;
  double cdf(double y) const override;
  double quantile(double p) const override;
  double mean() const override;
  double support_lower() const override { return 0.0; }
  double partial_expectation(double t) const override;
  double sample(RngStream& rng) const override;

private:
  double shape_, b_;
};

class DoublePareto final : public Distribution {
public:
  // m defaults to (beta+1)(alpha-1)/(alpha*beta) (unit mean)
  DoublePareto(double alpha, double beta);
  DoublePareto(double alpha, double beta, double m);
  std::string name() const override;
  double pdf(double y) const override;
  double cdf(double y) const override;
  double quantile(double p) const override;
  double mean() const override { return params_.mean(); }
  double support_lower() const override { return 0.0; }
  double partial_expectation(double t) const override;
  double sample(RngStream& rng) const override;
  double top_share(double p) const override;
  const DoubleParetoParams& params() const { return params_; }

private:
  DoubleParetoParams params_;
};

// Income-model specification: family plus shape parameter(s); the scale is
// pinned by the unit-mean normalization unless given explicitly. build()
// cross-checks the analytic mean against quadrature to 1e-6.
struct ModelSpec {
  enum class Family { lognormal, gamma, weibull, double_pareto };

  Family family = Family::double_pareto;
  double shape1 = 2.3;  // sigma / gamma shape / weibull shape / alpha
  double shape2 = 1.1;  // double pareto beta; unused otherwise
  std::optional<double> scale;  // mu / rate / b / m when not normalized

  static ModelSpec lognormal(double sigma);
  static ModelSpec gamma(double shape);
  static ModelSpec weibull(double shape);
  static ModelSpec double_pareto(double alpha, double beta,
                                 std::optional<double> m = {});

  std::string family_name() const;
  static ModelSpec from_json(const std::string& text);
  std::string to_json() const;

  std::unique_ptr<Distribution> build(bool verify = true) const;
};

}  // namespace metab
