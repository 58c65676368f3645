#include "mvlab/core.hpp"

#include <cmath>

namespace mvlab {

EmpiricalMeasure::EmpiricalMeasure(SampleMatrix samples)
    : samples_(std::move(samples)) {
  if (samples_.rows() == 0) throw ConfigError("empirical measure needs at least one sample");
  weights_ = Vector::Constant(samples_.rows(), 1.0 / static_cast<double>(samples_.rows()));
  uniform_ = true;
  validate();
}

EmpiricalMeasure::EmpiricalMeasure(SampleMatrix samples, Vector weights)
    : samples_(std::move(samples)), weights_(std::move(weights)) {
  if (samples_.rows() == 0) throw ConfigError("empirical measure needs at least one sample");
  if (weights_.size() != samples_.rows())
    throw ConfigError("weight count does not match sample count");
  uniform_ = (weights_.array() == weights_(0)).all();
  validate();
}

void EmpiricalMeasure::validate() const {
  if (!samples_.allFinite()) throw ConfigError("empirical measure has non-finite coordinates");
  if ((weights_.array() < 0.0).any()) throw ConfigError("empirical measure has negative weights");
  if (std::abs(weights_.sum() - 1.0) > 1e-12)
    throw ConfigError("empirical measure weights do not sum to 1");
}

Vector EmpiricalMeasure::mean() const { return samples_.transpose() * weights_; }

Matrix EmpiricalMeasure::covariance() const {
  const Vector m = mean();
  const SampleMatrix centered = samples_.rowwise() - m.transpose();
  return centered.transpose() * weights_.asDiagonal() * centered;
}

EmpiricalMeasure EmpiricalMeasure::mixture(const EmpiricalMeasure& a, const EmpiricalMeasure& b,
                                           double lambda) {
  if (a.dim() != b.dim()) throw ConfigError("mixture of measures with different dimensions");
  SampleMatrix s(a.size() + b.size(), a.dim());
  s << a.samples(), b.samples();
  Vector w(a.size() + b.size());
  w << lambda * a.weights(), (1.0 - lambda) * b.weights();
  return EmpiricalMeasure(std::move(s), std::move(w));
}

}  // namespace mvlab
