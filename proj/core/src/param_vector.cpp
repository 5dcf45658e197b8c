#include "fedpsa/param_vector.hpp"

#include <cmath>
#include <string>

#include "fedpsa/errors.hpp"

namespace fedpsa {

void require_same_dim(std::size_t a, std::size_t b, std::string_view what) {
  if (a != b) {
    throw ContractError(std::string(what) + ": dimension mismatch (" + std::to_string(a) +
                        " vs " + std::to_string(b) + ")");
  }
}

double dot(std::span<const double> a, std::span<const double> b) {
  require_same_dim(a.size(), b.size(), "dot");
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return acc;
}

ParamVector& ParamVector::operator+=(const ParamVector& other) {
  require_same_dim(dim(), other.dim(), "ParamVector::operator+=");
  for (std::size_t i = 0; i < values_.size(); ++i) values_[i] += other.values_[i];
  return *this;
}

ParamVector& ParamVector::operator-=(const ParamVector& other) {
  require_same_dim(dim(), other.dim(), "ParamVector::operator-=");
  for (std::size_t i = 0; i < values_.size(); ++i) values_[i] -= other.values_[i];
  return *this;
}

ParamVector& ParamVector::operator*=(double factor) noexcept {
  for (double& v : values_) v *= factor;
  return *this;
}

ParamVector& ParamVector::axpy(double factor, const ParamVector& other) {
  require_same_dim(dim(), other.dim(), "ParamVector::axpy");
  for (std::size_t i = 0; i < values_.size(); ++i) values_[i] += factor * other.values_[i];
  return *this;
}

double ParamVector::dot(const ParamVector& other) const { return fedpsa::dot(values(), other.values()); }

double ParamVector::squared_norm() const noexcept {
  double acc = 0.0;
  for (double v : values_) acc += v * v;
  return acc;
}

bool ParamVector::all_finite() const noexcept {
  for (double v : values_) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

void ParamVector::require_finite(std::string_view where) const {
  for (std::size_t i = 0; i < values_.size(); ++i) {
    if (!std::isfinite(values_[i])) {
      throw NumericError(std::string(where) + ": non-finite value at index " + std::to_string(i));
    }
  }
}

ParamVector operator+(ParamVector lhs, const ParamVector& rhs) { return lhs += rhs; }
ParamVector operator-(ParamVector lhs, const ParamVector& rhs) { return lhs -= rhs; }
ParamVector operator*(double factor, ParamVector v) { return v *= factor; }

}  // namespace fedpsa
