#pragma once

#include <cstddef>
#include <span>
#include <string_view>
#include <vector>

namespace fedpsa {

/// Flat real-valued parameter (or parameter-delta) vector of a model.
///
/// Arithmetic between two vectors requires equal dimensions and throws
/// ContractError otherwise.
class ParamVector {
 public:
  ParamVector() = default;
  explicit ParamVector(std::size_t dim, double fill = 0.0) : values_(dim, fill) {}
  explicit ParamVector(std::vector<double> values) : values_(std::move(values)) {}

  std::size_t dim() const noexcept { return values_.size(); }

  std::span<double> values() noexcept { return values_; }
  std::span<const double> values() const noexcept { return values_; }
  const std::vector<double>& raw() const noexcept { return values_; }

  double& operator[](std::size_t i) noexcept { return values_[i]; }
  double operator[](std::size_t i) const noexcept { return values_[i]; }

  ParamVector& operator+=(const ParamVector& other);
  ParamVector& operator-=(const ParamVector& other);
  ParamVector& operator*=(double factor) noexcept;

  /// this += factor * other
  ParamVector& axpy(double factor, const ParamVector& other);

  double dot(const ParamVector& other) const;
  double squared_norm() const noexcept;

  bool all_finite() const noexcept;

  /// Throws NumericError naming `where` if any entry is NaN/Inf.
  void require_finite(std::string_view where) const;

  friend bool operator==(const ParamVector&, const ParamVector&) = default;

 private:
  std::vector<double> values_;
};

ParamVector operator+(ParamVector lhs, const ParamVector& rhs);
ParamVector operator-(ParamVector lhs, const ParamVector& rhs);
ParamVector operator*(double factor, ParamVector v);

/// Throws ContractError when the two dimensions differ.
void require_same_dim(std::size_t a, std::size_t b, std::string_view what);

double dot(std::span<const double> a, std::span<const double> b);

}  // namespace fedpsa
