// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <map>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace ginnkan::sym {

class ParseError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Evaluates a plain-text expression as produced by the extractors:
/// numbers, named variables, + - * / ^, parentheses and the functions
/// sin cos tanh exp ln sqrt abs.
double evaluate(const std::string& text, const std::map<std::string, double>& vars);

/// Variable names x1..xn.
std::vector<std::string> default_names(std::size_t n);

/// c0 + sum_k c_k * body_k, where every body is a product, power or call
/// that binds tighter than '+'.
class LinearForm {
 public:
  LinearForm() = default;
  explicit LinearForm(double constant) : constant_(constant) {}
  static LinearForm atom(std::string body, double coef = 1.0);

  LinearForm& operator+=(const LinearForm& o);
  LinearForm& operator*=(double s);
  friend LinearForm operator+(LinearForm a, const LinearForm& b) { return a += b; }
  friend LinearForm operator*(double s, LinearForm a) { return a *= s; }

  double constant() const noexcept { return constant_; }
  const std::vector<std::pair<double, std::string>>& terms() const noexcept { return terms_; }
  /// Single term with unit coefficient and no constant.
  bool is_bare() const;

  /// Terms whose coefficient renders as zero are dropped; "0" when nothing is left.
  std::string render(int digits = 4) const;
  /// Rendering that is safe as the base of '^' or the divisor of '/'.
  std::string render_grouped(int digits = 4) const;

 private:
  double constant_ = 0.0;
  std::vector<std::pair<double, std::string>> terms_;
};

}  // namespace ginnkan::sym
