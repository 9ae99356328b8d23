// SPDX-License-Identifier: Apache-2.0
#include "ginnkan/symbolic.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdlib>

#include "ginnkan/nn.hpp"

namespace ginnkan::sym {

namespace {

class Parser {
 public:
  Parser(const std::string& s, const std::map<std::string, double>& vars) : s_(s), vars_(vars) {}

  double run() {
    const double v = expr();
    skip();
    if (pos_ != s_.size()) fail("unexpected '" + std::string(1, s_[pos_]) + "'");
    return v;
  }

 private:
  void skip() {
    while (pos_ < s_.size() && std::isspace(static_cast<unsigned char>(s_[pos_]))) ++pos_;
  }
  bool eat(char c) {
    skip();
    if (pos_ < s_.size() && s_[pos_] == c) {
      ++pos_;
      return true;
    }
    return false;
  }
  [[noreturn]] void fail(const std::string& what) const {
    throw ParseError(what + " at offset " + std::to_string(pos_) + " in \"" + s_ + "\"");
  }

  double expr() {
    double v = term();
    for (;;) {
      if (eat('+')) v += term();
      else if (eat('-')) v -= term();
      else return v;
    }
  }
  double term() {
    double v = unary();
    for (;;) {
      if (eat('*')) v *= unary();
      else if (eat('/')) v /= unary();
      else return v;
    }
  }
  double unary() {
    if (eat('-')) return -unary();
    if (eat('+')) return unary();
    return power();
  }
  double power() {
    const double base = atom();
    if (eat('^')) return std::pow(base, unary());
    return base;
  }
  double atom() {
    skip();
    if (pos_ >= s_.size()) fail("unexpected end");
    if (eat('(')) {
      const double v = expr();
      if (!eat(')')) fail("expected ')'");
      return v;
    }
    const char c = s_[pos_];
    if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') {
      const char* begin = s_.c_str() + pos_;
      char* end = nullptr;
      const double v = std::strtod(begin, &end);
      if (end == begin) fail("bad number");
      pos_ += static_cast<std::size_t>(end - begin);
      return v;
    }
    if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
      const std::size_t start = pos_;
      while (pos_ < s_.size() && (std::isalnum(static_cast<unsigned char>(s_[pos_])) || s_[pos_] == '_')) ++pos_;
      const std::string name = s_.substr(start, pos_ - start);
      if (eat('(')) {
        const double a = expr();
        if (!eat(')')) fail("expected ')'");
        return call(name, a);
      }
      const auto it = vars_.find(name);
      if (it == vars_.end()) fail("unknown variable '" + name + "'");
      return it->second;
    }
    fail("unexpected '" + std::string(1, c) + "'");
  }
  double call(const std::string& f, double a) {
    if (f == "sin") return std::sin(a);
    if (f == "cos") return std::cos(a);
    if (f == "tanh") return std::tanh(a);
    if (f == "exp") return std::exp(a);
    if (f == "ln" || f == "log") return std::log(a);
    if (f == "sqrt") return std::sqrt(a);
    if (f == "abs") return std::abs(a);
    fail("unknown function '" + f + "'");
  }

  const std::string& s_;
  const std::map<std::string, double>& vars_;
  std::size_t pos_ = 0;
};

bool renders_zero(double v, int digits) { return nn::format_number(v, digits) == "0" || std::abs(v) < 1e-300; }

}  // namespace

double evaluate(const std::string& text, const std::map<std::string, double>& vars) {
  return Parser(text, vars).run();
}

std::vector<std::string> default_names(std::size_t n) {
  std::vector<std::string> out;
  for (std::size_t i = 1; i <= n; ++i) out.push_back("x" + std::to_string(i));
  return out;
}

LinearForm LinearForm::atom(std::string body, double coef) {
  LinearForm f;
  f.terms_.emplace_back(coef, std::move(body));
  return f;
}

LinearForm& LinearForm::operator+=(const LinearForm& o) {
  constant_ += o.constant_;
  for (const auto& [c, body] : o.terms_) {
    bool merged = false;
    for (auto& t : terms_) {
      if (t.second == body) {
        t.first += c;
        merged = true;
        break;
      }
    }
    if (!merged) terms_.emplace_back(c, body);
  }
  return *this;
}

LinearForm& LinearForm::operator*=(double s) {
  constant_ *= s;
  for (auto& t : terms_) t.first *= s;
  return *this;
}

bool LinearForm::is_bare() const {
  return terms_.size() == 1 && terms_[0].first == 1.0 && constant_ == 0.0;
}

std::string LinearForm::render(int digits) const {
  std::string out;
  auto append = [&](double coef, const std::string& body) {
    const bool neg = coef < 0;
    const std::string mag = nn::format_number(std::abs(coef), digits);
    std::string piece;
    if (body.empty()) piece = mag;
    else if (mag == "1") piece = body;
    else piece = mag + "*" + body;
    if (out.empty()) out = neg ? "-" + piece : piece;
    else out += (neg ? " - " : " + ") + piece;
  };
  for (const auto& [c, body] : terms_) {
    if (!renders_zero(c, digits)) append(c, body);
  }
  if (!renders_zero(constant_, digits)) append(constant_, "");
  return out.empty() ? "0" : out;
}

std::string LinearForm::render_grouped(int digits) const {
  const std::string r = render(digits);
  const bool plain = std::all_of(r.begin(), r.end(), [](char ch) {
    return std::isalnum(static_cast<unsigned char>(ch)) || ch == '_' || ch == '.';
  });
  return plain ? r : "(" + r + ")";
}

}  // namespace ginnkan::sym
