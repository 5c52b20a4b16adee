#pragma once

#include <array>
#include <compare>
#include <cstdint>
#include <initializer_list>
#include <string>
#include <vector>

#include "tnt/error.hpp"

namespace tnt {

inline constexpr std::size_t kMaxChargesPerLabel = 4;

/// A quantum-number label: m signed integers (one per conserved species).
struct QN {
  std::array<int, kMaxChargesPerLabel> charges{};
  std::uint8_t m = 1;

  QN() = default;
  QN(std::initializer_list<int> values) {
    require(values.size() >= 1 && values.size() <= kMaxChargesPerLabel, ErrorKind::invalid_argument,
            "a label carries between 1 and 4 charges");
    m = static_cast<std::uint8_t>(values.size());
    std::size_t k = 0;
    for (int v : values) charges[k++] = v;
  }
  static QN zero(std::size_t m = 1) {
    QN q;
    q.m = static_cast<std::uint8_t>(m);
    return q;
  }
  static QN from(const std::vector<int>& values) {
    require(!values.empty() && values.size() <= kMaxChargesPerLabel, ErrorKind::invalid_argument,
            "a label carries between 1 and 4 charges");
    QN q;
    q.m = static_cast<std::uint8_t>(values.size());
    for (std::size_t k = 0; k < values.size(); ++k) q.charges[k] = values[k];
    return q;
  }

  int operator[](std::size_t k) const { return charges[k]; }
  std::size_t size() const { return m; }

  QN& operator+=(const QN& o) {
    for (std::size_t k = 0; k < kMaxChargesPerLabel; ++k) charges[k] += o.charges[k];
    if (o.m > m) m = o.m;
    return *this;
  }
  QN& operator-=(const QN& o) {
    for (std::size_t k = 0; k < kMaxChargesPerLabel; ++k) charges[k] -= o.charges[k];
    if (o.m > m) m = o.m;
    return *this;
  }
  friend QN operator+(QN a, const QN& b) { return a += b; }
  friend QN operator-(QN a, const QN& b) { return a -= b; }
  QN operator-() const {
    QN q = *this;
    for (auto& c : q.charges) c = -c;
    return q;
  }
  QN scaled(int s) const {
    QN q = *this;
    for (auto& c : q.charges) c *= s;
    return q;
  }
  bool is_zero() const {
    for (auto c : charges)
      if (c != 0) return false;
    return true;
  }

  // Ordering and equality look at the charges only; m is carried for validation.
  friend bool operator==(const QN& a, const QN& b) { return a.charges == b.charges; }
  friend auto operator<=>(const QN& a, const QN& b) { return a.charges <=> b.charges; }

  std::string to_string() const {
    std::string s = "(";
    for (std::size_t k = 0; k < m; ++k) {
      if (k) s += ",";
      s += std::to_string(charges[k]);
    }
    return s + ")";
  }
};

}  // namespace tnt
