#pragma once

#include <cmath>
#include <cstdlib>
#include <iostream>
#include <string>

// Always-on checks: never compiled out in Release.
#define REQUIRE(cond, msg)                                                      \
  do {                                                                          \
    if (!(cond)) {                                                              \
      std::cerr << "[FAIL] " << __FILE__ << ":" << __LINE__ << " " << msg       \
                << "\n";                                                        \
      std::exit(1);                                                             \
    }                                                                           \
  } while (0)

#define REQUIRE_CLOSE(a, b, tol, msg)                                           \
  do {                                                                          \
    const double _a = (a), _b = (b), _tol = (tol);                              \
    if (!(std::abs(_a - _b) <= _tol)) {                                         \
      std::cerr << "[FAIL] " << __FILE__ << ":" << __LINE__ << " " << msg       \
                << ": " << _a << " vs " << _b << " (tol " << _tol << ")\n";     \
      std::exit(1);                                                             \
    }                                                                           \
  } while (0)

inline void test_pass(const std::string& name) { std::cout << "[PASS] " << name << "\n"; }

inline double rel_err(double got, double want) {
  const double denom = std::max(1.0, std::abs(want));
  return std::abs(got - want) / denom;
}
