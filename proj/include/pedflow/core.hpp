#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>

namespace pedflow {

inline constexpr double kInf = std::numeric_limits<double>::infinity();

/** 2-component vector; 1D code uses .x and leaves .y == 0. */
struct Vec2 {
  double x = 0.0;
  double y = 0.0;

  Vec2 operator+(Vec2 o) const { return {x + o.x, y + o.y}; }
  Vec2 operator-(Vec2 o) const { return {x - o.x, y - o.y}; }
  Vec2 operator*(double s) const { return {x * s, y * s}; }
  Vec2 operator-() const { return {-x, -y}; }
  Vec2& operator+=(Vec2 o) {
    x += o.x;
    y += o.y;
    return *this;
  }
  double dot(Vec2 o) const { return x * o.x + y * o.y; }
  double norm2() const { return x * x + y * y; }
  double norm() const { return std::sqrt(norm2()); }
};

inline Vec2 operator*(double s, Vec2 v) { return v * s; }

inline double sq(double v) { return v * v; }

/** Why a time loop stopped. */
enum class StopReason { Evacuated, TimeLimit };

/** Invalid scenario/domain/grid configuration. */
struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

/** Numerical failure in a solver or time loop. */
struct NumericsError : std::runtime_error {
  explicit NumericsError(const std::string& what) : std::runtime_error(what) {}
};

/** Eikonal iteration did not reach tolerance; carries the last residual. */
struct EikonalError : NumericsError {
  EikonalError(const std::string& what, double residual_)
      : NumericsError(what + " (residual " + std::to_string(residual_) + ")"),
        residual(residual_) {}
  double residual;
};

/**
 * Deterministic RNG: std::mt19937_64 state with an explicit 53-bit uniform so
 * results do not depend on the standard library's distribution internals.
 */
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : s_(seed ? seed : 0x9e3779b97f4a7c15ULL) {}

  std::uint64_t next_u64() {
    // xorshift* keeps the generator self-contained and portable.
    std::uint64_t x = s_;
    x ^= x >> 12;
    x ^= x << 25;
    x ^= x >> 27;
    s_ = x;
    return x * 0x2545F4914F6CDD1DULL;
  }

  /** Uniform in [0,1). */
  double uniform() { return double(next_u64() >> 11) * 0x1.0p-53; }

  /** Uniform in [a,b). */
  double uniform(double a, double b) { return a + (b - a) * uniform(); }

  /** Uniform integer in [0,n). */
  std::uint64_t below(std::uint64_t n) { return next_u64() % n; }

 private:
  std::uint64_t s_;
};

}  // namespace pedflow
