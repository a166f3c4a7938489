#pragma once

#include <cstdint>
#include <functional>
#include <random>
#include <vector>

namespace steerkit {

/// Pseudo-random stream used everywhere a sample is drawn. Every stream is
/// seeded explicitly; there is no global generator.
using Rng = std::mt19937_64;

/// Deterministic child seed for the stream identified by (tag, index) under
/// a master seed. SplitMix64 finalizer over the mixed words.
std::uint64_t derive_seed(std::uint64_t master, std::uint64_t tag, std::uint64_t index);

/// Quadrature rule on a reference interval: nodes and weights.
struct QuadratureRule {
  std::vector<double> nodes;
  std::vector<double> weights;
};

/// n-point Gauss-Legendre rule on [-1, 1] (Golub-Welsch). Cached per n.
const QuadratureRule& gauss_legendre(int n);

/// n-point Gauss-Hermite rule for the weight e^{-t^2} on the real line. Cached per n.
const QuadratureRule& gauss_hermite(int n);

/// Adaptive Gauss-Legendre integration of f over [a, b]: an interval is split
/// in half until the 10-point estimate and the sum of the two half-interval
/// estimates agree to abs_tol (scaled by interval share).
double integrate_adaptive(const std::function<double(double)>& f, double a, double b,
                          double abs_tol = 1e-12, int max_depth = 30);

/// Worker-thread cap: STEERKIT_THREADS when set and positive, otherwise the
/// hardware concurrency (at least 1).
int thread_budget();

/// Runs body(i) for i in [0, count) on up to thread_budget() threads. Work is
/// split by index, so results written to per-index slots are independent of
/// the thread count.
void parallel_for(std::size_t count, const std::function<void(std::size_t)>& body);

/// Rounds to 9 significant digits, the precision used by the record CSV format.
double quantize_9(double value);

}  // namespace steerkit
