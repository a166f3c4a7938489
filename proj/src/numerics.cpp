#include "steerkit/numerics.hpp"

#include <Eigen/Eigenvalues>

#include <atomic>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <map>
#include <mutex>
#include <numbers>
#include <stdexcept>
#include <thread>

namespace steerkit {

namespace {

std::uint64_t splitmix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// Golub-Welsch: nodes are eigenvalues of the symmetric Jacobi matrix, weights
// are mu0 times the squared first eigenvector components.
QuadratureRule golub_welsch(const Eigen::VectorXd& off_diagonal, double mu0) {
  const Eigen::Index n = off_diagonal.size() + 1;
  Eigen::MatrixXd jacobi = Eigen::MatrixXd::Zero(n, n);
  for (Eigen::Index i = 0; i + 1 < n; ++i) {
    jacobi(i, i + 1) = off_diagonal(i);
    jacobi(i + 1, i) = off_diagonal(i);
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(jacobi);
  QuadratureRule rule;
  rule.nodes.resize(n);
  rule.weights.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    rule.nodes[i] = solver.eigenvalues()(i);
    const double v0 = solver.eigenvectors()(0, i);
    rule.weights[i] = mu0 * v0 * v0;
  }
  return rule;
}

std::mutex g_rule_mutex;

}  // namespace

std::uint64_t derive_seed(std::uint64_t master, std::uint64_t tag, std::uint64_t index) {
  std::uint64_t h = splitmix64(master);
  h = splitmix64(h ^ (tag * 0xd1b54a32d192ed03ULL));
  h = splitmix64(h ^ (index * 0x8cb92ba72f3d8dd7ULL));
  return h;
}

const QuadratureRule& gauss_legendre(int n) {
  if (n < 1) throw std::invalid_argument("gauss_legendre: n must be positive");
  static std::map<int, QuadratureRule> cache;
  std::lock_guard lock(g_rule_mutex);
  auto it = cache.find(n);
  if (it != cache.end()) return it->second;
  Eigen::VectorXd beta(n - 1);
  for (int k = 1; k < n; ++k) beta(k - 1) = k / std::sqrt(4.0 * k * k - 1.0);
  QuadratureRule rule = n == 1 ? QuadratureRule{{0.0}, {2.0}} : golub_welsch(beta, 2.0);
  return cache.emplace(n, std::move(rule)).first->second;
}

const QuadratureRule& gauss_hermite(int n) {
  if (n < 1) throw std::invalid_argument("gauss_hermite: n must be positive");
  static std::map<int, QuadratureRule> cache;
  std::lock_guard lock(g_rule_mutex);
  auto it = cache.find(n);
  if (it != cache.end()) return it->second;
  Eigen::VectorXd beta(n - 1);
  for (int k = 1; k < n; ++k) beta(k - 1) = std::sqrt(k / 2.0);
  const double mu0 = std::sqrt(std::numbers::pi);
  QuadratureRule rule = n == 1 ? QuadratureRule{{0.0}, {mu0}} : golub_welsch(beta, mu0);
  return cache.emplace(n, std::move(rule)).first->second;
}

namespace {

double gl10(const std::function<double(double)>& f, double a, double b) {
  const QuadratureRule& rule = gauss_legendre(10);
  const double half = 0.5 * (b - a);
  const double mid = 0.5 * (a + b);
  double sum = 0.0;
  for (std::size_t i = 0; i < rule.nodes.size(); ++i) sum += rule.weights[i] * f(mid + half * rule.nodes[i]);
  return sum * half;
}

double adaptive_step(const std::function<double(double)>& f, double a, double b, double whole,
                     double tol, int depth) {
  const double mid = 0.5 * (a + b);
  const double left = gl10(f, a, mid);
  const double right = gl10(f, mid, b);
  if (depth <= 0 || std::abs(left + right - whole) <= tol) return left + right;
  return adaptive_step(f, a, mid, left, 0.5 * tol, depth - 1) +
         adaptive_step(f, mid, b, right, 0.5 * tol, depth - 1);
}

}  // namespace

double integrate_adaptive(const std::function<double(double)>& f, double a, double b, double abs_tol,
                          int max_depth) {
  if (a == b) return 0.0;
  return adaptive_step(f, a, b, gl10(f, a, b), abs_tol, max_depth);
}

int thread_budget() {
  if (const char* env = std::getenv("STEERKIT_THREADS")) {
    const int requested = std::atoi(env);
    if (requested > 0) return requested;
  }
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : static_cast<int>(hw);
}

void parallel_for(std::size_t count, const std::function<void(std::size_t)>& body) {
  const std::size_t workers = std::min<std::size_t>(count, static_cast<std::size_t>(thread_budget()));
  if (workers <= 1) {
    for (std::size_t i = 0; i < count; ++i) body(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < count; i = next++) {
        try {
          body(i);
        } catch (...) {
          std::lock_guard lock(failure_mutex);
          if (!failure) failure = std::current_exception();
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);
}

double quantize_9(double value) {
  char buf[32];
  const int len = std::snprintf(buf, sizeof buf, "%.9g", value);
  double out = 0.0;
  std::from_chars(buf, buf + len, out);
  return out;
}

}  // namespace steerkit
