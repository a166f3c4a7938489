#include "steerkit/homodyne.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <sstream>
#include <stdexcept>

namespace steerkit {

namespace {

constexpr double kBaseHalfWidth = 6.0;
constexpr double kWidenFactor = 1.5;
constexpr int kWidenings = 3;
constexpr double kGridStep = 0.01;
constexpr double kLeakTol = 1e-6;

int pair_index(int n, int m, int levels) {
  // Row-major upper triangle, n <= m.
  return n * levels - n * (n - 1) / 2 + (m - n);
}

}  // namespace

void hermite_functions(double x, std::span<double> out) {
  if (out.empty()) return;
  const double psi0 = std::exp(-0.5 * x * x) / std::pow(std::numbers::pi, 0.25);
  out[0] = psi0;
  if (out.size() == 1) return;
  out[1] = std::numbers::sqrt2 * x * psi0;
  for (std::size_t n = 1; n + 1 < out.size(); ++n) {
    const double k = static_cast<double>(n);
    out[n + 1] = std::sqrt(2.0 / (k + 1.0)) * x * out[n] - std::sqrt(k / (k + 1.0)) * out[n - 1];
  }
}

double quad_wavefunction(int n, double x) {
  if (n < 0) throw std::invalid_argument("quad_wavefunction: negative level");
  std::vector<double> psi(n + 1);
  hermite_functions(x, psi);
  return psi[n];
}

double quadrature_pdf(const DensityMatrix& rho, double theta, double x) {
  const int d = rho.dim();
  std::vector<double> psi(d);
  hermite_functions(x, psi);
  double p = 0.0;
  for (int n = 0; n < d; ++n) {
    p += rho(n, n).real() * psi[n] * psi[n];
    for (int m = n + 1; m < d; ++m) {
      p += 2.0 * (rho(n, m) * std::polar(1.0, -(n - m) * theta)).real() * psi[n] * psi[m];
    }
  }
  return p;
}

QuadratureSampler::QuadratureSampler(FockDim dim)
    : levels_(dim.value()), pairs_(dim.value() * (dim.value() + 1) / 2) {
  const QuadratureRule& gl = gauss_legendre(8);
  std::vector<double> psi(levels_);
  double half_width = kBaseHalfWidth;
  for (int w = 0; w <= kWidenings; ++w, half_width *= kWidenFactor) {
    Table t;
    t.half_width = half_width;
    t.points = static_cast<int>(std::lround(2.0 * half_width / kGridStep)) + 1;
    t.step = 2.0 * half_width / (t.points - 1);
    t.cumulative.assign(static_cast<std::size_t>(t.points) * pairs_, 0.0);
    for (int i = 0; i + 1 < t.points; ++i) {
      const double a = -half_width + i * t.step;
      const double mid = a + 0.5 * t.step;
      double* prev = &t.cumulative[static_cast<std::size_t>(i) * pairs_];
      double* next = prev + pairs_;
      for (int p = 0; p < pairs_; ++p) next[p] = prev[p];
      for (std::size_t g = 0; g < gl.nodes.size(); ++g) {
        hermite_functions(mid + 0.5 * t.step * gl.nodes[g], psi);
        const double wgt = 0.5 * t.step * gl.weights[g];
        for (int n = 0; n < levels_; ++n)
          for (int m = n; m < levels_; ++m) next[pair_index(n, m, levels_)] += wgt * psi[n] * psi[m];
      }
    }
    tables_.push_back(std::move(t));
  }
}

std::vector<double> QuadratureSampler::pair_coefficients(const DensityMatrix& rho, double theta) const {
  if (rho.dim() != levels_) throw std::invalid_argument("QuadratureSampler: state truncation does not match");
  std::vector<double> coef(pairs_);
  for (int n = 0; n < levels_; ++n) {
    coef[pair_index(n, n, levels_)] = rho(n, n).real();
    for (int m = n + 1; m < levels_; ++m)
      coef[pair_index(n, m, levels_)] = 2.0 * (rho(n, m) * std::polar(1.0, -(n - m) * theta)).real();
  }
  return coef;
}

double QuadratureSampler::table_cdf(const Table& t, const std::vector<double>& coef, int i) const {
  const double* row = &t.cumulative[static_cast<std::size_t>(i) * pairs_];
  double c = 0.0;
  for (int p = 0; p < pairs_; ++p) c += coef[p] * row[p];
  return c;
}

double QuadratureSampler::pdf_from_coef(const std::vector<double>& coef, double x) const {
  double psi[32];
  std::vector<double> heap;
  std::span<double> buf(psi, std::min(levels_, 32));
  if (levels_ > 32) {
    heap.resize(levels_);
    buf = heap;
  }
  hermite_functions(x, buf);
  double p = 0.0;
  for (int n = 0; n < levels_; ++n)
    for (int m = n; m < levels_; ++m) p += coef[pair_index(n, m, levels_)] * buf[n] * buf[m];
  return p;
}

double QuadratureSampler::integrate_pdf(const std::vector<double>& coef, double a, double b) const {
  const QuadratureRule& gl = gauss_legendre(8);
  const double half = 0.5 * (b - a);
  const double mid = 0.5 * (a + b);
  double sum = 0.0;
  for (std::size_t g = 0; g < gl.nodes.size(); ++g) sum += gl.weights[g] * pdf_from_coef(coef, mid + half * gl.nodes[g]);
  return sum * half;
}

double QuadratureSampler::cdf(const DensityMatrix& rho, double theta, double x) const {
  const Table& t = tables_.back();
  const std::vector<double> coef = pair_coefficients(rho, theta);
  if (x <= -t.half_width) return 0.0;
  if (x >= t.half_width) return table_cdf(t, coef, t.points - 1);
  const int i = std::min(t.points - 2, static_cast<int>((x + t.half_width) / t.step));
  const double a = -t.half_width + i * t.step;
  return table_cdf(t, coef, i) + integrate_pdf(coef, a, x);
}

double QuadratureSampler::sample(const DensityMatrix& rho, double theta, Rng& rng) const {
  const std::vector<double> coef = pair_coefficients(rho, theta);
  const double total = rho.trace();
  std::uniform_real_distribution<double> uniform(0.0, 1.0);
  for (const Table& t : tables_) {
    const double mass = table_cdf(t, coef, t.points - 1);
    if (mass < total * (1.0 - kLeakTol)) continue;
    const double target = uniform(rng) * mass;
    int lo = 0;
    int hi = t.points - 1;
    while (hi - lo > 1) {
      const int mid = (lo + hi) / 2;
      if (table_cdf(t, coef, mid) <= target) lo = mid; else hi = mid;
    }
    const double a = -t.half_width + lo * t.step;
    const double b = a + t.step;
    const double fa = table_cdf(t, coef, lo);
    const double fb = table_cdf(t, coef, hi);
    double left = a;
    double right = b;
    double x = fb > fa ? a + (b - a) * (target - fa) / (fb - fa) : 0.5 * (a + b);
    for (int iter = 0; iter < 60; ++iter) {
      const double g = fa + integrate_pdf(coef, a, x) - target;
      if (std::abs(g) <= 1e-15) break;
      if (g > 0.0) right = x; else left = x;
      if (right - left <= 1e-14) break;
      const double dens = pdf_from_coef(coef, x);
      double next = dens > 0.0 ? x - g / dens : 0.5 * (left + right);
      if (!(next > left && next < right)) next = 0.5 * (left + right);
      x = next;
    }
    return x;
  }
  throw std::runtime_error("QuadratureSampler: state leaks outside the widest sampling window");
}

double wrap_phase(double phase) {
  const double two_pi = 2.0 * std::numbers::pi;
  double w = std::fmod(phase, two_pi);
  if (w < 0.0) w += two_pi;
  if (w >= two_pi) w = 0.0;
  return w;
}

void write_records_csv(const std::filesystem::path& path, std::span<const QuadratureRecord> records) {
  std::FILE* f = std::fopen(path.c_str(), "w");
  if (!f) throw std::runtime_error("cannot open " + path.string() + " for writing");
  std::fprintf(f, "%s\n", kRecordCsvHeader);
  for (const QuadratureRecord& r : records) {
    std::fprintf(f, "%c,%d,%.9g,%.9g,%d,%lld\n", r.party == Party::A ? 'A' : 'B', r.setting_index, r.lo_phase, r.x,
                 r.s, static_cast<long long>(r.trial_id));
  }
  if (std::fclose(f) != 0) throw std::runtime_error("failed writing " + path.string());
}

namespace {

template <typename T>
const char* parse_field(const char* p, const char* end, T& out, const std::string& where) {
  auto [ptr, ec] = std::from_chars(p, end, out);
  if (ec != std::errc() || ptr == p) throw std::runtime_error("malformed record field at " + where);
  return ptr;
}

}  // namespace

std::vector<QuadratureRecord> read_records_csv(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::string content((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  const std::string header = std::string(kRecordCsvHeader) + "\n";
  if (content.compare(0, header.size(), header) != 0) throw std::runtime_error(path.string() + ": unexpected CSV header");
  if (content.back() != '\n') throw std::runtime_error(path.string() + ": truncated (no final newline)");

  std::vector<QuadratureRecord> records;
  records.reserve(content.size() / 40);
  const char* p = content.data() + header.size();
  const char* end = content.data() + content.size();
  std::size_t line = 2;
  while (p < end) {
    const std::string where = path.filename().string() + ":" + std::to_string(line);
    QuadratureRecord r;
    if (*p == 'A') r.party = Party::A;
    else if (*p == 'B') r.party = Party::B;
    else throw std::runtime_error("bad party field at " + where);
    ++p;
    const auto expect = [&](char c) {
      if (p >= end || *p != c) throw std::runtime_error("truncated or malformed row at " + where);
      ++p;
    };
    expect(',');
    p = parse_field(p, end, r.setting_index, where);
    expect(',');
    p = parse_field(p, end, r.lo_phase, where);
    expect(',');
    p = parse_field(p, end, r.x, where);
    expect(',');
    p = parse_field(p, end, r.s, where);
    expect(',');
    long long id = 0;
    p = parse_field(p, end, id, where);
    r.trial_id = id;
    expect('\n');
    if (r.s != 1 && r.s != -1) throw std::runtime_error("sign must be +1 or -1 at " + where);
    records.push_back(r);
    ++line;
  }
  return records;
}

CMatrix bob_conditional(const TwoModeState& state, double theta, double x) {
  const int da = state.dim_a();
  const int db = state.dim_b();
  std::vector<double> psi(da);
  hermite_functions(x, psi);
  CVector bra(da);  // <x^theta|a>
  for (int a = 0; a < da; ++a) bra(a) = std::polar(psi[a], -a * theta);
  CMatrix out = CMatrix::Zero(db, db);
  const CMatrix& rho = state.matrix();
  for (int a = 0; a < da; ++a) {
    for (int a2 = 0; a2 < da; ++a2) {
      const Complex w = bra(a) * std::conj(bra(a2));
      if (w == 0.0) continue;
      out += w * rho.block(a * db, a2 * db, db, db);
    }
  }
  return out;
}

CollapseResult alice_measure_and_collapse(const TwoModeState& state, double theta, const QuadratureSampler& sampler,
                                          Rng& rng) {
  const DensityMatrix alice = partial_trace(state, Party::A);
  for (;;) {
    const double x = sampler.sample(alice, theta, rng);
    const CMatrix bob = bob_conditional(state, theta, x);
    const double marginal = bob.trace().real();
    if (marginal < 1e-300) continue;
    return {x, sign_of(x), DensityMatrix(bob / marginal, true)};
  }
}

DensityMatrix conditioned_state_ideal(double R, double theta, int s) {
  if (!(R >= 0.0 && R <= 1.0)) throw std::invalid_argument("conditioned_state_ideal: R must lie in [0,1]");
  if (s != 1 && s != -1) throw std::invalid_argument("conditioned_state_ideal: s must be +1 or -1");
  const double c = std::sqrt(R * (1.0 - R) * 2.0 / std::numbers::pi);
  CMatrix m(2, 2);
  m(0, 0) = 1.0 - R;
  m(1, 1) = R;
  m(1, 0) = -s * c * std::polar(1.0, theta);
  m(0, 1) = std::conj(m(1, 0));
  return DensityMatrix(m);
}

DensityMatrix conditioned_state_full(const SourceParams& source, const NoiseParams& noise, double R, double theta,
                                     int s) {
  if (!(R >= 0.0 && R <= 1.0)) throw std::invalid_argument("conditioned_state_full: R must lie in [0,1]");
  if (s != 1 && s != -1) throw std::invalid_argument("conditioned_state_full: s must be +1 or -1");
  source.validate();
  noise.validate();
  const double eta = noise.eta_A();
  const double norm = 1.0 - source.p2 * R * R;
  const double one = source.p1 * R + 2.0 * source.p2 * R * (1.0 - R);
  const double zero = source.p0 + source.p1 * (1.0 - R) + source.p2 * (1.0 - R) * (1.0 - R);
  const double coh = std::sqrt(eta * R * (1.0 - R) * 2.0 / std::numbers::pi) *
                     (source.p1 + source.p2 * (1.0 - R) * (2.0 - eta)) *
                     std::exp(-0.5 * noise.delta_theta * noise.delta_theta);
  CMatrix m(2, 2);
  m(0, 0) = zero / norm;
  m(1, 1) = one / norm;
  m(1, 0) = -s * coh / norm * std::polar(1.0, theta);
  m(0, 1) = std::conj(m(1, 0));
  return DensityMatrix(m, std::abs(m.trace().real() - 1.0) <= 1e-10);
}

DensityMatrix unconditioned_state_full(const SourceParams& source, double R) {
  if (!(R >= 0.0 && R <= 1.0)) throw std::invalid_argument("unconditioned_state_full: R must lie in [0,1]");
  source.validate();
  const double norm = 1.0 - source.p2 * R * R;
  CMatrix m = CMatrix::Zero(2, 2);
  m(1, 1) = (source.p1 * R + 2.0 * source.p2 * R * (1.0 - R)) / norm;
  m(0, 0) = (source.p0 + source.p1 * (1.0 - R) + source.p2 * (1.0 - R) * (1.0 - R)) / norm;
  return DensityMatrix(m, std::abs(m.trace().real() - 1.0) <= 1e-10);
}

Eigen::MatrixXd half_line_overlaps(int levels, int s) {
  if (s != 1 && s != -1) throw std::invalid_argument("half_line_overlaps: s must be +1 or -1");
  Eigen::MatrixXd out(levels, levels);
  for (int a = 0; a < levels; ++a) {
    for (int b = a; b < levels; ++b) {
      const double v = integrate_adaptive([&](double x) { return quad_wavefunction(a, x) * quad_wavefunction(b, x); },
                                          0.0, 8.0, 1e-13);
      const double parity = (s == 1 || (a + b) % 2 == 0) ? 1.0 : -1.0;
      out(a, b) = out(b, a) = parity * v;
    }
  }
  return out;
}

ConditionedState conditioned_state_numeric(const TwoModeState& lossy, double theta, double delta_theta, int s) {
  const int da = lossy.dim_a();
  const int db = lossy.dim_b();
  const Eigen::MatrixXd overlap = half_line_overlaps(da, s);
  const CMatrix& rho = lossy.matrix();
  const auto at_phase = [&](double phase) {
    CMatrix out = CMatrix::Zero(db, db);
    for (int a = 0; a < da; ++a)
      for (int a2 = 0; a2 < da; ++a2) {
        const Complex w = overlap(a, a2) * std::polar(1.0, -(a - a2) * phase);
        out += w * rho.block(a * db, a2 * db, db, db);
      }
    return out;
  };
  const CMatrix avg = gaussian_phase_average(at_phase, theta, delta_theta);
  const double probability = avg.trace().real();
  if (!(probability > 0.0)) throw std::runtime_error("conditioned_state_numeric: zero-probability outcome");
  return {probability, DensityMatrix(avg / probability, true)};
}

}  // namespace steerkit
