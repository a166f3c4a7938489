#include "steerkit/fock.hpp"

#include <doctest.h>

#include <cmath>

using namespace steerkit;

TEST_CASE("FockDim and DensityMatrix validation") {
  CHECK_THROWS_AS(FockDim(1), std::invalid_argument);
  CHECK(FockDim(4).max_photons() == 3);

  CMatrix m = CMatrix::Zero(2, 2);
  m(0, 0) = 0.5;
  m(1, 1) = 0.5;
  m(0, 1) = Complex(0.1, 0.2);
  CHECK_THROWS_AS(DensityMatrix{m}, std::invalid_argument);  // not Hermitian
  m(1, 0) = std::conj(m(0, 1));
  CHECK_NOTHROW(DensityMatrix{m});
  CHECK_THROWS_AS(DensityMatrix(2.0 * m), std::invalid_argument);
  CHECK_FALSE(DensityMatrix(2.0 * m, false).normalized());
  CHECK_THROWS_AS(DensityMatrix(CMatrix::Zero(2, 3)), std::invalid_argument);
}

TEST_CASE("source state") {
  const DensityMatrix rho = source_state(SourceParams::defaults());
  CHECK(rho.dim() == 4);
  CHECK(rho.trace() == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(rho(1, 1).real() == doctest::Approx(0.857 / 0.997).epsilon(1e-14));
  CHECK(rho(3, 3).real() == 0.0);
  CHECK_THROWS_AS(source_state(SourceParams::defaults(), FockDim(2)), std::invalid_argument);
  CHECK_THROWS_AS(source_state({0.5, 0.6, 0.1, 0.0}), std::invalid_argument);
  CHECK_THROWS_AS(source_state({-0.1, 1.0, 0.1, 0.0}), std::invalid_argument);
}

TEST_CASE("beam splitter on |1> and |2>") {
  const double R = 0.3;
  const double r = std::sqrt(R), t = -std::sqrt(1.0 - R);
  const TwoModeState one = beamsplit(DensityMatrix::fock(1, FockDim(4)), R);
  CHECK(one.element(0, 1, 0, 1).real() == doctest::Approx(R));
  CHECK(one.element(1, 0, 1, 0).real() == doctest::Approx(1.0 - R));
  CHECK(one.element(1, 0, 0, 1).real() == doctest::Approx(t * r));

  // (r b^dag + t a^dag)^2 / sqrt(2) |0> = r^2 |0,2> + sqrt(2) r t |1,1> + t^2 |2,0>
  const TwoModeState two = beamsplit(DensityMatrix::fock(2, FockDim(4)), R);
  const double a02 = r * r, a11 = std::sqrt(2.0) * r * t, a20 = t * t;
  CHECK(two.element(0, 2, 0, 2).real() == doctest::Approx(a02 * a02).epsilon(1e-14));
  CHECK(two.element(1, 1, 1, 1).real() == doctest::Approx(a11 * a11).epsilon(1e-14));
  CHECK(two.element(2, 0, 2, 0).real() == doctest::Approx(a20 * a20).epsilon(1e-14));
  CHECK(two.element(0, 2, 1, 1).real() == doctest::Approx(a02 * a11).epsilon(1e-14));
  CHECK(two.element(1, 1, 2, 0).real() == doctest::Approx(a11 * a20).epsilon(1e-14));
  CHECK(two.trace() == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(two.purity() == doctest::Approx(1.0).epsilon(1e-12));

  const TwoModeState three = beamsplit(DensityMatrix::fock(3, FockDim(4)), 0.6);
  CHECK(three.trace() == doctest::Approx(1.0).epsilon(1e-13));
  CHECK_THROWS_AS(beamsplit(DensityMatrix::fock(1, FockDim(4)), 1.2), std::invalid_argument);
}

TEST_CASE("partial trace of the split photon") {
  const double R = 0.38;
  const TwoModeState ab = beamsplit(source_state(SourceParams::single_photon()), R);
  const DensityMatrix bob = partial_trace(ab, Party::B);
  const DensityMatrix alice = partial_trace(ab, Party::A);
  CHECK(bob(1, 1).real() == doctest::Approx(R));
  CHECK(bob(0, 0).real() == doctest::Approx(1.0 - R));
  CHECK(std::abs(bob(0, 1)) < 1e-15);
  CHECK(alice(1, 1).real() == doctest::Approx(1.0 - R));
}

TEST_CASE("qubit restriction, fidelity, trace distance, rotation") {
  const DensityMatrix rho = source_state(SourceParams::defaults());
  const DensityMatrix q = restrict_qubit(rho, rho(0, 0).real() + rho(1, 1).real());
  CHECK(q.dim() == 2);
  CHECK(q.normalized());
  CHECK_FALSE(restrict_qubit(rho, 1.0).normalized());

  CVector plus(2);
  plus << 1.0 / std::sqrt(2.0), 1.0 / std::sqrt(2.0);
  const DensityMatrix p = DensityMatrix::pure(plus);
  CHECK(fidelity(p, p) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(fidelity(p, DensityMatrix::maximally_mixed(FockDim(2))) == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(trace_distance(DensityMatrix::fock(0, FockDim(2)), DensityMatrix::fock(1, FockDim(2))) ==
        doctest::Approx(1.0));

  const DensityMatrix rotated = phase_rotate(p, 0.3);
  CHECK(std::arg(rotated(1, 0)) == doctest::Approx(0.3));
  CHECK(trace_distance(phase_rotate(rotated, -0.3), p) < 1e-14);
}

TEST_CASE("DensityMatrix JSON round trip is exact") {
  CVector v(3);
  v << Complex(0.3, 0.1), Complex(-0.5, 0.2), Complex(0.1, -0.7);
  const DensityMatrix rho = DensityMatrix::pure(v / v.norm());
  const DensityMatrix back = density_from_json(nlohmann::json::parse(to_json(rho).dump()));
  CHECK((back.matrix() - rho.matrix()).cwiseAbs().maxCoeff() == 0.0);
  CHECK_THROWS(density_from_json(nlohmann::json{{"dim", 2}}));
}
