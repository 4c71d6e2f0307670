#include "pignn/core.hpp"
#include "pignn/csv_io.hpp"

#include "doctest.h"
#include "support.hpp"

#include <cmath>
#include <fstream>
#include <random>
#include <sstream>

using namespace pignn;

TEST_CASE("scaler maps a column onto [0, 1] and back") {
  Matrix v(3, 1);
  v << 0.0, 5.0, 10.0;
  const auto s = fit_apply_scaler(v, {0, 3});
  CHECK(s.values(0, 0) == 0.0);
  CHECK(s.values(1, 0) == 0.5);
  CHECK(s.values(2, 0) == 1.0);
}

TEST_CASE("constant columns scale to zero and invert to the constant") {
  Matrix v = Matrix::Constant(3, 1, 7.0);
  const auto s = fit_apply_scaler(v, {0, 3});
  CHECK(s.values.isZero());
  CHECK(s.scaler.inverse(s.values).isApprox(v));
  CHECK(s.scaler.range()[0] == 0.0);
}

TEST_CASE("scaler round trip on random data") {
  std::mt19937_64 rng(11);
  std::normal_distribution<double> g(0.0, 50.0);
  Matrix v(40, 5);
  for (Eigen::Index i = 0; i < v.size(); ++i) v.data()[i] = g(rng);
  const auto s = MinMaxScaler::fit(v, {0, 28});
  const Matrix back = s.inverse(s.transform(v));
  CHECK(((back - v).cwiseAbs().array() <= 1e-12 * v.cwiseAbs().array().max(1.0)).all());
  const Matrix fitted = s.transform(v).topRows(28);
  CHECK(fitted.minCoeff() >= 0.0);
  CHECK(fitted.maxCoeff() <= 1.0);
}

TEST_CASE("scaler rejects non-finite input and names the column") {
  Matrix v = Matrix::Ones(4, 3);
  v(2, 1) = std::nan("");
  CHECK_THROWS_WITH_AS(MinMaxScaler::fit(v), doctest::Contains("column 1"), Error);
  CHECK_THROWS_AS(MinMaxScaler::fit(Matrix::Ones(4, 3), {2, 2}), Error);
}

TEST_CASE("split lengths follow the flooring rule") {
  const auto a = split_panel(100);
  CHECK(a.train.size() == 70);
  CHECK(a.validation.size() == 5);
  CHECK(a.test.size() == 25);
  const auto b = split_panel(40);
  CHECK(b.train.size() == 28);
  CHECK(b.validation.size() == 2);
  CHECK(b.test.size() == 10);
}

TEST_CASE("splits are ordered, disjoint and exhaustive") {
  for (Eigen::Index n = 10; n <= 400; ++n) {
    SplitFractions f{0.5, 0.2, 0.3};
    const auto s = split_panel(n, f);
    CHECK(s.train.begin == 0);
    CHECK(s.train.end == s.validation.begin);
    CHECK(s.validation.end == s.test.begin);
    CHECK(s.test.end == n);
  }
}

TEST_CASE("invalid split requests are rejected") {
  CHECK_THROWS_AS(split_panel(10, {0.7, 0.05, 0.25}), Error);  // validation floors to 0
  CHECK_THROWS_AS(split_panel(100, {0.7, 0.2, 0.2}), Error);
  CHECK_THROWS_AS(split_panel(100, {0.0, 0.5, 0.5}), Error);
}

TEST_CASE("rmse basics") {
  const std::vector<double> a{1.0, -2.0, 3.5, 4.0};
  std::vector<double> b = a;
  CHECK(rmse(a, b) == 0.0);
  for (auto& v : b) v += 2.5;
  CHECK(rmse(a, b) == doctest::Approx(2.5).epsilon(1e-15));
  std::vector<double> a3 = a, b3 = b;
  for (auto& v : a3) v *= 3.0;
  for (auto& v : b3) v *= 3.0;
  CHECK(rmse(a3, b3) == doctest::Approx(3.0 * rmse(a, b)).epsilon(1e-14));
  CHECK_THROWS_AS(rmse(a, std::vector<double>{1.0}), Error);
  CHECK_THROWS_AS(rmse(std::vector<double>{}, std::vector<double>{}), Error);
}

TEST_CASE("totals are sums of the per-producer entries") {
  const std::vector<double> row{26.408, 37.107, 10.387, 33.250};
  CHECK(total_rmse(row) == doctest::Approx(107.152).epsilon(1e-12));
  CHECK(std::abs(total_rmse(row) - 107.151) < 0.01);
}

TEST_CASE("pearson of a matrix with itself and its negation") {
  Matrix a(2, 3);
  a << 0.1, 0.5, 0.3, 0.9, 0.2, 0.4;
  CHECK(pearson(a, a) == doctest::Approx(1.0));
  CHECK(pearson(a, -a) == doctest::Approx(-1.0));
  CHECK(pearson(a, 2.0 * a.array() + 1.0) == doctest::Approx(1.0));
}

TEST_CASE("panel validation catches broken panels") {
  auto p = testing::random_panel(10, 2, 3, 1);
  CHECK_NOTHROW(p.validate());
  auto t = p;
  t.times[4] = t.times[3];
  CHECK_THROWS_AS(t.validate(), Error);
  auto q = p;
  q.production(2, 1) = -1.0;
  CHECK_THROWS_AS(q.validate(), Error);
  auto r = p;
  r.producer_bhp(0, 0) = std::numeric_limits<double>::infinity();
  CHECK_THROWS_AS(r.validate(), Error);
  auto s = p;
  s.producer_ids.pop_back();
  CHECK_THROWS_AS(s.validate(), Error);
}

TEST_CASE("well network ids must be unique") {
  WellNetwork w{{{"A", 1, 1}}, {{"A", 2, 2}}};
  CHECK_THROWS_AS(w.validate(), Error);
  w.producers[0].id = "B";
  CHECK_NOTHROW(w.validate());
  CHECK_THROWS_AS(WellNetwork{}.validate(), Error);
}

TEST_CASE("panel CSV round trip is exact") {
  testing::TempDir dir("core");
  const auto p = testing::random_panel(25, 2, 4, 9);
  io::write_panel(dir / "panel.csv", p);
  const auto back = io::read_panel(dir / "panel.csv");
  CHECK(back.times == p.times);
  CHECK(back.injection == p.injection);
  CHECK(back.injector_bhp == p.injector_bhp);
  CHECK(back.production == p.production);
  CHECK(back.producer_bhp == p.producer_bhp);
  CHECK(back.injector_ids == p.injector_ids);
  CHECK(back.producer_ids == p.producer_ids);
  std::ifstream in(dir / "panel.csv");
  std::string header;
  std::getline(in, header);
  CHECK(header.rfind("time_days,I_I1,I_I2,pI_I1,pI_I2,q_P1", 0) == 0);
}

TEST_CASE("panel CSV with unsorted times is rejected") {
  std::istringstream in("time_days,I_A,pI_A,q_B,pwf_B\n0,1,2,3,4\n0,1,2,3,4\n");
  CHECK_THROWS_AS(io::parse_panel(in), Error);
}

TEST_CASE("wells and connectivity CSV round trip") {
  testing::TempDir dir("core");
  WellNetwork w{{{"I1", 125.0, 75.5}}, {{"P1", 10.0, 20.0}, {"P2", 0.1, 1e3}}};
  io::write_wells(dir / "wells.csv", w);
  const auto wb = io::read_wells(dir / "wells.csv");
  CHECK(wb.injector_ids() == w.injector_ids());
  CHECK(wb.producers[1].y == 1e3);
  std::ifstream in(dir / "wells.csv");
  std::string header;
  std::getline(in, header);
  CHECK(header == "well_id,kind,x,y");

  ConnectivityMatrix c{Matrix(1, 2), {"I1"}, {"P1", "P2"}};
  c.values << 1.0 / 3.0, 0.123456789012345;
  io::write_connectivity(dir / "f.csv", c);
  const auto cb = io::read_connectivity(dir / "f.csv");
  CHECK(cb.values == c.values);
  CHECK(cb.producer_ids == c.producer_ids);
}

TEST_CASE("format_double round trips exactly") {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(-1e6, 1e6);
  for (int k = 0; k < 2000; ++k) {
    const double v = u(rng) * std::pow(10.0, (k % 20) - 10);
    CHECK(io::parse_double(io::format_double(v)) == v);
  }
}
