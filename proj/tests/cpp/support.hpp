#pragma once

#include "pignn/core.hpp"

#include <filesystem>
#include <random>
#include <string>

namespace testing {

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static int counter = 0;
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() /
            ("pignn_" + tag + "_" + std::to_string(rd()) + "_" + std::to_string(counter++));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline pignn::TimeSeriesPanel random_panel(Eigen::Index rows, Eigen::Index ni, Eigen::Index np, unsigned seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  pignn::TimeSeriesPanel p;
  p.times.resize(rows);
  for (Eigen::Index k = 0; k < rows; ++k) p.times[k] = 10.0 * static_cast<double>(k) + 0.25;
  auto fill = [&](Eigen::Index cols, double lo, double hi) {
    pignn::Matrix m(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r) {
      for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = lo + (hi - lo) * u(rng);
    }
    return m;
  };
  p.injection = fill(ni, 0.0, 1500.0);
  p.injector_bhp = fill(ni, 3000.0, 4500.0);
  p.production = fill(np, 0.0, 800.0);
  p.producer_bhp = fill(np, 900.0, 1100.0);
  for (Eigen::Index i = 0; i < ni; ++i) p.injector_ids.push_back("I" + std::to_string(i + 1));
  for (Eigen::Index j = 0; j < np; ++j) p.producer_ids.push_back("P" + std::to_string(j + 1));
  return p;
}

}  // namespace testing
