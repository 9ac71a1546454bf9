#pragma once

#include "doa/error.hpp"
#include "doa/rng.hpp"
#include "doa/types.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <random>
#include <string>

namespace testsupport {

template <class Fn>
doa::ErrorKind error_kind_of(Fn&& fn) {
  try {
    fn();
  } catch (const doa::Error& e) {
    return e.kind();
  }
  ADD_FAILURE() << "no doa::Error thrown";
  return doa::ErrorKind::Contract;
}

inline std::filesystem::path temp_dir(const std::string& tag) {
  const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
  auto dir = std::filesystem::temp_directory_path() / ("doa_" + tag + "_" + (info ? std::string(info->name()) : "x"));
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

inline doa::CVector random_cvector(doa::Index n, std::uint64_t seed, double scale = 1.0) {
  doa::Rng rng = doa::make_rng(seed, 77);
  std::normal_distribution<double> g(0.0, scale);
  doa::CVector v(n);
  for (auto& c : v) c = {g(rng), g(rng)};
  return v;
}

inline doa::CMatrix random_cmatrix(doa::Index r, doa::Index c, std::uint64_t seed, double scale = 1.0) {
  doa::Rng rng = doa::make_rng(seed, 78);
  std::normal_distribution<double> g(0.0, scale);
  doa::CMatrix m(r, c);
  for (doa::Index j = 0; j < c; ++j) {
    for (doa::Index i = 0; i < r; ++i) m(i, j) = {g(rng), g(rng)};
  }
  return m;
}

}  // namespace testsupport
