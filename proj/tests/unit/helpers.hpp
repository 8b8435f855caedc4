#pragma once

#include <filesystem>
#include <string>

#include <doctest.h>

#include "kopath/error.hpp"

namespace testutil {

inline std::filesystem::path temp_path(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / "kopath_unit";
  std::filesystem::create_directories(dir);
  return dir / name;
}

template <typename F>
kopath::ErrorKind kind_of(F&& f) {
  try {
    f();
  } catch (const kopath::Error& e) {
    return e.kind();
  }
  FAIL("expected a kopath::Error");
  return kopath::ErrorKind::Inconsistent;
}

}  // namespace testutil

#define CHECK_KIND(expr, k) CHECK(testutil::kind_of([&] { (void)(expr); }) == kopath::ErrorKind::k)
