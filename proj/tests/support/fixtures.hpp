#pragma once

#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>

namespace acopf::testing {

inline std::string case_path(const std::string& name) {
  return std::string(ACOPF_CASE_DIR) + "/" + name;
}

inline std::string read_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline std::string read_case(const std::string& name) { return read_file(case_path(name)); }

} // namespace acopf::testing
