#pragma once

#include <bit>
#include <cstdint>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>

#include "tsac/tensor.hpp"

namespace tsac {

/// Little binary writer/reader pair for bit-exact checkpoints. Doubles are
/// stored as their raw 64-bit patterns; RNG engines as their text state.
struct BinWriter {
  std::ostream& out;

  void u64(std::uint64_t v) { out.write(reinterpret_cast<const char*>(&v), 8); }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void str(const std::string& s) {
    u64(s.size());
    out.write(s.data(), static_cast<std::streamsize>(s.size()));
  }
  void tensor(const Tensor& t) {
    u64(t.rows());
    u64(t.cols());
    for (double v : t.data()) f64(v);
  }
  template <typename Engine>
  void rng(const Engine& e) {
    std::ostringstream ss;
    ss << e;
    str(ss.str());
  }
};

struct BinReader {
  std::istream& in;

  std::uint64_t u64() {
    std::uint64_t v = 0;
    in.read(reinterpret_cast<char*>(&v), 8);
    if (!in) throw Error("checkpoint: truncated stream");
    return v;
  }
  double f64() { return std::bit_cast<double>(u64()); }
  std::string str() {
    const std::uint64_t n = u64();
    std::string s(n, '\0');
    in.read(s.data(), static_cast<std::streamsize>(n));
    if (!in) throw Error("checkpoint: truncated stream");
    return s;
  }
  Tensor tensor() {
    const std::size_t r = u64(), c = u64();
    Tensor t(r, c);
    for (double& v : t.data()) v = f64();
    return t;
  }
  template <typename Engine>
  void rng(Engine& e) {
    std::istringstream ss(str());
    ss >> e;
  }
};

}  // namespace tsac
