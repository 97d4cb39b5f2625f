#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace kondo_eof::io {

struct CheckpointError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

class Writer {
 public:
  explicit Writer(std::ostream& os) : os_(os) {}
  template <class T>
  void pod(const T& v) {
    os_.write(reinterpret_cast<const char*>(&v), sizeof(T));
  }
  void ints(const std::vector<int>& v) {
    pod<std::int64_t>(static_cast<std::int64_t>(v.size()));
    os_.write(reinterpret_cast<const char*>(v.data()), sizeof(int) * v.size());
  }
  void doubles(const std::vector<double>& v) {
    pod<std::int64_t>(static_cast<std::int64_t>(v.size()));
    os_.write(reinterpret_cast<const char*>(v.data()), sizeof(double) * v.size());
  }
  void matrix(const Eigen::MatrixXd& m) {
    pod<std::int64_t>(m.rows());
    pod<std::int64_t>(m.cols());
    os_.write(reinterpret_cast<const char*>(m.data()), sizeof(double) * m.size());
  }
  void vector(const Eigen::VectorXd& v) { matrix(v); }

 private:
  std::ostream& os_;
};

class Reader {
 public:
  explicit Reader(std::istream& is) : is_(is) {}
  template <class T>
  T pod() {
    T v{};
    is_.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!is_) throw CheckpointError("truncated checkpoint");
    return v;
  }
  std::vector<int> ints() {
    std::vector<int> v(count());
    read(v.data(), sizeof(int) * v.size());
    return v;
  }
  std::vector<double> doubles() {
    std::vector<double> v(count());
    read(v.data(), sizeof(double) * v.size());
    return v;
  }
  Eigen::MatrixXd matrix() {
    const auto r = count(), c = count();
    Eigen::MatrixXd m(r, c);
    read(m.data(), sizeof(double) * m.size());
    return m;
  }
  Eigen::VectorXd vector() {
    Eigen::MatrixXd m = matrix();
    return Eigen::Map<Eigen::VectorXd>(m.data(), m.size());
  }

 private:
  std::size_t count() {
    const auto n = pod<std::int64_t>();
    if (n < 0 || n > (std::int64_t(1) << 40)) throw CheckpointError("corrupt checkpoint");
    return static_cast<std::size_t>(n);
  }
  void read(void* p, std::size_t bytes) {
    is_.read(static_cast<char*>(p), static_cast<std::streamsize>(bytes));
    if (!is_) throw CheckpointError("truncated checkpoint");
  }
  std::istream& is_;
};

}  // namespace kondo_eof::io
