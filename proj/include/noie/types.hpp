#pragma once

#include <Eigen/Dense>
#include <sstream>
#include <stdexcept>
#include <string>

#include "noie/rng.hpp"

namespace noie {

template <class S>
using Mat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic>;
template <class S>
using Vec = Eigen::Matrix<S, Eigen::Dynamic, 1>;

using Matd = Mat<double>;
using Vecd = Vec<double>;
using Matf = Mat<float>;
using Vecf = Vec<float>;

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};
// Shape disagreement between operands.
struct DimError : Error {
  using Error::Error;
};
// Operation called out of order (e.g. backward before forward).
struct StateError : Error {
  using Error::Error;
};
// Malformed input data or files.
struct DataError : Error {
  using Error::Error;
};
// Broken or incompatible checkpoint.
struct CheckpointError : Error {
  using Error::Error;
};
// Training loss went NaN/Inf.
struct DivergenceError : Error {
  using Error::Error;
};

// NaN/Inf guard. On by default in debug builds; tests flip it on explicitly.
inline bool& finite_checks() {
#ifdef NDEBUG
  static bool on = false;
#else
  static bool on = true;
#endif
  return on;
}

template <class Derived>
void guard_finite(const Eigen::MatrixBase<Derived>& m, const char* what) {
  if (!finite_checks()) return;
  if (!m.allFinite()) throw Error(std::string("non-finite values in ") + what);
}

inline std::string shape_str(Eigen::Index rows, Eigen::Index cols) {
  std::ostringstream os;
  os << rows << "x" << cols;
  return os.str();
}

// A learned weight: value plus a same-shaped gradient accumulator.
// Vectors are stored as n x 1 matrices.
template <class S>
struct ParamTensor {
  std::string name;
  Mat<S> value;
  Mat<S> grad;

  ParamTensor() = default;
  ParamTensor(std::string name_, Eigen::Index rows, Eigen::Index cols)
      : name(std::move(name_)),
        value(Mat<S>::Zero(rows, cols)),
        grad(Mat<S>::Zero(rows, cols)) {}

  void zero_grad() { grad.setZero(); }

  // Uniform fill in [-range, range], column-major coefficient order.
  void init_uniform(Rng& rng, double range) {
    S* p = value.data();
    for (Eigen::Index i = 0; i < value.size(); ++i)
      p[i] = static_cast<S>(rng.uniform(-range, range));
    grad.setZero();
  }

  Eigen::Index size() const { return value.size(); }
};

}  // namespace noie
