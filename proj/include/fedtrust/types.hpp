#pragma once

#include <Eigen/Dense>
#include <stdexcept>
#include <string>

namespace fedtrust {

template <class S>
using VecX = Eigen::Matrix<S, Eigen::Dynamic, 1>;
template <class S>
using MatX = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic>;
template <class S>
using RowMajorMat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

using Vecf = VecX<float>;
using Vecd = VecX<double>;
using Matf = MatX<float>;
using Matd = MatX<double>;

// Error taxonomy. Each maps to one failure class named in the module
// contracts; call sites throw the most specific type that applies.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct ShapeError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct ThreatModelError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct SizeError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// IDX loader failures carry a code so tests can tell the parse paths apart.
struct IdxParseError : DataError {
  enum class Code { BadMagic, Truncated, CountMismatch };
  IdxParseError(Code c, const std::string& msg) : DataError(msg), code(c) {}
  Code code;
};

// Ground-truth provenance of a client update. Tags ride along for metrics
// only; detection code never sees them (it receives bare vectors).
enum class AttackKind {
  None,
  Scaling,
  PartialScaling,
  SignFlip,
  AdditiveNoise,
  LabelFlip,
};

const char* attack_kind_name(AttackKind k);
AttackKind attack_kind_from_name(const std::string& name);

}  // namespace fedtrust
