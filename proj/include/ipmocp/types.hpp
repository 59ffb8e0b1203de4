#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include <stdexcept>
#include <string>

namespace ipmocp {

using Index = Eigen::Index;
using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using SparseMatrix = Eigen::SparseMatrix<double>;

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid dimensions, parameters or options supplied by the caller.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// A user callback produced a non-finite value.
class EvaluationError : public Error {
 public:
  EvaluationError(std::string callback, const std::string& what)
      : Error(what), callback_(std::move(callback)) {}
  const std::string& callback() const { return callback_; }

 private:
  std::string callback_;
};

/// Argument outside the domain of a function (e.g. psi'(w) for w >= 0).
class DomainError : public Error {
 public:
  using Error::Error;
};

/// A point violates strict interiority of a state or mixed constraint.
class InteriorityError : public Error {
 public:
  enum class Kind { State, Mixed };

  InteriorityError(Kind kind, Index constraint, Index node, const std::string& what)
      : Error(what), kind_(kind), constraint_(constraint), node_(node) {}

  Kind kind() const { return kind_; }
  Index constraint() const { return constraint_; }
  /// Mesh node index, or -1 when the check was pointwise.
  Index node() const { return node_; }

 private:
  Kind kind_;
  Index constraint_;
  Index node_;
};

inline bool all_finite(const Vector& v) { return v.allFinite(); }
inline bool all_finite(const Matrix& m) { return m.allFinite(); }

}  // namespace ipmocp
