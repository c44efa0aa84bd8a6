#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace graphal {

using NodeId = std::int64_t;
using ClassId = int;

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using RowVector = Eigen::RowVectorXd;
using SparseMatrix = Eigen::SparseMatrix<double, Eigen::RowMajor>;

/// Base for every error the library raises on purpose.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed or inconsistent dataset container.
class DatasetError : public Error {
 public:
  using Error::Error;
};

/// Invalid experiment / solver / session configuration.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// A precondition on an operation's arguments was violated.
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

/// Raised from inside long computations when a cancellation flag trips.
class Cancelled : public Error {
 public:
  Cancelled() : Error("computation cancelled") {}
};

namespace detail {

inline void require(bool ok, const std::string& what) {
  if (!ok) throw InvalidArgument(what);
}

}  // namespace detail

}  // namespace graphal
