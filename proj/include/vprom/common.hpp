#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace vprom {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

// ============================================================================
// Errors
// ============================================================================

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Invalid or inconsistent user configuration (CLI exit code 2).
class ConfigError : public Error {
public:
    using Error::Error;
};

class DimensionError : public Error {
public:
    using Error::Error;
};

/// Numerical failure: non-convergence, singular systems (CLI exit code 3).
class NumericError : public Error {
public:
    using Error::Error;
};

/// Newton iteration did not converge; carries the failing step index.
class IntegrationError : public NumericError {
public:
    IntegrationError(const std::string& what, Index step)
        : NumericError(what + " (step " + std::to_string(step) + ")"), step_(step) {}
    Index step() const { return step_; }

private:
    Index step_;
};

/// Subspaces too far apart for the Grassmann log map.
class GeometryError : public NumericError {
public:
    using NumericError::NumericError;
};

inline void require_dims(bool ok, const std::string& what) {
    if (!ok) throw DimensionError(what);
}

// ============================================================================
// Hashing
// ============================================================================

/// FNV-1a over the raw bytes of a matrix (shape included).
std::uint64_t hash_matrix(const Matrix& m);

std::string hash_hex(std::uint64_t h);

}  // namespace vprom
