#pragma once

// Exception types shared across the library. Configuration problems name the
// offending key so callers can surface it verbatim; numerical problems carry
// the timestep / step index where they occurred.

#include <stdexcept>
#include <string>

namespace latentbridge {

// Bad or out-of-range configuration value. `field` is the dotted key path
// (e.g. "bridge.alpha").
class ConfigError : public std::runtime_error {
public:
    ConfigError(std::string field, const std::string& message)
        : std::runtime_error(field + ": " + message), field_(std::move(field)) {}

    const std::string& field() const { return field_; }

private:
    std::string field_;
};

// Non-finite intermediate or similar numerical breakdown during a walk.
class NumericError : public std::runtime_error {
public:
    NumericError(const std::string& message, int timestep, double magnitude)
        : std::runtime_error(message + " (timestep " + std::to_string(timestep) +
                             ", magnitude " + std::to_string(magnitude) + ")"),
          timestep_(timestep),
          magnitude_(magnitude) {}

    int timestep() const { return timestep_; }
    double magnitude() const { return magnitude_; }

private:
    int timestep_;
    double magnitude_;
};

// Fixed-point iteration ran out of its iteration budget. `where` optionally
// names the pipeline branch that failed (e.g. "image branch").
class ConvergenceError : public std::runtime_error {
public:
    ConvergenceError(int step_index, double residual, int max_iter, std::string where = {})
        : std::runtime_error((where.empty() ? std::string() : where + ": ") +
                             "fixed-point inversion did not converge at step " +
                             std::to_string(step_index) + ": residual " +
                             std::to_string(residual) + " after " +
                             std::to_string(max_iter) + " iterations"),
          step_index_(step_index),
          residual_(residual),
          max_iter_(max_iter),
          where_(std::move(where)) {}

    int step_index() const { return step_index_; }
    double residual() const { return residual_; }
    int max_iter() const { return max_iter_; }
    const std::string& where() const { return where_; }

private:
    int step_index_;
    double residual_;
    int max_iter_;
    std::string where_;
};

// Filesystem failure; carries the offending path.
class IoError : public std::runtime_error {
public:
    IoError(std::string path, const std::string& message)
        : std::runtime_error(message + ": " + path), path_(std::move(path)) {}

    const std::string& path() const { return path_; }

private:
    std::string path_;
};

}  // namespace latentbridge
