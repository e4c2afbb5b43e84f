#pragma once

#include <stdexcept>
#include <string>

namespace mdann {

/// Base class for all library errors.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

/// Invalid configuration value (bad dimension, unknown strategy, bad prevalence...).
class ConfigError : public Error {
public:
    using Error::Error;
};

/// Matrix/parameter shape mismatch.
class ShapeError : public Error {
public:
    using Error::Error;
};

/// Non-finite values fed where finite input is required.
class NumericInputError : public Error {
public:
    using Error::Error;
};

/// Labels outside their domain ({0,1} targets, non-one-hot domain rows).
class LabelError : public Error {
public:
    using Error::Error;
};

/// Backward called with a cache that does not match the network's current state.
class CacheError : public Error {
public:
    using Error::Error;
};

/// Dataset file violates the schema (wrong status vector length, bad token...).
class SchemaError : public Error {
public:
    using Error::Error;
};

/// File-level ingestion failure; message names the offending row.
class IngestError : public Error {
public:
    using Error::Error;
};

/// Temporal split cannot be performed (site too small, degenerate dates).
class SplitError : public Error {
public:
    using Error::Error;
};

/// Metric is undefined for the given input (e.g. single-class labels).
class MetricError : public Error {
public:
    using Error::Error;
};

/// Operation not supported by this model kind (e.g. domain_predict on a baseline).
class UnsupportedOperationError : public Error {
public:
    using Error::Error;
};

/// Training produced a non-finite loss; carries the epoch where it happened.
class TrainDivergedError : public Error {
public:
    TrainDivergedError(const std::string& msg, int epoch)
        : Error(msg), epoch_(epoch) {}
    int epoch() const { return epoch_; }

private:
    int epoch_;
};

/// Filesystem failure; message includes the path.
class IoError : public Error {
public:
    using Error::Error;
};

}  // namespace mdann
