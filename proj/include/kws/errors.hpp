#pragma once

#include <stdexcept>
#include <string>

namespace kws {

struct Error : std::runtime_error {
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

struct ShapeError : Error {
    using Error::Error;
};
struct LabelError : Error {
    using Error::Error;
};
struct ConfigError : Error {
    using Error::Error;
};
struct DataError : Error {
    using Error::Error;
};
struct FormatError : Error {
    using Error::Error;
};
struct NumericError : Error {
    using Error::Error;
};
struct MetricError : Error {
    using Error::Error;
};
struct CalibrationError : Error {
    using Error::Error;
};
struct ConditioningError : Error {
    using Error::Error;
};
struct CompatibilityError : Error {
    using Error::Error;
};
struct TrainingError : Error {
    using Error::Error;
};
struct ReportError : Error {
    using Error::Error;
};

}  // namespace kws
