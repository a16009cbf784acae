#pragma once

#include <stdexcept>
#include <string>

namespace smolder {

// Base for every error raised by the pipeline.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Invalid configuration value (bad kernel size, out-of-range fraction, unknown key).
class ConfigError : public Error {
public:
    using Error::Error;
};

// Malformed or inconsistent input data.
class InputError : public Error {
public:
    using Error::Error;
};

// Tensor or grid dimensions violate a contract.
class ShapeError : public Error {
public:
    using Error::Error;
};

// Reading frames or videos failed.
class IngestionError : public Error {
public:
    using Error::Error;
};

// Checkpoint or weight file could not be loaded.
class LoadError : public Error {
public:
    using Error::Error;
};

// Training produced a non-finite loss.
class DivergenceError : public Error {
public:
    using Error::Error;
};

}  // namespace smolder
