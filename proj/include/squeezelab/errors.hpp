#pragma once

#include <stdexcept>
#include <string>

namespace squeezelab
{
// Base class for every error raised by the engine. The CLI maps the
// subclasses onto process exit codes.
class Error : public std::runtime_error
{
public:
    using std::runtime_error::runtime_error;
};

// Invalid or inconsistent physical parameters.
class ParameterError : public Error
{
public:
    using Error::Error;
};

// Overlap integral outside [-1, 1] beyond tolerance.
class NormalizationError : public Error
{
public:
    using Error::Error;
};

// Operation called outside its domain (e.g. resonant path with detuning).
class PreconditionError : public Error
{
public:
    using Error::Error;
};

// D(omega) vanishes: the configuration sits on the instability threshold.
class SingularResponseError : public Error
{
public:
    using Error::Error;
};

// Root finder or integrator failure; never swallowed into a verdict.
class NumericalError : public Error
{
public:
    using Error::Error;
};

// Problem size beyond what the engine is willing to handle.
class ResourceError : public Error
{
public:
    using Error::Error;
};

// Configuration is dynamically unstable and the caller asked for stationary output.
class InstabilityError : public Error
{
public:
    using Error::Error;
};

// Config document could not be parsed or validated.
class ConfigError : public Error
{
public:
    using Error::Error;
};

} // namespace squeezelab
