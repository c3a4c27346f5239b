#pragma once

#include <stdexcept>

namespace csaseg {

// Base class for every error the engine raises on purpose. The CLI maps
// subclasses onto exit codes: ConfigError -> 2, IoError/FormatError -> 3,
// everything else -> 4. Messages always name the offending entity.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// mismatched or invalid tensor extents
struct ShapeError : Error { using Error::Error; };

// NaN where finite values are required
struct NumericError : Error { using Error::Error; };

// inputs that are structurally fine but unusable (e.g. zero-norm rows)
struct DegenerateInputError : Error { using Error::Error; };

// bad flags, bad mode strings, inconsistent slide parameters
struct ConfigError : Error { using Error::Error; };

// unreadable or unwritable files
struct IoError : Error { using Error::Error; };

// malformed container or NetPBM bytes
struct FormatError : Error { using Error::Error; };

// weight set incomplete or inconsistent with its own config
struct ModelError : Error { using Error::Error; };

// out-of-range labels during evaluation
struct DataError : Error { using Error::Error; };

// metric undefined (no class present in either mask)
struct MetricError : Error { using Error::Error; };

} // namespace csaseg
