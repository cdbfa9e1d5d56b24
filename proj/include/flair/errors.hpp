#pragma once

#include <stdexcept>
#include <string>

namespace flair {

// Base for everything thrown by this project.
class error : public std::runtime_error {
public:
  explicit error(const std::string& msg) : std::runtime_error(msg) {}
};

// Malformed file contents (wrong shape, dtype, band count, magic...).
class format_error : public error {
public:
  using error::error;
};

// Files that individually parse but disagree with each other (T mismatch,
// missing counterpart directories, id set mismatches).
class consistency_error : public error {
public:
  using error::error;
};

// Bad user input: CLI flags, config files, out-of-range knobs. Maps to exit 2.
class validation_error : public error {
public:
  using error::error;
};

// Label raster holds a value outside the raw nomenclature.
class invalid_label_error : public format_error {
public:
  using format_error::format_error;
};

// Operation cannot run on the given data (crop larger than source,
// empty temporal axis, no defined classes...).
class data_error : public error {
public:
  using error::error;
};

}  // namespace flair
