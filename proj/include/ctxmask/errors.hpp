#pragma once

#include <stdexcept>
#include <string>

namespace ctxmask {

/// Malformed or internally inconsistent input data (JSON structure,
/// dangling references, bad RLE strings, ...).
class ParseError : public std::runtime_error {
 public:
  explicit ParseError(const std::string& what) : std::runtime_error(what) {}
};

/// Data that parsed fine but violates a contract discovered later
/// (e.g. an image file whose dimensions disagree with the annotations).
class ValidationError : public std::runtime_error {
 public:
  explicit ValidationError(const std::string& what) : std::runtime_error(what) {}
};

/// Filesystem / codec-level failures: unreadable files, undecodable
/// images, unwritable outputs.
class IoError : public std::runtime_error {
 public:
  explicit IoError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace ctxmask
