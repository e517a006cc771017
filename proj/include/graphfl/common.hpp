#pragma once

#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace graphfl {

using NodeId = std::uint32_t;
using ClassId = std::int32_t;

/// A node paired with the label used to supervise it. The label may be a
/// pseudo label, so it is carried explicitly instead of looked up.
struct LabeledNode {
  NodeId node = 0;
  ClassId label = 0;

  friend bool operator==(const LabeledNode&, const LabeledNode&) = default;
};

using LabeledNodes = std::vector<LabeledNode>;
using NodeSet = std::vector<NodeId>;

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed or inconsistent input data. Carries the offending file and
/// 1-based line number when known (line 0 means "whole file").
class DataError : public Error {
 public:
  DataError(std::string file, std::size_t line, const std::string& what)
      : Error(file.empty() ? what
                           : file + (line ? ":" + std::to_string(line) : std::string()) + ": " + what),
        file_(std::move(file)),
        line_(line) {}
  explicit DataError(const std::string& what) : DataError("", 0, what) {}

  const std::string& file() const noexcept { return file_; }
  std::size_t line() const noexcept { return line_; }

 private:
  std::string file_;
  std::size_t line_;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

class InvalidArgument : public Error {
 public:
  using Error::Error;
};

class UnsupportedModelError : public Error {
 public:
  using Error::Error;
};

/// Invalid experiment configuration; `path` names the offending field.
class ConfigError : public Error {
 public:
  ConfigError(std::string path, const std::string& what)
      : Error(path.empty() ? what : path + ": " + what), path_(std::move(path)) {}

  const std::string& path() const noexcept { return path_; }

 private:
  std::string path_;
};

/// Non-finite loss during gradient descent.
class DivergenceError : public Error {
 public:
  DivergenceError(std::size_t step, long client_id, const std::string& what)
      : Error(what), step_(step), client_id_(client_id) {}

  std::size_t step() const noexcept { return step_; }
  /// -1 when the failing computation was not attributed to a client.
  long client_id() const noexcept { return client_id_; }

  DivergenceError with_client(long client_id) const {
    return DivergenceError(step_, client_id,
                           "client " + std::to_string(client_id) + ": " + what());
  }

 private:
  std::size_t step_;
  long client_id_;
};

}  // namespace graphfl
