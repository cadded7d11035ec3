#pragma once

#include <stdexcept>
#include <string>

namespace partial_loading {

// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed input: invariant violations, bad parameters, bad files.
class InvalidInput : public Error {
 public:
  using Error::Error;
};

class UnknownId : public InvalidInput {
 public:
  using InvalidInput::InvalidInput;
};

// A model whose weights plus a single sample exceed GPU memory.
class ModelUnservable : public Error {
 public:
  using Error::Error;
};

// The DP scheduler was asked to exploit sharing on a library that is not
// backbone-sharing.
class WrongCase : public Error {
 public:
  using Error::Error;
};

// The exhaustive oracle refuses instances beyond its limits.
class SearchRefused : public Error {
 public:
  SearchRefused(const std::string& what, double estimated_nodes)
      : Error(what), estimated_nodes_(estimated_nodes) {}
  double estimated_nodes() const noexcept { return estimated_nodes_; }

 private:
  double estimated_nodes_;
};

// A solver produced output that disagrees with its own tables or fails
// validation. Always a bug, never silenced.
class InternalInconsistency : public Error {
 public:
  using Error::Error;
};

}  // namespace partial_loading
