#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace visnli {

// Violated precondition on a domain value (wrong arity, wrong task, missing slot...).
class DomainError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Not enough lexicon material to produce the requested number of unique items.
class CapacityError : public std::runtime_error {
 public:
  CapacityError(const std::string& what, std::size_t required, std::size_t available)
      : std::runtime_error(what), required_(required), available_(available) {}

  std::size_t required() const { return required_; }
  std::size_t available() const { return available_; }
  std::size_t shortfall() const { return required_ > available_ ? required_ - available_ : 0; }

 private:
  std::size_t required_;
  std::size_t available_;
};

// A backend (TTI, scorer, chat, labeler) failed after its retry budget was spent.
class BackendError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Backend exhausted retries for some image indices of a premise.
class PartialImageSetError : public BackendError {
 public:
  PartialImageSetError(const std::string& what, std::vector<int> missing)
      : BackendError(what), missing_(std::move(missing)) {}

  const std::vector<int>& missing_indices() const { return missing_; }

 private:
  std::vector<int> missing_;
};

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace visnli
