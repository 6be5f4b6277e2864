#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace nnsb {

/// A caller broke a documented precondition (shape mismatch, out-of-range
/// neighbor rank, missing gradient, ...).
class ContractViolation : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// A recorded operation received a value outside its mathematical domain.
class DomainError : public std::domain_error {
 public:
  DomainError(const std::string& what, std::uint32_t node)
      : std::domain_error(what + " (node " + std::to_string(node) + ")"), node_(node) {}

  std::uint32_t node() const noexcept { return node_; }

 private:
  std::uint32_t node_;
};

/// Training produced a non-finite loss.
class DivergenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed file or failed read/write; the message carries the path.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline void require(bool condition, const char* message) {
  if (!condition) throw ContractViolation(message);
}

inline void require(bool condition, const std::string& message) {
  if (!condition) throw ContractViolation(message);
}

}  // namespace nnsb
