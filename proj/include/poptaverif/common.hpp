#ifndef POPTAVERIF_COMMON_HPP
#define POPTAVERIF_COMMON_HPP

#include <cstdint>
#include <stdexcept>
#include <string>

namespace poptaverif {

// Tolerances are fixed project-wide; changing one silently changes what
// "valid" means for every module, so they live here and nowhere else.
namespace tol {
inline constexpr double dist_sum = 1e-12;     // distributions must sum to 1 within this
inline constexpr double prune = 1e-12;        // belief entries below this are dropped, then renormalized
inline constexpr double dedup = 1e-9;         // default L-inf tolerance for duplicate-belief detection
inline constexpr double reconstruct = 1e-9;   // triangulation must rebuild the belief within this
inline constexpr double snap = 1e-9;          // values this close to an integer snap before flooring
inline constexpr double tie = 1e-9;           // action values within this tie; smallest index wins
inline constexpr double chain_residual = 1e-10;
}  // namespace tol

inline constexpr std::size_t direct_solve_max_nodes = 2000;

class ContractError : public std::runtime_error {
 public:
  explicit ContractError(const std::string& what) : std::runtime_error(what) {}
};

class CapacityError : public std::runtime_error {
 public:
  explicit CapacityError(const std::string& what) : std::runtime_error(what) {}
};

class LookupError : public std::runtime_error {
 public:
  explicit LookupError(const std::string& what) : std::runtime_error(what) {}
};

class ModelError : public std::runtime_error {
 public:
  explicit ModelError(const std::string& what) : std::runtime_error(what) {}
};

/// Syntax or reference error with a 1-based source position.
class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& what, int line, int column)
      : std::runtime_error(what + " (line " + std::to_string(line) + ", column " +
                           std::to_string(column) + ")"),
        line_(line),
        column_(column) {}
  int line() const { return line_; }
  int column() const { return column_; }

 private:
  int line_;
  int column_;
};

class IoError : public std::runtime_error {
 public:
  explicit IoError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace poptaverif

#endif
