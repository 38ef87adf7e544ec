#pragma once
#include <stdexcept>
#include <string>
#include <vector>

namespace zeno {

struct DomainError : std::domain_error {
  using std::domain_error::domain_error;
};
struct NotFoundError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct NumericalError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct SingularConfiguration : std::runtime_error {
  using std::runtime_error::runtime_error;
};
// Raised when an EM step lowers the likelihood.
struct ImplementationFault : std::logic_error {
  using std::logic_error::logic_error;
};
struct MappingError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
// Fit could not be carried out or did not converge; last_iterate holds the final parameters.
struct FitError : std::runtime_error {
  FitError(const std::string& what, std::vector<double> last = {})
      : std::runtime_error(what), last_iterate(std::move(last)) {}
  std::vector<double> last_iterate;
};
struct ParseError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace zeno
