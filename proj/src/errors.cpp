#include "noisycon/errors.hpp"

namespace noisycon {

namespace {
std::string join_problems(const std::string& what, const std::vector<std::string>& problems) {
  std::string out = what;
  for (const auto& p : problems) {
    out += "\n  ";
    out += p;
  }
  return out;
}
}  // namespace

ValidationError::ValidationError(const std::string& what, std::vector<std::string> problems)
    : std::invalid_argument(join_problems(what, problems)), problems_(std::move(problems)) {}

}  // namespace noisycon
