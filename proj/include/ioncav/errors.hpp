#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace ioncav {

// Invalid parameters or config; carries one message per violated field.
class validation_error : public std::runtime_error {
  public:
    explicit validation_error(std::vector<std::string> violations)
        : std::runtime_error(join(violations)), violations_(std::move(violations)) {}
    explicit validation_error(const std::string& msg)
        : validation_error(std::vector<std::string>{msg}) {}
    const std::vector<std::string>& violations() const { return violations_; }

  private:
    static std::string join(const std::vector<std::string>& v) {
        std::string s = "validation failed:";
        for (const auto& m : v) { s += "\n  - "; s += m; }
        return s;
    }
    std::vector<std::string> violations_;
};

// ODE integration could not continue (step-size underflow / step budget).
// Carries the last time that was reached successfully.
class integration_error : public std::runtime_error {
  public:
    integration_error(const std::string& msg, double t_last)
        : std::runtime_error(msg + " (last good time: " + std::to_string(t_last) + " s)"),
          t_last_(t_last) {}
    double last_good_time() const { return t_last_; }

  private:
    double t_last_;
};

// Relaxation to a stationary state did not converge within the iteration budget.
class convergence_error : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

// A fit could not be performed (too few points, non-decaying data, ...).
class fit_error : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

} // namespace ioncav
