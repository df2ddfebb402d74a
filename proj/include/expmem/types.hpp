#pragma once

#include <Eigen/Dense>

#include <stdexcept>
#include <string>

namespace expmem {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

/// Thrown when two state vectors (or a vector and an operator) disagree in size.
class DimensionError : public std::invalid_argument {
  public:
    using std::invalid_argument::invalid_argument;
};

inline void require_same_size(const Vec& a, const Vec& b, const char* where) {
    if (a.size() != b.size())
        throw DimensionError(std::string(where) + ": dimension mismatch (" + std::to_string(a.size()) +
                             " vs " + std::to_string(b.size()) + ")");
}

} // namespace expmem
