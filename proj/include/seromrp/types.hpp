#ifndef SEROMRP_TYPES_HPP
#define SEROMRP_TYPES_HPP

#include <Eigen/Core>

namespace seromrp {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using IndexVector = Eigen::VectorXi;

}  // namespace seromrp

#endif
