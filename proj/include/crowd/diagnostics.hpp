#pragma once

#include <optional>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "crowd/geometry.hpp"
#include "crowd/projection.hpp"

namespace crowd {

/// Moreau decomposition U = u_C + u_N for the homogeneous cone
/// C_q = {v : G_k . v >= 0} of exact contacts and its polar N_q.
struct ConeDecomposition {
  Eigen::VectorXd tangential;   // u_C, projection onto C_q
  Eigen::VectorXd normal;       // u_N = U - u_C = -sum_k lambda_k G_k
  Eigen::VectorXd multipliers;  // lambda_k >= 0
};

/// Contacts farther than this from exact contact are rejected by cone_project_contact.
inline constexpr double kContactGapTolerance = 1e-9;

/// Throws ValidationError when a listed gap is not (numerically) zero.
ConeDecomposition cone_project_contact(const Configuration& cfg,
                                       std::span<const ContactConstraint> contacts,
                                       const Eigen::VectorXd& target);

/// Gram matrix C = G^T G of the contact gradient columns.
Eigen::MatrixXd contact_gram(std::span<const ContactConstraint> contacts);

struct ProxRegularity {
  double min_quadratic = 0.0;   // min over the unit simplex of lambda^T C lambda
  Eigen::VectorXd minimizer;    // argmin lambda
  double gamma = 0.0;           // sqrt(2 / min_quadratic), +inf for a singular minimum
  double condition_number = 0.0;  // eta_max / eta_min of C, +inf when singular
  std::optional<double> eta;    // r sqrt(2) / gamma when a radius is given
};

/// Local prox-regularity of the contact set. The simplex minimum comes from
/// multi-start projected gradient, refined by exhaustive face enumeration when
/// m <= 3. Throws ValidationError on an empty contact list.
ProxRegularity prox_regularity_diagnostic(std::span<const ContactConstraint> contacts,
                                          std::optional<double> radius = std::nullopt);

/// Euclidean projection onto {x >= 0, sum x = 1}.
Eigen::VectorXd project_to_simplex(const Eigen::VectorXd& x);

}  // namespace crowd
