#pragma once

#include "optsens/linalg.hpp"
#include "optsens/model.hpp"
#include "optsens/observability.hpp"
#include "optsens/sensors.hpp"

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace optsens {

/// Raised when the reduced basis cannot certify the requested accuracy.
class CertificateError : public Error {
 public:
  using Error::Error;
};

inline constexpr const char* kRBSpaceHeader = "RBSPACE-v1";

struct ErrorCertificate {
  std::vector<Vector> thetas;
  Vector eps_theta;  // +inf where no certificate is available
  double eps_max = 0.0;
};

/// Reduced coefficients of u_R(theta, e_i) for all i, n x M.
using ReducedStates = Matrix;

/// Galerkin reduced basis for the affine forward problem with an offline/online
/// residual dual-norm certificate.
///
/// The basis is X-orthonormal, so reduced coefficient vectors carry the state
/// norm directly: |V c|_X = |c|_2.
class RBSpace {
 public:
  RBSpace() = default;
  /// Empty space for a model; snapshots are added with enrich().
  explicit RBSpace(const Model& model, double coercivity_reference);

  [[nodiscard]] Index size() const { return basis_.cols(); }
  [[nodiscard]] Index param_dim() const { return reduced_loads_.cols(); }
  [[nodiscard]] const Matrix& basis() const { return basis_; }
  [[nodiscard]] const std::vector<Matrix>& reduced_stiffness() const { return reduced_stiffness_; }
  [[nodiscard]] const Matrix& reduced_loads() const { return reduced_loads_; }
  [[nodiscard]] const Matrix& library_projection() const { return library_projection_; }
  [[nodiscard]] const SubspaceDecomposition& param_decomposition() const { return param_decomposition_; }
  [[nodiscard]] double coercivity_reference() const { return coercivity_reference_; }

  /// alpha_LB(theta) = min_q c_q(theta) * alpha(reference); valid because every
  /// stiffness component is positive semidefinite.
  [[nodiscard]] double coercivity_lower_bound(const Vector& theta) const;

  /// X-orthonormalizes `state` against the basis and appends it. Returns false
  /// when the state is numerically contained in the span already.
  bool enrich(const Model& model, const Vector& state);

  /// Precomputes the sensor values l_k(v_j) of every basis vector.
  void attach_library(const SensorLibrary& library);

  [[nodiscard]] ReducedStates reduced_state_matrix(const Vector& theta) const;
  /// Reduced coefficients for parameter m.
  [[nodiscard]] Vector rb_solve(const Vector& theta, const Vector& m) const;
  [[nodiscard]] Vector lift(const Vector& coefficients) const { return basis_ * coefficients; }

  /// Certified relative error bound for one parameter m; nullopt when the
  /// absolute bound reaches |u_R(m)| and no relative statement is possible.
  [[nodiscard]] std::optional<double> error_estimate(const Vector& theta, const Vector& m) const;
  /// Absolute bound |u - u_R|_X <= |r|_{X'} / alpha_LB.
  [[nodiscard]] double absolute_error_bound(const Vector& theta, const Vector& m) const;
  /// eps_theta = sup over m of the relative bound; +inf if unavailable.
  [[nodiscard]] double relative_error_bound(const Vector& theta) const;

  /// Observability of the reduced model; minimizer_state is in reduced coordinates.
  [[nodiscard]] ObservabilityResult beta_rb(const Vector& theta, const ObservationOperator& op) const;
  [[nodiscard]] ObservabilityResult beta_rb_pair(const Vector& theta1, const Vector& theta2,
                                                 const ObservationOperator& op) const;

  void save(std::ostream& out, const std::string& config_hash) const;
  /// Reads a saved space; returns the stored config hash through `config_hash`.
  [[nodiscard]] static RBSpace load(std::istream& in, std::string& config_hash);

 private:
  [[nodiscard]] Matrix reduced_stiffness_at(const Vector& theta) const;
  [[nodiscard]] Matrix residual_weights(const Vector& theta, const ReducedStates& states) const;
  [[nodiscard]] Matrix ptg_rb(const ObservationOperator& op, const Matrix& states) const;
  void refresh_residual_factor(const Model& model);

  Matrix basis_;
  std::vector<Matrix> reduced_stiffness_;
  std::vector<AffineCoefficient> coefficients_;
  Matrix reduced_loads_;
  Matrix library_projection_;
  // Upper-triangular R with |r|_{X'} = |R w| for the residual coordinate vector
  // w = [m; -c_1(theta) c; ...; -c_Q(theta) c].
  Matrix residual_factor_;
  SubspaceDecomposition param_decomposition_;
  HyperParameterDomain domain_;
  double coercivity_reference_ = 0.0;
};

/// Smallest eigenvalue of (sum_q A_q, X) by inverse iteration, scaled by a
/// safety factor so that it underestimates the true value.
[[nodiscard]] double reference_coercivity(const Model& model, double safety = 0.99);

struct RBBuildOptions {
  double eps_target = 0.01;
  Index max_basis = 120;
};

struct RBBuildResult {
  RBSpace space;
  ErrorCertificate certificate;
  std::vector<double> history;  // max training estimate before each enrichment, then the final value
};

/// Greedy construction: repeatedly enrich with the truth state that is worst
/// represented at the training point with the largest certified bound, until
/// every training bound is <= eps_target. Throws CertificateError otherwise.
[[nodiscard]] RBBuildResult build_rb(const Model& model, const std::vector<Vector>& xi_train,
                                     const RBBuildOptions& options = {});

/// Per-theta certified bounds over a set of hyper-parameters.
[[nodiscard]] ErrorCertificate certify(const RBSpace& rb, const std::vector<Vector>& thetas);

}  // namespace optsens
