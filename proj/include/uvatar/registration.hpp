#pragma once

#include <string>
#include <vector>

#include "uvatar/body_model.hpp"
#include "uvatar/camera.hpp"

namespace uvatar {

/// Gaussian with mean `mean` and precision (inverse covariance) `precision`.
struct GaussianPrior {
    Eigen::VectorXd mean;
    Eigen::MatrixXd precision;

    int dim() const { return int(mean.size()); }
    /// Throws InputError unless the precision is symmetric positive semi-definite.
    void validate() const;
    static GaussianPrior isotropic(int dim, double precision = 1.0);
};

/// (x - mean)^T precision (x - mean).
double mahalanobis(const Eigen::VectorXd& x, const GaussianPrior& prior);

/// r^2 / (r^2 + sigma^2).
double geman_mcclure(double r, double sigma);

/// 2D joint detections in one view: K rows of (x, y, confidence).
struct JointObservations {
    Camera camera;
    Eigen::Matrix<double, Eigen::Dynamic, 3, Eigen::RowMajor> joints;
};

struct FitOptions {
    double lambda_pose = 1.0;
    double lambda_shape = 1.0;
    int max_iterations = 200;
    /// Optional mask over the 3K + S parameters (pose then shape); empty = all free.
    std::vector<bool> free;
};

struct FitResult {
    Eigen::VectorXd pose;
    Eigen::VectorXd shape;
    double energy = 0.0;
    double rmse = 0.0;  // pixels, over used detections
    int used_detections = 0;
    int iterations = 0;
    bool converged = false;
    bool degenerate_cameras = false;  // every view shares one optical axis direction
};

/// Objective of the joint fit at (pose, shape): sum of confidence-weighted
/// squared reprojection errors plus both prior terms. When `gradient` is
/// non-null it receives the exact gradient (pose then shape).
double fit_energy(const BodyTemplate& body, const std::vector<JointObservations>& views,
                  const GaussianPrior& pose_prior, const GaussianPrior& shape_prior, const FitOptions& options,
                  const Eigen::VectorXd& pose, const Eigen::VectorXd& shape, Eigen::VectorXd* gradient = nullptr);

/// Damped Gauss-Newton with autodiff Jacobians, started at the prior means.
FitResult fit_pose_shape(const BodyTemplate& body, const std::vector<JointObservations>& views,
                         const GaussianPrior& pose_prior, const GaussianPrior& shape_prior,
                         const FitOptions& options = {});

struct Scan {
    PointCloud points;
    PointCloud normals;  // optional, may be empty
};

struct RegistrationConfig {
    double lambda_pose = 1.0;
    double lambda_shape = 1.0;
    double sigma = 0.05;            // Geman-McClure scale (m)
    double body_weight = 1.0;       // coupling weight of ordinary vertices
    double extremity_weight = 10.0; // coupling weight of hand and foot vertices
    Eigen::VectorXd coupling;       // explicit per-vertex weights; overrides the two above when set
    int outer_iterations = 30;
    int pose_shape_iterations = 3;  // Gauss-Newton steps on (pose, shape) per outer iteration
    double tolerance = 1e-8;        // relative energy decrease that ends the outer loop
    double damping = 1e-6;          // initial proximal weight on vertex updates
    double damping_factor = 10.0;
};

struct EnergyBreakdown {
    double data = 0.0;
    double coupling = 0.0;
    double pose_prior = 0.0;
    double shape_prior = 0.0;

    double total() const { return data + coupling + pose_prior + shape_prior; }
};

struct Registration {
    Eigen::VectorXd pose;
    Eigen::VectorXd shape;
    PointCloud vertices;  // free-form vertices A
    EnergyBreakdown energy;
    std::vector<double> trace;  // total energy at start and after every accepted outer iteration
    int accepted = 0;
    int rejected = 0;
};

/// Coupling weights: extremity_weight for vertices whose dominant joint is a
/// hand or foot joint, body_weight elsewhere (or config.coupling when given).
Eigen::VectorXd coupling_weights(const BodyTemplate& body, const RegistrationConfig& config);

/// Exact objective: sum_s rho(dist(x_s, A)) + sum_i w_i |A_i - M_i|^2 + priors.
EnergyBreakdown registration_energy(const Scan& scan, const BodyTemplate& body, const Eigen::VectorXd& pose,
                                    const Eigen::VectorXd& shape, const PointCloud& vertices,
                                    const GaussianPrior& pose_prior, const GaussianPrior& shape_prior,
                                    const RegistrationConfig& config);

/// Gradient of registration_energy with respect to (pose, shape, A row-major).
Eigen::VectorXd registration_gradient(const Scan& scan, const BodyTemplate& body, const Eigen::VectorXd& pose,
                                      const Eigen::VectorXd& shape, const PointCloud& vertices,
                                      const GaussianPrior& pose_prior, const GaussianPrior& shape_prior,
                                      const RegistrationConfig& config);

/// Alternating minimization: refresh closest-point correspondences on A,
/// solve the reweighted quadratic for A, then Gauss-Newton on (pose, shape).
/// Every outer iteration is checked against the exact energy and rejected
/// (with more damping) if it would increase it.
Registration register_scan(const Scan& scan, const BodyTemplate& body, const Eigen::VectorXd& pose,
                           const Eigen::VectorXd& shape, const GaussianPrior& pose_prior,
                           const GaussianPrior& shape_prior, const RegistrationConfig& config = {});

}  // namespace uvatar
