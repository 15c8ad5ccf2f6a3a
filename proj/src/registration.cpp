#include "uvatar/registration.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>
#include <unsupported/Eigen/AutoDiff>

#include "uvatar/geometry.hpp"

namespace uvatar {

namespace {

using Dual = Eigen::AutoDiffScalar<Eigen::VectorXd>;

VectorX<Dual> seed(const Eigen::VectorXd& x, int offset, int total) {
    VectorX<Dual> out(x.size());
    for (Eigen::Index i = 0; i < x.size(); ++i) out(i) = Dual(x(i), total, offset + int(i));
    return out;
}

// Matrix L with L^T L = precision.
Eigen::MatrixXd sqrt_precision(const GaussianPrior& prior) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(prior.precision);
    const Eigen::VectorXd roots = eig.eigenvalues().cwiseMax(0.0).cwiseSqrt();
    return roots.asDiagonal() * eig.eigenvectors().transpose();
}

void check_prior(const GaussianPrior& prior, int dim, const char* what) {
    if (prior.dim() != dim) {
        throw InputError(std::string(what) + " prior has dimension " + std::to_string(prior.dim()) + ", expected " +
                         std::to_string(dim));
    }
    prior.validate();
}

}  // namespace

void GaussianPrior::validate() const {
    if (precision.rows() != mean.size() || precision.cols() != mean.size()) {
        throw InputError("prior: precision must be " + std::to_string(mean.size()) + "x" + std::to_string(mean.size()));
    }
    if (!mean.allFinite() || !precision.allFinite()) throw InputError("prior: non-finite values");
    if ((precision - precision.transpose()).cwiseAbs().maxCoeff() > 1e-9) {
        throw InputError("prior: precision matrix is not symmetric");
    }
    if (mean.size() == 0) return;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(precision, Eigen::EigenvaluesOnly);
    const double scale = std::max(1.0, eig.eigenvalues().cwiseAbs().maxCoeff());
    if (eig.eigenvalues().minCoeff() < -1e-9 * scale) throw InputError("prior: precision has a negative eigenvalue");
}

GaussianPrior GaussianPrior::isotropic(int dim, double precision) {
    return {Eigen::VectorXd::Zero(dim), precision * Eigen::MatrixXd::Identity(dim, dim)};
}

double mahalanobis(const Eigen::VectorXd& x, const GaussianPrior& prior) {
    if (x.size() != prior.dim()) throw InputError("mahalanobis: dimension mismatch");
    const Eigen::VectorXd d = x - prior.mean;
    return std::max(0.0, d.dot(prior.precision * d));
}

double geman_mcclure(double r, double sigma) {
    if (!(sigma > 0.0)) throw InputError("geman_mcclure: sigma must be positive");
    const double r2 = r * r;
    if (std::isinf(r2)) return 1.0;
    return r2 / (r2 + sigma * sigma);
}

namespace {

struct FitTerms {
    Eigen::VectorXd residual;
    Eigen::MatrixXd jacobian;  // empty unless requested
    int detections = 0;
    double reprojection_sq = 0.0;  // unweighted, over used detections
};

void check_views(const BodyTemplate& body, const std::vector<JointObservations>& views) {
    for (const auto& view : views) {
        if (view.joints.rows() != body.num_joints()) {
            throw InputError("joints2d for camera '" + view.camera.id + "': expected " +
                             std::to_string(body.num_joints()) + " joints, got " + std::to_string(view.joints.rows()));
        }
        view.camera.validate();
    }
}

template <typename Scalar>
void collect_reprojection(const std::vector<JointObservations>& views, const Points<Scalar>& posed,
                          std::vector<Scalar>& residuals, FitTerms& terms) {
    for (const auto& view : views) {
        for (Eigen::Index k = 0; k < view.joints.rows(); ++k) {
            const double conf = view.joints(k, 2);
            if (!(conf > 0.0)) continue;
            Vector2<Scalar> px;
            const Vector3<Scalar> x = posed.row(k).transpose();
            if (!project_point<Scalar>(view.camera, x, px)) continue;
            const double w = std::sqrt(conf);
            const Scalar ex = px(0) - view.joints(k, 0);
            const Scalar ey = px(1) - view.joints(k, 1);
            residuals.push_back(w * ex);
            residuals.push_back(w * ey);
            terms.reprojection_sq += std::pow(scalar_value(ex), 2) + std::pow(scalar_value(ey), 2);
            ++terms.detections;
        }
    }
}

FitTerms fit_terms(const BodyTemplate& body, const std::vector<JointObservations>& views,
                   const GaussianPrior& pose_prior, const GaussianPrior& shape_prior, const FitOptions& options,
                   const Eigen::VectorXd& pose, const Eigen::VectorXd& shape, bool with_jacobian) {
    const int np = body.num_pose_params();
    const int ns = body.num_shape();
    const int n = np + ns;
    FitTerms terms;
    std::vector<double> values;
    std::vector<Eigen::VectorXd> rows;
    if (with_jacobian) {
        const Points<Dual> posed = posed_joints<Dual>(body, seed(pose, 0, n), seed(shape, np, n));
        std::vector<Dual> residuals;
        collect_reprojection<Dual>(views, posed, residuals, terms);
        for (const Dual& r : residuals) {
            values.push_back(r.value());
            rows.push_back(r.derivatives().size() == n ? r.derivatives() : Eigen::VectorXd::Zero(n));
        }
    } else {
        const PointCloud posed = posed_joints<double>(body, pose, shape);
        std::vector<double> residuals;
        collect_reprojection<double>(views, posed, residuals, terms);
        values = residuals;
    }
    const Eigen::MatrixXd lp = std::sqrt(options.lambda_pose) * sqrt_precision(pose_prior);
    const Eigen::MatrixXd ls = std::sqrt(options.lambda_shape) * sqrt_precision(shape_prior);
    const int m = int(values.size());
    terms.residual.resize(m + np + ns);
    for (int i = 0; i < m; ++i) terms.residual(i) = values[i];
    terms.residual.segment(m, np) = lp * (pose - pose_prior.mean);
    terms.residual.segment(m + np, ns) = ls * (shape - shape_prior.mean);
    if (with_jacobian) {
        terms.jacobian = Eigen::MatrixXd::Zero(m + np + ns, n);
        for (int i = 0; i < m; ++i) terms.jacobian.row(i) = rows[i].transpose();
        terms.jacobian.block(m, 0, np, np) = lp;
        terms.jacobian.block(m + np, np, ns, ns) = ls;
    }
    return terms;
}

bool cameras_degenerate(const std::vector<JointObservations>& views) {
    std::vector<Vec3> axes;
    for (const auto& view : views) {
        if ((view.joints.col(2).array() > 0.0).any()) axes.push_back(view.camera.optical_axis());
    }
    if (axes.empty()) return false;
    for (size_t i = 1; i < axes.size(); ++i) {
        if (axes[i].cross(axes[0]).norm() > 1e-9) return false;
    }
    return true;
}

}  // namespace

double fit_energy(const BodyTemplate& body, const std::vector<JointObservations>& views,
                  const GaussianPrior& pose_prior, const GaussianPrior& shape_prior, const FitOptions& options,
                  const Eigen::VectorXd& pose, const Eigen::VectorXd& shape, Eigen::VectorXd* gradient) {
    detail::check_pose_shape(body, pose.size(), shape.size());
    check_prior(pose_prior, body.num_pose_params(), "pose");
    check_prior(shape_prior, body.num_shape(), "shape");
    check_views(body, views);
    const FitTerms terms =
        fit_terms(body, views, pose_prior, shape_prior, options, pose, shape, gradient != nullptr);
    if (gradient) *gradient = 2.0 * terms.jacobian.transpose() * terms.residual;
    return terms.residual.squaredNorm();
}

FitResult fit_pose_shape(const BodyTemplate& body, const std::vector<JointObservations>& views,
                         const GaussianPrior& pose_prior, const GaussianPrior& shape_prior,
                         const FitOptions& options) {
    const int np = body.num_pose_params();
    const int ns = body.num_shape();
    const int n = np + ns;
    check_prior(pose_prior, np, "pose");
    check_prior(shape_prior, ns, "shape");
    check_views(body, views);
    if (!(options.lambda_pose >= 0.0) || !(options.lambda_shape >= 0.0)) {
        throw InputError("joint fit: prior weights must be non-negative");
    }
    if (!options.free.empty() && int(options.free.size()) != n) {
        throw InputError("joint fit: free-parameter mask must have " + std::to_string(n) + " entries");
    }
    std::vector<int> free_index;
    for (int i = 0; i < n; ++i) {
        if (options.free.empty() || options.free[i]) free_index.push_back(i);
    }
    const int nf = int(free_index.size());

    Eigen::VectorXd params(n);
    params << pose_prior.mean, shape_prior.mean;
    auto split = [&](const Eigen::VectorXd& p) { return std::make_pair(p.head(np).eval(), p.tail(ns).eval()); };

    FitResult result;
    result.degenerate_cameras = cameras_degenerate(views);
    auto [pose0, shape0] = split(params);
    FitTerms terms = fit_terms(body, views, pose_prior, shape_prior, options, pose0, shape0, true);
    double energy = terms.residual.squaredNorm();
    double damping = -1.0;
    int it = 0;
    for (; it < options.max_iterations && nf > 0; ++it) {
        Eigen::MatrixXd jf(terms.jacobian.rows(), nf);
        for (int c = 0; c < nf; ++c) jf.col(c) = terms.jacobian.col(free_index[c]);
        const Eigen::MatrixXd jtj = jf.transpose() * jf;
        const Eigen::VectorXd g = jf.transpose() * terms.residual;
        if (energy == 0.0 || g.lpNorm<Eigen::Infinity>() <= 1e-300) {
            result.converged = true;
            break;
        }
        if (damping < 0.0) damping = 1e-4 * std::max(jtj.diagonal().maxCoeff(), 1e-12);
        bool accepted = false;
        bool stalled = false;
        while (!accepted) {
            Eigen::MatrixXd a = jtj;
            a.diagonal().array() += damping;
            const Eigen::VectorXd step = a.ldlt().solve(-g);
            Eigen::VectorXd trial = params;
            for (int c = 0; c < nf; ++c) trial(free_index[c]) += step(c);
            auto [tp, ts] = split(trial);
            const FitTerms trial_terms = fit_terms(body, views, pose_prior, shape_prior, options, tp, ts, false);
            const double trial_energy = trial_terms.residual.squaredNorm();
            if (std::isfinite(trial_energy) && trial_energy < energy) {
                const bool tiny = step.norm() <= 1e-14 * (params.norm() + 1e-14) ||
                                  energy - trial_energy <= 1e-16 * energy;
                params = trial;
                energy = trial_energy;
                damping = std::max(damping / 3.0, 1e-15);
                accepted = true;
                stalled = tiny;
            } else {
                damping *= 4.0;
                if (damping > 1e20) {
                    stalled = true;
                    break;
                }
            }
        }
        if (stalled) {
            result.converged = true;
            if (accepted) ++it;
            break;
        }
        auto [p, s] = split(params);
        terms = fit_terms(body, views, pose_prior, shape_prior, options, p, s, true);
        energy = terms.residual.squaredNorm();
    }
    if (nf == 0) result.converged = true;
    auto [pose, shape] = split(params);
    const FitTerms final_terms = fit_terms(body, views, pose_prior, shape_prior, options, pose, shape, false);
    result.pose = pose;
    result.shape = shape;
    result.energy = final_terms.residual.squaredNorm();
    result.used_detections = final_terms.detections;
    result.rmse = final_terms.detections > 0 ? std::sqrt(final_terms.reprojection_sq / final_terms.detections) : 0.0;
    result.iterations = it;
    return result;
}

Eigen::VectorXd coupling_weights(const BodyTemplate& body, const RegistrationConfig& config) {
    const int n = body.num_vertices();
    if (config.coupling.size() > 0) {
        if (config.coupling.size() != n) {
            throw InputError("registration: coupling weights need one entry per vertex (" + std::to_string(n) + ")");
        }
        if ((config.coupling.array() < 0.0).any()) throw InputError("registration: negative coupling weight");
        return config.coupling;
    }
    const std::vector<int> dominant = body.dominant_joint();
    Eigen::VectorXd w(n);
    for (int v = 0; v < n; ++v) {
        const bool extremity = std::find(body.extremity_joints.begin(), body.extremity_joints.end(), dominant[v]) !=
                               body.extremity_joints.end();
        w(v) = extremity ? config.extremity_weight : config.body_weight;
    }
    return w;
}

namespace {

void check_registration_inputs(const Scan& scan, const BodyTemplate& body, const Eigen::VectorXd& pose,
                               const Eigen::VectorXd& shape, const GaussianPrior& pose_prior,
                               const GaussianPrior& shape_prior, const RegistrationConfig& config) {
    detail::check_pose_shape(body, pose.size(), shape.size());
    check_prior(pose_prior, body.num_pose_params(), "pose");
    check_prior(shape_prior, body.num_shape(), "shape");
    if (scan.points.rows() < 10) {
        throw InputError("registration: scan has " + std::to_string(scan.points.rows()) +
                         " points, at least 10 are required");
    }
    if (!scan.points.allFinite()) throw InputError("registration: scan contains non-finite coordinates");
    if (!(config.sigma > 0.0)) throw InputError("registration: sigma must be positive");
    if (!(config.lambda_pose >= 0.0) || !(config.lambda_shape >= 0.0) || !(config.body_weight >= 0.0) ||
        !(config.extremity_weight >= 0.0)) {
        throw InputError("registration: weights must be non-negative");
    }
}

double data_energy(const Scan& scan, const TriangleBvh& bvh, double sigma) {
    double sum = 0.0;
    for (Eigen::Index s = 0; s < scan.points.rows(); ++s) {
        const SurfacePoint sp = bvh.closest_point(scan.points.row(s).transpose());
        sum += geman_mcclure(sp.distance, sigma);
    }
    return sum;
}

EnergyBreakdown energy_at(const Scan& scan, const BodyTemplate& body, const Eigen::VectorXd& pose,
                          const Eigen::VectorXd& shape, const PointCloud& vertices, const PointCloud& model,
                          const GaussianPrior& pose_prior, const GaussianPrior& shape_prior,
                          const RegistrationConfig& config, const Eigen::VectorXd& weights) {
    EnergyBreakdown e;
    e.data = data_energy(scan, TriangleBvh(vertices, body.faces), config.sigma);
    e.coupling = (weights.array() * (vertices - model).rowwise().squaredNorm().array()).sum();
    e.pose_prior = config.lambda_pose * mahalanobis(pose, pose_prior);
    e.shape_prior = config.lambda_shape * mahalanobis(shape, shape_prior);
    return e;
}

// Closed-form minimizer of the reweighted point-to-point data term plus coupling
// and a proximal term; the three axes share one N x N system.
PointCloud solve_vertices(const Scan& scan, const BodyTemplate& body, const PointCloud& current,
                          const PointCloud& model, const Eigen::VectorXd& weights, double sigma, double damping) {
    const int n = body.num_vertices();
    const TriangleBvh bvh(current, body.faces);
    std::vector<Eigen::Triplet<double>> triplets;
    Eigen::MatrixXd rhs = Eigen::MatrixXd::Zero(n, 3);
    for (Eigen::Index s = 0; s < scan.points.rows(); ++s) {
        const Vec3 x = scan.points.row(s).transpose();
        const SurfacePoint sp = bvh.closest_point(x);
        const double d2 = sp.distance * sp.distance;
        const double omega = sigma * sigma / ((d2 + sigma * sigma) * (d2 + sigma * sigma));
        for (int a = 0; a < 3; ++a) {
            const int va = body.faces(sp.face, a);
            const double ba = sp.barycentric[a];
            rhs.row(va) += omega * ba * x.transpose();
            for (int b = 0; b < 3; ++b) {
                triplets.emplace_back(va, body.faces(sp.face, b), omega * ba * sp.barycentric[b]);
            }
        }
    }
    for (int v = 0; v < n; ++v) {
        triplets.emplace_back(v, v, weights(v) + damping);
        rhs.row(v) += weights(v) * model.row(v) + damping * current.row(v);
    }
    Eigen::SparseMatrix<double> h(n, n);
    h.setFromTriplets(triplets.begin(), triplets.end());
    const double ridge = 1e-12 * std::max(1.0, h.diagonal().maxCoeff());
    for (int v = 0; v < n; ++v) h.coeffRef(v, v) += ridge;
    Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> solver(h);
    if (solver.info() != Eigen::Success) throw Error("registration: vertex system factorization failed");
    const Eigen::MatrixXd solution = solver.solve(rhs);
    PointCloud out(n, 3);
    for (int v = 0; v < n; ++v) {
        // Vertices with neither data nor coupling keep their position.
        if (weights(v) + damping > 0.0 || h.coeff(v, v) > ridge) {
            out.row(v) = solution.row(v);
        } else {
            out.row(v) = current.row(v);
        }
    }
    return out;
}

struct CouplingTerms {
    Eigen::VectorXd residual;
    Eigen::MatrixXd jacobian;
};

// Residuals sqrt(w_i) (A_i - M_i(pose, shape)) followed by the two prior blocks.
CouplingTerms coupling_terms(const BodyTemplate& body, const Eigen::VectorXd& pose, const Eigen::VectorXd& shape,
                             const PointCloud& vertices, const Eigen::VectorXd& weights, const Eigen::MatrixXd& lp,
                             const Eigen::MatrixXd& ls, const GaussianPrior& pose_prior,
                             const GaussianPrior& shape_prior, bool with_jacobian) {
    const int nv = body.num_vertices();
    const int np = body.num_pose_params();
    const int ns = body.num_shape();
    const int n = np + ns;
    CouplingTerms out;
    out.residual.resize(3 * nv + np + ns);
    const PointCloud zero = zero_offsets(body);
    if (with_jacobian) {
        out.jacobian = Eigen::MatrixXd::Zero(3 * nv + np + ns, n);
        const Points<Dual> model = skin_vertices<Dual>(body, seed(pose, 0, n), seed(shape, np, n), zero);
        for (int v = 0; v < nv; ++v) {
            const double sw = std::sqrt(weights(v));
            for (int a = 0; a < 3; ++a) {
                const Dual& m = model(v, a);
                out.residual(3 * v + a) = sw * (vertices(v, a) - m.value());
                if (m.derivatives().size() == n) out.jacobian.row(3 * v + a) = -sw * m.derivatives().transpose();
            }
        }
        out.jacobian.block(3 * nv, 0, np, np) = lp;
        out.jacobian.block(3 * nv + np, np, ns, ns) = ls;
    } else {
        const PointCloud model = skin_vertices<double>(body, pose, shape, zero);
        for (int v = 0; v < nv; ++v) {
            const double sw = std::sqrt(weights(v));
            for (int a = 0; a < 3; ++a) out.residual(3 * v + a) = sw * (vertices(v, a) - model(v, a));
        }
    }
    out.residual.segment(3 * nv, np) = lp * (pose - pose_prior.mean);
    out.residual.segment(3 * nv + np, ns) = ls * (shape - shape_prior.mean);
    return out;
}

}  // namespace

EnergyBreakdown registration_energy(const Scan& scan, const BodyTemplate& body, const Eigen::VectorXd& pose,
                                    const Eigen::VectorXd& shape, const PointCloud& vertices,
                                    const GaussianPrior& pose_prior, const GaussianPrior& shape_prior,
                                    const RegistrationConfig& config) {
    check_registration_inputs(scan, body, pose, shape, pose_prior, shape_prior, config);
    detail::check_offsets(body, vertices);
    const PointCloud model = skin(body, pose, shape, zero_offsets(body)).vertices;
    return energy_at(scan, body, pose, shape, vertices, model, pose_prior, shape_prior, config,
                     coupling_weights(body, config));
}

Eigen::VectorXd registration_gradient(const Scan& scan, const BodyTemplate& body, const Eigen::VectorXd& pose,
                                      const Eigen::VectorXd& shape, const PointCloud& vertices,
                                      const GaussianPrior& pose_prior, const GaussianPrior& shape_prior,
                                      const RegistrationConfig& config) {
    check_registration_inputs(scan, body, pose, shape, pose_prior, shape_prior, config);
    detail::check_offsets(body, vertices);
    const int nv = body.num_vertices();
    const int np = body.num_pose_params();
    const int ns = body.num_shape();
    const Eigen::VectorXd weights = coupling_weights(body, config);
    Eigen::VectorXd grad = Eigen::VectorXd::Zero(np + ns + 3 * nv);
    auto grad_a = [&](int v, int a) -> double& { return grad(np + ns + 3 * v + a); };

    const double s2 = config.sigma * config.sigma;
    const TriangleBvh bvh(vertices, body.faces);
    for (Eigen::Index s = 0; s < scan.points.rows(); ++s) {
        const Vec3 x = scan.points.row(s).transpose();
        const SurfacePoint sp = bvh.closest_point(x);
        const double d2 = sp.distance * sp.distance;
        // d rho / d c = -2 sigma^2 / (d^2 + sigma^2)^2 (x - c), c = sum_j b_j A_j.
        const Vec3 dc = -2.0 * s2 / ((d2 + s2) * (d2 + s2)) * (x - sp.point);
        for (int k = 0; k < 3; ++k) {
            for (int a = 0; a < 3; ++a) grad_a(body.faces(sp.face, k), a) += sp.barycentric[k] * dc[a];
        }
    }

    const int n = np + ns;
    const Points<Dual> model = skin_vertices<Dual>(body, seed(pose, 0, n), seed(shape, np, n), zero_offsets(body));
    for (int v = 0; v < nv; ++v) {
        for (int a = 0; a < 3; ++a) {
            const double diff = vertices(v, a) - model(v, a).value();
            grad_a(v, a) += 2.0 * weights(v) * diff;
            if (model(v, a).derivatives().size() == n) {
                grad.head(n) -= 2.0 * weights(v) * diff * model(v, a).derivatives();
            }
        }
    }
    grad.head(np) += 2.0 * config.lambda_pose * pose_prior.precision * (pose - pose_prior.mean);
    grad.segment(np, ns) += 2.0 * config.lambda_shape * shape_prior.precision * (shape - shape_prior.mean);
    return grad;
}

namespace {

// Damped Gauss-Newton on (pose, shape) for fixed A; each step must decrease
// the coupling-plus-prior energy.
void refine_pose_shape(const BodyTemplate& body, Eigen::VectorXd& pose, Eigen::VectorXd& shape,
                       const PointCloud& vertices, const Eigen::VectorXd& weights, const Eigen::MatrixXd& lp,
                       const Eigen::MatrixXd& ls, const GaussianPrior& pose_prior, const GaussianPrior& shape_prior,
                       int iterations, double& damping) {
    const int np = body.num_pose_params();
    const int ns = body.num_shape();
    CouplingTerms terms = coupling_terms(body, pose, shape, vertices, weights, lp, ls, pose_prior, shape_prior, true);
    double energy = terms.residual.squaredNorm();
    for (int it = 0; it < iterations; ++it) {
        const Eigen::MatrixXd jtj = terms.jacobian.transpose() * terms.jacobian;
        const Eigen::VectorXd g = terms.jacobian.transpose() * terms.residual;
        if (damping < 0.0) damping = 1e-6 * std::max(jtj.diagonal().maxCoeff(), 1e-12);
        bool accepted = false;
        while (!accepted && damping < 1e20) {
            Eigen::MatrixXd a = jtj;
            a.diagonal().array() += damping;
            const Eigen::VectorXd step = a.ldlt().solve(-g);
            const Eigen::VectorXd tp = pose + step.head(np);
            const Eigen::VectorXd ts = shape + step.tail(ns);
            const double trial = coupling_terms(body, tp, ts, vertices, weights, lp, ls, pose_prior, shape_prior, false)
                                     .residual.squaredNorm();
            if (std::isfinite(trial) && trial < energy) {
                pose = tp;
                shape = ts;
                damping = std::max(damping / 3.0, 1e-15);
                accepted = true;
            } else {
                damping *= 4.0;
            }
        }
        if (!accepted) return;
        terms = coupling_terms(body, pose, shape, vertices, weights, lp, ls, pose_prior, shape_prior, true);
        energy = terms.residual.squaredNorm();
    }
}

std::string trace_text(const std::vector<double>& trace) {
    std::ostringstream out;
    out << "energy trace:";
    for (double e : trace) out << ' ' << e;
    return out.str();
}

}  // namespace

Registration register_scan(const Scan& scan, const BodyTemplate& body, const Eigen::VectorXd& pose,
                           const Eigen::VectorXd& shape, const GaussianPrior& pose_prior,
                           const GaussianPrior& shape_prior, const RegistrationConfig& config) {
    check_registration_inputs(scan, body, pose, shape, pose_prior, shape_prior, config);
    const Eigen::VectorXd weights = coupling_weights(body, config);
    const Eigen::MatrixXd lp = std::sqrt(config.lambda_pose) * sqrt_precision(pose_prior);
    const Eigen::MatrixXd ls = std::sqrt(config.lambda_shape) * sqrt_precision(shape_prior);
    const PointCloud zero = zero_offsets(body);

    Registration reg;
    reg.pose = pose;
    reg.shape = shape;
    PointCloud model = skin(body, pose, shape, zero).vertices;
    reg.vertices = model;
    reg.energy = energy_at(scan, body, reg.pose, reg.shape, reg.vertices, model, pose_prior, shape_prior, config,
                           weights);
    reg.trace.push_back(reg.energy.total());
    if (!std::isfinite(reg.energy.total())) throw Error("registration diverged (non-finite energy); " + trace_text(reg.trace));

    double damping = config.damping;
    double gn_damping = -1.0;
    int consecutive_rejections = 0;
    for (int it = 0; it < config.outer_iterations; ++it) {
        const PointCloud vertices =
            solve_vertices(scan, body, reg.vertices, model, weights, config.sigma, damping);
        Eigen::VectorXd trial_pose = reg.pose;
        Eigen::VectorXd trial_shape = reg.shape;
        refine_pose_shape(body, trial_pose, trial_shape, vertices, weights, lp, ls, pose_prior, shape_prior,
                          config.pose_shape_iterations, gn_damping);
        const PointCloud trial_model = skin(body, trial_pose, trial_shape, zero).vertices;
        const EnergyBreakdown trial = energy_at(scan, body, trial_pose, trial_shape, vertices, trial_model,
                                                pose_prior, shape_prior, config, weights);
        if (!std::isfinite(trial.total())) {
            reg.trace.push_back(trial.total());
            throw Error("registration diverged (non-finite energy); " + trace_text(reg.trace));
        }
        const double previous = reg.energy.total();
        if (trial.total() <= previous) {
            reg.pose = trial_pose;
            reg.shape = trial_shape;
            reg.vertices = vertices;
            model = trial_model;
            reg.energy = trial;
            reg.trace.push_back(trial.total());
            ++reg.accepted;
            consecutive_rejections = 0;
            damping = std::max(damping / config.damping_factor, 1e-12);
            if (previous - trial.total() <= config.tolerance * std::max(previous, 1e-300)) break;
        } else {
            ++reg.rejected;
            damping = std::max(damping, 1e-6) * config.damping_factor;
            if (++consecutive_rejections >= 6) break;
        }
    }
    return reg;
}

}  // namespace uvatar
