#include <doctest.h>

#include <cmath>
#include <numbers>

#include <Eigen/Eigenvalues>

#include "support.hpp"
#include "uvatar/geometry.hpp"
#include "uvatar/registration.hpp"

using namespace uvatar;
using test::humanoid;

namespace {

std::vector<JointObservations> exact_detections(const BodyTemplate& body, const std::vector<Camera>& cams,
                                                const Eigen::VectorXd& pose, const Eigen::VectorXd& shape) {
    const PointCloud j = posed_joints<double>(body, pose, shape);
    std::vector<JointObservations> views;
    for (const Camera& c : cams) {
        JointObservations obs{c, {}};
        obs.joints.resize(j.rows(), 3);
        for (int k = 0; k < j.rows(); ++k) {
            Vec2 px = Vec2::Zero();
            REQUIRE(project_point<double>(c, Vec3(j.row(k).transpose()), px));
            obs.joints.row(k) << px.x(), px.y(), 1.0;
        }
        views.push_back(obs);
    }
    return views;
}

double brute_distance(const Vec3& p, const PointCloud& v, const Triangles& f) {
    double best = std::numeric_limits<double>::infinity();
    for (int i = 0; i < f.rows(); ++i) {
        best = std::min(best, closest_point_on_triangle(p, v.row(f(i, 0)), v.row(f(i, 1)), v.row(f(i, 2))).distance);
    }
    return best;
}

}  // namespace

TEST_CASE("Geman-McClure kernel") {
    for (const double sigma : {0.01, 0.05, 1.0, 3.0}) {
        CHECK(geman_mcclure(0.0, sigma) == 0.0);
        CHECK(geman_mcclure(sigma, sigma) == 0.5);
        double previous = 0.0;
        for (double r = sigma / 16; r < 1e4 * sigma; r *= 1.7) {
            const double rho = geman_mcclure(r, sigma);
            CHECK(rho == geman_mcclure(-r, sigma));
            CHECK(rho < 1.0);
            CHECK(rho >= previous);
            previous = rho;
        }
        CHECK(geman_mcclure(1e9 * sigma, sigma) == doctest::Approx(1.0));
    }
}

TEST_CASE("Mahalanobis distance") {
    GaussianPrior prior = GaussianPrior::isotropic(2);
    prior.mean = Eigen::Vector2d(1.0, -1.0);
    CHECK(mahalanobis(prior.mean, prior) == 0.0);
    CHECK(mahalanobis(Eigen::Vector2d(4.0, 3.0), prior) == doctest::Approx(25.0));

    std::mt19937_64 rng(6);
    for (int i = 0; i < 20; ++i) {
        const Eigen::MatrixXd a = Eigen::MatrixXd::Random(6, 6);
        GaussianPrior p;
        p.precision = a * a.transpose() + 0.1 * Eigen::MatrixXd::Identity(6, 6);
        p.mean = test::gaussian_vector(rng, 6, 1.0);
        const Eigen::VectorXd x = test::gaussian_vector(rng, 6, 1.0);
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(p.precision);
        const Eigen::VectorXd z = eig.eigenvectors().transpose() * (x - p.mean);
        const double spectral = (eig.eigenvalues().array() * z.array().square()).sum();
        CHECK(std::abs(mahalanobis(x, p) - spectral) < 1e-9 * std::max(1.0, spectral));
    }

    GaussianPrior bad = GaussianPrior::isotropic(2);
    bad.precision(0, 1) = 5.0;
    CHECK_THROWS_AS(bad.validate(), InputError);
}

TEST_CASE("pinhole projection") {
    Camera cam;
    cam.fx = cam.fy = 1000.0;
    cam.cx = cam.cy = 500.0;
    const Projection on_axis = project(cam, PointCloud(Vec3(0, 0, 3).transpose()));
    CHECK(on_axis.pixels(0, 0) == 500.0);
    CHECK(on_axis.pixels(0, 1) == 500.0);
    const Projection p = project(cam, PointCloud(Vec3(0.1, 0, 1).transpose()));
    CHECK(p.pixels(0, 0) == doctest::Approx(600.0));
    CHECK(p.pixels(0, 1) == doctest::Approx(500.0));
    CHECK_FALSE(project(cam, PointCloud(Vec3(0, 0, -1).transpose())).valid(0));

    std::mt19937_64 rng(1);
    for (int i = 0; i < 50; ++i) {
        Camera c = look_at(test::gaussian_vector(rng, 3, 3.0) + Vec3(0, 0, 8), Vec3::Zero(), 400 + i, 320, 240);
        c.cx += 3.5;
        Eigen::Matrix<double, 3, 4> rt;
        rt << c.rotation, c.translation;
        Mat3 k;
        k << c.fx, 0, c.cx, 0, c.fy, c.cy, 0, 0, 1;
        const Eigen::Matrix<double, 3, 4> proj = k * rt;
        const Vec3 x = test::gaussian_vector(rng, 3, 0.5);
        const Vec3 h = proj * x.homogeneous();
        const Projection out = project(c, PointCloud(x.transpose()));
        REQUIRE(out.valid(0));
        CHECK(std::abs(out.pixels(0, 0) - h.x() / h.z()) < 1e-9);
        CHECK(std::abs(out.pixels(0, 1) - h.y() / h.z()) < 1e-9);
    }
}

TEST_CASE("closest point queries") {
    const ModelDescriptor& model = humanoid();
    const PointCloud& v = model.body.vertices;
    const Triangles& f = model.body.faces;
    const TriangleBvh bvh(v, f);
    CHECK(bvh.closest_point(v.row(10).transpose()).distance == 0.0);

    const Vec3 a(0, 0, 0), b(1, 0, 0), c(0, 1, 0);
    const SurfacePoint above = closest_point_on_triangle(Vec3(0.2, 0.3, 0.7), a, b, c);
    CHECK(above.distance == doctest::Approx(0.7));
    CHECK((above.barycentric - Vec3(0.5, 0.2, 0.3)).norm() < 1e-12);

    std::mt19937_64 rng(12);
    std::uniform_real_distribution<double> u(-0.6, 0.6), h(-0.2, 2.0);
    double worst = 0.0;
    for (int i = 0; i < 1000; ++i) {
        const Vec3 p(u(rng), h(rng), u(rng));
        worst = std::max(worst, std::abs(bvh.closest_point(p).distance - brute_distance(p, v, f)));
    }
    CHECK(worst < 1e-12);
}

TEST_CASE("joint-fit gradient matches central differences") {
    const BodyTemplate& body = humanoid().body;
    const int np = body.num_pose_params(), ns = body.num_shape();
    RingSpec ring;
    const std::vector<Camera> cams = camera_ring(ring);
    std::mt19937_64 rng(14);
    const auto views = exact_detections(body, cams, test::gaussian_vector(rng, np, 0.2), test::gaussian_vector(rng, ns, 1.0));
    GaussianPrior pp = GaussianPrior::isotropic(np, 2.0), sp = GaussianPrior::isotropic(ns, 0.5);
    pp.mean = test::gaussian_vector(rng, np, 0.1);
    const FitOptions options;

    int worst_point = -1;
    double worst = 0.0;
    for (int trial = 0; trial < 20; ++trial) {
        const Eigen::VectorXd pose = test::gaussian_vector(rng, np, 0.3);
        const Eigen::VectorXd shape = test::gaussian_vector(rng, ns, 1.0);
        Eigen::VectorXd grad;
        fit_energy(body, views, pp, sp, options, pose, shape, &grad);
        Eigen::VectorXd fd(np + ns);
        for (int i = 0; i < np + ns; ++i) {
            const double h = 1e-6;
            Eigen::VectorXd p1 = pose, p2 = pose, s1 = shape, s2 = shape;
            if (i < np) {
                p1(i) += h;
                p2(i) -= h;
            } else {
                s1(i - np) += h;
                s2(i - np) -= h;
            }
            fd(i) = (fit_energy(body, views, pp, sp, options, p1, s1) - fit_energy(body, views, pp, sp, options, p2, s2)) /
                    (2 * h);
        }
        const double rel = (grad - fd).norm() / std::max(fd.norm(), 1e-12);
        if (rel > worst) {
            worst = rel;
            worst_point = trial;
        }
    }
    INFO("worst point " << worst_point);
    CHECK(worst < 1e-4);
}

TEST_CASE("joint fit") {
    const BodyTemplate& body = humanoid().body;
    const int np = body.num_pose_params(), ns = body.num_shape();
    const GaussianPrior pp = GaussianPrior::isotropic(np), sp = GaussianPrior::isotropic(ns);
    std::mt19937_64 rng(15);
    const Eigen::VectorXd pose = test::gaussian_vector(rng, np, 0.2);
    const Eigen::VectorXd shape = test::gaussian_vector(rng, ns, 1.0);

    SUBCASE("exact detections in eight views") {
        RingSpec ring;
        auto views = exact_detections(body, camera_ring(ring), pose, shape);
        FitOptions options;
        options.lambda_pose = options.lambda_shape = 1e-6;
        const FitResult fit = fit_pose_shape(body, views, pp, sp, options);
        CHECK(fit.rmse < 1e-4);
        CHECK(fit.used_detections == 8 * body.num_joints());
        CHECK_FALSE(fit.degenerate_cameras);
    }

    SUBCASE("no usable detections returns the prior mean") {
        RingSpec ring;
        auto views = exact_detections(body, camera_ring(ring), pose, shape);
        for (auto& v : views) v.joints.col(2).setZero();
        GaussianPrior shifted = pp;
        shifted.mean = test::gaussian_vector(rng, np, 0.1);
        const FitResult fit = fit_pose_shape(body, views, shifted, sp);
        CHECK(fit.pose == shifted.mean);
        CHECK(fit.shape == sp.mean);
        CHECK(fit.used_detections == 0);
    }

    SUBCASE("single camera, root rotation only") {
        RingSpec ring;
        ring.count = 1;
        Eigen::VectorXd root = Eigen::VectorXd::Zero(np);
        root.head<3>() = Vec3(0.1, 0.6, -0.05);
        auto views = exact_detections(body, camera_ring(ring), root, Eigen::VectorXd::Zero(ns));
        FitOptions options;
        options.lambda_pose = options.lambda_shape = 1e-6;
        options.free.assign(np + ns, false);
        for (int i = 0; i < 3; ++i) options.free[i] = true;
        const FitResult fit = fit_pose_shape(body, views, pp, sp, options);
        CHECK(fit.rmse < 1e-3);
        CHECK(fit.degenerate_cameras);
        CHECK(fit.pose.tail(np - 3).norm() == 0.0);
        // The in-image rotation is observable; only the depth direction is ambiguous.
        const Camera& cam = views[0].camera;
        const Mat3 truth = cam.rotation * rodrigues<double>(Vec3(root.head<3>()));
        const Mat3 found = cam.rotation * rodrigues<double>(Vec3(fit.pose.head<3>()));
        const Vec3 up_truth = truth.col(1), up_found = found.col(1);
        const double roll_truth = std::atan2(up_truth.x(), up_truth.y());
        const double roll_found = std::atan2(up_found.x(), up_found.y());
        CHECK(std::abs(roll_truth - roll_found) < 1e-3);
    }

    SUBCASE("bad inputs") {
        RingSpec ring;
        auto views = exact_detections(body, camera_ring(ring), pose, shape);
        views[0].joints.conservativeResize(3, 3);
        CHECK_THROWS_AS(fit_pose_shape(body, views, pp, sp), InputError);
        CHECK_THROWS_AS(fit_pose_shape(body, {}, GaussianPrior::isotropic(4), sp), InputError);
    }
}

TEST_CASE("registration gradient matches central differences") {
    const ModelDescriptor& model = humanoid();
    const BodyTemplate& body = model.body;
    const int np = body.num_pose_params(), ns = body.num_shape(), n = body.num_vertices();
    std::mt19937_64 rng(16);
    const Eigen::VectorXd pose = test::gaussian_vector(rng, np, 0.2);
    const Eigen::VectorXd shape = test::gaussian_vector(rng, ns, 1.0);
    const Scan scan{synth_scan(body, pose, shape, zero_offsets(body), 400, 0.01, 3), {}};
    const PointCloud a = skin(body, pose, shape, zero_offsets(body)).vertices + test::gaussian_points(rng, n, 0.01);
    GaussianPrior pp = GaussianPrior::isotropic(np), sp = GaussianPrior::isotropic(ns, 2.0);
    RegistrationConfig config;
    config.sigma = 0.02;
    const Eigen::VectorXd p0 = pose + test::gaussian_vector(rng, np, 0.05);
    const Eigen::VectorXd grad = registration_gradient(scan, body, p0, shape, a, pp, sp, config);
    REQUIRE(grad.size() == np + ns + 3 * n);

    auto energy = [&](const Eigen::VectorXd& x) {
        PointCloud verts(n, 3);
        for (int i = 0; i < n; ++i) verts.row(i) = x.segment<3>(np + ns + 3 * i).transpose();
        return registration_energy(scan, body, x.head(np), x.segment(np, ns), verts, pp, sp, config).total();
    };
    Eigen::VectorXd x(np + ns + 3 * n);
    x.head(np) = p0;
    x.segment(np, ns) = shape;
    for (int i = 0; i < n; ++i) x.segment<3>(np + ns + 3 * i) = a.row(i).transpose();

    std::vector<int> coords;
    for (int i = 0; i < np + ns; ++i) coords.push_back(i);
    std::uniform_int_distribution<int> pick(np + ns, int(x.size()) - 1);
    for (int i = 0; i < 60; ++i) coords.push_back(pick(rng));
    Eigen::VectorXd g(coords.size()), fd(coords.size());
    for (size_t c = 0; c < coords.size(); ++c) {
        const double h = 1e-7;
        Eigen::VectorXd xp = x, xm = x;
        xp(coords[c]) += h;
        xm(coords[c]) -= h;
        fd(c) = (energy(xp) - energy(xm)) / (2 * h);
        g(c) = grad(coords[c]);
    }
    CHECK((g - fd).norm() / fd.norm() < 1e-4);
}

TEST_CASE("registration") {
    const ModelDescriptor& model = humanoid();
    const BodyTemplate& body = model.body;
    const int np = body.num_pose_params(), ns = body.num_shape();
    const Eigen::VectorXd pose = Eigen::VectorXd::Zero(np), shape = Eigen::VectorXd::Zero(ns);
    const GaussianPrior pp = GaussianPrior::isotropic(np), sp = GaussianPrior::isotropic(ns);
    const PointCloud rest = skin(body, pose, shape, zero_offsets(body)).vertices;

    SUBCASE("scan of the template itself leaves the registration on the model") {
        const Scan scan{synth_scan(body, pose, shape, zero_offsets(body), 2000, 0.0, 4), {}};
        RegistrationConfig config;
        config.outer_iterations = 5;
        const Registration reg = register_scan(scan, body, pose, shape, pp, sp, config);
        CHECK((reg.vertices - rest).rowwise().norm().maxCoeff() < 1e-5);
        for (size_t i = 1; i < reg.trace.size(); ++i) CHECK(reg.trace[i] <= reg.trace[i - 1]);
    }

    SUBCASE("hands and feet are held closer to the model") {
        const Eigen::VectorXd w = coupling_weights(body, RegistrationConfig{});
        const std::vector<int> dominant = body.dominant_joint();
        int hand = -1, torso = -1;
        for (int v = 0; v < body.num_vertices(); ++v) {
            if (hand < 0 && w(v) == 10.0 && dominant[v] == body.extremity_joints[0]) hand = v;
            if (torso < 0 && w(v) == 1.0 && dominant[v] == 1) torso = v;
        }
        REQUIRE(hand >= 0);
        REQUIRE(torso >= 0);
        const PointCloud normals = vertex_normals(rest, body.faces);
        PointCloud pts = synth_scan(body, pose, shape, zero_offsets(body), 4000, 0.0, 5);
        const double radius = 0.03, push = 0.01;
        for (const int v : {hand, torso}) {
            const Vec3 c = rest.row(v).transpose();
            for (int i = 0; i < pts.rows(); ++i) {
                if ((pts.row(i).transpose() - c).norm() < radius) pts.row(i) += push * normals.row(v);
            }
        }
        RegistrationConfig config;
        config.outer_iterations = 10;
        config.body_weight = 100.0;  // comparable to the data stiffness 2 / sigma^2
        config.extremity_weight = 1000.0;
        const Registration reg = register_scan(Scan{pts, {}}, body, pose, shape, pp, sp, config);
        const PointCloud m = skin(body, reg.pose, reg.shape, zero_offsets(body)).vertices;
        const double hand_dev = (reg.vertices.row(hand) - m.row(hand)).norm();
        const double torso_dev = (reg.vertices.row(torso) - m.row(torso)).norm();
        CHECK(torso_dev > 1e-3);
        CHECK(hand_dev < torso_dev);
    }

    SUBCASE("input checks") {
        const Scan tiny{rest.topRows(5), {}};
        CHECK_THROWS_AS(register_scan(tiny, body, pose, shape, pp, sp), InputError);
        Scan bad{rest, {}};
        bad.points(3, 1) = std::nan("");
        CHECK_THROWS_AS(register_scan(bad, body, pose, shape, pp, sp), InputError);
    }
}
