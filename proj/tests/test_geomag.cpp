// Geomagnetic spherical-harmonic model tests.

#include <exospin/geomag.hpp>

#include <gtest/gtest.h>

#include <cmath>
#include <fstream>
#include <random>
#include <sstream>

using namespace exospin;
using namespace exospin::geomag;

namespace {

GaussCoefficientSet load_wmm2020() {
    std::ifstream in(EXOSPIN_DATA_DIR "/WMM2020.COF");
    return load_coefficients(in);
}

GaussCoefficientSet dipole(double g10) {
    std::istringstream in("2020.0 TEST 01/01/2020\n  1  0  " + std::to_string(g10) + "  0\n");
    return load_coefficients(in);
}

// Publisher test-value table (WMM2020, epoch 2020.0): geodetic height [km],
// geodetic latitude and longitude [deg], X Y Z [nT].
struct TestPoint {
    double height_km, lat_deg, lon_deg, x, y, z;
};
constexpr TestPoint kWmmTestValues[] = {
    {0, 80, 0, 6570.4, -146.3, 54606.0},
    {0, 0, 120, 39624.3, 109.9, -10932.5},
    {0, -80, 240, 5940.6, 15772.1, -52480.8},
    {100, 80, 0, 6261.8, -185.5, 52429.1},
    {100, 0, 120, 37636.7, 104.9, -10474.8},
    {100, -80, 240, 5744.9, 14799.5, -49969.4},
};

// WGS84 geodetic -> geocentric, then rotate the spherical field into the
// geodetic north/east/down frame.
Eigen::Vector3d geodetic_xyz_nT(const GaussCoefficientSet& coeffs, const TestPoint& tp) {
    constexpr double a = 6378137.0;
    constexpr double f = 1.0 / 298.257223563;
    const double e2 = f * (2.0 - f);
    const double lat = tp.lat_deg * constants::deg2rad;
    const double h = tp.height_km * 1000.0;
    const double rc = a / std::sqrt(1.0 - e2 * std::sin(lat) * std::sin(lat));
    const double xp = (rc + h) * std::cos(lat);
    const double zp = (rc * (1.0 - e2) + h) * std::sin(lat);
    const double r = std::hypot(xp, zp);
    const double lat_gc = std::asin(zp / r);

    GeoPosition pos{r, constants::pi / 2.0 - lat_gc, tp.lon_deg * constants::deg2rad};
    const FieldVector b = evaluate_field(coeffs, pos);
    const double north = -b.colatitudinal * 1e9;
    const double east = b.longitudinal * 1e9;
    const double down = -b.radial * 1e9;
    const double psi = lat_gc - lat;
    return {north * std::cos(psi) - down * std::sin(psi), east,
            north * std::sin(psi) + down * std::cos(psi)};
}

}  // namespace

TEST(LoadCoefficients, ReadsWmm2020) {
    const auto set = load_wmm2020();
    EXPECT_EQ(set.max_degree(), 12);
    EXPECT_DOUBLE_EQ(set.epoch, 2020.0);
    EXPECT_EQ(set.model_name, "WMM-2020");
    EXPECT_DOUBLE_EQ(set.g(1, 0), -29404.5);
    EXPECT_DOUBLE_EQ(set.h(1, 1), 4652.9);
    EXPECT_DOUBLE_EQ(set.g_dot(1, 0), 6.7);
    EXPECT_DOUBLE_EQ(set.h(12, 0), 0.0);
}

TEST(LoadCoefficients, MinimalDipoleFile) {
    const auto set = dipole(-30000);
    EXPECT_EQ(set.max_degree(), 1);
    EXPECT_DOUBLE_EQ(set.g(1, 0), -30000.0);
    EXPECT_DOUBLE_EQ(set.g(1, 1), 0.0);
}

TEST(LoadCoefficients, RejectsDegreeAboveTwelve) {
    std::istringstream in("2020.0 TEST 01/01/2020\n 13 0 1.0 0.0 0.0 0.0\n");
    try {
        load_coefficients(in);
        FAIL() << "expected validation error";
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::validation);
    }
}

TEST(LoadCoefficients, MalformedRowNamesLine) {
    std::istringstream in("2020.0 TEST 01/01/2020\n 1 0 -30000 0\n 1 x 2 3\n");
    try {
        load_coefficients(in);
        FAIL() << "expected parse error";
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::parse);
        EXPECT_NE(std::string(e.what()).find("line 3"), std::string::npos);
    }
}

TEST(LoadCoefficients, MissingHeader) {
    std::istringstream in(" 1 0 -30000 0 0 0\n");
    try {
        load_coefficients(in);
        FAIL() << "expected format error";
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::format);
    }
}

TEST(LoadCoefficients, NonZeroH0IsRejected) {
    std::istringstream in("2020.0 TEST 01/01/2020\n 1 0 -30000 5\n");
    EXPECT_THROW(load_coefficients(in), Error);
}

TEST(EvaluateField, DipoleEquator) {
    const auto set = dipole(-30000);
    const FieldVector b =
        evaluate_field(set, {set.reference_radius(), constants::pi / 2.0, 0.3});
    EXPECT_NEAR(b.magnitude(), 3.0e-5, 1e-17);
    EXPECT_NEAR(b.radial, 0.0, 1e-18);
    EXPECT_NEAR(b.longitudinal, 0.0, 1e-18);
    EXPECT_NEAR(std::abs(b.colatitudinal), 3.0e-5, 1e-17);
}

TEST(EvaluateField, DipolePole) {
    const auto set = dipole(-30000);
    const FieldVector b = evaluate_field(set, {set.reference_radius(), 0.0, 0.0});
    EXPECT_NEAR(b.magnitude(), 6.0e-5, 1e-17);
    EXPECT_NEAR(std::abs(b.radial), 6.0e-5, 1e-17);
    EXPECT_NEAR(b.colatitudinal, 0.0, 1e-18);
    EXPECT_NEAR(b.longitudinal, 0.0, 1e-18);
}

TEST(EvaluateField, DipoleClosedFormEverywhere) {
    const auto set = dipole(-29404.5);
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> radius(constants::core_mantle_boundary, 4.2e7);
    std::uniform_real_distribution<double> colat(0.0, constants::pi);
    std::uniform_real_distribution<double> lon(-constants::pi, constants::pi);
    for (int i = 0; i < 500; ++i) {
        const GeoPosition pos{radius(rng), colat(rng), lon(rng)};
        const double s = std::pow(set.reference_radius() / pos.radius, 3) * -29404.5e-9;
        const double br = 2.0 * s * std::cos(pos.colatitude);
        const double bt = s * std::sin(pos.colatitude);
        const FieldVector b = evaluate_field(set, pos);
        const double mag = std::hypot(br, bt);
        EXPECT_NEAR(b.radial, br, 1e-12 * mag);
        EXPECT_NEAR(b.colatitudinal, bt, 1e-12 * mag);
        EXPECT_NEAR(b.longitudinal, 0.0, 1e-12 * mag);
    }
}

TEST(EvaluateField, MatchesPublisherTestValues) {
    const auto set = load_wmm2020();
    for (const auto& tp : kWmmTestValues) {
        const Eigen::Vector3d xyz = geodetic_xyz_nT(set, tp);
        EXPECT_NEAR(xyz.x(), tp.x, 0.1) << tp.lat_deg << " " << tp.lon_deg;
        EXPECT_NEAR(xyz.y(), tp.y, 0.1) << tp.lat_deg << " " << tp.lon_deg;
        EXPECT_NEAR(xyz.z(), tp.z, 0.1) << tp.lat_deg << " " << tp.lon_deg;
    }
}

TEST(EvaluateField, RefusesInsideCore) {
    const auto set = load_wmm2020();
    try {
        evaluate_field(set, {3.0e6, 1.0, 0.0});
        FAIL() << "expected domain error";
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::domain);
    }
    EXPECT_NO_THROW(evaluate_field(set, {constants::core_mantle_boundary, 1.0, 0.0}));
}

TEST(EvaluateField, TruncationBounds) {
    const auto set = load_wmm2020();
    EXPECT_THROW(evaluate_field(set, {7e6, 1.0, 0.0}, 0), Error);
    EXPECT_THROW(evaluate_field(set, {7e6, 1.0, 0.0}, 13), Error);
}

TEST(EvaluateField, TruncationIsSumOfDegreeContributions) {
    const auto set = load_wmm2020();
    const GeoPosition pos{6.79e6, 0.83, -2.1};
    for (int d = 1; d <= 12; ++d) {
        double r = 0.0, t = 0.0, p = 0.0;
        for (int n = 1; n <= d; ++n) {
            const FieldVector c = evaluate_degree(set, pos, n);
            r += c.radial;
            t += c.colatitudinal;
            p += c.longitudinal;
        }
        const FieldVector b = evaluate_field(set, pos, d);
        const double tol = 1e-12 * b.magnitude();
        EXPECT_NEAR(b.radial, r, tol);
        EXPECT_NEAR(b.colatitudinal, t, tol);
        EXPECT_NEAR(b.longitudinal, p, tol);
    }
}

TEST(EvaluateField, LongitudeShiftByTwoPi) {
    const auto set = load_wmm2020();
    const GeoPosition pos{5.0e6, 1.1, 0.7};
    const FieldVector a = evaluate_field(set, pos);
    const FieldVector b = evaluate_field(set, {pos.radius, pos.colatitude, pos.longitude + constants::two_pi});
    const double tol = 1e-12 * a.magnitude();
    EXPECT_NEAR(a.radial, b.radial, tol);
    EXPECT_NEAR(a.colatitudinal, b.colatitudinal, tol);
    EXPECT_NEAR(a.longitudinal, b.longitudinal, tol);
}

TEST(EvaluateField, DivergenceFree) {
    const auto set = load_wmm2020();
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> radius(3.6e6, 7.0e6);
    std::uniform_real_distribution<double> colat(0.2, constants::pi - 0.2);
    std::uniform_real_distribution<double> lon(-constants::pi, constants::pi);
    const double h = 100.0;
    for (int i = 0; i < 50; ++i) {
        const Eigen::Vector3d p = to_ecef(GeoPosition{radius(rng), colat(rng), lon(rng)});
        double div = 0.0;
        for (int axis = 0; axis < 3; ++axis) {
            Eigen::Vector3d step = Eigen::Vector3d::Zero();
            step[axis] = h;
            div += (field_ecef(set, p + step)[axis] - field_ecef(set, p - step)[axis]) / (2.0 * h);
        }
        const double bmag = field_ecef(set, p).norm();
        EXPECT_LT(std::abs(div), 1e-6 * bmag / h);
    }
}

TEST(EvaluateField, PolesAreFinite) {
    const auto set = load_wmm2020();
    for (double colat : {0.0, constants::pi}) {
        const FieldVector b = evaluate_field(set, {6.7e6, colat, 1.0});
        EXPECT_TRUE(std::isfinite(b.radial));
        EXPECT_TRUE(std::isfinite(b.colatitudinal));
        EXPECT_TRUE(std::isfinite(b.longitudinal));
    }
}
