// TLE parsing and circular propagation.

#include <exospin/orbit.hpp>

#include <gtest/gtest.h>

#include <cmath>
#include <fstream>
#include <string>

using namespace exospin;
using namespace exospin::orbit;

namespace {

const std::string kName = "CSS (TIANHE)";
const std::string kLine1 = "1 48274U 21035A   22140.00000000  .00010000  00000-0  11000-3 0  9991";
const std::string kLine2 = "2 48274  41.4500  84.9800 0000000   0.0000   0.0000 15.61000000 56341";

TwoLineElement station() { return parse_tle(kName + "\n" + kLine1 + "\n" + kLine2 + "\n"); }

TwoLineElement with_plane(double inclination_deg, double raan_deg) {
    TwoLineElement tle = station();
    tle.inclination = inclination_deg * constants::deg2rad;
    tle.raan = raan_deg * constants::deg2rad;
    return tle;
}

} // namespace

TEST(ParseTle, StationElements) {
    const auto tle = station();
    EXPECT_EQ(tle.name, "CSS (TIANHE)");
    EXPECT_EQ(tle.norad_id, 48274);
    EXPECT_EQ(tle.international_designator, "21035A");
    EXPECT_DOUBLE_EQ(tle.inclination, 41.45 * constants::deg2rad);
    EXPECT_DOUBLE_EQ(tle.raan, 84.98 * constants::deg2rad);
    EXPECT_DOUBLE_EQ(tle.mean_motion, 15.61);
    EXPECT_EQ(tle.eccentricity, 0.0);
    EXPECT_DOUBLE_EQ(tle.bstar, 0.11e-3);
    EXPECT_EQ(tle.revolution_number, 5634);
    EXPECT_DOUBLE_EQ(tle.epoch, time::parse_iso8601("2022-05-20T00:00:00Z"));
}

TEST(ParseTle, ShippedFileMatches) {
    std::ifstream in(EXOSPIN_DATA_DIR "/css_2022-05-20.tle");
    const auto tle = load_tle(in);
    EXPECT_DOUBLE_EQ(tle.mean_motion, 15.61);
    EXPECT_DOUBLE_EQ(tle.inclination, station().inclination);
}

TEST(ParseTle, WithoutNameLine) {
    const auto tle = parse_tle(kLine1 + "\r\n" + kLine2 + "\r\n");
    EXPECT_TRUE(tle.name.empty());
    EXPECT_EQ(tle.norad_id, 48274);
}

TEST(ParseTle, ChecksumMismatch) {
    std::string bad = kLine2;
    bad[68] = bad[68] == '9' ? '0' : static_cast<char>(bad[68] + 1);
    try {
        parse_tle(kLine1 + "\n" + bad);
        FAIL() << "expected integrity error";
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::integrity);
        EXPECT_NE(std::string(e.what()).find("line 2"), std::string::npos);
    }
}

TEST(ParseTle, ShortLine) {
    try {
        parse_tle(kLine1 + "\n" + kLine2.substr(0, 60));
        FAIL() << "expected format error";
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::format);
    }
}

TEST(ParseTle, UnparseableFieldNamesColumns) {
    std::string bad = kLine2;
    bad.replace(8, 8, " 41.4x00");
    bad[68] = static_cast<char>('0' + tle_checksum(bad));
    try {
        parse_tle(kLine1 + "\n" + bad);
        FAIL() << "expected parse error";
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::parse);
        EXPECT_NE(std::string(e.what()).find("columns 9-16"), std::string::npos);
    }
}

TEST(ParseTle, ImpliedDecimalEccentricity) {
    std::string l2 = kLine2;
    l2.replace(26, 7, "0004521");
    l2[68] = static_cast<char>('0' + tle_checksum(l2));
    EXPECT_DOUBLE_EQ(parse_tle(kLine1 + "\n" + l2).eccentricity, 0.0004521);
}

TEST(PropagateCircular, PeriodRadiusAndSpeed) {
    const auto series = propagate_circular(station(), 86400.0, 60.0);
    // 86400 / 15.61 and a = (GM (86400 / (2 pi 15.61))^2)^(1/3), computed independently.
    EXPECT_NEAR(series.period(), 5534.913516976298, 1e-6);
    EXPECT_NEAR(series.radius, 6762904.25942426, 1e-3);
    EXPECT_NEAR(series.samples.front().velocity_eci.norm(), 7677.189633830139, 1e-6);
    EXPECT_NEAR(series.samples.front().velocity_eci.norm(), 7670.0, 0.01 * 7670.0);
    EXPECT_EQ(series.size(), 1440u);
}

TEST(PropagateCircular, EquatorialOrbitStaysInPlane) {
    const auto series = propagate_circular(with_plane(0.0, 0.0), 20000.0, 60.0);
    for (const auto& s : series.samples) {
        EXPECT_EQ(s.position_eci.z(), 0.0);
    }
}

TEST(PropagateCircular, RejectsBadStep) {
    EXPECT_THROW(propagate_circular(station(), 1000.0, 0.0), Error);
    EXPECT_THROW(propagate_circular(station(), 1000.0, -1.0), Error);
    EXPECT_THROW(propagate_circular(station(), 10.0, 60.0), Error);
}

TEST(PropagateCircular, ConservesRadiusSpeedAndPlaneOverTwelveDays) {
    const auto series = propagate_circular(station(), 12.0 * 86400.0, 60.0);
    const double r0 = series.radius;
    const double v0 = r0 * series.angular_rate;
    const Eigen::Vector3d n0 = series.plane_normal();
    double prev_t = -1.0;
    for (const auto& s : series.samples) {
        EXPECT_GT(s.t, prev_t);
        prev_t = s.t;
        EXPECT_NEAR(s.position_eci.norm(), r0, 1e-9 * r0);
        EXPECT_NEAR(s.velocity_eci.norm(), v0, 1e-9 * v0);
        const Eigen::Vector3d n = s.position_eci.cross(s.velocity_eci).normalized();
        EXPECT_LT((n - n0).norm(), 1e-9);
        EXPECT_NEAR(s.position_ecef.norm(), r0, 1e-9 * r0);
    }
}

TEST(PropagateCircular, VelocityIsDerivativeOfPosition) {
    const auto tle = station();
    const auto base = propagate_circular(tle, 120.0, 60.0);
    const double h = 1.0;
    auto at = [&](double offset) {
        return propagate_circular(tle, 120.0, 60.0, base.start_epoch + offset).samples[0];
    };
    const auto p2 = at(2 * h), p1 = at(h), m1 = at(-h), m2 = at(-2 * h);
    const Eigen::Vector3d fd =
        (-p2.position_eci + 8.0 * p1.position_eci - 8.0 * m1.position_eci + m2.position_eci) / (12.0 * h);
    EXPECT_LT((fd - base.samples[0].velocity_eci).norm(), 1e-4);
    const Eigen::Vector3d fd_ecef =
        (-p2.position_ecef + 8.0 * p1.position_ecef - 8.0 * m1.position_ecef + m2.position_ecef) / (12.0 * h);
    EXPECT_LT((fd_ecef - base.samples[0].velocity_ecef).norm(), 1e-3);
}

TEST(Frames, RoundTripIsIdentity) {
    const Eigen::Vector3d v(6.7e6, -1.2e6, 3.3e6);
    for (double angle : {0.0, 0.3, 2.0, 5.9}) {
        const Eigen::Vector3d back = ecef_to_eci(eci_to_ecef(v, angle), angle);
        EXPECT_LT((back - v).norm(), 1e-12 * v.norm());
    }
}

TEST(PropagateCircular, EquatorCrossingsRegressByEarthRotation) {
    const auto series = propagate_circular(station(), 3.0 * 86400.0, 1.0);
    std::vector<double> crossing_longitudes;
    for (std::size_t k = 1; k < series.size(); ++k) {
        const auto& p = series.samples[k - 1];
        const auto& q = series.samples[k];
        if (p.position_eci.z() < 0.0 && q.position_eci.z() >= 0.0) {
            const double f = -p.position_eci.z() / (q.position_eci.z() - p.position_eci.z());
            const Eigen::Vector3d x = p.position_ecef + f * (q.position_ecef - p.position_ecef);
            crossing_longitudes.push_back(std::atan2(x.y(), x.x()));
        }
    }
    ASSERT_GE(crossing_longitudes.size(), 3u);
    const double expected = -constants::omega_earth * series.period();
    for (std::size_t k = 1; k < crossing_longitudes.size(); ++k) {
        const double shift = std::remainder(crossing_longitudes[k] - crossing_longitudes[k - 1],
                                            constants::two_pi);
        EXPECT_NEAR(shift, expected, 1e-4);
    }
}

TEST(RelativeVelocity, AxisCellDoesNotCorotate) {
    const auto series = propagate_circular(station(), 600.0, 60.0);
    const auto& s = series.samples[3];
    const Eigen::Vector3d v = relative_velocity(s, {0.0, 0.0, 4.0e6});
    EXPECT_EQ(v, s.velocity_eci);
}

TEST(RelativeVelocity, EquatorialSurfaceCell) {
    const auto series = propagate_circular(station(), 600.0, 60.0);
    const auto& s = series.samples[0];
    const Eigen::Vector3d cell(6.371e6, 0.0, 0.0);
    const Eigen::Vector3d cell_velocity = s.velocity_eci - relative_velocity(s, cell);
    // omega_earth * 6.371e6
    EXPECT_NEAR(cell_velocity.norm(), 464.580703989, 1e-6);
}

TEST(RelativeVelocity, CorotatingSensorSeesZero) {
    OrbitSample s;
    s.earth_angle = 1.234;
    const Eigen::Vector3d cell_ecef(5.0e6, 1.0e6, 2.0e6);
    s.position_eci = ecef_to_eci(cell_ecef, s.earth_angle);
    s.velocity_eci = earth_rotation_vector().cross(s.position_eci);
    EXPECT_LT(relative_velocity(s, cell_ecef).norm(), 1e-12);
}

TEST(OrbitCsv, HeaderAndRows) {
    const auto series = propagate_circular(station(), 180.0, 60.0);
    const std::string csv = orbit_csv(series);
    EXPECT_EQ(csv.substr(0, csv.find('\n')), "t,x_eci,y_eci,z_eci,vx,vy,vz,x_ecef,y_ecef,z_ecef");
    EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 4);
}
