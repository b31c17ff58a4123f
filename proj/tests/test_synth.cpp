#include <catch2/catch_amalgamated.hpp>

#include <sstream>

#include "evsweep/event_io.hpp"
#include "evsweep/synth.hpp"

using namespace evsweep;

namespace {

SceneSpec single_point_scene() {
  // A tiny quad whose four edge samples collapse to roughly one pixel; the
  // camera slides sideways just enough to cross one pixel boundary.
  SceneSpec scene;
  PlaneSpec p;
  const double eps = 1e-4;
  p.corners = {Eigen::Vector3d(0, 0, 1), Eigen::Vector3d(eps, 0, 1),
               Eigen::Vector3d(eps, eps, 1), Eigen::Vector3d(0, eps, 1)};
  p.edge_point_density = 1.0;  // one sample per edge
  scene.planes.push_back(p);
  scene.trajectory.kind = TrajectorySpec::Kind::kLinear;
  scene.trajectory.start = Eigen::Vector3d::Zero();
  scene.trajectory.end = Eigen::Vector3d::Zero();
  scene.trajectory.duration = 1.0;
  scene.trajectory.sample_rate = 100.0;
  scene.z_min = 0.5;
  scene.z_max = 2.0;
  return scene;
}

}  // namespace

TEST_CASE("a static camera generates no events", "[synth]") {
  const auto data = generate(single_point_scene(), davis_calibration());
  CHECK(data.events.empty());
  CHECK(data.trajectory.size() == 101);
}

TEST_CASE("one pixel crossing emits exactly one event per moving point", "[synth]") {
  SceneSpec scene = single_point_scene();
  // fx = 200, depth 1: moving 1/200 m shifts the projection by exactly 1 px;
  // 0.003 m crosses the x.5 boundary once (0 -> 0.6 px).
  scene.trajectory.end = Eigen::Vector3d(-0.003, 0.0, 0.0);
  const auto data = generate(scene, davis_calibration());
  // 4 edge samples, but the quad is ~1e-4 wide: all land on the same pixel
  // track, each crossing once
  CHECK(data.events.size() == 4);
  for (const auto& e : data.events) CHECK(e.p == +1);  // first event of each point
}

TEST_CASE("generated events are ordered, in bounds, and parseable", "[synth]") {
  const Calibration cal = davis_calibration();
  const auto data = generate(three_planes_scene(120.0), cal);
  REQUIRE_FALSE(data.events.empty());
  double last_t = -1.0;
  for (const auto& e : data.events) {
    CHECK(e.t >= last_t);
    last_t = e.t;
    CHECK(e.x >= 0);
    CHECK(e.x < cal.w);
    CHECK(e.y >= 0);
    CHECK(e.y < cal.h);
    CHECK((e.p == 1 || e.p == -1));
  }

  // self-hosting round trip through the text formats
  std::ostringstream events_txt, traj_txt;
  write_events(events_txt, data.events);
  write_trajectory(traj_txt, data.trajectory);
  std::istringstream events_in(events_txt.str()), traj_in(traj_txt.str());
  CHECK(parse_events(events_in, cal.w, cal.h).size() == data.events.size());
  CHECK(parse_trajectory(traj_in).size() == data.trajectory.size());
}

TEST_CASE("polarity alternates per point", "[synth]") {
  // Quad whose four edge samples sit on exact pixel centers, two rows of two
  // columns; all four cross each boundary at the same trajectory sample, so
  // events cycle through the points in index order.
  SceneSpec scene;
  PlaneSpec p;
  p.corners = {Eigen::Vector3d(0, 0, 1), Eigen::Vector3d(0.01, 0, 1),
               Eigen::Vector3d(0.01, 0.4, 1), Eigen::Vector3d(0, 0.4, 1)};
  p.edge_point_density = 2.0;  // one sample per edge
  scene.planes.push_back(p);
  scene.trajectory.start = Eigen::Vector3d::Zero();
  scene.trajectory.end = Eigen::Vector3d(-0.02, 0.0, 0.0);  // 4 px of travel
  scene.trajectory.duration = 1.0;
  scene.trajectory.sample_rate = 100.0;
  scene.z_min = 0.5;
  scene.z_max = 2.0;

  const auto data = generate(scene, davis_calibration());
  REQUIRE(data.events.size() == 16);  // 4 points x 4 crossings
  int last_p[4] = {0, 0, 0, 0};
  std::size_t idx = 0;
  for (const auto& e : data.events) {
    const int point = static_cast<int>(idx++ % 4);
    if (last_p[point] != 0) CHECK(e.p == -last_p[point]);
    last_p[point] = e.p;
  }
}

TEST_CASE("scene outside the depth envelope is rejected", "[synth]") {
  SceneSpec scene = single_point_scene();
  scene.z_min = 1.5;  // plane sits at depth 1.0 < z_min
  CHECK_THROWS_AS(generate(scene, davis_calibration()), ValidationError);
}

TEST_CASE("ground truth agrees with the plane equations", "[synth]") {
  const Calibration cal = davis_calibration();
  const SceneSpec scene = three_planes_scene();
  const GroundTruth gt(scene.planes);
  // plane 1 occupies x in [-0.22, 0.02], y in [-0.30, 0.22] at z = 1 as seen
  // from the origin; its pixel footprint is x in [76, 124], y in [30, 134]
  for (double x : {80.0, 100.0, 120.0})
    for (double y : {35.0, 90.0, 130.0}) {
      const auto d = gt.depth(Pose::identity(), cal, x, y);
      REQUIRE(d);
      CHECK(*d == Catch::Approx(1.0).margin(1e-12));
    }
  // left of every plane footprint: no surface
  const auto gap = gt.depth(Pose::identity(), cal, 50.0, 90.0);
  CHECK_FALSE(gap);
  // plane 2 at z = 1.5: x in [0.15, 0.55] -> px [140, 193.3]
  const auto d2 = gt.depth(Pose::identity(), cal, 160.0, 90.0);
  REQUIRE(d2);
  CHECK(*d2 == Catch::Approx(1.5).margin(1e-12));
}

TEST_CASE("abs_rel worked examples", "[synth]") {
  const Calibration cal = davis_calibration();
  const SceneSpec scene = three_planes_scene();
  const GroundTruth gt(scene.planes);

  DepthMap dm;
  dm.w = cal.w;
  dm.h = cal.h;
  dm.depth.assign(static_cast<std::size_t>(cal.w) * cal.h, std::numeric_limits<double>::quiet_NaN());
  dm.confidence.assign(dm.depth.size(), 0.0);

  SECTION("empty map is an error") {
    CHECK_THROWS_AS(abs_rel(dm, gt, cal), UndefinedMetricError);
  }
  SECTION("exact estimate has zero error") {
    dm.depth[90 * 240 + 100] = 1.0;  // on plane 1
    CHECK(abs_rel(dm, gt, cal) == Catch::Approx(0.0).margin(1e-12));
  }
  SECTION("ten percent high on one pixel") {
    dm.depth[90 * 240 + 100] = 1.1;
    CHECK(abs_rel(dm, gt, cal) == Catch::Approx(0.1).margin(1e-9));
  }
  SECTION("uniform doubling gives error 1") {
    dm.depth[90 * 240 + 100] = 2.0;
    dm.depth[30 * 240 + 80] = 2.0;
    CHECK(abs_rel(dm, gt, cal) == Catch::Approx(1.0).margin(1e-9));
  }
  SECTION("pixels without ground truth are skipped") {
    dm.depth[90 * 240 + 100] = 1.1;
    dm.depth[90 * 240 + 50] = 3.0;  // no surface behind this pixel
    const auto r = abs_rel_detailed(dm, gt, cal);
    CHECK(r.used == 1);
    CHECK(r.skipped == 1);
    CHECK(r.value == Catch::Approx(0.1).margin(1e-9));
  }
}

TEST_CASE("builtin scene yields roughly the advertised event count", "[synth]") {
  const auto data = generate(three_planes_scene(), davis_calibration());
  CHECK(data.events.size() > 120'000);
  CHECK(data.events.size() < 400'000);
}
