#include <catch2/catch_amalgamated.hpp>

#include <random>

#include "evsweep/quantized.hpp"
#include "support/oracles.hpp"

using namespace evsweep;

namespace {

Calibration plain_cal() {
  Calibration cal;
  cal.w = 240;
  cal.h = 180;
  cal.fx = cal.fy = 200.0;
  cal.cx = 120.0;
  cal.cy = 90.0;
  return cal;
}

QuantizedFrameCoords coords_of(const std::vector<Event>& events) {
  EventFrame f;
  f.events = events;
  return quantize_frame_coords(f);
}

}  // namespace

TEST_CASE("identity homography passes raws through unchanged", "[quantized]") {
  const auto coords = coords_of({{10.0, 20.0, 0, 1}, {107.25, 3.5, 0, 1}});
  const QuantizedHomography h = quantize_homography(Homography{});
  const auto pts = q_canonical_backproject(coords, h);
  REQUIRE(pts.pts.size() == 2);
  CHECK(pts.pts[0].x_raw == coords.x_raw[0]);
  CHECK(pts.pts[0].y_raw == coords.y_raw[0]);
  CHECK(pts.pts[1].x_raw == coords.x_raw[1]);
  CHECK(pts.pts[1].y_raw == coords.y_raw[1]);
}

TEST_CASE("axial scaling doubles raws without rounding error", "[quantized]") {
  const auto coords = coords_of({{10.25, 20.5, 0, 1}});
  Homography h;
  h.m = Eigen::Vector3d(2.0, 2.0, 1.0).asDiagonal();
  const auto pts = q_canonical_backproject(coords, quantize_homography(h));
  CHECK(pts.pts[0].x_raw == 2 * coords.x_raw[0]);
  CHECK(pts.pts[0].y_raw == 2 * coords.y_raw[0]);
}

TEST_CASE("zero homogeneous w invalidates the event", "[quantized]") {
  const auto coords = coords_of({{0.0, 0.0, 0, 1}});
  Homography h;
  h.m << 1, 0, 0, 0, 1, 0, 0, 0, 0;  // w row identically zero
  const auto pts = q_canonical_backproject(coords, quantize_homography(h));
  CHECK_FALSE(pts.pts[0].valid);
}

TEST_CASE("quantized canonical back-projection tracks the float path within bound", "[quantized]") {
  const Calibration cal = plain_cal();
  std::mt19937_64 rng(137);
  std::uniform_real_distribution<double> ux(0, cal.w - 1), uy(0, cal.h - 1);

  double max_err = 0.0;
  for (int rep = 0; rep < 10; ++rep) {
    const Pose event_pose = testing::random_pose(rng);
    const Pose ref_pose = testing::random_pose(rng);
    Homography h;
    try {
      h = compute_homography(event_pose, ref_pose, cal, 1.0);
    } catch (const DegenerateGeometryError&) {
      continue;
    }
    EventFrame frame;
    for (int i = 0; i < 100; ++i) frame.events.push_back({ux(rng), uy(rng), 0.0, 1});
    const auto qpts = q_canonical_backproject(quantize_frame_coords(frame), quantize_homography(h));
    const auto fpts = canonical_backproject(frame, h);
    for (std::size_t k = 0; k < frame.events.size(); ++k) {
      if (!qpts.pts[k].valid || !fpts.pts[k].valid) continue;
      const double qx = std::ldexp(static_cast<double>(qpts.pts[k].x_raw), -QCoord::frac_bits);
      const double qy = std::ldexp(static_cast<double>(qpts.pts[k].y_raw), -QCoord::frac_bits);
      if (std::abs(fpts.pts[k].x) > 250 || std::abs(fpts.pts[k].y) > 250) continue;  // saturation
      max_err = std::max({max_err, std::abs(qx - fpts.pts[k].x), std::abs(qy - fpts.pts[k].y)});
    }
  }
  CHECK(max_err <= 0.06);
}

TEST_CASE("identity coefficients round to the documented pixels on all planes", "[quantized]") {
  PropCoeffs phi;
  phi.cx = 0.0;
  phi.cy = 0.0;
  phi.planes.assign(4, {1.0, 0.0, 0.0});
  const auto phi_q = quantize_prop_coeffs(phi);

  QCanonicalPoints pts;
  pts.pts.push_back({static_cast<std::int32_t>(quantize<QCoord>(10.2).raw),
                     static_cast<std::int32_t>(quantize<QCoord>(20.7).raw), true});
  const DsiDims dims{240, 180, 4};
  const VoteBatch batch = q_generate_votes(pts, phi_q, dims);
  REQUIRE(batch.addrs.size() == 4);
  CHECK(batch.misses == 0);
  for (int i = 0; i < 4; ++i) CHECK(batch.addrs[i] == vote_address(10, 21, i, dims));
}

TEST_CASE("bounds are checked after rounding to integer pixels", "[quantized]") {
  PropCoeffs phi;
  phi.cx = 0.0;
  phi.cy = 0.0;
  phi.planes.assign(1, {1.0, 0.0, 0.0});
  const auto phi_q = quantize_prop_coeffs(phi);
  const DsiDims dims{240, 180, 1};

  // 239.4 rounds to 239: in bounds. 239.6 rounds to 240: miss.
  QCanonicalPoints in_pts;
  in_pts.pts.push_back({static_cast<std::int32_t>(quantize<QCoord>(239.4).raw),
                        static_cast<std::int32_t>(quantize<QCoord>(10.0).raw), true});
  CHECK(q_generate_votes(in_pts, phi_q, dims).addrs.size() == 1);

  QCanonicalPoints out_pts;
  out_pts.pts.push_back({static_cast<std::int32_t>(quantize<QCoord>(239.6).raw),
                         static_cast<std::int32_t>(quantize<QCoord>(10.0).raw), true});
  const VoteBatch batch = q_generate_votes(out_pts, phi_q, dims);
  CHECK(batch.addrs.empty());
  CHECK(batch.misses == 1);
}

TEST_CASE("quantized votes nearly always equal float votes, off-by-one otherwise", "[quantized]") {
  const Calibration cal = plain_cal();
  const DepthPlanes planes = make_depth_planes(0.8, 4.0, 50);
  const DsiDims dims{cal.w, cal.h, planes.count()};
  std::mt19937_64 rng(139);
  std::uniform_real_distribution<double> ux(0, cal.w - 1), uy(0, cal.h - 1);

  std::uint64_t total = 0, matched = 0, off_by_one = 0, other = 0;
  for (int rep = 0; rep < 8; ++rep) {
    EventFrame frame;
    for (int i = 0; i < 256; ++i) frame.events.push_back({ux(rng), uy(rng), 0.0, 1});
    frame.pose = testing::random_pose(rng, 0.15, 0.1);
    const Pose ref_pose = Pose::identity();

    const Homography h = compute_homography(frame.pose, ref_pose, cal, planes.canonical_depth());
    const PropCoeffs phi = compute_prop_coeffs(frame.pose, ref_pose, cal, planes);

    const auto fpts = canonical_backproject(frame, h);
    const auto phi_q = quantize_prop_coeffs(phi);
    const auto qpts = q_canonical_backproject(quantize_frame_coords(frame), quantize_homography(h));

    // Walk both datapaths per (event, plane) so votes pair up exactly.
    for (int i = 0; i < planes.count(); ++i) {
      const auto& c = phi.planes[i];
      const auto& cq = phi_q.planes[i];
      for (std::size_t k = 0; k < frame.events.size(); ++k) {
        if (!fpts.pts[k].valid || !qpts.pts[k].valid) continue;
        const double xf = c.a * (fpts.pts[k].x - phi.cx) + c.bx + phi.cx;
        const double yf = c.a * (fpts.pts[k].y - phi.cy) + c.by + phi.cy;
        const long fx = std::lround(xf), fy = std::lround(yf);
        const bool f_in = fx >= 0 && fx < dims.w && fy >= 0 && fy < dims.h;

        const std::int64_t accx =
            cq.a * (qpts.pts[k].x_raw - phi_q.cx) + (cq.bx_plus_cx << QCoord::frac_bits);
        const std::int64_t accy =
            cq.a * (qpts.pts[k].y_raw - phi_q.cy) + (cq.by_plus_cy << QCoord::frac_bits);
        const auto qx = static_cast<long>(fxdetail::shift_round(accx, 28));
        const auto qy = static_cast<long>(fxdetail::shift_round(accy, 28));
        const bool q_in = qx >= 0 && qx < dims.w && qy >= 0 && qy < dims.h;
        if (!f_in && !q_in) continue;
        ++total;
        if (f_in && q_in && fx == qx && fy == qy) {
          ++matched;
        } else if (std::labs(fx - qx) <= 1 && std::labs(fy - qy) <= 1) {
          ++off_by_one;  // within one voxel per axis; includes boundary flips
        } else {
          ++other;
        }
      }
    }
  }
  INFO("total=" << total << " matched=" << matched << " off1=" << off_by_one << " other=" << other);
  CHECK(other == 0);
  CHECK(static_cast<double>(matched) >= 0.99 * static_cast<double>(total));
}

TEST_CASE("quantized datapath is bit-deterministic across worker counts", "[quantized]") {
  const Calibration cal = plain_cal();
  const DepthPlanes planes = make_depth_planes(0.8, 3.0, 16);
  std::mt19937_64 rng(149);
  std::uniform_real_distribution<double> ux(0, cal.w - 1), uy(0, cal.h - 1);
  EventFrame frame;
  for (int i = 0; i < 512; ++i) frame.events.push_back({ux(rng), uy(rng), 0.0, 1});
  frame.pose = testing::random_pose(rng, 0.1, 0.05);

  Dsi<std::uint16_t> one({cal.w, cal.h, planes.count()}, planes, Pose::identity());
  Dsi<std::uint16_t> eight({cal.w, cal.h, planes.count()}, planes, Pose::identity());

  QuantizedDatapath dp1;
  dp1.cal = cal;
  dp1.workers = 1;
  dp1.prepare_frame(frame, Pose::identity(), planes);
  FrameStats s1;
  dp1.vote_frame(one, frame, s1);

  QuantizedDatapath dp8;
  dp8.cal = cal;
  dp8.workers = 8;
  dp8.prepare_frame(frame, Pose::identity(), planes);
  FrameStats s8;
  dp8.vote_frame(eight, frame, s8);

  CHECK(s1.votes == s8.votes);
  for (VoteAddress a = 0; a < one.dims().voxels(); ++a) CHECK(one.score(a) == eight.score(a));
}

TEST_CASE("coordinate buffer dumps: quantized payload is half the float payload", "[quantized]") {
  std::mt19937_64 rng(151);
  std::uniform_real_distribution<double> ux(0, 239), uy(0, 179);
  EventFrame frame;
  for (int i = 0; i < 333; ++i) frame.events.push_back({ux(rng), uy(rng), 0.0, 1});

  std::ostringstream qbuf, fbuf;
  dump_quantized_coords(qbuf, quantize_frame_coords(frame));
  dump_float_coords(fbuf, frame.events);
  const std::size_t q_payload = qbuf.str().size() - 16;
  const std::size_t f_payload = fbuf.str().size() - 16;
  CHECK(q_payload * 2 == f_payload);
  CHECK(q_payload == 333 * 2 * 2);
}
