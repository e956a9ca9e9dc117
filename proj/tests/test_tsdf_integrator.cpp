#include "semvox/tsdf_integrator.hpp"

#include "oracles.hpp"

#include <doctest.h>

#include <cmath>
#include <map>
#include <numbers>
#include <random>

using namespace semvox;

namespace {

constexpr double kPi = std::numbers::pi;

// One posed scan of the horizontal plane z = plane_z seen from `sensor`.
PosedCloud plane_scan(const ProjectionModel& model, const Vec3d& sensor, double plane_z) {
    PosedCloud cloud;
    cloud.pose.translation() = sensor;
    for (int v = 0; v < model.height_px; ++v)
        for (int u = 0; u < model.width; ++u) {
            const Vec3d dir = back_project(u, v, 1.0, model).normalized();
            if (dir.z() >= -1e-3) continue;
            const double t = (plane_z - sensor.z()) / dir.z();
            if (t < model.min_range || t > 50.0) continue;
            cloud.points.push_back(dir * t);
        }
    return cloud;
}

ScanImages images_for(const PosedCloud& cloud, const ProjectionModel& model) {
    ScanImages img = project_cloud(cloud, model);
    compute_normal_image(img, model);
    return img;
}

}  // namespace

TEST_SUITE("tsdf-integrator") {

TEST_CASE("projective distance along the ray") {
    const Vec3d origin(0, 0, 0);
    const Vec3d surface(2, 0, 0);
    CHECK(projective_distance(surface, origin, surface) == doctest::Approx(0.0));
    CHECK(projective_distance({1.8, 0, 0}, origin, surface) == doctest::Approx(0.2));
    CHECK(projective_distance({2.2, 0, 0}, origin, surface) == doctest::Approx(-0.2));
    // off-ray voxel: only the projection onto the ray matters
    for (double h : {0.1, 0.5, 1.0})
        CHECK(projective_distance({1.0, h, 0}, origin, surface) == doctest::Approx(1.0));
}

TEST_CASE("non-projective distance branches") {
    // head-on flat surface collapses to psi
    CHECK(nonprojective_distance(0.2, 0.0, 0.0, 1e-2) == doctest::Approx(0.2));
    // first branch: |cos 60| * 0.2
    CHECK(nonprojective_distance(0.2, 60.0 * kPi / 180.0, 0.0, 1e-2) == doctest::Approx(0.1));
    // second branch, frozen from the direct arithmetic oracle:
    // |(cos a - 1) sin t / sin a| + |cos t * psi| at t=30deg, a=20deg, psi=0.1
    const double theta = 30.0 * kPi / 180.0, alpha = 20.0 * kPi / 180.0, psi = 0.1;
    const double oracle = std::abs((std::cos(alpha) - 1.0) * std::sin(theta) / std::sin(alpha)) +
                          std::abs(std::cos(theta) * psi);
    CHECK(oracle == doctest::Approx(0.1747660307326763).epsilon(1e-9));
    CHECK(nonprojective_distance(psi, theta, alpha, 1e-2) == doctest::Approx(oracle).epsilon(1e-6));
    // sign carried from psi in both branches
    CHECK(nonprojective_distance(-psi, theta, alpha, 1e-2) ==
          doctest::Approx(-oracle).epsilon(1e-6));
    CHECK(nonprojective_distance(-0.2, 60.0 * kPi / 180.0, 0.0, 1e-2) == doctest::Approx(-0.1));
    // seam: the second branch vanishes like (alpha/2) sin(theta) as alpha -> 0,
    // so the jump at alpha_epsilon is bounded by that term
    const double below = nonprojective_distance(psi, theta, 0.99e-2, 1e-2);
    const double above = nonprojective_distance(psi, theta, 1.01e-2, 1e-2);
    CHECK(std::abs(below - above) <= 0.5 * 1.01e-2 * std::sin(theta) + 1e-6);
}

TEST_CASE("distance samples keep the sign of psi") {
    std::mt19937 rng(19);
    std::uniform_real_distribution<double> dpsi(-0.5, 0.5);
    std::uniform_real_distribution<double> dang(0.0, std::numbers::pi);
    for (int i = 0; i < 500; ++i) {
        const double psi = dpsi(rng);
        const DistanceSample s = make_distance_sample(psi, dang(rng), dang(rng), 1e-2);
        if (psi != 0.0) CHECK((s.d >= 0.0) == (psi >= 0.0));
        if (s.alpha < 1e-2)
            CHECK(s.d == doctest::Approx(std::abs(std::cos(s.theta)) * psi));
    }
}

TEST_CASE("dropping normal-less pixels lowers coverage") {
    MapConfig cfg;
    cfg.voxel_size = 0.1f;
    cfg.truncation = 0.5f;
    const ProjectionModel model = ProjectionModel::spinning(256, 32, 25, 25);
    const PosedCloud cloud = plane_scan(model, {0, 0, 1.5}, 0.0);
    const ScanImages img = images_for(cloud, model);

    VoxelStore keep(cfg), strict(cfg);
    IntegratorConfig keep_cfg, strict_cfg;
    strict_cfg.drop_unreliable = true;
    TsdfIntegrator ik(keep, keep_cfg), is(strict, strict_cfg);
    const FrameReport rk = ik.integrate_frame(img, cloud.pose);
    const FrameReport rs = is.integrate_frame(img, cloud.pose);
    CHECK(rs.updated_voxels > 0);
    CHECK(rs.updated_voxels < rk.updated_voxels);
    CHECK(strict.stats().observed_voxels < keep.stats().observed_voxels);
}

TEST_CASE("observation weight is linear in psi and clamped") {
    CHECK(observation_weight(0.5, 0.5, 0.01f) == doctest::Approx(1.0));
    CHECK(observation_weight(0.0, 0.5, 0.01f) == doctest::Approx(0.5));
    CHECK(observation_weight(-0.5, 0.5, 0.01f) == doctest::Approx(0.01));
}

TEST_CASE("fuse_voxel implements the weighted running average") {
    TsdfVoxel fresh;
    const Vec3f n(0, 0, 1);
    const TsdfVoxel first = fuse_voxel(fresh, 0.1, 1.f, n, 0.5);
    CHECK(first.distance == doctest::Approx(0.1));
    CHECK(first.weight == doctest::Approx(1.0));
    CHECK(first.gradient == n);

    // truncation of the fused distance
    CHECK(truncate_distance(0.5, 0.3) == doctest::Approx(0.3));
    CHECK(truncate_distance(-0.5, 0.3) == doctest::Approx(-0.3));

    TsdfVoxel old;
    old.distance = 0.2f;
    old.weight = 2.f;
    old.gradient = n;
    const TsdfVoxel fused = fuse_voxel(old, 0.5, 1.f, n, 0.3);
    CHECK(fused.distance == doctest::Approx((0.4 + 0.3) / 3.0).epsilon(1e-6));
    CHECK(fused.weight == doctest::Approx(3.0));

    // gradients blend as a weighted average of unit normals
    TsdfVoxel g0;
    g0.weight = 1.f;
    g0.distance = 0.f;
    g0.gradient = Vec3f(1, 0, 0);
    const TsdfVoxel g1 = fuse_voxel(g0, 0.0, 1.f, Vec3f(0, 1, 0), 0.5);
    CHECK(g1.gradient.x() == doctest::Approx(std::sqrt(0.5)));
    CHECK(g1.gradient.y() == doctest::Approx(std::sqrt(0.5)));
    CHECK(g1.gradient.norm() == doctest::Approx(1.0));
}

TEST_CASE("segment traversal matches a dense march") {
    MapConfig cfg;
    cfg.voxel_size = 0.1f;
    std::mt19937 rng(5);
    std::uniform_real_distribution<double> dist(-2.0, 2.0);
    for (int i = 0; i < 200; ++i) {
        const Vec3d a(dist(rng), dist(rng), dist(rng));
        const Vec3d b(dist(rng), dist(rng), dist(rng));
        std::set<std::array<int32_t, 3>> visited;
        traverse_segment(a, b, cfg, [&](const VoxelCoord& v) {
            visited.insert({v.x, v.y, v.z});
        });
        const auto marched = oracles::marched_voxels(a, b, cfg);
        // the DDA must cover every cell the dense march finds
        for (const auto& cell : marched) CHECK(visited.count(cell) == 1);
        // and not wildly more (it may touch corner-gazed cells the march missed)
        CHECK(visited.size() <= marched.size() + 6);
    }
}

TEST_CASE("single ray marks the truncation band around the hit") {
    MapConfig cfg;
    cfg.voxel_size = 0.1f;
    cfg.truncation = 0.5f;
    VoxelStore store(cfg);
    IntegratorConfig icfg;
    icfg.mode = DistanceMode::projective;
    TsdfIntegrator integrator(store, icfg);

    // One-point cloud: plane hit at x = 2 straight ahead.
    const ProjectionModel model = ProjectionModel::spinning(1024, 64, 22.5, 22.5);
    PosedCloud cloud;
    cloud.points = {{2.0, 0.0, 0.0}};
    const ScanImages img = project_cloud(cloud, model);
    const FrameReport report = integrator.integrate_frame(img, cloud.pose);
    CHECK(report.updated_voxels > 0);
    CHECK(report.new_blocks > 0);

    // brute-force march along the analytic ray through the band
    int u, v;
    double r;
    REQUIRE(project_point(cloud.points[0], model, u, v, r));
    const Vec3d q = back_project(u, v, r, model);
    const Vec3d ray = q.normalized();
    const double range = q.norm();
    size_t in_band = 0;
    for (const auto& cell : oracles::marched_voxels(q - 0.5 * ray, q + 0.5 * ray, cfg)) {
        // band membership mirrors the update rule: center projects within tau
        const Vec3d center = voxel_center({cell[0], cell[1], cell[2]}, cfg);
        const double psi = range - center.dot(ray);
        if (std::abs(psi) > cfg.truncation) continue;
        ++in_band;
        const auto voxel = store.lookup_voxel({cell[0], cell[1], cell[2]});
        REQUIRE(voxel.has_value());
        CHECK(voxel->first.weight > 0.f);
    }
    CHECK(in_band >= 8);  // the band is ~10 voxels long
    const auto hit_voxel = store.lookup_voxel(world_to_voxel(q, cfg));
    REQUIRE(hit_voxel.has_value());
    CHECK(std::abs(hit_voxel->first.distance) <= cfg.voxel_size);
    CHECK(store.stats().observed_voxels >= 1);
}

TEST_CASE("empty depth image leaves the store untouched") {
    VoxelStore store(MapConfig{});
    TsdfIntegrator integrator(store, IntegratorConfig{});
    ScanImages img;
    img.width = 64;
    img.height_px = 16;
    img.model = ProjectionModel::spinning(64, 16, 20, 20);
    img.depth.assign(64 * 16, 0.f);
    img.normals.assign(64 * 16, Vec3f::Zero());
    img.normal_valid.assign(64 * 16, 0);
    const FrameReport report = integrator.integrate_frame(img, Pose::Identity());
    CHECK(report.updated_voxels == 0);
    CHECK(report.new_blocks == 0);
    CHECK(store.block_count() == 0);
}

TEST_CASE("repeated identical frames are a fixed point of the average") {
    MapConfig cfg;
    cfg.voxel_size = 0.1f;
    cfg.truncation = 0.5f;
    VoxelStore store(cfg);
    TsdfIntegrator integrator(store, IntegratorConfig{});

    const ProjectionModel model = ProjectionModel::spinning(256, 32, 25, 25);
    const PosedCloud cloud = plane_scan(model, {0, 0, 1.5}, 0.0);
    const ScanImages img = images_for(cloud, model);

    integrator.integrate_frame(img, cloud.pose);
    std::vector<std::pair<VoxelCoord, TsdfVoxel>> before;
    store.for_each_block([&](const VoxelBlock& blk) {
        for (int li = 0; li < kBlockVoxels; ++li)
            if (blk.tsdf[static_cast<size_t>(li)].observed())
                before.emplace_back(voxel_at(blk.coord, li), blk.tsdf[static_cast<size_t>(li)]);
    });
    integrator.integrate_frame(img, cloud.pose);
    for (const auto& [coord, voxel] : before) {
        const auto after = store.lookup_voxel(coord);
        REQUIRE(after.has_value());
        CHECK(after->first.distance == doctest::Approx(voxel.distance).epsilon(1e-5));
        CHECK(after->first.weight == doctest::Approx(2.f * voxel.weight).epsilon(1e-5));
    }
}

TEST_CASE("distances stay inside the truncation band") {
    MapConfig cfg;
    cfg.voxel_size = 0.1f;
    cfg.truncation = 0.3f;
    VoxelStore store(cfg);
    TsdfIntegrator integrator(store, IntegratorConfig{});
    const ProjectionModel model = ProjectionModel::spinning(256, 32, 25, 25);
    for (int i = 0; i < 5; ++i) {
        const PosedCloud cloud = plane_scan(model, {0.3 * i, 0, 1.0 + 0.2 * i}, 0.0);
        integrator.integrate_frame(images_for(cloud, model), cloud.pose);
    }
    size_t observed = 0;
    store.for_each_block([&](const VoxelBlock& blk) {
        for (const TsdfVoxel& v : blk.tsdf)
            if (v.observed()) {
                ++observed;
                CHECK(std::abs(v.distance) <= cfg.truncation + 1e-6f);
                CHECK((v.gradient.norm() == doctest::Approx(1.0).epsilon(1e-5) ||
                       v.gradient.norm() == 0.f));
            }
    });
    CHECK(observed > 1000);
}

TEST_CASE("permuted input points produce the identical map") {
    MapConfig cfg;
    cfg.voxel_size = 0.1f;
    cfg.truncation = 0.5f;
    const ProjectionModel model = ProjectionModel::spinning(256, 32, 25, 25);
    PosedCloud cloud = plane_scan(model, {0, 0, 1.5}, 0.0);

    VoxelStore s1(cfg), s2(cfg);
    TsdfIntegrator i1(s1, IntegratorConfig{}), i2(s2, IntegratorConfig{});
    i1.integrate_frame(images_for(cloud, model), cloud.pose);
    std::mt19937 rng(9);
    std::shuffle(cloud.points.begin(), cloud.points.end(), rng);
    i2.integrate_frame(images_for(cloud, model), cloud.pose);

    s1.for_each_block([&](const VoxelBlock& blk) {
        for (int li = 0; li < kBlockVoxels; ++li) {
            const auto other = s2.lookup_voxel(voxel_at(blk.coord, li));
            REQUIRE(other.has_value());
            CHECK(other->first.distance == blk.tsdf[static_cast<size_t>(li)].distance);
            CHECK(other->first.weight == blk.tsdf[static_cast<size_t>(li)].weight);
        }
    });
}

TEST_CASE("per-voxel accumulation is insensitive to contribution order") {
    // sequential fuse in two different orders stays within 1e-5
    std::mt19937 rng(31);
    std::uniform_real_distribution<double> dd(-0.4, 0.4);
    std::uniform_real_distribution<float> dw(0.01f, 1.f);
    std::vector<std::pair<double, float>> contribs;
    for (int i = 0; i < 64; ++i) contribs.emplace_back(dd(rng), dw(rng));

    auto run = [&](const std::vector<std::pair<double, float>>& order) {
        TsdfVoxel v;
        for (const auto& [d, w] : order) v = fuse_voxel(v, d, w, Vec3f(0, 0, 1), 0.5);
        return v;
    };
    const TsdfVoxel a = run(contribs);
    std::shuffle(contribs.begin(), contribs.end(), rng);
    const TsdfVoxel b = run(contribs);
    CHECK(a.distance == doctest::Approx(b.distance).epsilon(1e-5));
    CHECK(a.weight == doctest::Approx(b.weight).epsilon(1e-5));
}

TEST_CASE("projective and non-projective agree head-on") {
    // plane viewed along its normal: theta = 0, alpha = 0 collapse
    MapConfig cfg;
    cfg.voxel_size = 0.05f;
    cfg.truncation = 0.25f;
    const ProjectionModel model = ProjectionModel::spinning(512, 128, 60, 60);
    const PosedCloud cloud = plane_scan(model, {0, 0, 2.0}, 0.0);
    const ScanImages img = images_for(cloud, model);

    VoxelStore sp(cfg), sn(cfg);
    IntegratorConfig cp, cn;
    cp.mode = DistanceMode::projective;
    cn.mode = DistanceMode::non_projective;
    TsdfIntegrator ip(sp, cp), in(sn, cn);
    ip.integrate_frame(img, cloud.pose);
    in.integrate_frame(img, cloud.pose);

    // compare the nadir column of voxels (rays there are along the normal)
    for (int zi = -4; zi <= 4; ++zi) {
        const auto a = sp.lookup_voxel({0, 0, zi});
        const auto b = sn.lookup_voxel({0, 0, zi});
        if (!a || !b || !a->first.observed() || !b->first.observed()) continue;
        CHECK(a->first.distance == doctest::Approx(b->first.distance).epsilon(1e-6));
    }
}

TEST_CASE("zero crossing lies within one voxel of the analytic plane") {
    MapConfig cfg;
    cfg.voxel_size = 0.1f;
    cfg.truncation = 0.5f;
    VoxelStore store(cfg);
    TsdfIntegrator integrator(store, IntegratorConfig{});
    const ProjectionModel model = ProjectionModel::spinning(512, 64, 40, 40);
    for (int i = 0; i < 3; ++i) {
        const PosedCloud cloud = plane_scan(model, {0.5 * i, 0, 1.5}, 0.0);
        integrator.integrate_frame(images_for(cloud, model), cloud.pose);
    }
    // walk voxel columns near the sensor track and locate the sign change
    size_t crossings = 0;
    for (int xi = -10; xi <= 20; ++xi)
        for (int yi = -10; yi <= 10; ++yi) {
            double cross_z = std::numeric_limits<double>::quiet_NaN();
            for (int zi = 5; zi >= -5; --zi) {
                const auto hi = store.lookup_voxel({xi, yi, zi});
                const auto lo = store.lookup_voxel({xi, yi, zi - 1});
                if (!hi || !lo || !hi->first.observed() || !lo->first.observed()) continue;
                const float dh = hi->first.distance, dl = lo->first.distance;
                if (dh > 0.f && dl <= 0.f) {
                    const double t = dh / (dh - dl);
                    cross_z = cfg.voxel_size * (zi - t);
                    break;
                }
            }
            if (!std::isnan(cross_z)) {
                ++crossings;
                CHECK(std::abs(cross_z - 0.0) <= cfg.voxel_size);
            }
        }
    CHECK(crossings > 100);
}

TEST_CASE("weight never decreases across frames") {
    MapConfig cfg;
    cfg.voxel_size = 0.1f;
    cfg.truncation = 0.5f;
    VoxelStore store(cfg);
    TsdfIntegrator integrator(store, IntegratorConfig{});
    const ProjectionModel model = ProjectionModel::spinning(128, 32, 30, 30);

    std::map<std::array<int32_t, 4>, float> last_weight;
    for (int i = 0; i < 4; ++i) {
        const PosedCloud cloud = plane_scan(model, {0.2 * i, 0, 1.2}, 0.0);
        integrator.integrate_frame(images_for(cloud, model), cloud.pose);
        store.for_each_block([&](const VoxelBlock& blk) {
            for (int li = 0; li < kBlockVoxels; ++li) {
                const std::array<int32_t, 4> key{blk.coord.x, blk.coord.y, blk.coord.z, li};
                const float w = blk.tsdf[static_cast<size_t>(li)].weight;
                auto it = last_weight.find(key);
                if (it != last_weight.end()) CHECK(w >= it->second);
                last_weight[key] = w;
            }
        });
    }
}

TEST_CASE("frame report serializes as a JSON line") {
    FrameReport r;
    r.frame = 3;
    r.updated_voxels = 42;
    r.new_blocks = 7;
    r.elapsed_ms = 1.25;
    CHECK(r.json_line() ==
          "{\"frame\":3,\"updated_voxels\":42,\"new_blocks\":7,\"elapsed_ms\":1.250}");
}

}  // TEST_SUITE
