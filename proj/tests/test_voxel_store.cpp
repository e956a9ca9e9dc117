#include "semvox/voxel_store.hpp"

#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>
#include <thread>

using namespace semvox;

TEST_SUITE("voxel-store") {

TEST_CASE("world_to_voxel rounds to the nearest center") {
    MapConfig cfg;
    cfg.voxel_size = 0.25f;
    CHECK(world_to_voxel({1.0, 0.0, -0.5}, cfg) == VoxelCoord{4, 0, -2});
    CHECK(world_to_voxel({0.0, 0.0, 0.0}, cfg) == VoxelCoord{0, 0, 0});
    // exact half distances round toward +inf
    CHECK(world_to_voxel({0.125, 0.0, 0.0}, cfg) == VoxelCoord{1, 0, 0});
    CHECK(world_to_voxel({-0.125, 0.0, 0.0}, cfg) == VoxelCoord{0, 0, 0});
}

TEST_CASE("world_to_voxel inverts voxel centers") {
    MapConfig cfg;
    cfg.voxel_size = 0.25f;
    std::mt19937 rng(7);
    std::uniform_int_distribution<int32_t> coord(-1000000, 1000000);
    for (int i = 0; i < 2000; ++i) {
        const VoxelCoord v{coord(rng), coord(rng), coord(rng)};
        CHECK(world_to_voxel(voxel_center(v, cfg), cfg) == v);
    }
}

TEST_CASE("allocation is idempotent and blocks start unobserved") {
    MapConfig cfg;
    cfg.num_labels = 4;
    VoxelStore store(cfg);
    VoxelBlock& a = store.get_or_allocate_block({0, 0, 0});
    VoxelBlock& b = store.get_or_allocate_block({0, 0, 0});
    CHECK(&a == &b);
    CHECK(store.block_count() == 1);
    store.get_or_allocate_block({1, 0, 0});
    CHECK(store.block_count() == 2);

    const auto voxel = store.lookup_voxel({3, 3, 3});
    REQUIRE(voxel.has_value());
    CHECK(voxel->first.weight == 0.f);
    for (float p : voxel->second.probs) CHECK(p == doctest::Approx(0.25f));
}

TEST_CASE("capacity budget raises a clean error") {
    MapConfig cfg;
    cfg.max_blocks = 2;
    VoxelStore store(cfg);
    store.get_or_allocate_block({0, 0, 0});
    store.get_or_allocate_block({1, 0, 0});
    CHECK_THROWS_AS(store.get_or_allocate_block({2, 0, 0}), CapacityError);
    // existing blocks still reachable
    CHECK_NOTHROW(store.get_or_allocate_block({0, 0, 0}));
}

TEST_CASE("lookup never allocates and handles negative coordinates") {
    VoxelStore store(MapConfig{});
    CHECK_FALSE(store.lookup_voxel({5, 5, 5}).has_value());
    CHECK(store.block_count() == 0);

    store.get_or_allocate_block({-1, -1, -1});
    // voxel (-1,-1,-1) lives in block (-1,-1,-1) under floor division
    CHECK(block_of({-1, -1, -1}) == BlockCoord{-1, -1, -1});
    CHECK(store.lookup_voxel({-1, -1, -1}).has_value());
    CHECK_FALSE(store.lookup_voxel({0, 0, 0}).has_value());
    CHECK(local_index({-1, -1, -1}) == 7 + 8 * 7 + 64 * 7);
}

TEST_CASE("stats counts blocks and observed voxels") {
    VoxelStore store(MapConfig{});
    auto s0 = store.stats();
    CHECK(s0.allocated_blocks == 0);
    CHECK(s0.observed_voxels == 0);

    VoxelBlock& blk = store.get_or_allocate_block({0, 0, 0});
    auto s1 = store.stats();
    CHECK(s1.allocated_blocks == 1);
    CHECK(s1.observed_voxels == 0);
    CHECK(s1.memory_bytes > 0);

    blk.tsdf[0].weight = 1.f;
    blk.tsdf[100].weight = 0.5f;
    CHECK(store.stats().observed_voxels == 2);
}

TEST_CASE("block residency matches a dense array") {
    // scenes up to 32^3 voxels: store lookups equal a brute-force dense grid
    MapConfig cfg;
    cfg.voxel_size = 0.1f;
    VoxelStore store(cfg);
    const int n = 32;
    std::vector<float> dense(static_cast<size_t>(n) * n * n, 0.f);
    std::mt19937 rng(11);
    std::uniform_real_distribution<float> dist(-0.5f, 0.5f);

    for (int z = 0; z < n; ++z)
        for (int y = 0; y < n; ++y)
            for (int x = 0; x < n; ++x) {
                const float d = dist(rng);
                dense[static_cast<size_t>((z * n + y) * n + x)] = d;
                const VoxelCoord v{x - n / 2, y - n / 2, z - n / 2};
                VoxelBlock& blk = store.get_or_allocate_block(block_of(v));
                blk.tsdf[static_cast<size_t>(local_index(v))].distance = d;
                blk.tsdf[static_cast<size_t>(local_index(v))].weight = 1.f;
            }

    for (int z = 0; z < n; ++z)
        for (int y = 0; y < n; ++y)
            for (int x = 0; x < n; ++x) {
                const VoxelCoord v{x - n / 2, y - n / 2, z - n / 2};
                const auto voxel = store.lookup_voxel(v);
                REQUIRE(voxel.has_value());
                CHECK(voxel->first.distance ==
                      dense[static_cast<size_t>((z * n + y) * n + x)]);
            }
}

TEST_CASE("concurrent allocation of one block yields one block") {
    VoxelStore store(MapConfig{});
    std::vector<std::thread> threads;
    std::vector<VoxelBlock*> results(8, nullptr);
    for (int t = 0; t < 8; ++t)
        threads.emplace_back(
            [&, t] { results[static_cast<size_t>(t)] = &store.get_or_allocate_block({2, 3, 4}); });
    for (auto& th : threads) th.join();
    CHECK(store.block_count() == 1);
    for (VoxelBlock* r : results) CHECK(r == results[0]);
}

TEST_CASE("snapshot round-trips bit-exactly") {
    MapConfig cfg;
    cfg.voxel_size = 0.25f;
    cfg.truncation = 1.25f;
    cfg.num_labels = 3;
    VoxelStore store(cfg);

    std::mt19937 rng(23);
    std::uniform_real_distribution<float> dist(-1.f, 1.f);
    for (const BlockCoord bc : {BlockCoord{0, 0, 0}, BlockCoord{-2, 1, 5}, BlockCoord{7, -3, 0}}) {
        VoxelBlock& blk = store.get_or_allocate_block(bc);
        for (auto& v : blk.tsdf) {
            v.distance = dist(rng);
            v.weight = std::abs(dist(rng));
            v.gradient = Vec3f(dist(rng), dist(rng), dist(rng)).normalized();
        }
    }
    // semantic layer on only one block (lazy allocation must be preserved)
    VoxelBlock& sem_blk = store.get_or_allocate_block({0, 0, 0});
    sem_blk.ensure_semantics(cfg.num_labels);
    sem_blk.probs_at(0, cfg.num_labels)[0] = 0.8f;
    sem_blk.probs_at(0, cfg.num_labels)[1] = 0.15f;
    sem_blk.probs_at(0, cfg.num_labels)[2] = 0.05f;

    const auto dir = std::filesystem::temp_directory_path() / "semvox_store_test";
    std::filesystem::create_directories(dir);
    const std::string p1 = (dir / "a.svox").string();
    const std::string p2 = (dir / "b.svox").string();
    store.save(p1);
    VoxelStore loaded = VoxelStore::load(p1);
    loaded.save(p2);

    std::ifstream f1(p1, std::ios::binary), f2(p2, std::ios::binary);
    const std::string bytes1((std::istreambuf_iterator<char>(f1)), {});
    const std::string bytes2((std::istreambuf_iterator<char>(f2)), {});
    REQUIRE(bytes1.size() > 0);
    CHECK(bytes1 == bytes2);

    CHECK(loaded.config().num_labels == 3);
    CHECK(loaded.block_count() == 3);
    const auto voxel = loaded.lookup_voxel({0, 0, 0});
    REQUIRE(voxel.has_value());
    CHECK(voxel->second.probs[0] == 0.8f);
    CHECK_FALSE(loaded.find_block({-2, 1, 5})->has_semantics());
}

TEST_CASE("config invariants are enforced") {
    MapConfig bad;
    bad.truncation = 0.1f;
    bad.voxel_size = 0.25f;
    CHECK_THROWS_AS(VoxelStore{bad}, std::invalid_argument);
    bad = MapConfig{};
    bad.num_labels = 65;
    CHECK_THROWS_AS(VoxelStore{bad}, std::invalid_argument);
}

}  // TEST_SUITE
