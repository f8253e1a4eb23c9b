#include <catch2/catch.hpp>

#include <cmath>
#include <map>
#include <set>

#include "guesslab/rng.hpp"
#include "guesslab/world.hpp"

using namespace guesslab;
using namespace guesslab::world;

namespace {

FeatureProjector desk_projector(std::size_t dim = 32, uint64_t seed = 1234) {
    return FeatureProjector(Taxonomy::desk_default(), dim, seed);
}

}  // namespace

TEST_CASE("spatial_encode matches the normalization formula", "[world]") {
    const Canvas canvas{100.0, 100.0};
    SceneObject obj;

    SECTION("full-canvas box") {
        obj.bbox = {0.0, 0.0, 100.0, 100.0};
        Tensor e = spatial_encode(obj, canvas);
        const double expect[8] = {-1.0, -1.0, 1.0, 1.0, 0.0, 0.0, 2.0, 2.0};
        for (int i = 0; i < 8; ++i) CHECK(e[i] == Approx(expect[i]).margin(1e-12));
    }

    SECTION("centered box of half extent") {
        obj.bbox = {25.0, 25.0, 50.0, 50.0};
        Tensor e = spatial_encode(obj, canvas);
        const double expect[8] = {-0.5, -0.5, 0.5, 0.5, 0.0, 0.0, 1.0, 1.0};
        for (int i = 0; i < 8; ++i) CHECK(e[i] == Approx(expect[i]).margin(1e-12));
    }

    SECTION("corner-anchored box hits the -1 boundary") {
        obj.bbox = {0.0, 0.0, 10.0, 5.0};
        Tensor e = spatial_encode(obj, canvas);
        CHECK(e[0] == Approx(-1.0).margin(1e-12));
        CHECK(e[1] == Approx(-1.0).margin(1e-12));
    }

    SECTION("first four coordinates invert back to the bbox") {
        Rng rng(77);
        for (int trial = 0; trial < 200; ++trial) {
            obj.bbox.w = rng.uniform(1.0, 60.0);
            obj.bbox.h = rng.uniform(1.0, 60.0);
            obj.bbox.x = rng.uniform(0.0, 100.0 - obj.bbox.w);
            obj.bbox.y = rng.uniform(0.0, 100.0 - obj.bbox.h);
            BBox back = spatial_decode(spatial_encode(obj, canvas), canvas);
            CHECK(back.x == Approx(obj.bbox.x).margin(1e-9));
            CHECK(back.y == Approx(obj.bbox.y).margin(1e-9));
            CHECK(back.w == Approx(obj.bbox.w).margin(1e-9));
            CHECK(back.h == Approx(obj.bbox.h).margin(1e-9));
        }
    }
}

TEST_CASE("generate_scene basics", "[world]") {
    const Taxonomy tax = Taxonomy::desk_default();
    const FeatureProjector proj = desk_projector();

    SECTION("forced object count") {
        Rng rng(3);
        Scene s = generate_scene(tax, proj, 1, rng, 42, 2, 2);
        CHECK(s.objects.size() == 2);
    }

    SECTION("fixed seed reproduces the scene") {
        Rng r1(5), r2(5);
        Scene a = generate_scene(tax, proj, 9, r1, 42);
        Scene b = generate_scene(tax, proj, 9, r2, 42);
        REQUIRE(a.objects.size() == b.objects.size());
        for (std::size_t i = 0; i < a.objects.size(); ++i) {
            CHECK(a.objects[i].category == b.objects[i].category);
            CHECK(a.objects[i].color == b.objects[i].color);
            CHECK(a.objects[i].bbox.x == b.objects[i].bbox.x);
        }
        for (std::size_t i = 0; i < a.features.size(); ++i)
            CHECK(a.features[i] == b.features[i]);
    }

    SECTION("boxes lie inside the canvas and ids are unique") {
        Rng rng(8);
        for (int t = 0; t < 50; ++t) {
            Scene s = generate_scene(tax, proj, t, rng, 42);
            std::set<int> ids;
            for (const auto& o : s.objects) {
                ids.insert(o.id);
                CHECK(o.bbox.x >= 0.0);
                CHECK(o.bbox.y >= 0.0);
                CHECK(o.bbox.x + o.bbox.w <= 100.0 + 1e-9);
                CHECK(o.bbox.y + o.bbox.h <= 100.0 + 1e-9);
                CHECK(o.bbox.w > 0.0);
                CHECK(o.bbox.h > 0.0);
            }
            CHECK(ids.size() == s.objects.size());
        }
    }

    SECTION("bad object bounds are a config error") {
        Rng rng(1);
        REQUIRE_THROWS_AS(generate_scene(tax, proj, 0, rng, 42, 5, 3), ConfigError);
    }

    SECTION("category frequencies match the uniform sampler within 3 sigma") {
        Rng rng(2024);
        std::map<std::string, long> counts;
        long total = 0;
        for (int t = 0; t < 10000; ++t) {
            Scene s = generate_scene(tax, proj, t, rng, 42);
            for (const auto& o : s.objects) {
                ++counts[o.category];
                ++total;
            }
        }
        const double p = 1.0 / 12.0;
        const double mean = total * p;
        const double sigma = std::sqrt(total * p * (1.0 - p));
        for (const auto& c : tax.categories()) {
            CHECK(std::abs(counts[c] - mean) <= 3.0 * sigma);
        }
    }
}

TEST_CASE("pooled features behave like a fixed embedding", "[world]") {
    const Taxonomy tax = Taxonomy::desk_default();
    const FeatureProjector proj = desk_projector();
    Rng rng(17);
    Scene s = generate_scene(tax, proj, 3, rng, 42, 4, 4);

    SECTION("unit norm before noise") {
        Rng quiet(0);
        Tensor f = proj.features(tax, s, quiet, /*with_noise=*/false);
        double norm = 0.0;
        for (std::size_t i = 0; i < f.size(); ++i) norm += f[i] * f[i];
        CHECK(std::sqrt(norm) == Approx(1.0).margin(1e-12));
    }

    SECTION("changing one object's category moves the embedding") {
        Scene altered = s;
        altered.objects[0].category = (s.objects[0].category == "car") ? "dog" : "car";
        altered.objects[0].super_category = tax.super_of(altered.objects[0].category);
        Rng quiet(0);
        Tensor a = proj.features(tax, s, quiet, false);
        Tensor b = proj.features(tax, altered, quiet, false);
        double dot = 0.0;
        for (std::size_t i = 0; i < a.size(); ++i) dot += a[i] * b[i];
        CHECK(dot < 1.0 - 1e-6);  // both unit norm, so dot == cosine
    }
}

TEST_CASE("scene json round-trips exactly", "[world]") {
    const Taxonomy tax = Taxonomy::desk_default();
    const FeatureProjector proj = desk_projector();
    Rng rng(23);
    Scene s = generate_scene(tax, proj, 11, rng, 42);

    json j = scene_to_json(s, tax.canvas());
    Scene back = scene_from_json(json::parse(j.dump()));
    REQUIRE(back.objects.size() == s.objects.size());
    CHECK(back.id == s.id);
    for (std::size_t i = 0; i < s.objects.size(); ++i) {
        CHECK(back.objects[i].id == s.objects[i].id);
        CHECK(back.objects[i].category == s.objects[i].category);
        CHECK(back.objects[i].super_category == s.objects[i].super_category);
        CHECK(back.objects[i].color == s.objects[i].color);
        CHECK(back.objects[i].bbox.x == s.objects[i].bbox.x);
        CHECK(back.objects[i].bbox.y == s.objects[i].bbox.y);
        CHECK(back.objects[i].bbox.w == s.objects[i].bbox.w);
        CHECK(back.objects[i].bbox.h == s.objects[i].bbox.h);
    }

    SECTION("taxonomy json round-trips") {
        Taxonomy t2 = Taxonomy::from_json(json::parse(tax.to_json().dump()));
        CHECK(t2.categories() == tax.categories());
        CHECK(t2.super_categories() == tax.super_categories());
        CHECK(t2.colors() == tax.colors());
    }
}
