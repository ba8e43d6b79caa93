#include <doctest.h>

#include <random>

#include "pnpmix/blending.hpp"
#include "pnpmix/errors.hpp"

using namespace pnpmix;

namespace {

LatentTensor random_latent(int c, int h, int w, uint32_t seed) {
    LatentTensor t(c, h, w);
    std::mt19937 rng(seed);
    std::uniform_real_distribution<float> u(-3, 3);
    for (auto& v : t.data) v = u(rng);
    return t;
}

BinaryMask mask_2x2(std::initializer_list<int> v) {
    BinaryMask m(2, 2);
    auto it = v.begin();
    for (int h = 0; h < 2; ++h)
        for (int w = 0; w < 2; ++w) m.set(h, w, *it++ != 0);
    return m;
}

}  // namespace

TEST_CASE("clone_background produces n+1 independent bit-equal copies") {
    LatentTensor z = random_latent(2, 4, 4, 1);
    SUBCASE("n=2 gives three copies") {
        auto [out, refs] = clone_background(z, 2);
        CHECK(refs.size() == 2);
        CHECK(out.data == z.data);
        for (const auto& r : refs) CHECK(r.data == z.data);
    }
    SUBCASE("n=1 gives two copies") {
        auto [out, refs] = clone_background(z, 1);
        CHECK(refs.size() == 1);
        CHECK(out.data == z.data);
    }
    SUBCASE("writes to one copy never leak into another") {
        auto [out, refs] = clone_background(z, 2);
        refs[0].at(0, 0, 0) += 100.0f;
        CHECK(out.data == z.data);
        CHECK(refs[1].data == z.data);
    }
    SUBCASE("n=0 rejected") { CHECK_THROWS_AS(clone_background(z, 0), parameter_error); }
}

TEST_CASE("mix_noise 2x2 oracle") {
    MaskSet ms = make_mask_set({mask_2x2({0, 1, 1, 0})});  // M_B = [[1,0],[0,1]]
    LatentTensor back(1, 2, 2, 1.0f), ref(1, 2, 2, 2.0f);
    LatentTensor out = mix_noise(back, {ref}, ms);
    CHECK(out.at(0, 0, 0) == 1.0f);
    CHECK(out.at(0, 0, 1) == 2.0f);
    CHECK(out.at(0, 1, 0) == 2.0f);
    CHECK(out.at(0, 1, 1) == 1.0f);
}

TEST_CASE("mix_noise partition identity and ordering invariance") {
    MaskSet ms = make_mask_set({mask_2x2({1, 0, 0, 0}), mask_2x2({0, 0, 0, 1})});
    LatentTensor e = random_latent(2, 2, 2, 2);
    LatentTensor same = mix_noise(e, {e, e}, ms);
    CHECK(same.data == e.data);

    LatentTensor a = random_latent(2, 2, 2, 3), b = random_latent(2, 2, 2, 4), back = random_latent(2, 2, 2, 5);
    LatentTensor o1 = mix_noise(back, {a, b}, ms);
    MaskSet swapped = make_mask_set({ms.objects[1], ms.objects[0]});
    LatentTensor o2 = mix_noise(back, {b, a}, swapped);
    CHECK(o1.data == o2.data);
}

TEST_CASE("every mix_noise output pixel is exactly one input's value") {
    std::mt19937 rng(6);
    for (int trial = 0; trial < 20; ++trial) {
        BinaryMask m1(3, 3), m2(3, 3);
        for (int h = 0; h < 3; ++h)
            for (int w = 0; w < 3; ++w) {
                int r = static_cast<int>(rng() % 3);
                if (r == 0) m1.set(h, w, true);
                if (r == 1) m2.set(h, w, true);
            }
        MaskSet ms = make_mask_set({m1, m2});
        LatentTensor back = random_latent(2, 3, 3, 100 + trial);
        LatentTensor r1 = random_latent(2, 3, 3, 200 + trial);
        LatentTensor r2 = random_latent(2, 3, 3, 300 + trial);
        LatentTensor out = mix_noise(back, {r1, r2}, ms);
        for (int c = 0; c < 2; ++c)
            for (int h = 0; h < 3; ++h)
                for (int w = 0; w < 3; ++w) {
                    float expect = m1.at(h, w) ? r1.at(c, h, w) : m2.at(h, w) ? r2.at(c, h, w) : back.at(c, h, w);
                    CHECK(out.at(c, h, w) == expect);
                }
    }
}

TEST_CASE("mix_noise rejects count and shape mismatches") {
    MaskSet ms = make_mask_set({mask_2x2({1, 0, 0, 0})});
    LatentTensor back(1, 2, 2);
    CHECK_THROWS_AS(mix_noise(back, {}, ms), parameter_error);
    CHECK_THROWS_AS(mix_noise(back, {LatentTensor(1, 3, 3)}, ms), parameter_error);
}

TEST_CASE("resynthesize_ref_noise masks and substitutes") {
    LatentTensor ref = random_latent(1, 2, 2, 7), back = random_latent(1, 2, 2, 8);
    CHECK(resynthesize_ref_noise(ref, back, BinaryMask(2, 2, true)).data == ref.data);
    CHECK(resynthesize_ref_noise(ref, back, BinaryMask(2, 2, false)).data == back.data);

    BinaryMask m = mask_2x2({1, 0, 0, 1});
    LatentTensor out = resynthesize_ref_noise(ref, back, m);
    for (int h = 0; h < 2; ++h)
        for (int w = 0; w < 2; ++w) CHECK(out.at(0, h, w) == (m.at(h, w) ? ref.at(0, h, w) : back.at(0, h, w)));
    CHECK_THROWS_AS(resynthesize_ref_noise(ref, LatentTensor(1, 3, 3), m), dimension_error);
}

TEST_CASE("background_dilution_pp follows the literal update") {
    SUBCASE("all-ones M_E leaves the reference untouched") {
        LatentTensor inp = random_latent(1, 2, 2, 9), ref = random_latent(1, 2, 2, 10);
        CHECK(background_dilution_pp(inp, ref, BinaryMask(2, 2, true), 0.37f).data == ref.data);
    }
    SUBCASE("beta=0 zeroes the exterior") {
        LatentTensor inp = random_latent(1, 2, 2, 11), ref = random_latent(1, 2, 2, 12);
        BinaryMask me = mask_2x2({1, 0, 0, 0});
        LatentTensor out = background_dilution_pp(inp, ref, me, 0.0f);
        CHECK(out.at(0, 0, 0) == ref.at(0, 0, 0));
        CHECK(out.at(0, 0, 1) == 0.0f);
        CHECK(out.at(0, 1, 0) == 0.0f);
        CHECK(out.at(0, 1, 1) == 0.0f);
    }
    SUBCASE("1x2 scalar case from the update equation") {
        LatentTensor inp(1, 1, 2, 4.0f);
        LatentTensor ref(1, 1, 2);
        ref.data = {1.0f, 2.0f};
        BinaryMask me(1, 2);
        me.set(0, 0, true);
        LatentTensor out = background_dilution_pp(inp, ref, me, 0.8f);
        CHECK(out.data[0] == 1.0f);
        CHECK(out.data[1] == doctest::Approx(3.2f).epsilon(1e-6));
    }
    SUBCASE("exterior weight is beta with no compensating term") {
        // with ref = 0 outside, output must be exactly beta * inpaint, not a
        // convex mix
        LatentTensor inp(1, 1, 1, 2.0f), ref(1, 1, 1, 0.0f);
        BinaryMask me(1, 1, false);
        LatentTensor out = background_dilution_pp(inp, ref, me, 0.8f);
        CHECK(out.data[0] == 0.8f * 2.0f);
    }
}

TEST_CASE("dilution restricted to M_E is the exact identity") {
    LatentTensor inp = random_latent(2, 4, 4, 13), ref = random_latent(2, 4, 4, 14);
    BinaryMask me(4, 4);
    for (int h = 1; h <= 2; ++h)
        for (int w = 1; w <= 2; ++w) me.set(h, w, true);
    LatentTensor out = background_dilution_pp(inp, ref, me, 0.8f);
    for (int c = 0; c < 2; ++c)
        for (int h = 0; h < 4; ++h)
            for (int w = 0; w < 4; ++w)
                if (me.at(h, w)) CHECK(out.at(c, h, w) == ref.at(c, h, w));
}

TEST_CASE("legacy dilution equals dilution++ when the sources coincide") {
    LatentTensor src = random_latent(1, 3, 3, 15), ref = random_latent(1, 3, 3, 16);
    BinaryMask me(3, 3);
    me.set(1, 1, true);
    LatentTensor pp  = background_dilution_pp(src, ref, me, 0.8f);
    LatentTensor leg = background_dilution_legacy(src, ref, me, 0.8f);
    CHECK(pp.data == leg.data);
}

TEST_CASE("convex dilution blends instead of scaling") {
    LatentTensor inp(1, 1, 1, 2.0f), ref(1, 1, 1, 1.0f);
    BinaryMask me(1, 1, false);
    LatentTensor out = background_dilution_pp(inp, ref, me, 0.8f, true);
    CHECK(out.data[0] == doctest::Approx(0.8f * 2.0f + 0.2f * 1.0f).epsilon(1e-6));
}

TEST_CASE("BlendConfig validation") {
    BlendConfig ok;
    CHECK_NOTHROW(ok.validate());
    BlendConfig bad = ok;
    bad.alpha       = -0.1f;
    CHECK_THROWS_AS(bad.validate(), parameter_error);
    bad       = ok;
    bad.beta  = 1.5f;
    CHECK_THROWS_AS(bad.validate(), parameter_error);
    bad           = ok;
    bad.me_margin = -1;
    CHECK_THROWS_AS(bad.validate(), parameter_error);
    bad                 = ok;
    bad.dilution_legacy = true;
    bad.dilution_pp     = true;
    CHECK_THROWS_AS(bad.validate(), parameter_error);
}
