#include <doctest.h>

#include "diptych/incontext.hpp"
#include "diptych/tokenizer.hpp"
#include "test_util.hpp"

using namespace diptych;
using namespace diptych::testutil;

TEST_SUITE_BEGIN("incontext");

TEST_CASE("ic prompt renders the fixed template") {
    ICPrompt p = make_ic_prompt({"make the square blue"});
    CHECK(p.text ==
          "A diptych with two side-by-side images of the same scene. On the right, the scene is "
          "exactly the same as on the left but make the square blue.");
}

TEST_CASE("ic prompt rejects empty instructions") {
    CHECK_THROWS_AS(make_ic_prompt({""}), std::invalid_argument);
}

TEST_CASE("ic prompt passes braces through verbatim") {
    ICPrompt p = make_ic_prompt({"add { literally"});
    CHECK(p.text.find("add { literally.") != std::string::npos);
}

TEST_CASE("prompt tokens never map to unknown words") {
    Tokenizer tok;
    Rng rng(77);
    SceneGeometry geo;
    for (int task = 0; task < kNumTaskTypes; ++task)
        for (int i = 0; i < 20; ++i) {
            EditPair pair = gen_edit_pair(rng, static_cast<TaskType>(task), geo);
            auto ids = tok.encode(make_ic_prompt({pair.instruction}).text, 64);
            for (int id : ids) CHECK(id != Tokenizer::kUnk);
        }
}

TEST_CASE("make_diptych layout and mask") {
    RasterImage source(16, 16, 3, 1.0);  // all white
    Diptych d = make_diptych(source);
    CHECK(d.image.width == 32);
    CHECK(d.keep_mask.width == 32);
    for (int y = 0; y < 16; ++y)
        for (int x = 0; x < 16; ++x) {
            CHECK(d.keep_mask.at(y, x, 0) == 0.0);
            CHECK(d.keep_mask.at(y, x + 16, 0) == 1.0);
            for (int c = 0; c < 3; ++c) {
                CHECK(d.image.at(y, x, c) == 1.0);
                CHECK(d.image.at(y, x + 16, c) == 0.0);
            }
        }
    // Left half round-trips the source exactly.
    CHECK(left_half(d.image) == source);
}

TEST_CASE("recompose_keep endpoints") {
    Rng rng(5);
    Mat x = rng.normal_mat(4, 6);
    Mat src = rng.normal_mat(4, 6);
    Mat noise = rng.normal_mat(4, 6);
    Mat keep = Mat::Zero(4, 6);  // everything preserved

    Mat at1 = recompose_keep(x, src, noise, 1.0, keep);
    CHECK((at1 - src).cwiseAbs().maxCoeff() == 0.0);
    Mat at0 = recompose_keep(x, src, noise, 0.0, keep);
    CHECK((at0 - noise).cwiseAbs().maxCoeff() == 0.0);

    Mat all_edit = Mat::Ones(4, 6);
    Mat untouched = recompose_keep(x, src, noise, 0.37, all_edit);
    CHECK((untouched - x).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("edit preserves the left panel on an untrained model") {
    ModelConfig cfg = tiny_config(8, 1, 2, 8, 2, 4);
    ModelParameters params = init_parameters(cfg, 5);

    Rng rng(6);
    RasterImage source(8, 8, 3);
    for (auto& v : source.values) v = rng.uniform();

    EditRequest req;
    req.source = source;
    req.instruction = {"turn the red square blue"};
    req.seed = 42;
    req.n_steps = 2;
    req.guidance = 2.0;
    EditResult res = edit(cfg, params, nullptr, req);

    CHECK(mean_l1(left_half(res.full_diptych), source) <= 1e-3);
    CHECK(res.edited.width == 8);
    CHECK(res.nfe_consumed == 2);
    for (double v : res.full_diptych.values) {
        CHECK(v >= 0.0);
        CHECK(v <= 1.0);
    }
    // edited = right half of the diptych, exactly.
    CHECK(res.edited == right_half(res.full_diptych));
}

TEST_CASE("edit is deterministic") {
    ModelConfig cfg = tiny_config(8, 1, 2, 8, 2, 4);
    Rng rng(7);
    ModelParameters params = init_parameters(cfg, 5);
    randomize(params, rng, 0.05);

    RasterImage source(8, 8, 3);
    for (auto& v : source.values) v = rng.uniform();
    EditRequest req{source, {"invert the colors"}, 9, 3, 2.0};
    EditResult a = edit(cfg, params, nullptr, req);
    EditResult b = edit(cfg, params, nullptr, req);
    CHECK(a.edited == b.edited);
    CHECK(a.full_diptych == b.full_diptych);
}

TEST_CASE("prompt mode changes text only") {
    // The bare path must agree with the ic path when the rendered strings
    // coincide; pragmatically we check both run and differ only via text by
    // comparing bare mode against manually passing the full template text.
    ModelConfig cfg = tiny_config(8, 1, 2, 8, 2, 16);
    Rng rng(8);
    ModelParameters params = init_parameters(cfg, 5);
    randomize(params, rng, 0.05);
    RasterImage source(8, 8, 3);
    for (auto& v : source.values) v = rng.uniform();

    EditRequest bare_req{source, {make_ic_prompt({"darken the image"}).text}, 4, 2, 1.5};
    EditRequest ic_req{source, {"darken the image"}, 4, 2, 1.5};
    EditResult via_bare = edit(cfg, params, nullptr, bare_req, PromptMode::bare);
    EditResult via_ic = edit(cfg, params, nullptr, ic_req, PromptMode::ic);
    CHECK(via_bare.edited == via_ic.edited);
}

TEST_CASE("multi_turn chains results in order") {
    ModelConfig cfg = tiny_config(8, 1, 2, 8, 2, 4);
    Rng rng(9);
    ModelParameters params = init_parameters(cfg, 5);
    randomize(params, rng, 0.05);
    RasterImage source(8, 8, 3);
    for (auto& v : source.values) v = rng.uniform();

    SUBCASE("single instruction equals edit()") {
        auto results = multi_turn(cfg, params, nullptr, source, {{"invert the colors"}}, 11, 2, 1.5);
        REQUIRE(results.size() == 1);
        EditRequest req{source, {"invert the colors"}, 11, 2, 1.5};
        EditResult direct = edit(cfg, params, nullptr, req);
        CHECK(results[0].edited == direct.edited);
    }

    SUBCASE("chain length and source threading") {
        std::vector<EditInstruction> instrs = {{"darken the image"}, {"brighten the image"}, {"invert the colors"}};
        auto results = multi_turn(cfg, params, nullptr, source, instrs, 11, 2, 1.5);
        REQUIRE(results.size() == 3);
        // Turn i+1 consumes turn i's edited panel.
        EditRequest req{results[0].edited, instrs[1], 12, 2, 1.5};
        EditResult direct = edit(cfg, params, nullptr, req);
        CHECK(results[1].edited == direct.edited);
        CHECK(results[0].seed == 11);
        CHECK(results[1].seed == 12);
        CHECK(results[2].seed == 13);
    }

    SUBCASE("empty instruction list is rejected") {
        CHECK_THROWS_AS(multi_turn(cfg, params, nullptr, source, {}, 1, 2, 1.5),
                        std::invalid_argument);
    }
}

TEST_SUITE_END();
