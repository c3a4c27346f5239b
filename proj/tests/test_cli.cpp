#include "csaseg/cli.hpp"

#include "csaseg/model_io.hpp"
#include "csaseg/synthetic.hpp"
#include "test_helpers.hpp"

#include <doctest.h>

#include <filesystem>
#include <string>
#include <vector>

using namespace csaseg;
namespace fs = std::filesystem;

static int run_cli(std::vector<std::string> args) { return cli::run(args); }

TEST_CASE("mode strings parse into the matching attention modes") {
    CHECK(cli::parse_mode("vanilla").kind == AttentionMode::Kind::Vanilla);
    CHECK(cli::parse_mode("csa").kind == AttentionMode::Kind::CsaDual);
    CHECK(cli::parse_mode("identity").kind == AttentionMode::Kind::Identity);

    const AttentionMode q = cli::parse_mode("csa-q");
    CHECK(q.kind == AttentionMode::Kind::CsaSingle);
    CHECK(q.projection == CsaProjection::UseQ);
    CHECK(cli::parse_mode("csa-k").projection == CsaProjection::UseK);
    CHECK(cli::parse_mode("csa-id").projection == CsaProjection::Identity);

    const AttentionMode local = cli::parse_mode("local:5");
    CHECK(local.kind == AttentionMode::Kind::LocalWindow);
    CHECK(local.window_size == 5);

    const AttentionMode sharp = cli::parse_mode("sharpen:2.5");
    CHECK(sharp.kind == AttentionMode::Kind::Sharpened);
    CHECK(sharp.tau == doctest::Approx(2.5));

    const AttentionMode ens = cli::parse_mode("ensemble:4:99");
    CHECK(ens.kind == AttentionMode::Kind::RandomEnsemble);
    CHECK(ens.ensemble_count == 4);
    CHECK(ens.ensemble_seed == 99);

    const AttentionMode early = cli::parse_mode("early:3");
    CHECK(early.kind == AttentionMode::Kind::EarlyBorrow);
    CHECK(early.borrow_layer == 3);
}

TEST_CASE("malformed mode strings are config errors") {
    for (const char* bad : {"bogus", "local:4", "local:x", "local:3x", "sharpen:-1",
                            "sharpen:", "ensemble:0:1", "ensemble:2", "early:0", "early:"})
        CHECK_THROWS_AS(cli::parse_mode(bad), ConfigError);
}

TEST_CASE("bare invocations and flag errors exit with code two") {
    CHECK(run_cli({}) == 2);
    CHECK(run_cli({"segment"}) == 2);
    CHECK(run_cli({"no-such-command"}) == 2);
}

TEST_CASE("unreadable or corrupt model files exit with code three") {
    const auto dir = testutil::temp_dir("cli_badmodel");
    const std::string img = (dir / "img.ppm").string();
    const SegmentationFixture fx = make_split_field_fixture();
    testutil::write_bytes(img, fx.image_ppm);

    CHECK(run_cli({"segment", "--model", (dir / "absent.scwt").string(), "--image", img,
                   "--output", (dir / "out.pgm").string()}) == 3);

    const std::string corrupt = (dir / "corrupt.scwt").string();
    testutil::write_bytes(corrupt, {'X', 'X', 'X', 'X', 0, 0, 0, 0});
    CHECK(run_cli({"segment", "--model", corrupt, "--image", img, "--output",
                   (dir / "out.pgm").string()}) == 3);
    fs::remove_all(dir);
}

TEST_CASE("the synthetic scene segments perfectly under correlative attention") {
    const SegmentationFixture fx = make_split_field_fixture();
    const auto dir = testutil::temp_dir("cli_segment");
    const std::string model = (dir / "model.scwt").string();
    const std::string uniform = (dir / "uniform.scwt").string();
    const std::string img = (dir / "img.ppm").string();
    save_model(model, fx.model_csa, &fx.classes);
    save_model(uniform, fx.model_uniform, &fx.classes);
    testutil::write_bytes(img, fx.image_ppm);

    const std::vector<std::string> slide_flags{
        "--short-side", std::to_string(fx.slide.short_side),
        "--window", std::to_string(fx.slide.window),
        "--stride", std::to_string(fx.slide.stride)};
    auto segment = [&](const std::string& model_path, const std::string& mode,
                       const std::string& out) {
        std::vector<std::string> args{"segment", "--model", model_path, "--image", img,
                                      "--output", out, "--mode", mode};
        args.insert(args.end(), slide_flags.begin(), slide_flags.end());
        return run_cli(args);
    };

    const std::string out_csa = (dir / "csa.pgm").string();
    REQUIRE(segment(model, "csa", out_csa) == 0);
    CHECK(read_mask_pgm(out_csa).labels == fx.ground_truth.labels);

    const std::string out_id = (dir / "identity.pgm").string();
    REQUIRE(segment(model, "identity", out_id) == 0);
    CHECK(read_mask_pgm(out_id).labels == fx.ground_truth.labels);

    // with zeroed q/k projections plain softmax mixes all tokens uniformly
    // and the split cannot survive
    const std::string out_vanilla = (dir / "vanilla.pgm").string();
    REQUIRE(segment(uniform, "vanilla", out_vanilla) == 0);
    CHECK(read_mask_pgm(out_vanilla).labels != fx.ground_truth.labels);

    // a 1x1 local window is the identity on patch tokens
    const std::string out_local = (dir / "local.pgm").string();
    REQUIRE(segment(model, "local:1", out_local) == 0);
    CHECK(testutil::read_bytes(out_local) == testutil::read_bytes(out_id));

    const std::string out_mode_err = (dir / "err.pgm").string();
    CHECK(segment(model, "bogus", out_mode_err) == 2);
    fs::remove_all(dir);
}

TEST_CASE("evaluation walks a dataset directory and scores it") {
    const SegmentationFixture fx = make_split_field_fixture();
    const auto dir = testutil::temp_dir("cli_eval");
    const std::string model = (dir / "model.scwt").string();
    save_model(model, fx.model_csa, &fx.classes);
    fs::create_directories(dir / "images");
    fs::create_directories(dir / "gt");
    testutil::write_bytes((dir / "images" / "scene.ppm").string(), fx.image_ppm);
    write_mask_pgm((dir / "gt" / "scene.pgm").string(), fx.ground_truth);

    const std::vector<std::string> base{
        "eval", "--model", model, "--images", (dir / "images").string(),
        "--gt", (dir / "gt").string(),
        "--short-side", std::to_string(fx.slide.short_side),
        "--window", std::to_string(fx.slide.window),
        "--stride", std::to_string(fx.slide.stride)};
    CHECK(run_cli(base) == 0);

    std::vector<std::string> json_args = base;
    json_args.push_back("--json");
    CHECK(run_cli(json_args) == 0);

    // a ground truth of only ignore pixels leaves nothing to score
    PixelMask ignored = fx.ground_truth;
    for (auto& v : ignored.labels) v = 255;
    write_mask_pgm((dir / "gt" / "scene.pgm").string(), ignored);
    CHECK(run_cli(base) == 4);

    fs::remove((dir / "gt" / "scene.pgm").string());
    CHECK(run_cli(base) == 3);
    fs::remove_all(dir);
}

TEST_CASE("attention dumps write one heatmap per head plus the mean") {
    const SegmentationFixture fx = make_split_field_fixture();
    const auto dir = testutil::temp_dir("cli_attn");
    const std::string model = (dir / "model.scwt").string();
    const std::string img = (dir / "img.ppm").string();
    save_model(model, fx.model_csa, &fx.classes);
    testutil::write_bytes(img, fx.image_ppm);

    const std::string prefix = (dir / "attn").string();
    const std::vector<std::string> base{"attn-dump", "--model", model, "--image", img,
                                        "--layer", "1", "--point", "0,0",
                                        "--out-prefix", prefix, "--short-side",
                                        std::to_string(fx.slide.short_side)};
    REQUIRE(run_cli(base) == 0);
    for (const char* name : {"attn_head0.pgm", "attn_head1.pgm", "attn_mean.pgm"}) {
        const PixelMask map = read_mask_pgm((dir / name).string());
        CHECK(map.rows == 8);
        CHECK(map.cols == 8);
    }

    std::vector<std::string> bad_layer = base;
    bad_layer[6] = "99";   // --layer value
    CHECK(bad_layer[5] == "--layer");
    CHECK(run_cli(bad_layer) == 2);

    std::vector<std::string> bad_point = base;
    bad_point[8] = "9,9";   // --point value outside the 8x8 grid
    CHECK(bad_point[7] == "--point");
    CHECK(run_cli(bad_point) == 2);
    fs::remove_all(dir);
}

TEST_CASE("the built-in selftest passes end to end") {
    CHECK(run_cli({"selftest"}) == 0);
}
