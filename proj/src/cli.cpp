#include "csaseg/cli.hpp"

#include "csaseg/eval.hpp"
#include "csaseg/model_io.hpp"
#include "csaseg/parallel.hpp"
#include "csaseg/selftest.hpp"
#include "csaseg/slide.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <iostream>

namespace csaseg::cli {

namespace fs = std::filesystem;
using nlohmann::json;

AttentionMode parse_mode(const std::string& text) {
    auto fail = [&]() -> ConfigError {
        return ConfigError("unknown attention mode '" + text +
                           "' (expected vanilla|csa|csa-q|csa-k|csa-id|identity|local:<size>|"
                           "sharpen:<tau>|ensemble:<n>:<seed>|early:<layer>)");
    };
    if (text == "vanilla") return AttentionMode::vanilla();
    if (text == "csa") return AttentionMode::csa_dual();
    if (text == "csa-q") return AttentionMode::csa_single(CsaProjection::UseQ);
    if (text == "csa-k") return AttentionMode::csa_single(CsaProjection::UseK);
    if (text == "csa-id") return AttentionMode::csa_single(CsaProjection::Identity);
    if (text == "identity") return AttentionMode::identity();

    const size_t colon = text.find(':');
    if (colon == std::string::npos) throw fail();
    const std::string head = text.substr(0, colon);
    const std::string rest = text.substr(colon + 1);
    try {
        size_t used = 0;
        if (head == "local") {
            const long long size = std::stoll(rest, &used);
            if (used != rest.size()) throw fail();
            AttentionMode m = AttentionMode::local_window(size);
            m.validate();
            return m;
        }
        if (head == "sharpen") {
            const float tau = std::stof(rest, &used);
            if (used != rest.size()) throw fail();
            AttentionMode m = AttentionMode::sharpened(tau);
            m.validate();
            return m;
        }
        if (head == "early") {
            const long long layer = std::stoll(rest, &used);
            if (used != rest.size()) throw fail();
            AttentionMode m = AttentionMode::early_borrow(layer);
            m.validate();
            return m;
        }
        if (head == "ensemble") {
            const size_t colon2 = rest.find(':');
            if (colon2 == std::string::npos) throw fail();
            const long long n = std::stoll(rest.substr(0, colon2), &used);
            if (used != colon2) throw fail();
            const std::string seed_text = rest.substr(colon2 + 1);
            const unsigned long long seed = std::stoull(seed_text, &used);
            if (used != seed_text.size()) throw fail();
            AttentionMode m = AttentionMode::random_ensemble(n, seed);
            m.validate();
            return m;
        }
    } catch (const ConfigError&) {
        throw;
    } catch (const std::exception&) {
        throw fail();
    }
    throw fail();
}

namespace {

struct CommonOpts {
    std::string model;
    std::string mode = "csa";
    SlideConfig slide;
    bool json = false;
};

int do_segment(const CommonOpts& c, const std::string& image_path, const std::string& out_path) {
    const WeightContainer container = read_container(c.model);
    const VitModel model = build_model(container);
    const ClassEmbeddingSet classes = build_classes(container);
    const Tensor image = read_image_ppm(image_path);
    const PixelMask mask = slide_segment(model, image, classes, parse_mode(c.mode), c.slide);
    write_mask_pgm(out_path, mask);
    if (c.json) {
        json j{{"output", out_path}, {"rows", mask.rows}, {"cols", mask.cols},
               {"classes", classes.count()}};
        std::cout << j.dump() << "\n";
    } else {
        std::cout << "wrote " << out_path << " (" << mask.rows << "x" << mask.cols << ", "
                  << classes.count() << " classes)\n";
    }
    return 0;
}

int do_eval(const CommonOpts& c, const std::string& images_dir, const std::string& gt_dir) {
    const WeightContainer container = read_container(c.model);
    const VitModel model = build_model(container);
    const ClassEmbeddingSet classes = build_classes(container);
    const AttentionMode mode = parse_mode(c.mode);

    if (!fs::is_directory(images_dir)) throw IoError("'" + images_dir + "' is not a directory");
    if (!fs::is_directory(gt_dir)) throw IoError("'" + gt_dir + "' is not a directory");
    std::vector<fs::path> images;
    for (const auto& entry : fs::directory_iterator(images_dir))
        if (entry.is_regular_file() && entry.path().extension() == ".ppm")
            images.push_back(entry.path());
    std::sort(images.begin(), images.end());
    if (images.empty()) throw IoError("no .ppm images in '" + images_dir + "'");

    std::vector<ConfusionMatrix> per_image(images.size(), ConfusionMatrix(classes.count()));
    std::vector<std::exception_ptr> errors(images.size());
    parallel_for(int64_t(images.size()), [&](int64_t b, int64_t e) {
        for (int64_t i = b; i < e; ++i) {
            try {
                const fs::path gt_path = fs::path(gt_dir) / (images[size_t(i)].stem().string() + ".pgm");
                if (!fs::exists(gt_path))
                    throw IoError("missing ground truth '" + gt_path.string() + "'");
                const Tensor image = read_image_ppm(images[size_t(i)].string());
                const PixelMask pred = slide_segment(model, image, classes, mode, c.slide);
                per_image[size_t(i)].update(pred, read_mask_pgm(gt_path.string()));
            } catch (...) {
                errors[size_t(i)] = std::current_exception();
            }
        }
    });
    for (const auto& err : errors)
        if (err) std::rethrow_exception(err);

    ConfusionMatrix cm(classes.count());
    for (const auto& m : per_image) cm.merge(m);
    const ConfusionMatrix::IouReport report = cm.miou();

    if (c.json) {
        for (int64_t i = 0; i < classes.count(); ++i) {
            json j{{"class", classes.names[size_t(i)]}};
            if (std::isnan(report.per_class[size_t(i)]))
                j["iou"] = nullptr;
            else
                j["iou"] = report.per_class[size_t(i)];
            std::cout << j.dump() << "\n";
        }
        json summary{{"miou", report.mean}, {"evaluated_classes", report.evaluated},
                     {"images", images.size()}};
        std::cout << summary.dump() << "\n";
    } else {
        std::printf("%-24s %8s\n", "class", "iou");
        for (int64_t i = 0; i < classes.count(); ++i) {
            if (std::isnan(report.per_class[size_t(i)]))
                std::printf("%-24s %8s\n", classes.names[size_t(i)].c_str(), "-");
            else
                std::printf("%-24s %8.4f\n", classes.names[size_t(i)].c_str(),
                            report.per_class[size_t(i)]);
        }
        std::printf("%-24s %8.4f   (%lld of %lld classes, %zu images)\n", "mean", report.mean,
                    (long long)report.evaluated, (long long)classes.count(), images.size());
    }
    return 0;
}

int do_attn_dump(const CommonOpts& c, const std::string& image_path, int64_t layer,
                 const std::string& point, const std::string& prefix) {
    const VitModel model = build_model(read_container(c.model));
    const Tensor raw = read_image_ppm(image_path);
    const PreprocessedImage pre =
        resize_shorter_side(raw, c.slide.short_side, model.config.patch_size);

    const size_t comma = point.find(',');
    if (comma == std::string::npos)
        throw ConfigError("--point expects 'row,col' in patch units, got '" + point + "'");
    int64_t pr = 0, pc = 0;
    try {
        pr = std::stoll(point.substr(0, comma));
        pc = std::stoll(point.substr(comma + 1));
    } catch (const std::exception&) {
        throw ConfigError("--point expects 'row,col' in patch units, got '" + point + "'");
    }
    const int64_t rows = pre.image.extent(1) / model.config.patch_size;
    const int64_t cols = pre.image.extent(2) / model.config.patch_size;
    if (pr < 0 || pr >= rows || pc < 0 || pc >= cols)
        throw ConfigError("point " + point + " outside the " + std::to_string(rows) + "x" +
                          std::to_string(cols) + " patch grid");

    const Tensor scores = capture_attention(model, pre.image, layer);
    const int64_t heads = scores.extent(0);
    const int64_t token = 1 + pr * cols + pc;

    std::vector<std::string> written;
    Tensor mean({rows, cols});
    for (int64_t h = 0; h < heads; ++h) {
        Tensor map({rows, cols});
        for (int64_t i = 0; i < rows * cols; ++i) {
            map.data()[i] = scores(h, token, 1 + i);
            mean.data()[i] += scores(h, token, 1 + i) / float(heads);
        }
        const std::string path = prefix + "_head" + std::to_string(h) + ".pgm";
        write_heatmap_pgm(path, map);
        written.push_back(path);
    }
    const std::string mean_path = prefix + "_mean.pgm";
    write_heatmap_pgm(mean_path, mean);
    written.push_back(mean_path);

    if (c.json) {
        std::cout << json{{"written", written}, {"layer", layer}, {"heads", heads}}.dump() << "\n";
    } else {
        for (const auto& p : written) std::cout << "wrote " << p << "\n";
    }
    return 0;
}

} // namespace

int run(const std::vector<std::string>& args) {
    CLI::App app{"training-free open-vocabulary segmentation with correlative self-attention"};
    app.footer("Input images are binary P6 at maxval 255, normalized per channel with\n"
               "mean (0.48145466, 0.4578275, 0.40821073) and\n"
               "std  (0.26862954, 0.26130258, 0.27577711).\n"
               "CSA_THREADS caps worker threads (0 or unset = auto).");
    app.require_subcommand(1);

    CommonOpts opts;
    std::string image_path, out_path, images_dir, gt_dir, point, prefix;
    int64_t layer = 1;

    auto add_common = [&](CLI::App* sub, bool with_slide) {
        sub->add_option("--model", opts.model, "weight container (.scwt)")->required();
        sub->add_option("--mode", opts.mode, "attention mode of the decoding layer");
        if (with_slide) {
            sub->add_option("--short-side", opts.slide.short_side, "resize target for the shorter side");
            sub->add_option("--window", opts.slide.window, "sliding window size in pixels");
            sub->add_option("--stride", opts.slide.stride, "sliding window step in pixels");
        }
        sub->add_flag("--json", opts.json, "machine-readable output");
    };

    CLI::App* seg = app.add_subcommand("segment", "segment one image into a label mask");
    add_common(seg, true);
    seg->add_option("--image", image_path, "input image (.ppm)")->required();
    seg->add_option("--output", out_path, "output mask (.pgm)")->required();

    CLI::App* ev = app.add_subcommand("eval", "mean IoU over an image directory");
    add_common(ev, true);
    ev->add_option("--images", images_dir, "directory of .ppm images")->required();
    ev->add_option("--gt", gt_dir, "directory of .pgm ground-truth masks")->required();

    CLI::App* dump = app.add_subcommand("attn-dump", "write attention heatmaps for one token");
    add_common(dump, false);
    dump->add_option("--short-side", opts.slide.short_side, "resize target for the shorter side");
    dump->add_option("--image", image_path, "input image (.ppm)")->required();
    dump->add_option("--layer", layer, "1-based layer index")->required();
    dump->add_option("--point", point, "patch coordinates 'row,col'")->required();
    dump->add_option("--out-prefix", prefix, "path prefix for the .pgm heatmaps")->required();

    CLI::App* st = app.add_subcommand("selftest", "run the invariant suite on a generated model");
    (void)st;

    std::vector<char*> argv;
    std::vector<std::string> storage = args;
    storage.insert(storage.begin(), "csaseg");
    argv.reserve(storage.size());
    for (auto& s : storage) argv.push_back(s.data());

    try {
        app.parse(int(argv.size()), argv.data());
        if (seg->parsed()) return do_segment(opts, image_path, out_path);
        if (ev->parsed()) return do_eval(opts, images_dir, gt_dir);
        if (dump->parsed()) return do_attn_dump(opts, image_path, layer, point, prefix);
        return run_selftest(std::cout) == 0 ? 0 : 1;
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    } catch (const ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const IoError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    } catch (const FormatError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 4;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}

} // namespace csaseg::cli
