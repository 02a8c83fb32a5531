#include <doctest.h>

#include <cmath>
#include <fstream>
#include <random>

#include "../support.hpp"
#include "restrav/error.hpp"
#include "restrav/image_io.hpp"
#include "restrav/ingest.hpp"

using namespace restrav;
using namespace testing_support;

namespace {

ErrorCode code_of(auto&& fn) {
    try {
        fn();
    } catch (const Error& e) {
        return e.code();
    }
    FAIL("expected an Error");
    return ErrorCode::IoError;
}

// Direct four-tap bilinear sample at half-pixel centres.
double naive_bilinear(const Image& src, int out_h, int out_w, int y, int x, int c) {
    auto clampd = [](double v, double hi) { return v < 0 ? 0.0 : (v > hi ? hi : v); };
    const double sy = clampd((y + 0.5) * src.height / out_h - 0.5, src.height - 1);
    const double sx = clampd((x + 0.5) * src.width / out_w - 0.5, src.width - 1);
    const int y0 = static_cast<int>(std::floor(sy)), x0 = static_cast<int>(std::floor(sx));
    const int y1 = std::min(y0 + 1, src.height - 1), x1 = std::min(x0 + 1, src.width - 1);
    const double wy = sy - y0, wx = sx - x0;
    return (1 - wy) * (1 - wx) * src.at(y0, x0, c) + (1 - wy) * wx * src.at(y0, x1, c) +
           wy * (1 - wx) * src.at(y1, x0, c) + wy * wx * src.at(y1, x1, c);
}

Image checkerboard(int n, int cell) {
    Image img(n, n, 3, 255.0f);
    for (int y = 0; y < n; ++y) {
        for (int x = 0; x < n; ++x) {
            const float v = ((y / cell + x / cell) % 2) ? 255.0f : 0.0f;
            for (int c = 0; c < 3; ++c) img.at(y, x, c) = c == 1 ? 255.0f - v : v;
        }
    }
    return img;
}

}  // namespace

TEST_CASE("uniform-time plan picks the nearest frames") {
    SamplingConfig cfg;
    const auto plan = plan_samples(150, 30.0, cfg);  // 5 s at 30 fps
    REQUIRE(plan.indices.size() == 24);
    for (int j = 0; j < 24; ++j) {
        const double t = j * 2.0 / 23.0;
        CHECK(plan.timestamps[j] == t);
        CHECK(plan.indices[j] == static_cast<std::size_t>(std::floor(t * 30.0 + 0.5)));
    }
    CHECK(plan.indices.front() == 0);
    CHECK(plan.indices.back() == 60);

    cfg.window_offset_seconds = 1.5;
    const auto shifted = plan_samples(150, 30.0, cfg);
    for (int j = 0; j < 24; ++j) CHECK(shifted.timestamps[j] == 1.5 + j * 2.0 / 23.0);
}

TEST_CASE("every-kth plan") {
    SamplingConfig cfg;
    cfg.mode = SamplingMode::every_kth;
    cfg.k = 3;
    const auto plan = plan_samples(60, 30.0, cfg);  // 2 s source
    REQUIRE(plan.indices.size() == 20);
    for (std::size_t m = 0; m < 20; ++m) CHECK(plan.indices[m] == 3 * m);

    cfg.k = 30;  // only 0 and 30 fit in the window
    CHECK(code_of([&] { plan_samples(60, 30.0, cfg); }) == ErrorCode::ConfigInvalid);
}

TEST_CASE("sampling rejects windows past the end and bad configs") {
    SamplingConfig cfg;
    cfg.window_offset_seconds = 4.0;
    CHECK(code_of([&] { plan_samples(150, 30.0, cfg); }) == ErrorCode::SourceTooShort);
    cfg.window_offset_seconds = 3.0;
    CHECK(plan_samples(150, 30.0, cfg).indices.back() == 149);

    SamplingConfig bad;
    bad.frame_count = 7;
    CHECK(code_of([&] { bad.validate(); }) == ErrorCode::ConfigInvalid);
    bad.frame_count = 24;
    bad.window_seconds = 0.0;
    CHECK(code_of([&] { bad.validate(); }) == ErrorCode::ConfigInvalid);
    CHECK(code_of([] { sampling_mode_from_string("bogus"); }) == ErrorCode::ConfigInvalid);
}

TEST_CASE("sliding offsets step through the source and end flush") {
    const auto off = sliding_offsets(5.0, 2.0, 30.0, 10);
    REQUIRE(off.size() == 10);
    for (std::size_t m = 0; m < 9; ++m) CHECK(off[m] == doctest::Approx(m / 3.0));
    CHECK(off.back() == 3.0);
    CHECK(sliding_offsets(2.0, 2.0, 30.0, 10) == std::vector<double>{0.0});
}

TEST_CASE("preprocess scaling, identity and idempotence") {
    Image gray(10, 12, 1, 255.0f);
    std::fill(gray.pixels.begin(), gray.pixels.end(), 128.0f);
    const auto g = preprocess(gray);
    CHECK(g.height == 224);
    CHECK(g.channels == 3);
    for (float v : g.pixels) CHECK(v == doctest::Approx(0.50196).epsilon(1e-5));

    std::mt19937_64 rng(51);
    std::uniform_real_distribution<float> u(0.0f, 1.0f);
    Image unit(224, 224, 3, 1.0f);
    for (auto& v : unit.pixels) v = u(rng);
    CHECK(preprocess(unit).pixels == unit.pixels);

    Image odd(97, 131, 3, 255.0f);
    for (auto& v : odd.pixels) v = 255.0f * u(rng);
    const auto once = preprocess(odd);
    CHECK(preprocess(once).pixels == once.pixels);
    for (float v : once.pixels) CHECK((v >= 0.0f && v <= 1.0f));
}

TEST_CASE("448 checkerboard resize matches a naive bilinear reference") {
    for (int cell : {1, 3, 8}) {
        const auto src = checkerboard(448, cell);
        const auto out = preprocess(src);
        for (int y = 0; y < 224; ++y) {
            for (int x = 0; x < 224; ++x) {
                for (int c = 0; c < 3; ++c) {
                    CHECK(std::abs(out.at(y, x, c) - naive_bilinear(src, 224, 224, y, x, c) / 255.0) <= 1e-6);
                }
            }
        }
    }
    const auto up = resize_bilinear(checkerboard(7, 2), 19, 23);
    const auto ref = checkerboard(7, 2);
    for (int y = 0; y < 19; ++y) {
        for (int x = 0; x < 23; ++x) CHECK(std::abs(up.at(y, x, 0) - naive_bilinear(ref, 19, 23, y, x, 0)) <= 1e-4);
    }
}

TEST_CASE("affine stage") {
    Image img(224, 224, 3, 1.0f);
    std::fill(img.pixels.begin(), img.pixels.end(), 0.5f);
    AffineStage a{{0.5f, 0.25f, 0.0f}, {1.0f, 0.5f, 2.0f}};
    const auto out = preprocess(img, a);
    CHECK(out.at(3, 4, 0) == 0.0f);
    CHECK(out.at(3, 4, 1) == 0.5f);
    CHECK(out.at(3, 4, 2) == 0.25f);
    Image gray(4, 4, 1);
    CHECK(code_of([&] { apply_affine(gray, a); }) == ErrorCode::ConfigInvalid);
}

TEST_CASE("PNG and PNM round trips") {
    const auto dir = temp_dir("images");
    Image rgb(5, 7, 3, 255.0f);
    for (std::size_t i = 0; i < rgb.pixels.size(); ++i) rgb.pixels[i] = static_cast<float>((i * 37) % 256);
    write_png(dir / "a.png", rgb);
    write_pnm(dir / "a.ppm", rgb);
    for (const auto& name : {"a.png", "a.ppm"}) {
        const auto back = read_image(dir / name);
        CHECK(back.height == 5);
        CHECK(back.width == 7);
        CHECK(back.channels == 3);
        CHECK(back.max_value == 255.0f);
        CHECK(back.pixels == rgb.pixels);
    }
    Image gray(3, 3, 1, 255.0f);
    gray.pixels.assign(9, 200.0f);
    write_pnm(dir / "g.pgm", gray);
    CHECK(read_image(dir / "g.pgm").channels == 1);

    std::ofstream(dir / "broken.png") << "not a png";
    CHECK(code_of([&] { read_image(dir / "broken.png"); }) == ErrorCode::DecodeFailure);
    CHECK(code_of([&] { read_image(dir / "x.bmp"); }) == ErrorCode::DecodeFailure);
}

TEST_CASE("image directory source samples planned frames") {
    const auto dir = temp_dir("imgdir");
    for (int i = 0; i < 60; ++i) {
        Image f(8, 8, 3, 255.0f);
        std::fill(f.pixels.begin(), f.pixels.end(), static_cast<float>(i * 4));
        char name[32];
        std::snprintf(name, sizeof name, "f%03d.png", i);
        write_png(dir / name, f);
    }
    std::ofstream(dir / "notes.txt") << "ignored";
    ImageDirectorySource src(dir, 30.0);
    CHECK(src.frame_count() == 60);
    CHECK(src.duration_seconds() == 2.0);
    SamplingConfig cfg;
    cfg.frame_count = 12;
    const auto seq = sample_frames(src, cfg, 16);
    REQUIRE(seq.frames.size() == 12);
    const auto plan = plan_samples(60, 30.0, cfg);
    CHECK(seq.timestamps == plan.timestamps);
    for (std::size_t j = 0; j < 12; ++j) {
        CHECK(seq.frames[j].height == 16);
        CHECK(seq.frames[j].at(0, 0, 0) == doctest::Approx(plan.indices[j] * 4 / 255.0).epsilon(1e-6));
    }
    CHECK(code_of([&] { ImageDirectorySource(dir / "missing", 30.0); }) == ErrorCode::DecodeFailure);
}

TEST_CASE("raw stream round trip") {
    const auto dir = temp_dir("raw");
    std::vector<Image> frames;
    for (int i = 0; i < 9; ++i) {
        Image f(4, 5, 3, 1.0f);
        for (std::size_t p = 0; p < f.pixels.size(); ++p) f.pixels[p] = static_cast<float>(i) / 10.0f + p * 1e-3f;
        frames.push_back(f);
    }
    write_raw_stream(dir / "s.raw", frames);
    RawStreamSource src(dir / "s.raw", 4.0);
    CHECK(src.frame_count() == 9);
    CHECK(src.frame(6).pixels == frames[6].pixels);

    std::filesystem::resize_file(dir / "s.raw", std::filesystem::file_size(dir / "s.raw") - 8);
    CHECK(code_of([&] { RawStreamSource(dir / "s.raw", 4.0); }) == ErrorCode::DecodeFailure);
}

TEST_CASE("decoder pipe reads RGB24 frames from a command") {
    const auto dir = temp_dir("pipe");
    // 3 frames of 2x2 RGB, byte value = frame index * 10
    std::string bytes;
    for (int f = 0; f < 3; ++f) bytes += std::string(12, static_cast<char>(f * 10));
    std::ofstream(dir / "video.bin", std::ios::binary) << bytes;
    DecoderPipeSource src("cat {input}", (dir / "video.bin").string(), 2, 2, 10.0);
    CHECK(src.frame_count() == 3);
    CHECK(src.frame(2).at(1, 1, 2) == 20.0f);
    CHECK(src.frame(2).max_value == 255.0f);

    CHECK(DecoderPipeSource::render_command("dec {input} -", "it's") == "dec 'it'\\''s' -");
    CHECK(code_of([&] { DecoderPipeSource("false", "x", 2, 2, 10.0); }) == ErrorCode::DecodeFailure);
    CHECK(code_of([&] { DecoderPipeSource("printf abc", "x", 2, 2, 10.0); }) == ErrorCode::DecodeFailure);
}
