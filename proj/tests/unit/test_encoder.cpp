#include <doctest.h>

#include <cstring>
#include <fstream>
#include <random>

#include <nlohmann/json.hpp>

#include "../support.hpp"
#include "restrav/binary_io.hpp"
#include "restrav/encoder.hpp"
#include "restrav/error.hpp"
#include "restrav/features.hpp"
#include "restrav/geometry.hpp"
#include "restrav/image_io.hpp"

using namespace restrav;
using namespace testing_support;

namespace {

const std::filesystem::path kFixtures = RESTRAV_FIXTURES_DIR;

// Deterministic stand-in for a ViT: each token is a fixed linear read-out of channel means.
class FakeBackend final : public EncoderBackend {
public:
    FakeBackend(std::uint32_t tokens, std::uint32_t width, TokenPolicy policy = TokenPolicy::cls_plus_patches) {
        manifest_.backend_id = "fake";
        manifest_.token_policy = policy;
        manifest_.graph_tokens = TokenLayout{tokens, width};
    }
    const BackendManifest& manifest() const override { return manifest_; }
    std::vector<float> infer(const Image& frame, TokenLayout& graph_tokens) override {
        ++calls;
        graph_tokens = *manifest_.graph_tokens;
        double m[3] = {0, 0, 0};
        for (std::size_t i = 0; i < frame.pixels.size(); ++i) m[i % 3] += frame.pixels[i];
        std::vector<float> out(graph_tokens.dim());
        for (std::size_t k = 0; k < out.size(); ++k) {
            out[k] = static_cast<float>(std::sin(0.001 * k * m[k % 3] / 50176.0 + poison));
        }
        return out;
    }
    BackendManifest manifest_;
    int calls = 0;
    double poison = 0.0;
};

FrameSequence solid_frames(const std::vector<float>& levels) {
    FrameSequence seq;
    for (float l : levels) {
        Image img(224, 224, 3, 1.0f);
        std::fill(img.pixels.begin(), img.pixels.end(), l);
        seq.frames.push_back(img);
        seq.timestamps.push_back(seq.timestamps.size() * 0.1);
    }
    return seq;
}

nlohmann::json read_json(const std::filesystem::path& p) {
    std::ifstream in(p);
    return nlohmann::json::parse(in);
}

}  // namespace

TEST_CASE("embedding shape follows the token policy") {
    FakeBackend vit(197, 384);
    const auto traj = embed(solid_frames({0.1f, 0.2f, 0.1f, 0.7f}), vit);
    CHECK(traj.frames == 4);
    CHECK(traj.dim == 75648);
    CHECK(traj.layout == TokenLayout{197, 384});
    CHECK(traj.backend_id == "fake");
    CHECK(traj.timestamps.size() == 4);
    CHECK(std::equal(traj.row(0).begin(), traj.row(0).end(), traj.row(2).begin()));
    CHECK_FALSE(std::equal(traj.row(0).begin(), traj.row(0).end(), traj.row(1).begin()));
    traj.validate();

    FakeBackend cls(197, 384, TokenPolicy::cls_only), patches(197, 384, TokenPolicy::patches_only);
    CHECK(embed(solid_frames({0.3f}), cls).dim == 384);
    const auto p = embed(solid_frames({0.3f}), patches);
    CHECK(p.dim == 196 * 384);
    const auto full = embed(solid_frames({0.3f}), vit);
    CHECK(std::equal(p.values.begin(), p.values.end(), full.values.begin() + 384));
}

TEST_CASE("embed rejects wrong frame shapes and non-finite output") {
    FakeBackend vit(5, 4);
    auto seq = solid_frames({0.5f});
    seq.frames[0] = Image(100, 100, 3);
    try {
        embed(seq, vit);
        FAIL("expected ShapeMismatch");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::ShapeMismatch);
    }
    vit.poison = std::nan("");
    try {
        embed(solid_frames({0.5f}), vit);
        FAIL("expected NonFiniteOutput");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::NonFiniteOutput);
    }
}

TEST_CASE("RSTVEMB1 round trip is bit-identical at full ViT size") {
    std::mt19937_64 rng(61);
    std::normal_distribution<float> n(0.0f, 1.0f);
    EmbeddingTrajectory t(24, 75648);
    t.layout = {197, 384};
    t.backend_id = "vit-b16";
    for (auto& v : t.values) v = n(rng);
    t.values[5] = -0.0f;
    t.values[6] = std::numeric_limits<float>::denorm_min();
    const auto dir = temp_dir("emb");
    store_embeddings(dir / "t.emb", t);
    CHECK(is_embedding_file(dir / "t.emb"));
    CHECK(std::filesystem::file_size(dir / "t.emb") == 8 + 24 + 7 + 24ull * 75648 * 4 + 4);
    const auto back = load_precomputed(dir / "t.emb");
    CHECK(back.frames == 24);
    CHECK(back.dim == 75648);
    CHECK(back.layout == t.layout);
    CHECK(back.backend_id == "vit-b16");
    CHECK(std::memcmp(back.values.data(), t.values.data(), t.values.size() * 4) == 0);
}

TEST_CASE("RSTVEMB1 corruption is detected") {
    EmbeddingTrajectory t(3, 4);
    t.backend_id = "x";
    for (std::size_t i = 0; i < t.values.size(); ++i) t.values[i] = static_cast<float>(i);
    const auto bytes = encode_embeddings(t);

    auto code = [](std::span<const std::uint8_t> b) {
        try {
            decode_embeddings(b);
        } catch (const Error& e) {
            return e.code();
        }
        return ErrorCode::IoError;
    };
    CHECK(code(std::span(bytes).first(bytes.size() - 5)) == ErrorCode::FormatError);
    CHECK(code(std::span(bytes).first(20)) == ErrorCode::FormatError);
    auto flipped = bytes;
    flipped[8 + 24 + 1 + 6] ^= 0x10;
    CHECK(code(flipped) == ErrorCode::ChecksumMismatch);
    auto magic = bytes;
    magic[0] = 'X';
    CHECK(code(magic) == ErrorCode::FormatError);
    auto trailing = bytes;
    trailing.push_back(0);
    CHECK(code(trailing) == ErrorCode::FormatError);

    const auto dir = temp_dir("emb_bad");
    binary::write_file((dir / "trunc.emb").string(), std::span(bytes).first(bytes.size() - 1));
    try {
        load_precomputed(dir / "trunc.emb");
        FAIL("expected FormatError");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::FormatError);
    }
    CHECK_THROWS_AS(load_precomputed(dir / "missing.emb"), Error);
}

TEST_CASE("validate flags NaN, shape and layout problems") {
    EmbeddingTrajectory t(4, 6);
    t.values[13] = std::nanf("");
    try {
        t.validate();
        FAIL("expected NonFiniteOutput");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::NonFiniteOutput);
    }
    EmbeddingTrajectory s(2, 6);
    CHECK_THROWS_AS(s.validate(), Error);
    EmbeddingTrajectory l(4, 6);
    l.layout = {2, 2};
    CHECK_THROWS_AS(l.validate(), Error);
    const std::vector<std::size_t> rows{3, 1};
    EmbeddingTrajectory r(4, 2);
    r.values = {0, 1, 2, 3, 4, 5, 6, 7};
    CHECK(r.select_rows(rows).values == std::vector<float>{6, 7, 2, 3});
}

TEST_CASE("backend manifest JSON") {
    const auto m = BackendManifest::load(kFixtures / "tiny_encoder.onnx.json");
    CHECK(m.backend_id == "tiny-test-encoder");
    CHECK(m.token_policy == TokenPolicy::cls_plus_patches);
    REQUIRE(m.affine_stage.has_value());
    CHECK(m.affine_stage->mean[0] == 0.485f);
    CHECK(m.graph_tokens == TokenLayout{17, 8});
    const auto again = BackendManifest::from_json_text(m.to_json_text());
    CHECK(again.to_json_text() == m.to_json_text());
    CHECK(default_manifest_path("a/b.onnx") == std::filesystem::path("a/b.onnx.json"));
    CHECK_THROWS_AS(BackendManifest::from_json_text("{}"), Error);
    CHECK_THROWS_AS(BackendManifest::from_json_text(R"({"backend_id":"x","token_policy":"all"})"), Error);
}

TEST_CASE("externally written golden embeddings decode and match their reference") {
    for (const char* clip : {"clip_motion", "clip_static"}) {
        const auto golden = read_json(kFixtures / "golden" / (std::string(clip) + ".json"));
        const auto t = load_precomputed(kFixtures / "golden" / (std::string(clip) + ".emb"));
        REQUIRE(t.frames == golden["frames"].get<std::size_t>());
        REQUIRE(t.dim == golden["dim"].get<std::size_t>());
        CHECK(t.layout == TokenLayout{17, 8});
        for (std::size_t i = 0; i < t.frames; ++i) {
            for (std::size_t j = 0; j < t.dim; ++j) CHECK(t.row(i)[j] == golden["embeddings"][i][j].get<double>());
        }
        const auto sig = compute_signals(t);
        const auto d = golden["distances"].get<std::vector<double>>();
        const auto th = golden["curvatures_deg"].get<std::vector<double>>();
        for (std::size_t i = 0; i < d.size(); ++i) CHECK(std::abs(sig.distances[i] - d[i]) <= 1e-12 * (1 + d[i]));
        for (std::size_t i = 0; i < th.size(); ++i) CHECK(std::abs(sig.curvatures_deg[i] - th[i]) <= 1e-9);
        CHECK(sig.degenerate_steps == golden["degenerate_steps"].get<std::vector<std::size_t>>());
    }
}

TEST_CASE("ONNX fixture encoder reproduces the golden trajectories") {
    if (!onnx_backend_available()) {
        MESSAGE("built without an ONNX runtime; skipping");
        return;
    }
    auto backend = load_onnx_backend(kFixtures / "tiny_encoder.onnx", kFixtures / "tiny_encoder.onnx.json");
    for (const char* clip : {"clip_motion", "clip_static"}) {
        CAPTURE(clip);
        const auto golden = read_json(kFixtures / "golden" / (std::string(clip) + ".json"));
        ImageDirectorySource src(kFixtures / clip, golden["fps"].get<double>());
        SamplingConfig cfg;
        cfg.window_seconds = 2.0;
        cfg.frame_count = 8;
        const auto traj = embed(sample_frames(src, cfg), *backend);
        REQUIRE(traj.frames == 8);
        REQUIRE(traj.dim == 136);

        double scale = 0;
        for (const auto& row : golden["embeddings"]) {
            for (double v : row) scale = std::max(scale, std::abs(v));
        }
        for (std::size_t i = 0; i < 8; ++i) {
            for (std::size_t j = 0; j < 136; ++j) {
                CHECK(std::abs(traj.row(i)[j] - golden["embeddings"][i][j].get<double>()) <= 1e-4 * scale);
            }
        }
        const auto sig = compute_signals(traj);
        const auto st = aggregate_stats(sig);
        const auto& ref = golden["stats"];
        CHECK(std::abs(st.mu_d - ref["mu_d"].get<double>()) <= 1e-4 * std::max(1.0, ref["mu_d"].get<double>()));
        CHECK(std::abs(st.mu_theta - ref["mu_theta"].get<double>()) <=
              1e-4 * std::max(1.0, ref["mu_theta"].get<double>()));
        CHECK(sig.degenerate_steps == golden["degenerate_steps"].get<std::vector<std::size_t>>());
    }
    try {
        load_onnx_backend(kFixtures / "nope.onnx", kFixtures / "tiny_encoder.onnx.json");
        FAIL("expected BackendLoadFailure");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::BackendLoadFailure);
    }
}
