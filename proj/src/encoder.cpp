#include "restrav/encoder.hpp"

#include <zlib.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <nlohmann/json.hpp>

#include "restrav/binary_io.hpp"
#include "restrav/error.hpp"

namespace restrav {
namespace {

constexpr char kEmbMagic[] = "RSTVEMB1";
constexpr char kRawMagic[] = "RSTVRAW1";

std::uint32_t crc32_of(std::span<const std::uint8_t> bytes) {
    uLong crc = ::crc32(0L, Z_NULL, 0);
    // zlib takes uInt lengths; feed in chunks for large payloads.
    constexpr std::size_t kChunk = 1u << 30;
    for (std::size_t off = 0; off < bytes.size(); off += kChunk) {
        const auto n = static_cast<uInt>(std::min(kChunk, bytes.size() - off));
        crc = ::crc32(crc, bytes.data() + off, n);
    }
    return static_cast<std::uint32_t>(crc);
}

bool has_magic(const std::filesystem::path& path, const char* magic) {
    std::ifstream in(path, std::ios::binary);
    char buf[8] = {};
    return in.read(buf, 8) && std::string(buf, 8) == magic;
}

}  // namespace

std::string to_string(TokenPolicy policy) {
    switch (policy) {
    case TokenPolicy::cls_only: return "cls_only";
    case TokenPolicy::patches_only: return "patches_only";
    case TokenPolicy::cls_plus_patches: return "cls_plus_patches";
    }
    return "cls_plus_patches";
}

TokenPolicy token_policy_from_string(const std::string& name) {
    if (name == "cls_only") return TokenPolicy::cls_only;
    if (name == "patches_only") return TokenPolicy::patches_only;
    if (name == "cls_plus_patches") return TokenPolicy::cls_plus_patches;
    throw Error(ErrorCode::ConfigInvalid, "unknown token policy '" + name + "'");
}

EmbeddingTrajectory EmbeddingTrajectory::select_rows(std::span<const std::size_t> rows) const {
    EmbeddingTrajectory out;
    out.frames = rows.size();
    out.dim = dim;
    out.backend_id = backend_id;
    out.layout = layout;
    out.values.reserve(rows.size() * dim);
    for (std::size_t r : rows) {
        if (r >= frames) throw Error(ErrorCode::ShapeMismatch, "row index out of range");
        const auto src = row(r);
        out.values.insert(out.values.end(), src.begin(), src.end());
        if (!timestamps.empty()) out.timestamps.push_back(timestamps[r]);
    }
    return out;
}

void EmbeddingTrajectory::validate(std::size_t min_frames) const {
    if (values.size() != frames * dim) throw Error(ErrorCode::ShapeMismatch, "value count != T * D");
    if (layout.dim() != dim) {
        throw Error(ErrorCode::ShapeMismatch, "token layout " + std::to_string(layout.num_tokens) + "x" +
                                                  std::to_string(layout.token_dim) + " != D " + std::to_string(dim));
    }
    if (!timestamps.empty() && timestamps.size() != frames) {
        throw Error(ErrorCode::ShapeMismatch, "timestamp count != T");
    }
    if (frames < min_frames) {
        throw Error(ErrorCode::TooFewFrames, "trajectory has " + std::to_string(frames) + " frames, need " +
                                                 std::to_string(min_frames));
    }
    for (std::size_t i = 0; i < values.size(); ++i) {
        if (!std::isfinite(values[i])) {
            throw Error(ErrorCode::NonFiniteOutput, "non-finite embedding value at frame " +
                                                       std::to_string(i / std::max<std::size_t>(dim, 1)));
        }
    }
}

BackendManifest BackendManifest::from_json_text(const std::string& text) {
    BackendManifest m;
    try {
        const auto j = nlohmann::json::parse(text);
        m.backend_id = j.at("backend_id").get<std::string>();
        if (j.contains("expected_input")) {
            const auto& in = j.at("expected_input");
            m.input_height = in.value("H", m.input_height);
            m.input_width = in.value("W", m.input_width);
            m.input_channels = in.value("C", m.input_channels);
        }
        if (j.contains("affine_stage") && !j.at("affine_stage").is_null()) {
            AffineStage a;
            a.mean = j.at("affine_stage").at("mean").get<std::array<float, 3>>();
            a.std = j.at("affine_stage").at("std").get<std::array<float, 3>>();
            m.affine_stage = a;
        }
        m.output_block = j.value("output_block", m.output_block);
        m.token_policy = token_policy_from_string(j.value("token_policy", std::string("cls_plus_patches")));
        if (j.contains("token_layout")) {
            m.graph_tokens = TokenLayout{j.at("token_layout").at("num_tokens").get<std::uint32_t>(),
                                         j.at("token_layout").at("token_dim").get<std::uint32_t>()};
        }
        m.input_name = j.value("input_name", std::string());
        m.output_name = j.value("output_name", std::string());
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::BackendLoadFailure, std::string("invalid backend manifest: ") + e.what());
    }
    return m;
}

BackendManifest BackendManifest::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::BackendLoadFailure, "cannot open backend manifest " + path.string());
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return from_json_text(text);
}

std::string BackendManifest::to_json_text() const {
    nlohmann::json j;
    j["backend_id"] = backend_id;
    j["expected_input"] = {{"H", input_height}, {"W", input_width}, {"C", input_channels}};
    if (affine_stage) j["affine_stage"] = {{"mean", affine_stage->mean}, {"std", affine_stage->std}};
    j["output_block"] = output_block;
    j["token_policy"] = to_string(token_policy);
    if (graph_tokens) {
        j["token_layout"] = {{"num_tokens", graph_tokens->num_tokens}, {"token_dim", graph_tokens->token_dim}};
    }
    if (!input_name.empty()) j["input_name"] = input_name;
    if (!output_name.empty()) j["output_name"] = output_name;
    return j.dump(2);
}

std::filesystem::path default_manifest_path(const std::filesystem::path& model_path) {
    return std::filesystem::path(model_path.string() + ".json");
}

TokenLayout select_layout(TokenPolicy policy, const TokenLayout& graph_tokens) {
    switch (policy) {
    case TokenPolicy::cls_only: return {1, graph_tokens.token_dim};
    case TokenPolicy::patches_only:
        if (graph_tokens.num_tokens < 2) throw Error(ErrorCode::ShapeMismatch, "graph output has no patch tokens");
        return {graph_tokens.num_tokens - 1, graph_tokens.token_dim};
    case TokenPolicy::cls_plus_patches: return graph_tokens;
    }
    return graph_tokens;
}

std::vector<float> select_tokens(TokenPolicy policy, std::span<const float> graph_output,
                                 const TokenLayout& graph_tokens) {
    if (graph_output.size() != graph_tokens.dim()) {
        throw Error(ErrorCode::ShapeMismatch, "graph output size does not match its token layout");
    }
    const std::size_t width = graph_tokens.token_dim;
    switch (policy) {
    case TokenPolicy::cls_only: return {graph_output.begin(), graph_output.begin() + width};
    case TokenPolicy::patches_only:
        select_layout(policy, graph_tokens);
        return {graph_output.begin() + width, graph_output.end()};
    case TokenPolicy::cls_plus_patches: return {graph_output.begin(), graph_output.end()};
    }
    return {};
}

EmbeddingTrajectory embed(const FrameSequence& frames, EncoderBackend& backend) {
    const BackendManifest& m = backend.manifest();
    if (frames.frames.empty()) throw Error(ErrorCode::TooFewFrames, "no frames to embed");
    EmbeddingTrajectory traj;
    traj.backend_id = m.backend_id;
    traj.timestamps = frames.timestamps;
    std::optional<TokenLayout> first_layout;
    for (std::size_t i = 0; i < frames.frames.size(); ++i) {
        Image input = frames.frames[i];
        if (input.height != m.input_height || input.width != m.input_width || input.channels != m.input_channels) {
            throw Error(ErrorCode::ShapeMismatch,
                        "frame " + std::to_string(i) + " is " + std::to_string(input.height) + "x" +
                            std::to_string(input.width) + "x" + std::to_string(input.channels) +
                            ", backend expects " + std::to_string(m.input_height) + "x" +
                            std::to_string(m.input_width) + "x" + std::to_string(m.input_channels));
        }
        if (m.affine_stage) apply_affine(input, *m.affine_stage);

        TokenLayout graph_tokens;
        const std::vector<float> out = backend.infer(input, graph_tokens);
        if (m.graph_tokens && !(*m.graph_tokens == graph_tokens)) {
            throw Error(ErrorCode::ShapeMismatch, "model output token layout differs from manifest");
        }
        if (first_layout && !(*first_layout == graph_tokens)) {
            throw Error(ErrorCode::ShapeMismatch, "token layout changed between frames");
        }
        first_layout = graph_tokens;
        for (float v : out) {
            if (!std::isfinite(v)) {
                throw Error(ErrorCode::NonFiniteOutput, "backend produced NaN/Inf for frame " + std::to_string(i));
            }
        }
        const auto row = select_tokens(m.token_policy, out, graph_tokens);
        if (i == 0) {
            traj.layout = select_layout(m.token_policy, graph_tokens);
            traj.dim = traj.layout.dim();
            traj.values.reserve(frames.frames.size() * traj.dim);
        }
        traj.values.insert(traj.values.end(), row.begin(), row.end());
    }
    traj.frames = frames.frames.size();
    return traj;
}

std::vector<std::uint8_t> encode_embeddings(const EmbeddingTrajectory& traj) {
    if (traj.values.size() != traj.frames * traj.dim) {
        throw Error(ErrorCode::ShapeMismatch, "value count != T * D");
    }
    if (traj.layout.dim() != traj.dim) throw Error(ErrorCode::ShapeMismatch, "token layout != D");
    std::vector<std::uint8_t> out(kEmbMagic, kEmbMagic + 8);
    out.reserve(8 + 24 + traj.backend_id.size() + traj.values.size() * 4 + 4);
    binary::put_u32(out, kEmbeddingFormatVersion);
    binary::put_u32(out, static_cast<std::uint32_t>(traj.frames));
    binary::put_u32(out, static_cast<std::uint32_t>(traj.dim));
    binary::put_u32(out, traj.layout.num_tokens);
    binary::put_u32(out, traj.layout.token_dim);
    binary::put_u32(out, static_cast<std::uint32_t>(traj.backend_id.size()));
    out.insert(out.end(), traj.backend_id.begin(), traj.backend_id.end());
    const std::size_t payload_start = out.size();
    for (float v : traj.values) binary::put_f32(out, v);
    const auto crc = crc32_of({out.data() + payload_start, out.size() - payload_start});
    binary::put_u32(out, crc);
    return out;
}

EmbeddingTrajectory decode_embeddings(std::span<const std::uint8_t> bytes) {
    binary::Reader r(bytes);
    if (r.str(8) != kEmbMagic) throw Error(ErrorCode::FormatError, "missing RSTVEMB1 magic");
    const auto version = r.u32();
    if (version != kEmbeddingFormatVersion) {
        throw Error(ErrorCode::FormatError, "unsupported embedding format version " + std::to_string(version));
    }
    EmbeddingTrajectory traj;
    traj.frames = r.u32();
    traj.dim = r.u32();
    traj.layout.num_tokens = r.u32();
    traj.layout.token_dim = r.u32();
    const auto id_len = r.u32();
    traj.backend_id = r.str(id_len);
    const std::size_t count = traj.frames * traj.dim;
    if (count > r.remaining() / 4) throw Error(ErrorCode::FormatError, "truncated embedding payload");
    const std::uint8_t* payload = r.take(count * 4);
    const auto stored_crc = r.u32();
    if (r.remaining() != 0) throw Error(ErrorCode::FormatError, "trailing bytes after checksum");
    if (crc32_of({payload, count * 4}) != stored_crc) {
        throw Error(ErrorCode::ChecksumMismatch, "embedding payload CRC32 mismatch");
    }
    traj.values.resize(count);
    for (std::size_t i = 0; i < count; ++i) traj.values[i] = binary::get_f32(payload + 4 * i);
    return traj;
}

void store_embeddings(const std::filesystem::path& path, const EmbeddingTrajectory& traj) {
    binary::write_file(path.string(), encode_embeddings(traj));
}

EmbeddingTrajectory load_precomputed(const std::filesystem::path& path) {
    std::vector<std::uint8_t> bytes;
    try {
        bytes = binary::read_file(path.string());
    } catch (const Error& e) {
        throw Error(ErrorCode::FormatError, e.what());
    }
    auto traj = decode_embeddings(bytes);
    traj.validate(1);
    return traj;
}

bool is_embedding_file(const std::filesystem::path& path) { return has_magic(path, kEmbMagic); }
bool is_raw_stream_file(const std::filesystem::path& path) { return has_magic(path, kRawMagic); }

}  // namespace restrav
