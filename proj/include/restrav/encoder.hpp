#pragma once

// Frame-sequence -> embedding-trajectory encoding, and the RSTVEMB1 file format.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "restrav/ingest.hpp"

namespace restrav {

enum class TokenPolicy { cls_only, patches_only, cls_plus_patches };

std::string to_string(TokenPolicy policy);
TokenPolicy token_policy_from_string(const std::string& name);

struct TokenLayout {
    std::uint32_t num_tokens = 1;
    std::uint32_t token_dim = 0;

    std::size_t dim() const noexcept { return std::size_t{num_tokens} * token_dim; }
    bool operator==(const TokenLayout&) const = default;
};

// Sequence z_1..z_T of per-frame embeddings, stored single precision (T x D row-major).
struct EmbeddingTrajectory {
    std::size_t frames = 0;                 // T
    std::size_t dim = 0;                    // D
    std::vector<float> values;
    std::vector<double> timestamps;         // empty when unknown (not persisted in RSTVEMB1)
    std::string backend_id;
    TokenLayout layout;

    EmbeddingTrajectory() = default;
    EmbeddingTrajectory(std::size_t t, std::size_t d)
        : frames(t), dim(d), values(t * d, 0.0f), layout{1, static_cast<std::uint32_t>(d)} {}

    std::span<const float> row(std::size_t i) const { return {values.data() + i * dim, dim}; }
    std::span<float> row(std::size_t i) { return {values.data() + i * dim, dim}; }

    // Keeps only the given rows, in order.
    EmbeddingTrajectory select_rows(std::span<const std::size_t> rows) const;

    // Shape, layout and finiteness; throws ShapeMismatch / TooFewFrames / NonFiniteOutput.
    void validate(std::size_t min_frames = 3) const;
};

struct BackendManifest {
    std::string backend_id;
    int input_height = kDefaultImageSize;
    int input_width = kDefaultImageSize;
    int input_channels = 3;
    std::optional<AffineStage> affine_stage;
    std::string output_block = "final transformer block";
    TokenPolicy token_policy = TokenPolicy::cls_plus_patches;
    // Optional declared graph output (CLS + patch tokens); checked against inference.
    std::optional<TokenLayout> graph_tokens;
    std::string input_name;                 // empty: the graph's first input
    std::string output_name;                // empty: the graph's default output

    static BackendManifest from_json_text(const std::string& text);
    static BackendManifest load(const std::filesystem::path& path);
    std::string to_json_text() const;
};

// Tokens laid out by the policy: CLS first, then patches in raster order.
TokenLayout select_layout(TokenPolicy policy, const TokenLayout& graph_tokens);
std::vector<float> select_tokens(TokenPolicy policy, std::span<const float> graph_output,
                                 const TokenLayout& graph_tokens);

class EncoderBackend {
public:
    virtual ~EncoderBackend() = default;

    virtual const BackendManifest& manifest() const = 0;
    // Full token tensor (CLS first) for one preprocessed frame after the affine stage.
    virtual std::vector<float> infer(const Image& frame, TokenLayout& graph_tokens) = 0;
};

// ONNX model plus JSON manifest sidecar. Throws BackendLoadFailure.
std::unique_ptr<EncoderBackend> load_onnx_backend(const std::filesystem::path& model_path,
                                                  const std::filesystem::path& manifest_path);
bool onnx_backend_available() noexcept;

// Default sidecar location: <model>.json
std::filesystem::path default_manifest_path(const std::filesystem::path& model_path);

EmbeddingTrajectory embed(const FrameSequence& frames, EncoderBackend& backend);

inline constexpr std::uint32_t kEmbeddingFormatVersion = 1;

std::vector<std::uint8_t> encode_embeddings(const EmbeddingTrajectory& traj);
// Validates structure and checksum only (FormatError / ChecksumMismatch).
EmbeddingTrajectory decode_embeddings(std::span<const std::uint8_t> bytes);

void store_embeddings(const std::filesystem::path& path, const EmbeddingTrajectory& traj);
// decode + finiteness/layout validation.
EmbeddingTrajectory load_precomputed(const std::filesystem::path& path);

bool is_embedding_file(const std::filesystem::path& path);
bool is_raw_stream_file(const std::filesystem::path& path);

}  // namespace restrav
