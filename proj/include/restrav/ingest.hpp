#pragma once

// Frame sources, temporal sampling and frame preprocessing.

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace restrav {

enum class SamplingMode { uniform_time, every_kth };

std::string to_string(SamplingMode mode);
SamplingMode sampling_mode_from_string(const std::string& name);

inline constexpr int kMinFrameCount = 8;
inline constexpr int kDefaultImageSize = 224;

struct SamplingConfig {
    double window_seconds = 2.0;
    int frame_count = 24;               // T; ignored in every_kth mode
    double window_offset_seconds = 0.0;
    SamplingMode mode = SamplingMode::uniform_time;
    int k = 1;                          // stride in every_kth mode

    // Throws ConfigInvalid.
    void validate() const;
};

// Which source frames to take, and the nominal time of each.
struct SamplePlan {
    std::vector<std::size_t> indices;
    std::vector<double> timestamps;
};

// Index-level sampling shared by frame sources and full-rate embedding trajectories.
// uniform_time: t_j = offset + j * window / (T - 1), nearest frame with round-half-up.
// every_kth: frames start, start + k, ... strictly inside the window.
SamplePlan plan_samples(std::size_t source_frames, double fps, const SamplingConfig& cfg);

// Window start offsets for a sliding-window sweep: every `step_frames` source frames
// while the window still fits in the source.
std::vector<double> sliding_offsets(double duration_seconds, double window_seconds, double fps,
                                    int step_frames);

// HWC row-major float image. max_value is the top of the source intensity range
// (255 for 8-bit sources, 1 for already-normalised data).
struct Image {
    int height = 0;
    int width = 0;
    int channels = 0;
    float max_value = 1.0f;
    std::vector<float> pixels;

    Image() = default;
    Image(int h, int w, int c, float max_v = 1.0f)
        : height(h), width(w), channels(c), max_value(max_v),
          pixels(static_cast<std::size_t>(h) * w * c, 0.0f) {}

    float& at(int y, int x, int c) { return pixels[(static_cast<std::size_t>(y) * width + x) * channels + c]; }
    float at(int y, int x, int c) const {
        return pixels[(static_cast<std::size_t>(y) * width + x) * channels + c];
    }
    bool empty() const noexcept { return pixels.empty(); }
};

struct AffineStage {
    std::array<float, 3> mean{0.0f, 0.0f, 0.0f};
    std::array<float, 3> std{1.0f, 1.0f, 1.0f};
};

// Half-pixel-centre bilinear resize with edge clamping.
Image resize_bilinear(const Image& src, int out_h, int out_w);

// Resize to size x size, scale from [0, max_value] into [0, 1] (clamped), then apply the
// optional per-channel (x - mean) / std stage. Single-channel input is replicated to RGB.
Image preprocess(const Image& raw, const std::optional<AffineStage>& affine = std::nullopt,
                 int size = kDefaultImageSize);

// Applies (x - mean) / std in place to a 3-channel image.
void apply_affine(Image& image, const AffineStage& affine);

struct FrameSequence {
    std::vector<Image> frames;      // preprocessed, intensities in [0, 1]
    std::vector<double> timestamps;
    std::string source_id;
};

class FrameSource {
public:
    virtual ~FrameSource() = default;

    virtual std::string id() const = 0;
    virtual double fps() const = 0;
    virtual std::size_t frame_count() const = 0;
    // Raw frame in source intensity range; throws DecodeFailure.
    virtual Image frame(std::size_t index) = 0;

    double duration_seconds() const { return static_cast<double>(frame_count()) / fps(); }
};

// Lexicographically sorted PNG / PPM / PGM files in a directory.
class ImageDirectorySource final : public FrameSource {
public:
    ImageDirectorySource(std::filesystem::path dir, double fps);

    std::string id() const override { return dir_.string(); }
    double fps() const override { return fps_; }
    std::size_t frame_count() const override { return files_.size(); }
    Image frame(std::size_t index) override;

    const std::vector<std::filesystem::path>& files() const noexcept { return files_; }

private:
    std::filesystem::path dir_;
    double fps_;
    std::vector<std::filesystem::path> files_;
};

// "RSTVRAW1" stream: u32 H, W, C, N, then N frames of H*W*C float32 LE.
class RawStreamSource final : public FrameSource {
public:
    RawStreamSource(std::filesystem::path path, double fps);

    std::string id() const override { return path_.string(); }
    double fps() const override { return fps_; }
    std::size_t frame_count() const override { return count_; }
    Image frame(std::size_t index) override;

private:
    std::filesystem::path path_;
    double fps_;
    std::uint32_t height_ = 0, width_ = 0, channels_ = 0, count_ = 0;
};

void write_raw_stream(const std::filesystem::path& path, const std::vector<Image>& frames);

// Spawns a shell command that writes RGB24 frames of the given size to stdout.
// "{input}" in the template is replaced by the quoted input path. The whole stream is
// read once on construction.
class DecoderPipeSource final : public FrameSource {
public:
    DecoderPipeSource(std::string command_template, std::string input, int width, int height,
                      double fps);

    std::string id() const override { return input_; }
    double fps() const override { return fps_; }
    std::size_t frame_count() const override { return frames_.size(); }
    Image frame(std::size_t index) override;

    static std::string render_command(const std::string& command_template, const std::string& input);

private:
    std::string input_;
    int width_, height_;
    double fps_;
    std::vector<std::vector<std::uint8_t>> frames_;
};

// In-memory frames; used by tests and bindings.
class MemoryFrameSource final : public FrameSource {
public:
    MemoryFrameSource(std::string id, std::vector<Image> frames, double fps)
        : id_(std::move(id)), frames_(std::move(frames)), fps_(fps) {}

    std::string id() const override { return id_; }
    double fps() const override { return fps_; }
    std::size_t frame_count() const override { return frames_.size(); }
    Image frame(std::size_t index) override;

private:
    std::string id_;
    std::vector<Image> frames_;
    double fps_;
};

// Returns exactly the planned frames, preprocessed to size x size in [0, 1].
FrameSequence sample_frames(FrameSource& source, const SamplingConfig& cfg,
                            int size = kDefaultImageSize);

}  // namespace restrav
