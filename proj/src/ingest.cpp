#include "restrav/ingest.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sys/wait.h>

#include "restrav/binary_io.hpp"
#include "restrav/error.hpp"
#include "restrav/image_io.hpp"

namespace restrav {
namespace {

constexpr char kRawMagic[] = "RSTVRAW1";
constexpr std::size_t kRawHeaderBytes = 8 + 4 * 4;
constexpr double kTimeFuzz = 1e-9;

std::size_t round_half_up(double x) { return static_cast<std::size_t>(std::floor(x + 0.5 + kTimeFuzz)); }

}  // namespace

std::string to_string(SamplingMode mode) {
    return mode == SamplingMode::uniform_time ? "uniform_time" : "every_kth";
}

SamplingMode sampling_mode_from_string(const std::string& name) {
    if (name == "uniform_time") return SamplingMode::uniform_time;
    if (name == "every_kth") return SamplingMode::every_kth;
    throw Error(ErrorCode::ConfigInvalid, "unknown sampling mode '" + name + "'");
}

void SamplingConfig::validate() const {
    if (!(window_seconds > 0.0) || !std::isfinite(window_seconds)) {
        throw Error(ErrorCode::ConfigInvalid, "window_seconds must be positive");
    }
    if (!(window_offset_seconds >= 0.0) || !std::isfinite(window_offset_seconds)) {
        throw Error(ErrorCode::ConfigInvalid, "window_offset_seconds must be >= 0");
    }
    if (mode == SamplingMode::uniform_time && frame_count < kMinFrameCount) {
        throw Error(ErrorCode::ConfigInvalid,
                    "frame_count must be >= " + std::to_string(kMinFrameCount) + ", got " +
                        std::to_string(frame_count));
    }
    if (mode == SamplingMode::every_kth && k < 1) {
        throw Error(ErrorCode::ConfigInvalid, "k must be >= 1");
    }
}

SamplePlan plan_samples(std::size_t source_frames, double fps, const SamplingConfig& cfg) {
    cfg.validate();
    if (!(fps > 0.0)) throw Error(ErrorCode::ConfigInvalid, "fps must be positive");
    const double duration = static_cast<double>(source_frames) / fps;
    if (source_frames == 0 || cfg.window_offset_seconds + cfg.window_seconds > duration + kTimeFuzz) {
        throw Error(ErrorCode::SourceTooShort,
                    "window [" + std::to_string(cfg.window_offset_seconds) + ", " +
                        std::to_string(cfg.window_offset_seconds + cfg.window_seconds) +
                        "] s exceeds source duration " + std::to_string(duration) + " s");
    }

    SamplePlan plan;
    const std::size_t last = source_frames - 1;
    if (cfg.mode == SamplingMode::uniform_time) {
        const int n = cfg.frame_count;
        plan.indices.reserve(n);
        plan.timestamps.reserve(n);
        for (int j = 0; j < n; ++j) {
            const double t = cfg.window_offset_seconds + static_cast<double>(j) * cfg.window_seconds / (n - 1);
            plan.timestamps.push_back(t);
            plan.indices.push_back(std::min(round_half_up(t * fps), last));
        }
    } else {
        const std::size_t start = round_half_up(cfg.window_offset_seconds * fps);
        const double window_frames = cfg.window_seconds * fps;
        for (std::size_t m = 0;; m += static_cast<std::size_t>(cfg.k)) {
            if (static_cast<double>(m) >= window_frames - kTimeFuzz || start + m > last) break;
            plan.indices.push_back(start + m);
            plan.timestamps.push_back(cfg.window_offset_seconds + static_cast<double>(m) / fps);
        }
        if (plan.indices.size() < 3) {
            throw Error(ErrorCode::ConfigInvalid,
                        "every_kth sampling yields " + std::to_string(plan.indices.size()) +
                            " frames; at least 3 are required");
        }
    }
    return plan;
}

std::vector<double> sliding_offsets(double duration_seconds, double window_seconds, double fps,
                                    int step_frames) {
    if (step_frames < 1 || !(fps > 0.0)) throw Error(ErrorCode::ConfigInvalid, "step_frames and fps must be positive");
    if (window_seconds > duration_seconds + kTimeFuzz) {
        throw Error(ErrorCode::SourceTooShort, "window longer than source");
    }
    const double span_frames = (duration_seconds - window_seconds) * fps;
    std::vector<double> offsets;
    for (long m = 0; static_cast<double>(m) * step_frames < span_frames - kTimeFuzz; ++m) {
        offsets.push_back(static_cast<double>(m) * step_frames / fps);
    }
    // Final window sits flush with the end of the source.
    offsets.push_back(std::max(0.0, duration_seconds - window_seconds));
    return offsets;
}

Image resize_bilinear(const Image& src, int out_h, int out_w) {
    if (src.empty() || out_h <= 0 || out_w <= 0) {
        throw Error(ErrorCode::ConfigInvalid, "resize of an empty image");
    }
    Image dst(out_h, out_w, src.channels, src.max_value);
    const double scale_y = static_cast<double>(src.height) / out_h;
    const double scale_x = static_cast<double>(src.width) / out_w;
    for (int y = 0; y < out_h; ++y) {
        const double sy = std::clamp((y + 0.5) * scale_y - 0.5, 0.0, static_cast<double>(src.height - 1));
        const int y0 = static_cast<int>(sy);
        const int y1 = std::min(y0 + 1, src.height - 1);
        const double fy = sy - y0;
        for (int x = 0; x < out_w; ++x) {
            const double sx = std::clamp((x + 0.5) * scale_x - 0.5, 0.0, static_cast<double>(src.width - 1));
            const int x0 = static_cast<int>(sx);
            const int x1 = std::min(x0 + 1, src.width - 1);
            const double fx = sx - x0;
            for (int c = 0; c < src.channels; ++c) {
                const double top = (1.0 - fx) * src.at(y0, x0, c) + fx * src.at(y0, x1, c);
                const double bottom = (1.0 - fx) * src.at(y1, x0, c) + fx * src.at(y1, x1, c);
                dst.at(y, x, c) = static_cast<float>((1.0 - fy) * top + fy * bottom);
            }
        }
    }
    return dst;
}

void apply_affine(Image& image, const AffineStage& affine) {
    if (image.channels != 3) throw Error(ErrorCode::ConfigInvalid, "affine stage expects 3 channels");
    for (std::size_t i = 0; i < image.pixels.size(); ++i) {
        const auto c = i % 3;
        image.pixels[i] = (image.pixels[i] - affine.mean[c]) / affine.std[c];
    }
}

Image preprocess(const Image& raw, const std::optional<AffineStage>& affine, int size) {
    if (raw.empty() || raw.height <= 0 || raw.width <= 0) {
        throw Error(ErrorCode::ConfigInvalid, "zero-sized frame");
    }
    if (raw.channels != 1 && raw.channels != 3 && raw.channels != 4) {
        throw Error(ErrorCode::ConfigInvalid, "unsupported channel count " + std::to_string(raw.channels));
    }
    if (!(raw.max_value > 0.0f)) throw Error(ErrorCode::ConfigInvalid, "max_value must be positive");

    Image rgb;
    if (raw.channels == 3) {
        rgb = raw;
    } else {
        rgb = Image(raw.height, raw.width, 3, raw.max_value);
        for (std::size_t p = 0; p < static_cast<std::size_t>(raw.height) * raw.width; ++p) {
            for (int c = 0; c < 3; ++c) {
                rgb.pixels[p * 3 + c] = raw.channels == 1 ? raw.pixels[p] : raw.pixels[p * 4 + c];
            }
        }
    }

    Image out = (rgb.height == size && rgb.width == size) ? std::move(rgb) : resize_bilinear(rgb, size, size);
    if (out.max_value != 1.0f) {
        const float inv = out.max_value;
        for (auto& v : out.pixels) v /= inv;
        out.max_value = 1.0f;
    }
    for (auto& v : out.pixels) v = std::clamp(v, 0.0f, 1.0f);
    if (affine) apply_affine(out, *affine);
    return out;
}

ImageDirectorySource::ImageDirectorySource(std::filesystem::path dir, double fps)
    : dir_(std::move(dir)), fps_(fps) {
    if (!(fps_ > 0.0)) throw Error(ErrorCode::ConfigInvalid, "fps must be positive");
    std::error_code ec;
    if (!std::filesystem::is_directory(dir_, ec)) {
        throw Error(ErrorCode::DecodeFailure, "not a directory: " + dir_.string());
    }
    for (const auto& entry : std::filesystem::directory_iterator(dir_)) {
        if (entry.is_regular_file() && is_supported_image(entry.path())) files_.push_back(entry.path());
    }
    std::sort(files_.begin(), files_.end(),
              [](const auto& a, const auto& b) { return a.filename().string() < b.filename().string(); });
}

Image ImageDirectorySource::frame(std::size_t index) {
    if (index >= files_.size()) throw Error(ErrorCode::DecodeFailure, "frame index out of range");
    return read_image(files_[index]);
}

RawStreamSource::RawStreamSource(std::filesystem::path path, double fps) : path_(std::move(path)), fps_(fps) {
    if (!(fps_ > 0.0)) throw Error(ErrorCode::ConfigInvalid, "fps must be positive");
    std::ifstream in(path_, std::ios::binary);
    if (!in) throw Error(ErrorCode::DecodeFailure, "cannot open " + path_.string());
    std::uint8_t header[kRawHeaderBytes];
    if (!in.read(reinterpret_cast<char*>(header), kRawHeaderBytes) ||
        std::string(reinterpret_cast<char*>(header), 8) != kRawMagic) {
        throw Error(ErrorCode::DecodeFailure, "missing RSTVRAW1 header in " + path_.string());
    }
    height_ = binary::get_u32(header + 8);
    width_ = binary::get_u32(header + 12);
    channels_ = binary::get_u32(header + 16);
    count_ = binary::get_u32(header + 20);
    const auto expected = kRawHeaderBytes + std::uintmax_t{count_} * height_ * width_ * channels_ * 4;
    if (std::filesystem::file_size(path_) < expected) {
        throw Error(ErrorCode::DecodeFailure, "truncated raw stream " + path_.string());
    }
}

Image RawStreamSource::frame(std::size_t index) {
    if (index >= count_) throw Error(ErrorCode::DecodeFailure, "frame index out of range");
    const std::size_t samples = std::size_t{height_} * width_ * channels_;
    std::ifstream in(path_, std::ios::binary);
    in.seekg(static_cast<std::streamoff>(kRawHeaderBytes + index * samples * 4));
    std::vector<std::uint8_t> bytes(samples * 4);
    if (!in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()))) {
        throw Error(ErrorCode::DecodeFailure, "short read in " + path_.string());
    }
    Image out(static_cast<int>(height_), static_cast<int>(width_), static_cast<int>(channels_), 1.0f);
    for (std::size_t i = 0; i < samples; ++i) out.pixels[i] = binary::get_f32(bytes.data() + 4 * i);
    return out;
}

void write_raw_stream(const std::filesystem::path& path, const std::vector<Image>& frames) {
    std::vector<std::uint8_t> out(kRawMagic, kRawMagic + 8);
    const Image* first = frames.empty() ? nullptr : &frames.front();
    binary::put_u32(out, first ? first->height : 0);
    binary::put_u32(out, first ? first->width : 0);
    binary::put_u32(out, first ? first->channels : 0);
    binary::put_u32(out, static_cast<std::uint32_t>(frames.size()));
    for (const auto& f : frames) {
        if (f.height != first->height || f.width != first->width || f.channels != first->channels) {
            throw Error(ErrorCode::ShapeMismatch, "raw stream frames must share one shape");
        }
        for (float v : f.pixels) binary::put_f32(out, v);
    }
    binary::write_file(path.string(), out);
}

std::string DecoderPipeSource::render_command(const std::string& command_template, const std::string& input) {
    std::string quoted = "'";
    for (char ch : input) {
        if (ch == '\'') quoted += "'\\''";
        else quoted += ch;
    }
    quoted += "'";
    std::string cmd = command_template;
    const std::string token = "{input}";
    for (auto pos = cmd.find(token); pos != std::string::npos; pos = cmd.find(token, pos + quoted.size())) {
        cmd.replace(pos, token.size(), quoted);
    }
    return cmd;
}

DecoderPipeSource::DecoderPipeSource(std::string command_template, std::string input, int width, int height,
                                     double fps)
    : input_(std::move(input)), width_(width), height_(height), fps_(fps) {
    if (width_ <= 0 || height_ <= 0 || !(fps_ > 0.0)) {
        throw Error(ErrorCode::ConfigInvalid, "decoder pipe needs positive width, height and fps");
    }
    const std::string cmd = render_command(command_template, input_);
    FILE* pipe = ::popen(cmd.c_str(), "r");
    if (!pipe) throw Error(ErrorCode::DecodeFailure, "cannot spawn decoder: " + cmd);

    const std::size_t frame_bytes = static_cast<std::size_t>(width_) * height_ * 3;
    std::vector<std::uint8_t> buf(frame_bytes);
    bool partial = false;
    for (;;) {
        const std::size_t got = std::fread(buf.data(), 1, frame_bytes, pipe);
        if (got == frame_bytes) {
            frames_.push_back(buf);
            continue;
        }
        partial = got != 0;
        break;
    }
    const int status = ::pclose(pipe);
    if (status == -1 || !WIFEXITED(status) || WEXITSTATUS(status) != 0) {
        throw Error(ErrorCode::DecodeFailure, "decoder exited with failure: " + cmd);
    }
    if (partial) throw Error(ErrorCode::DecodeFailure, "decoder output ended mid-frame: " + cmd);
}

Image DecoderPipeSource::frame(std::size_t index) {
    if (index >= frames_.size()) throw Error(ErrorCode::DecodeFailure, "frame index out of range");
    Image out(height_, width_, 3, 255.0f);
    std::copy(frames_[index].begin(), frames_[index].end(), out.pixels.begin());
    return out;
}

Image MemoryFrameSource::frame(std::size_t index) {
    if (index >= frames_.size()) throw Error(ErrorCode::DecodeFailure, "frame index out of range");
    return frames_[index];
}

FrameSequence sample_frames(FrameSource& source, const SamplingConfig& cfg, int size) {
    const SamplePlan plan = plan_samples(source.frame_count(), source.fps(), cfg);
    FrameSequence seq;
    seq.source_id = source.id();
    seq.timestamps = plan.timestamps;
    seq.frames.reserve(plan.indices.size());
    std::optional<std::size_t> cached_index;
    for (std::size_t idx : plan.indices) {
        if (cached_index && *cached_index == idx) {
            seq.frames.push_back(seq.frames.back());
            continue;
        }
        seq.frames.push_back(preprocess(source.frame(idx), std::nullopt, size));
        cached_index = idx;
    }
    return seq;
}

}  // namespace restrav
