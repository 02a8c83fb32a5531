#include <filesystem>

#include "restrav/encoder.hpp"
#include "restrav/error.hpp"

#ifdef RESTRAV_WITH_OPENCV_DNN
#include <opencv2/core.hpp>
#include <opencv2/dnn.hpp>
#endif

namespace restrav {

#ifdef RESTRAV_WITH_OPENCV_DNN
namespace {

class OnnxBackend final : public EncoderBackend {
public:
    OnnxBackend(cv::dnn::Net net, BackendManifest manifest) : net_(std::move(net)), manifest_(std::move(manifest)) {}

    const BackendManifest& manifest() const override { return manifest_; }

    std::vector<float> infer(const Image& frame, TokenLayout& graph_tokens) override {
        const int h = frame.height, w = frame.width, c = frame.channels;
        const int shape[4] = {1, c, h, w};
        cv::Mat blob(4, shape, CV_32F);
        auto* dst = blob.ptr<float>();
        for (int ch = 0; ch < c; ++ch) {
            for (int y = 0; y < h; ++y) {
                for (int x = 0; x < w; ++x) dst[(static_cast<std::size_t>(ch) * h + y) * w + x] = frame.at(y, x, ch);
            }
        }
        cv::Mat out;
        try {
            if (manifest_.input_name.empty()) net_.setInput(blob);
            else net_.setInput(blob, manifest_.input_name);
            out = manifest_.output_name.empty() ? net_.forward() : net_.forward(manifest_.output_name);
        } catch (const cv::Exception& e) {
            throw Error(ErrorCode::ShapeMismatch, std::string("inference failed: ") + e.what());
        }
        if (!out.isContinuous()) out = out.clone();
        // Accept [1, N, dim] or [N, dim].
        if (out.dims == 3 && out.size[0] == 1) {
            graph_tokens = {static_cast<std::uint32_t>(out.size[1]), static_cast<std::uint32_t>(out.size[2])};
        } else if (out.dims == 2) {
            graph_tokens = {static_cast<std::uint32_t>(out.size[0]), static_cast<std::uint32_t>(out.size[1])};
        } else {
            throw Error(ErrorCode::ShapeMismatch, "model output must be [1, tokens, dim] or [tokens, dim]");
        }
        const auto* p = out.ptr<float>();
        return {p, p + out.total()};
    }

private:
    cv::dnn::Net net_;
    BackendManifest manifest_;
};

}  // namespace

bool onnx_backend_available() noexcept { return true; }

std::unique_ptr<EncoderBackend> load_onnx_backend(const std::filesystem::path& model_path,
                                                  const std::filesystem::path& manifest_path) {
    std::error_code ec;
    if (!std::filesystem::is_regular_file(model_path, ec)) {
        throw Error(ErrorCode::BackendLoadFailure, "model file not found: " + model_path.string());
    }
    BackendManifest manifest = BackendManifest::load(manifest_path);
    cv::dnn::Net net;
    try {
        net = cv::dnn::readNetFromONNX(model_path.string());
    } catch (const cv::Exception& e) {
        throw Error(ErrorCode::BackendLoadFailure, std::string("cannot load ONNX model: ") + e.what());
    }
    if (net.empty()) throw Error(ErrorCode::BackendLoadFailure, "empty network in " + model_path.string());
    net.setPreferableBackend(cv::dnn::DNN_BACKEND_OPENCV);
    net.setPreferableTarget(cv::dnn::DNN_TARGET_CPU);
    return std::make_unique<OnnxBackend>(std::move(net), std::move(manifest));
}

#else

bool onnx_backend_available() noexcept { return false; }

std::unique_ptr<EncoderBackend> load_onnx_backend(const std::filesystem::path& model_path,
                                                  const std::filesystem::path&) {
    throw Error(ErrorCode::BackendLoadFailure,
                "built without ONNX support; cannot load " + model_path.string());
}

#endif

}  // namespace restrav
