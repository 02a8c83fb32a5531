#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "restrav/classifiers.hpp"
#include "restrav/encoder.hpp"
#include "restrav/error.hpp"
#include "restrav/features.hpp"
#include "restrav/geometry.hpp"
#include "restrav/metrics.hpp"

namespace py = pybind11;
using namespace restrav;

namespace {

using DoubleArray = py::array_t<double, py::array::c_style | py::array::forcecast>;

Matrix to_matrix(const DoubleArray& z) {
    if (z.ndim() != 2) throw Error(ErrorCode::ShapeMismatch, "expected a 2-D (T, D) array");
    Matrix m(static_cast<std::size_t>(z.shape(0)), static_cast<std::size_t>(z.shape(1)));
    std::copy(z.data(), z.data() + z.size(), m.data.begin());
    return m;
}

py::dict signals_dict(const GeometrySignals& s) {
    py::dict d;
    d["distances"] = py::array_t<double>(s.distances.size(), s.distances.data());
    d["curvatures_deg"] = py::array_t<double>(s.curvatures_deg.size(), s.curvatures_deg.data());
    d["degenerate_steps"] = s.degenerate_steps;
    return d;
}

GeometrySignals signals_of(const DoubleArray& z) { return compute_signals(view(to_matrix(z))); }

py::array_t<float> values_of(const EmbeddingTrajectory& t) {
    py::array_t<float> out({t.frames, t.dim});
    std::copy(t.values.begin(), t.values.end(), out.mutable_data());
    return out;
}

}  // namespace

PYBIND11_MODULE(_restrav, m) {
    m.doc() = "Embedding-trajectory geometry, features and detector scoring";

    static py::exception<Error> error_type(m, "RestravError", PyExc_RuntimeError);
    py::register_exception_translator([](std::exception_ptr p) {
        try {
            if (p) std::rethrow_exception(p);
        } catch (const Error& e) {
            py::object exc = py::handle(error_type.ptr())(e.what());
            exc.attr("code") = std::string(to_string(e.code()));
            PyErr_SetObject(error_type.ptr(), exc.ptr());
        }
    });

    m.attr("FEATURE_COUNT") = kFeatureCount;
    m.attr("DEGENERATE_NORM") = kDegenerateNorm;

    m.def("compute_signals", [](const DoubleArray& z) { return signals_dict(signals_of(z)); }, py::arg("z"),
          "Stepwise distances, curvature angles (degrees) and degenerate steps of a (T, D) trajectory.");
    m.def(
        "feature_vector",
        [](const DoubleArray& z) {
            const auto y = build_feature_vector(signals_of(z)).values;
            return py::array_t<double>(y.size(), y.data());
        },
        py::arg("z"), "21-value feature vector of a (T, D) trajectory.");
    m.def("feature_names", [] { return feature_names(); });

    m.def(
        "load_embeddings",
        [](const std::filesystem::path& path) {
            const auto t = load_precomputed(path);
            py::dict d;
            d["values"] = values_of(t);
            d["backend_id"] = t.backend_id;
            d["num_tokens"] = t.layout.num_tokens;
            d["token_dim"] = t.layout.token_dim;
            return d;
        },
        py::arg("path"));
    m.def(
        "store_embeddings",
        [](const std::filesystem::path& path, py::array_t<float, py::array::c_style | py::array::forcecast> z,
           const std::string& backend_id, std::uint32_t num_tokens) {
            if (z.ndim() != 2) throw Error(ErrorCode::ShapeMismatch, "expected a 2-D (T, D) array");
            EmbeddingTrajectory t(static_cast<std::size_t>(z.shape(0)), static_cast<std::size_t>(z.shape(1)));
            std::copy(z.data(), z.data() + z.size(), t.values.begin());
            t.backend_id = backend_id;
            if (num_tokens == 0 || t.dim % num_tokens != 0) {
                throw Error(ErrorCode::ShapeMismatch, "dim is not a multiple of num_tokens");
            }
            t.layout = {num_tokens, static_cast<std::uint32_t>(t.dim / num_tokens)};
            store_embeddings(path, t);
        },
        py::arg("path"), py::arg("z"), py::arg("backend_id") = "python", py::arg("num_tokens") = 1);

    py::class_<ClassifierModel>(m, "Model")
        .def_static("load", &load_model, py::arg("path"))
        .def_property_readonly("kind", [](const ClassifierModel& c) { return to_string(c.kind); })
        .def_readonly("tau_star", &ClassifierModel::tau_star)
        .def("score",
             [](const ClassifierModel& c, const DoubleArray& y) {
                 if (y.ndim() != 1) throw Error(ErrorCode::LengthMismatch, "expected a 1-D feature vector");
                 FeatureVector fv;
                 fv.values.assign(y.data(), y.data() + y.size());
                 return predict(c, fv).score;
             },
             py::arg("features"));

    m.def(
        "train",
        [](const DoubleArray& x, std::vector<int> labels, const std::string& kind, std::uint64_t seed, int epochs) {
            TrainOptions opt;
            opt.mlp_epochs = epochs;
            return train(classifier_kind_from_string(kind), to_matrix(x), labels, opt, seed);
        },
        py::arg("x"), py::arg("labels"), py::arg("kind") = "MLP", py::arg("seed") = 0, py::arg("epochs") = 200);

    m.def("auroc", [](std::vector<double> s, std::vector<int> y) { return auroc(s, y); });
    m.def("average_precision", [](std::vector<double> s, std::vector<int> y) { return average_precision(s, y); });
}
