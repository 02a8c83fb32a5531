#include "restrav/features.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "restrav/error.hpp"

namespace restrav {
namespace {

struct Moments {
    double mean = 0, min = 0, max = 0, var = 0;
};

Moments moments(const std::vector<double>& x, const char* name) {
    if (x.empty()) throw Error(ErrorCode::EmptySignal, std::string(name) + " signal is empty");
    Moments m;
    const double n = static_cast<double>(x.size());
    double sum = 0.0;
    for (double v : x) sum += v;
    m.mean = sum / n;
    double ss = 0.0;
    for (double v : x) ss += (v - m.mean) * (v - m.mean);
    m.var = ss / n;
    const auto [lo, hi] = std::minmax_element(x.begin(), x.end());
    m.min = *lo;
    m.max = *hi;
    return m;
}

std::string csv_escape(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += '"';
        out += c;
    }
    return out + "\"";
}

std::vector<std::string> csv_split(const std::string& line) {
    std::vector<std::string> fields;
    std::string cur;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char c = line[i];
        if (quoted) {
            if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
                cur += '"';
                ++i;
            } else if (c == '"') {
                quoted = false;
            } else {
                cur += c;
            }
        } else if (c == '"') {
            quoted = true;
        } else if (c == ',') {
            fields.push_back(std::move(cur));
            cur.clear();
        } else {
            cur += c;
        }
    }
    fields.push_back(std::move(cur));
    return fields;
}

std::string format_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

}  // namespace

AggregateStats aggregate_stats(const GeometrySignals& sig) {
    const auto d = moments(sig.distances, "distance");
    const auto t = moments(sig.curvatures_deg, "curvature");
    return {d.mean, d.min, d.max, d.var, t.mean, t.min, t.max, t.var};
}

FeatureVector build_feature_vector(const GeometrySignals& sig, std::size_t n_d, std::size_t n_theta) {
    if (sig.distances.size() < n_d || sig.curvatures_deg.size() < n_theta) {
        throw Error(ErrorCode::TooFewFrames,
                    "need at least " + std::to_string(n_d) + " distances and " + std::to_string(n_theta) +
                        " curvatures, got " + std::to_string(sig.distances.size()) + " and " +
                        std::to_string(sig.curvatures_deg.size()));
    }
    const auto s = aggregate_stats(sig);
    FeatureVector y;
    y.values.reserve(n_d + n_theta + kStatCount);
    y.values.insert(y.values.end(), sig.distances.begin(), sig.distances.begin() + static_cast<long>(n_d));
    y.values.insert(y.values.end(), sig.curvatures_deg.begin(), sig.curvatures_deg.begin() + static_cast<long>(n_theta));
    for (double v : {s.mu_d, s.var_d, s.min_d, s.max_d, s.mu_theta, s.var_theta, s.min_theta, s.max_theta}) {
        y.values.push_back(v);
    }
    return y;
}

std::string feature_layout(std::size_t n_d, std::size_t n_theta) {
    return "restrav.features.v1:d[0:" + std::to_string(n_d) + "],theta_deg[0:" + std::to_string(n_theta) +
           "],mu_d,var_d,min_d,max_d,mu_theta,var_theta,min_theta,max_theta";
}

std::vector<std::string> feature_names(std::size_t n_d, std::size_t n_theta) {
    std::vector<std::string> names;
    for (std::size_t i = 0; i < n_d; ++i) names.push_back("d" + std::to_string(i + 1));
    for (std::size_t i = 0; i < n_theta; ++i) names.push_back("theta" + std::to_string(i + 1));
    for (const char* s : {"mu_d", "var_d", "min_d", "max_d", "mu_theta", "var_theta", "min_theta", "max_theta"}) {
        names.emplace_back(s);
    }
    return names;
}

void write_feature_csv(const std::filesystem::path& path, const FeatureTable& table) {
    std::size_t width = table.rows.empty() ? kFeatureCount : table.rows.front().values.size();
    std::ofstream out(path);
    if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
    out << "source_id,label,generator";
    for (std::size_t i = 0; i < width; ++i) {
        char buf[32];
        std::snprintf(buf, sizeof buf, ",f%02zu", i);
        out << buf;
    }
    out << '\n';
    for (const auto& row : table.rows) {
        if (row.values.size() != width) throw Error(ErrorCode::ShapeMismatch, "ragged feature rows");
        out << csv_escape(row.source_id) << ',' << (row.label ? std::to_string(*row.label) : "") << ','
            << csv_escape(row.generator);
        for (double v : row.values) out << ',' << format_double(v);
        out << '\n';
    }

    nlohmann::json side;
    side["layout"] = table.layout;
    side["n_features"] = width;
    if (width == kFeatureCount) side["columns"] = feature_names();
    side["sampling"] = table.sampling;
    side["rows"] = table.rows.size();
    side["errors"] = nlohmann::json::array();
    for (const auto& [id, msg] : table.errors) side["errors"].push_back({{"source_id", id}, {"error", msg}});
    std::ofstream sidecar(path.string() + ".json");
    sidecar << side.dump(2) << '\n';
}

FeatureTable read_feature_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::IoError, "cannot open " + path.string());
    FeatureTable table;
    std::string line;
    if (!std::getline(in, line)) throw Error(ErrorCode::FormatError, "empty feature CSV " + path.string());
    const auto header = csv_split(line);
    if (header.size() < 4 || header[0] != "source_id" || header[1] != "label" || header[2] != "generator") {
        throw Error(ErrorCode::FormatError, "unexpected feature CSV header in " + path.string());
    }
    const std::size_t width = header.size() - 3;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        const auto f = csv_split(line);
        if (f.size() != header.size()) {
            throw Error(ErrorCode::FormatError, path.string() + ":" + std::to_string(line_no) + ": wrong column count");
        }
        FeatureRow row;
        row.source_id = f[0];
        if (!f[1].empty()) row.label = std::stoi(f[1]);
        row.generator = f[2];
        row.values.reserve(width);
        for (std::size_t i = 3; i < f.size(); ++i) {
            char* end = nullptr;
            const double v = std::strtod(f[i].c_str(), &end);
            if (end == f[i].c_str()) {
                throw Error(ErrorCode::FormatError, path.string() + ":" + std::to_string(line_no) + ": bad number");
            }
            row.values.push_back(v);
        }
        table.rows.push_back(std::move(row));
    }

    const std::filesystem::path side_path = path.string() + ".json";
    if (std::filesystem::exists(side_path)) {
        std::ifstream side_in(side_path);
        const auto side = nlohmann::json::parse(side_in, nullptr, false);
        if (side.is_discarded()) throw Error(ErrorCode::FormatError, "invalid sidecar " + side_path.string());
        table.layout = side.value("layout", table.layout);
        if (side.contains("sampling")) table.sampling = side["sampling"];
        if (side.contains("errors") && side["errors"].is_array()) {
            for (const auto& e : side["errors"]) {
                table.errors.emplace_back(e.value("source_id", ""), e.value("error", ""));
            }
        }
    } else if (width != kFeatureCount) {
        throw Error(ErrorCode::LayoutMismatch, "feature CSV without sidecar must have 21 columns");
    }
    return table;
}

}  // namespace restrav
