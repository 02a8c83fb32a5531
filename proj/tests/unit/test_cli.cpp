#include <doctest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "../support.hpp"
#include "restrav/classifiers.hpp"
#include "restrav/encoder.hpp"
#include "restrav/features.hpp"
#include "restrav/synthetic.hpp"

using namespace restrav;
using namespace testing_support;
namespace fs = std::filesystem;

namespace {

const fs::path kCli = RESTRAV_CLI_PATH;
const fs::path kFixtures = RESTRAV_FIXTURES_DIR;

struct Run {
    int code = -1;
    std::string out;
    std::string err;
};

std::string slurp(const fs::path& p) {
    std::ifstream in(p);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

Run run(const fs::path& dir, const std::string& args, const std::string& env = "") {
    const auto out = dir / "stdout.txt", err = dir / "stderr.txt";
    const std::string cmd = env + " '" + kCli.string() + "' " + args + " > '" + out.string() + "' 2> '" +
                            err.string() + "'";
    const int status = std::system(cmd.c_str());
    Run r;
    r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    r.out = slurp(out);
    r.err = slurp(err);
    return r;
}

std::vector<std::string> lines_of(const std::string& s) {
    std::vector<std::string> out;
    std::istringstream in(s);
    for (std::string l; std::getline(in, l);) {
        if (!l.empty()) out.push_back(l);
    }
    return out;
}

std::vector<std::string> split_tabs(const std::string& s) {
    std::vector<std::string> out;
    std::istringstream in(s);
    for (std::string f; std::getline(in, f, '\t');) out.push_back(f);
    return out;
}

void write_walk(const fs::path& p, std::size_t frames, std::uint64_t seed, double angle = 30.0) {
    WalkSpec w;
    w.frames = frames;
    w.dim = 32;
    w.angle_mean_deg = angle;
    store_embeddings(p, random_walk(w, seed));
}

// Synthetic dataset plus a model trained on it, shared by several cases.
fs::path trained_fixture(const fs::path& dir) {
    SyntheticDatasetSpec spec;
    spec.natural = 40;
    spec.generated_per_generator = 20;
    write_synthetic_dataset(dir / "data", spec);
    const auto r = run(dir, "train -m '" + (dir / "data/manifest.jsonl").string() + "' -o '" +
                                (dir / "model.json").string() + "' --epochs 40");
    REQUIRE(r.code == 0);
    return dir / "model.json";
}

}  // namespace

TEST_CASE("cli: usage errors exit 2") {
    const auto dir = temp_dir("cli_usage");
    CHECK(run(dir, "").code == 2);
    CHECK(run(dir, "bogus").code == 2);
    CHECK(run(dir, "featurize").code == 2);  // --out missing
    const auto r = run(dir, "--help");
    CHECK(r.code == 0);
    CHECK(r.out.find("featurize") != std::string::npos);
}

TEST_CASE("cli: featurize one row per input, errors skipped") {
    const auto dir = temp_dir("cli_featurize");
    write_walk(dir / "a.emb", 24, 1);
    write_walk(dir / "b.emb", 24, 2);
    write_walk(dir / "c.emb", 30, 3);
    write_walk(dir / "short.emb", 7, 4);

    auto r = run(dir, "featurize '" + (dir / "a.emb").string() + "' -o '" + (dir / "one.csv").string() + "'");
    CHECK(r.code == 0);
    auto t = read_feature_csv(dir / "one.csv");
    REQUIRE(t.rows.size() == 1);
    CHECK(t.rows[0].values.size() == 21);
    CHECK(t.rows[0].source_id == (dir / "a.emb").string());

    r = run(dir, "featurize '" + (dir / "c.emb").string() + "' '" + (dir / "a.emb").string() + "' '" +
                     (dir / "short.emb").string() + "' '" + (dir / "b.emb").string() + "' -o '" +
                     (dir / "many.csv").string() + "'");
    CHECK(r.code == 1);
    CHECK(r.err.find("short") != std::string::npos);
    t = read_feature_csv(dir / "many.csv");
    REQUIRE(t.rows.size() == 3);
    CHECK(t.rows[0].source_id == (dir / "c.emb").string());
    CHECK(t.rows[1].source_id == (dir / "a.emb").string());
    CHECK(t.rows[2].source_id == (dir / "b.emb").string());
    CHECK(t.errors.size() == 1);

    // Same values as the library path.
    const auto lib = build_feature_vector(compute_signals(load_precomputed(dir / "a.emb")));
    CHECK(t.rows[1].values == lib.values);
}

TEST_CASE("cli: train, detect and eval") {
    const auto dir = temp_dir("cli_detect");
    const auto model = trained_fixture(dir);
    write_walk(dir / "natural_like.emb", 24, 9, 30.0);

    auto r = run(dir, "detect '" + (dir / "natural_like.emb").string() + "' --model '" + model.string() + "'");
    CHECK(r.code == 0);
    const auto lines = lines_of(r.out);
    REQUIRE(lines.size() == 1);
    const auto f = split_tabs(lines[0]);
    REQUIRE(f.size() == 4);
    CHECK(f[0] == (dir / "natural_like.emb").string());
    const double score = std::stod(f[1]);
    CHECK((score >= 0.0 && score <= 1.0));
    CHECK(f[2] == "natural");
    CHECK(std::stod(f[3]) >= 0.0);

    r = run(dir, "detect '" + (dir / "missing.emb").string() + "' --model '" + model.string() + "'");
    CHECK(r.code == 1);
    CHECK(run(dir, "detect x.emb --model '" + (dir / "nope.json").string() + "'").code == 2);

    r = run(dir, "eval -m '" + (dir / "data/manifest.jsonl").string() + "' --model '" + model.string() +
                     "' -o '" + (dir / "report.json").string() + "' --roc-csv '" + (dir / "roc.csv").string() + "'");
    CHECK(r.code == 0);
    const auto rep = nlohmann::json::parse(slurp(dir / "report.json"));
    CHECK(rep["metrics"]["acc"].get<double>() >= 0.9);
    CHECK(rep["audit"]["n_test"] == 40);
    CHECK(fs::exists(dir / "roc.csv"));
}

TEST_CASE("cli: leakage in held-out mode exits 3") {
    const auto dir = temp_dir("cli_leak");
    const auto model = trained_fixture(dir);
    const auto m = (dir / "data/manifest.jsonl").string();
    auto r = run(dir, "eval -m '" + m + "' --mode unseen --train-generators gen_a --test-generators gen_a,gen_b");
    CHECK(r.code == 3);
    r = run(dir, "eval -m '" + m + "' --mode unseen --train-generators gen_a --test-generators gen_b --model '" +
                     model.string() + "'");
    CHECK(r.code == 3);
    r = run(dir, "eval -m '" + m + "' --mode unseen --train-generators gen_a --test-generators gen_b --epochs 20");
    CHECK(r.code == 0);
}

TEST_CASE("cli: backend loading") {
    const auto dir = temp_dir("cli_backend");
    const auto clips = dir / "clips";
    for (const char* name : {"one", "two", "three"}) {
        fs::create_directories(clips / name);
        for (const auto& e : fs::directory_iterator(kFixtures / "clip_motion")) {
            fs::copy_file(e.path(), clips / name / e.path().filename());
        }
    }
    auto r = run(dir, "embed '" + clips.string() + "' -o '" + (dir / "out").string() + "' --backend '" +
                          (dir / "absent.onnx").string() + "'");
    CHECK(r.code == 2);
    r = run(dir, "embed '" + clips.string() + "' -o '" + (dir / "out").string() + "'");
    CHECK(r.code != 0);

    if (!onnx_backend_available()) {
        MESSAGE("built without an ONNX runtime; skipping encoder runs");
        return;
    }
    const auto onnx = (kFixtures / "tiny_encoder.onnx").string();
    r = run(dir, "embed '" + clips.string() + "' -o '" + (dir / "out").string() + "' --fps 3.5 -T 8", "RESTRAV_BACKEND='" + onnx + "'");
    CHECK(r.code == 0);
    CHECK(lines_of(r.out).size() == 3);
    std::size_t files = 0;
    for (const auto& e : fs::directory_iterator(dir / "out")) files += is_embedding_file(e.path());
    CHECK(files == 3);
    const auto t = load_precomputed(dir / "out" / "one.emb");
    CHECK(t.frames == 8);
    CHECK(t.dim == 136);
    CHECK(t.backend_id == "tiny-test-encoder");
}

TEST_CASE("cli: config file and synth") {
    const auto dir = temp_dir("cli_config");
    auto r = run(dir, "synth -o '" + (dir / "d").string() + "' --natural 4 --per-generator 2 --generators g1");
    CHECK(r.code == 0);
    CHECK(Manifest::load(dir / "d/manifest.jsonl").records.size() == 6);

    std::ofstream(dir / "cfg.toml") << "[featurize]\nframes = 7\n";
    r = run(dir, "--config '" + (dir / "cfg.toml").string() + "' featurize '" + (dir / "d/nat00000.emb").string() +
                     "' -o '" + (dir / "f.csv").string() + "'");
    CHECK(r.code == 2);  // T = 7 is rejected by the config
}
