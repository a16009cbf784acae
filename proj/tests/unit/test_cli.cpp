#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "json.hpp"
#include "smolder/cli.hpp"
#include "smolder/config.hpp"
#include "smolder/errors.hpp"
#include "smolder/image_io.hpp"
#include "temp_dir.hpp"

using namespace smolder;

namespace {

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

std::string error_of(const std::string& text, const std::vector<std::string>& overrides = {}) {
    try {
        parse_config_text(text, overrides);
    } catch (const ConfigError& e) {
        return e.what();
    }
    return {};
}

struct Cli {
    int code = 0;
    std::string out, err;
};

Cli run(const std::vector<std::string>& args) {
    std::ostringstream o, e;
    Cli r;
    r.code = dispatch_command(args, o, e);
    r.out = o.str();
    r.err = e.str();
    return r;
}

// Scoped SMOLDER_RUNS_DIR.
struct RunsDir {
    explicit RunsDir(const fs::path& p) { setenv("SMOLDER_RUNS_DIR", p.c_str(), 1); }
    ~RunsDir() { unsetenv("SMOLDER_RUNS_DIR"); }
};

fs::path write_ir_dir(const fs::path& dir, int n) {
    fs::create_directories(dir);
    for (int i = 0; i < n; ++i) {
        Grid<float> g(64, 64, 0.05f);
        for (int r = 0; r < 64; ++r)
            for (int c = 0; c < 64; ++c)
                if ((r - 30) * (r - 30) + (c - 30) * (c - 30) <= 144) g(r, c) = 0.9f;
        char name[32];
        std::snprintf(name, sizeof name, "frame_%05d.png", i);
        write_intensity(dir / name, g);
    }
    return dir;
}

std::string tree_digest(const fs::path& dir) {
    std::string all;
    for (const auto& e : fs::recursive_directory_iterator(dir))
        if (e.is_regular_file()) all += e.path().string() + ":" + slurp(e.path()) + "\n";
    return all;
}

}  // namespace

TEST_SUITE("cli") {

TEST_CASE("an empty config gives the defaults") {
    const RunConfig a = parse_config_text("");
    const RunConfig b = parse_config_text("{}");
    CHECK(config_hash(a) == config_hash(b));
    CHECK(a.model.decoder.seq_len == 20);
    CHECK(a.train.batch_size == 5);
    CHECK(a.train.lr_init == doctest::Approx(1e-2));
    CHECK(a.infer.window == 20);
    CHECK(a.eval.match.overlap_threshold == doctest::Approx(0.30));
    TempDir dir("cfg");
    std::ofstream(dir / "empty.json") << "";
    CHECK(config_hash(parse_config(dir / "empty.json")) == config_hash(a));
    CHECK(config_hash(parse_config("")) == config_hash(a));
}

TEST_CASE("overrides set nested keys") {
    const RunConfig c = parse_config_text("", {"model.attention=cbam", "train.batch_size=3", "model.backbone=vgg16"});
    CHECK(c.model.decoder.attention == AttentionType::Cbam);
    CHECK(c.train.batch_size == 3);
    CHECK(c.model.backbone.family == BackboneFamily::Vgg16);
    const RunConfig f = parse_config_text(R"({"train": {"epochs": 7}})", {"train.epochs=9"});
    CHECK(f.train.epochs == 9);
}

TEST_CASE("invalid values name the key") {
    CHECK(error_of("", {"train.batch_size=0"}).find("train.batch_size") != std::string::npos);
    CHECK(error_of(R"({"train": {"bogus": 1}})").find("unknown key 'train.bogus'") != std::string::npos);
    CHECK(error_of("", {"train.epochs=\"ten\""}).find("train.epochs") != std::string::npos);
    CHECK(error_of("", {"nosection.x=1"}).find("nosection") != std::string::npos);
    CHECK_FALSE(error_of("{not json").empty());
    CHECK(error_of("", {"model.attention=bam"}).find("bam") != std::string::npos);
    CHECK(error_of("", {"infer.device=cuda"}).find("cpu") != std::string::npos);
}

TEST_CASE("sequence lengths must agree") {
    const std::string e = error_of("", {"infer.window=10"});
    CHECK(e.find("dataset.seq_len") != std::string::npos);
    CHECK_FALSE(error_of("", {"dataset.seq_len=19", "model.seq_len=19", "infer.window=19"}).empty());
    CHECK(error_of("", {"dataset.seq_len=11", "model.seq_len=11", "infer.window=11", "model.time_kernel=4",
                        "model.n_time_blocks=3"})
              .empty());
}

TEST_CASE("config hash ignores run id and paths") {
    const RunConfig a = parse_config_text("", {"run_id=one", "paths.runs_root=/tmp/a"});
    const RunConfig b = parse_config_text("", {"run_id=two"});
    CHECK(config_hash(a) == config_hash(b));
    CHECK(config_hash(a) != config_hash(parse_config_text("", {"train.seed=1"})));
    CHECK(config_hash(a).size() == 64);
}

TEST_CASE("json round trip") {
    const RunConfig a = parse_config_text("", {"model.attention=cbam", "synth.n_scenes=2", "eval.overlap_rule=iou"});
    const RunConfig b = run_config_from_json(to_json(a));
    CHECK(to_json(a) == to_json(b));
    CHECK(b.eval.match.rule == OverlapRule::IoU);
}

TEST_CASE("runs root comes from the environment first") {
    const RunConfig c = parse_config_text("", {"paths.runs_root=/tmp/from_config"});
    CHECK(runs_root(c) == fs::path("/tmp/from_config"));
    RunsDir env("/tmp/from_env");
    CHECK(runs_root(c) == fs::path("/tmp/from_env"));
}

TEST_CASE("dispatch exit codes") {
    CHECK(run({}).code == 2);
    const Cli unknown = run({"frobnicate"});
    CHECK(unknown.code == 2);
    CHECK(unknown.err.find("frobnicate") != std::string::npos);
    CHECK(run({"train"}).code == 2);
    CHECK(run({"--help"}).code == 0);

    TempDir dir("dispatch");
    RunsDir env(dir.path());
    const Cli missing = run({"eval", "--checkpoint", "/nonexistent/ckpt_best", "--manifest", "/nonexistent/m.txt"});
    CHECK(missing.code == 1);
    CHECK(missing.err.find("/nonexistent/") != std::string::npos);
    const Cli bad = run({"train", "--manifest", "x", "--set", "train.batch_size=0"});
    CHECK(bad.code == 1);
    CHECK(bad.err.find("train.batch_size") != std::string::npos);
}

TEST_CASE("label-ir writes per-frame masks, the fused mask and a manifest") {
    TempDir dir("labelir");
    const fs::path ir = write_ir_dir(dir / "ir", 3);
    RunsDir env(dir / "runs");
    const std::string before = tree_digest(ir);
    const Cli r = run({"label-ir", "--input", ir.string(), "--run-id", "lab", "--clip-id", "clipA"});
    REQUIRE(r.code == 0);
    const fs::path labels = dir / "runs" / "lab" / "labels";
    CHECK(fs::exists(labels / "mask_00000.png"));
    CHECK(fs::exists(labels / "mask_00002.png"));
    CHECK(fs::exists(labels / "clipA_gt.png"));
    const BinaryMask fused = read_mask(labels / "clipA_gt.png");
    CHECK(fused(30, 30) == 1);
    CHECK(fused(0, 0) == 0);
    CHECK(tree_digest(ir) == before);

    const auto manifest = nlohmann::json::parse(slurp(dir / "runs" / "lab" / "label-ir_manifest.json"));
    CHECK(manifest["command"] == "label-ir");
    CHECK(manifest["run_id"] == "lab");
    CHECK(manifest["inputs"][0]["role"] == "ir");
    CHECK(manifest["inputs"][0]["sha256"].get<std::string>().size() == 64);
    CHECK(manifest.contains("versions"));
    CHECK(fs::exists(dir / "runs" / "lab" / "config.json"));
}

TEST_CASE("identical invocations give identical run records") {
    TempDir dir("repeat");
    const fs::path ir = write_ir_dir(dir / "ir", 2);
    std::string first;
    for (const char* root : {"r1", "r2"}) {
        RunsDir env(dir / root);
        REQUIRE(run({"label-ir", "--input", ir.string(), "--run-id", "same"}).code == 0);
        const std::string m = slurp(dir / root / "same" / "label-ir_manifest.json") +
                              slurp(dir / root / "same" / "config.json") +
                              slurp(dir / root / "same" / "labels" / "fused_gt.png");
        if (first.empty())
            first = m;
        else
            CHECK(m == first);
    }
}

TEST_CASE("default run ids derive from the command and config") {
    TempDir dir("runid");
    const fs::path ir = write_ir_dir(dir / "ir", 1);
    RunsDir env(dir / "runs");
    REQUIRE(run({"label-ir", "--input", ir.string()}).code == 0);
    int n = 0;
    for (const auto& e : fs::directory_iterator(dir / "runs")) {
        CHECK(e.path().filename().string().rfind("label-ir-", 0) == 0);
        CHECK(e.path().filename().string().size() == std::string("label-ir-").size() + 12);
        ++n;
    }
    CHECK(n == 1);
    CHECK(run({"label-ir", "--input", ir.string(), "--run-id", "../escape"}).code == 1);
}

}
