#include <CLI11.hpp>

#include <cstdlib>
#include <fstream>
#include <sstream>

#include "cli.hpp"
#include "doctest.h"
#include "streamprobe/kv_config.hpp"
#include "support.hpp"

namespace fs = std::filesystem;
using streamprobe::cli::run;

namespace {

struct Result {
    int status;
    std::string out, err;
};

Result invoke(std::vector<std::string> args) {
    args.insert(args.begin(), "streamprobe");
    std::vector<const char*> argv;
    for (const auto& a : args) argv.push_back(a.c_str());
    std::ostringstream out, err;
    const int status = run(static_cast<int>(argv.size()), argv.data(), out, err);
    return {status, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

void write_file(const fs::path& p, const std::string& text) { std::ofstream(p) << text; }

const char* kSmallSynth =
    "synth.feature_dim = 16\n"
    "synth.n_benign = 60\n"
    "synth.n_attack = 60\n"
    "synth.seq_len_min = 40\n"
    "synth.seq_len_max = 60\n"
    "synth.prompt_len_min = 8\n"
    "synth.prompt_len_max = 12\n"
    "synth.harm_strength = 3\n";

// gen -> train -> eval into `root`; returns the metrics report.
std::string small_pipeline(const fs::path& root, const fs::path& synth_conf) {
    REQUIRE(invoke({"gen", "-c", synth_conf.string(), "-o", (root / "gen").string(), "--seed", "3"}).status == 0);
    const auto data = (root / "gen" / "dataset.spds").string();
    REQUIRE(invoke({"train", "--data", data, "-o", (root / "train").string(), "--seed", "3", "--set",
                    "train.epochs=3", "--set", "train.window_size=4"})
                .status == 0);
    REQUIRE(invoke({"eval", "--probe", (root / "train" / "probe.bin").string(), "--data", data, "-o",
                    (root / "eval").string()})
                .status == 0);
    return slurp(root / "eval" / "metrics.txt");
}

}  // namespace

TEST_CASE("help documents every flag") {
    streamprobe::cli::RunOptions opts;
    auto app = streamprobe::cli::build_app(opts);
    const auto subs = app->get_subcommands({});
    CHECK(subs.size() == 8);
    for (auto* sub : subs) {
        const auto help = sub->help();
        for (const auto* opt : sub->get_options()) {
            INFO(sub->get_name() << " " << opt->get_name());
            CHECK_FALSE(opt->get_description().empty());
            for (const auto& lname : opt->get_lnames()) CHECK(help.find("--" + lname) != std::string::npos);
            for (const auto& sname : opt->get_snames()) CHECK(help.find("-" + sname) != std::string::npos);
        }
        const auto r = invoke({sub->get_name(), "--help"});
        CHECK(r.status == 0);
        CHECK(r.out.find("--out") != std::string::npos);
    }
    CHECK(invoke({"--help"}).out.find("sweep") != std::string::npos);
}

TEST_CASE("usage errors") {
    CHECK(invoke({}).status == 2);
    CHECK(invoke({"frobnicate"}).status == 2);
    CHECK(invoke({"gen"}).status == 2);  // --out missing
    testsupport::TempDir dir;
    CHECK(invoke({"gen", "-o", dir.path().string(), "--set", "novalue"}).status == 2);
    CHECK(invoke({"train", "-o", dir.path().string(), "--data", "/nonexistent"}).status == 2);
}

TEST_CASE("unknown config key exits 3 naming the key") {
    testsupport::TempDir dir;
    write_file(dir / "c.conf", "synth.feature_dim = 8\nsynth.harm_strenght = 2\n");
    const auto r = invoke({"gen", "-c", (dir / "c.conf").string(), "-o", (dir / "out").string()});
    CHECK(r.status == 3);
    CHECK(r.err.find("synth.harm_strenght") != std::string::npos);

    const auto r2 = invoke({"gen", "-o", (dir / "out").string(), "--set", "synth.seed=4"});
    CHECK(r2.status == 3);
    const auto r3 = invoke({"gen", "-o", (dir / "out").string(), "--set", "synth.feature_dim=7"});
    CHECK(r3.status == 3);
}

TEST_CASE("flags override the config file") {
    testsupport::TempDir dir;
    write_file(dir / "c.conf", std::string(kSmallSynth) + "seed = 1\n");
    REQUIRE(invoke({"gen", "-c", (dir / "c.conf").string(), "-o", (dir / "a").string(), "--set", "synth.n_attack=5",
                    "--seed", "9"})
                .status == 0);
    const auto manifest = streamprobe::KeyValueConfig::load(dir / "a" / "manifest.txt");
    CHECK(manifest.get_string("seed", "") == "9");
    CHECK(manifest.get_string("config.synth.n_attack", "") == "5");
    CHECK(manifest.get_string("version", "") == STREAMPROBE_VERSION);
    CHECK(manifest.get_string("config_hash", "").size() == 16);
    CHECK(slurp(dir / "a" / "dataset.spds.meta").find("synth.n_attack = 5") != std::string::npos);
}

TEST_CASE("data errors exit 4") {
    testsupport::TempDir dir;
    write_file(dir / "junk.spds", "not a dataset");
    CHECK(invoke({"train", "--data", (dir / "junk.spds").string(), "-o", (dir / "t").string()}).status == 4);
}

TEST_CASE("identical seeds give byte-identical metrics reports") {
    testsupport::TempDir dir;
    write_file(dir / "s.conf", kSmallSynth);
    const auto a = small_pipeline(dir / "run1", dir / "s.conf");
    const auto b = small_pipeline(dir / "run2", dir / "s.conf");
    CHECK(a == b);
    CHECK(slurp(dir / "run1" / "train" / "probe.bin") == slurp(dir / "run2" / "train" / "probe.bin"));
    CHECK(slurp(dir / "run1" / "gen" / "dataset.spds") == slurp(dir / "run2" / "gen" / "dataset.spds"));

    const auto data = (dir / "run1" / "gen" / "dataset.spds").string();
    const auto probe = (dir / "run1" / "train" / "probe.bin").string();
    CHECK(invoke({"score", "--probe", probe, "--data", data, "-o", (dir / "score").string()}).status == 0);
    CHECK(invoke({"calibrate", "--probe", probe, "--data", data, "-o", (dir / "cal").string(), "--set",
                  "calibrate.rate=0.05"})
              .status == 0);
    CHECK(invoke({"cascade", "--probe", probe, "--data", data, "-o", (dir / "cas").string(), "--set",
                  "stub.correlation=0.5", "--set", "stage1_threshold=-1"})
              .status == 0);
    CHECK(invoke({"cascade", "--probe", probe, "--data", data, "-o", (dir / "cas2").string(), "--stage2-probe",
                  probe})
              .status == 0);
    CHECK(invoke({"sweep", "--probe", probe, "--data", data, "-o", (dir / "sw").string(), "--set", "sweep.steps=5"})
              .status == 0);
    const auto r = invoke({"report", "-o", (dir / "rep").string(), "--from", (dir / "run1" / "gen").string(),
                           "--from", (dir / "run1" / "train").string(), "--from", (dir / "run1" / "eval").string(),
                           "--from", (dir / "cal").string(), "--from", (dir / "cas").string(), "--from",
                           (dir / "sw").string(), "--from", (dir / "score").string()});
    CHECK(r.status == 0);
    CHECK(r.out.find("attack_success_rate") != std::string::npos);
    CHECK(r.out.find("traced exchanges: 120") != std::string::npos);
    CHECK(fs::exists(dir / "rep" / "report.txt"));
}

TEST_CASE("default pipeline smoke test through the executable") {
    testsupport::TempDir dir;
    const std::string exe = STREAMPROBE_CLI_PATH;
    auto sh = [&](const std::string& args) { return std::system((exe + " " + args + " > /dev/null 2>&1").c_str()); };
    REQUIRE(sh("gen -o " + (dir / "gen").string()) == 0);
    const auto data = (dir / "gen" / "dataset.spds").string();
    REQUIRE(sh("train --data " + data + " -o " + (dir / "train").string()) == 0);
    REQUIRE(sh("eval --probe " + (dir / "train" / "probe.bin").string() + " --data " + data + " -o " +
               (dir / "eval").string()) == 0);
    const auto m = streamprobe::KeyValueConfig::load(dir / "eval" / "metrics.txt");
    const double asr = m.get_double("attack_success_rate", -1);
    CHECK(asr >= 0.0);
    CHECK(asr <= 1.0);
    // Exit status survives the process boundary.
    CHECK(WEXITSTATUS(sh("gen -o " + (dir / "x").string() + " --set bogus=1")) == 3);
}
