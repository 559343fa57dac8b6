#pragma once

#include <filesystem>
#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace CLI {
class App;
}

namespace streamprobe::cli {

// Parsed command line. Flags are shared by every subcommand; inputs that a
// subcommand does not use are rejected.
struct RunOptions {
    std::string subcommand;
    std::filesystem::path config_path;
    std::filesystem::path out_dir;
    std::optional<unsigned long long> seed;
    std::vector<std::string> overrides;  // key=value
    int verbosity = 0;

    std::filesystem::path data;
    std::filesystem::path calibration_data;
    std::filesystem::path probe;
    std::filesystem::path stage2_probe;
    std::vector<std::filesystem::path> from;
};

// The full flag registry. Exposed so tests can check that --help documents
// every option.
std::unique_ptr<CLI::App> build_app(RunOptions& opts);

// Exit status: 0 ok, 2 usage, 3 config, 4 data, 5 internal.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace streamprobe::cli
