#pragma once

// Helpers for driving the CLI binary from tests.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <sys/wait.h>

#include "imtk/data_model.hpp"

#include "fixtures.hpp"

#ifndef IMTK_CLI_PATH
#error "IMTK_CLI_PATH must point at the CLI binary"
#endif

namespace harness {

namespace fs = std::filesystem;

inline fs::path fresh_dir(const std::string& name) {
    auto dir = fs::current_path() / "cli_work" / name;
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

inline void write_file(const fs::path& path, const std::string& content) {
    std::ofstream out(path);
    out << content;
}

inline std::string slurp(const fs::path& path) {
    std::ifstream in(path);
    std::ostringstream buffer;
    buffer << in.rdbuf();
    return buffer.str();
}

// Runs the CLI with output captured into <dir>/cli_output.txt; returns the
// exit code.
inline int run_cli(const std::string& args, const fs::path& dir) {
    std::string cmd = std::string(IMTK_CLI_PATH) + " " + args + " > " +
                      (dir / "cli_output.txt").string() + " 2>&1";
    int status = std::system(cmd.c_str());
    if (status == -1) return -1;
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

// Ten-sentence fixture over several titles with varied attitudes and
// judgments, enough spread for splits and a defined dg/di correlation.
inline std::string fixture_dataset(std::size_t sentences = 10) {
    std::ostringstream out;
    std::vector<imtk::AnnotatedSentence> records;
    const std::vector<std::string> traits = {"greedy", "kind", "honest", "rash"};
    for (std::size_t i = 0; i < sentences; ++i) {
        imtk::MoralJudgment judged;
        judged.ent = "she";
        judged.pres = true;
        judged.desc = traits[i % traits.size()];
        judged.eval = i % 2 == 0 ? imtk::Evaluation::bad : imtk::Evaluation::good;
        judged.soa = static_cast<imtk::SphereOfAction>(i % 10);
        judged.vi = static_cast<imtk::Appropriateness>(i % 3);

        auto second_reading =
            i % 2 == 0 ? "a different gloss for number " + std::to_string(i)
                       : "gloss " + std::to_string(i);
        auto rec = fixtures::record(
            "s" + std::to_string(i), "title " + std::to_string(i),
            "sentence number " + std::to_string(i) + " about she", {"she"},
            {{fixtures::context(1 + static_cast<int>(i % 5), {judged}),
              "reading one of sentence " + std::to_string(i)},
             {fixtures::context(1 + static_cast<int>((i + 2) % 5),
                                {fixtures::absent_judgment("she")}),
              second_reading}});
        records.push_back(std::move(rec));
    }
    imtk::write_dataset(out, records);
    return out.str();
}

}  // namespace harness
