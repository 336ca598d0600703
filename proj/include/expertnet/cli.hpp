#pragma once

#include "expertnet/checkpoint.hpp"
#include "expertnet/data.hpp"
#include "expertnet/trainer.hpp"

#include <iosfwd>
#include <string>
#include <vector>

namespace expertnet::cli {

enum ExitCode : int { kOk = 0, kUsage = 1, kData = 2, kNumeric = 3 };

struct DataOptions {
    std::string path;
    std::string label_column = "label";
    std::string group_column;
    std::vector<std::string> ignore_columns;
    bool impute = false;  // mean-impute missing cells instead of dropping the row

    data::CsvOptions csv() const;
};

/// Everything a train or sweep run needs. Layout of the JSON file:
///   {"seed": 0, "out": "dir", "data": {...}, "split": {...}, "train": {...}}
/// "seed" sets both the split and the training seed.
struct RunConfig {
    trainer::TrainConfig train;
    data::SplitSpec split;
    DataOptions data;
    std::string out = "expertnet-run";

    void validate() const;
};

checkpoint::Json run_config_to_json(const RunConfig& config);
void apply_run_config_json(const checkpoint::Json& j, RunConfig& config);

/// Reorders features by name and re-maps class names to the checkpoint's
/// class ids. Extra columns are ignored; a missing feature or an unknown
/// class is a ShapeError / ParseError.
data::Dataset align_to_model(const data::Dataset& raw, const checkpoint::ModelBundle& bundle);

/// Runs one command line (args excludes the program name) and returns the
/// process exit code. Diagnostics go to `err`, results without an --out path to `out`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

int main(int argc, char** argv);

}  // namespace expertnet::cli
